"""Command line entry point ``kac``.

    kac run <config.toml> [--seed S] [--threads T] [--out DIR]
    kac validate <config.toml>
    kac version

Exit codes: 0 success, 2 invariant violation, 3 configuration error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
import time
from pathlib import Path

from . import __version__
from .errors import ConfigError, InvariantViolation, PopulationExplosion
from .experiments import load_config, run_experiment
from .io import write_json

EXIT_OK = 0
EXIT_INVARIANT = 2
EXIT_CONFIG = 3


def _config_hash(path: Path, seed, threads) -> str:
    h = hashlib.sha256(path.read_bytes())
    h.update(repr((seed,)).encode())
    return h.hexdigest()


def validate_outputs(out: Path) -> None:
    """Check that every CSV has a header and rectangular rows and that every
    JSON/JSONL file parses."""
    for f in sorted(out.iterdir()):
        if f.suffix == ".csv":
            with f.open(newline="") as fh:
                rows = list(csv.reader(fh))
            if not rows or any(len(r) != len(rows[0]) for r in rows):
                raise InvariantViolation(f"malformed CSV output {f.name}")
        elif f.suffix == ".json":
            json.loads(f.read_text())
        elif f.suffix == ".jsonl":
            for line in f.read_text().splitlines():
                json.loads(line)


def _violated(name: str, report: dict) -> bool:
    if name == "Conserve":
        return not (report["momentum_ok"] and report["energy_ok"])
    if name == "Moments":
        return any(report["violations"])
    return False


def cmd_run(args) -> int:
    path = Path(args.config)
    try:
        cfg = load_config(path)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.seed is not None:
        cfg.ensemble["master_seed"] = int(args.seed)
    if args.threads is not None:
        cfg.ensemble["threads"] = int(args.threads)
    out = Path(args.out or cfg.output_dir)
    start = time.time()
    status = EXIT_OK
    try:
        report = run_experiment(cfg, out)
        validate_outputs(out)
        if _violated(cfg.name, report):
            status = EXIT_INVARIANT
    except (InvariantViolation, PopulationExplosion) as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        status = EXIT_INVARIANT
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "manifest.json", {
        "experiment": cfg.name,
        "config": str(path),
        "config_sha256": _config_hash(path, cfg.seed, cfg.threads),
        "master_seed": cfg.seed,
        "version": __version__,
        "wall_time_s": time.time() - start,
        "exit_code": status,
    })
    return status


def cmd_validate(args) -> int:
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(f"ok: {cfg.name}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="kac", description="Kac particle system experiments")
    sub = ap.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run the experiment named in a config file")
    run.add_argument("config")
    run.add_argument("--seed", type=int)
    run.add_argument("--threads", type=int)
    run.add_argument("--out")
    run.set_defaults(fn=cmd_run)
    val = sub.add_parser("validate", help="check a config file")
    val.add_argument("config")
    val.set_defaults(fn=cmd_validate)
    ver = sub.add_parser("version", help="print the package version")
    ver.set_defaults(fn=lambda a: print(__version__) or EXIT_OK)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
