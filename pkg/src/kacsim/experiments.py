"""Named experiments driven by a TOML configuration.

Every experiment reads the same layout::

    output_dir = "out"

    [kernel]
    d = 3
    gamma = 0.5
    nu = 0.5

    [sim]
    N = 256
    K = 64.0
    K_prime = 16384.0
    t_final = 1.0
    p = 8.0
    snapshots = 10
    initial = "gaussian"

    [ensemble]
    replicas = 1
    master_seed = 0
    threads = 0          # 0: use all cores

    [experiment]
    name = "Conserve"    # Moments, CoupleScan, ChaosScan, Equilibrate, GProperties, Branch
    K_list = [16.0, 32.0]
    N_list = [32, 64]

Data files depend only on the configuration and the seed.
"""

from __future__ import annotations

import math
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import tomli

from . import io
from .branching import Environment, SignedParticle, branch_simulate
from .coupling import couple_scan
from .errors import ConfigError
from .kernels import H_of, G_of, KernelSpec, build_rate_table, g_difference_l2
from .metrics import W_p
from .moments import MomentTrace, nonincreasing_within
from .particle import SimConfig, sample_initial, simulate

EXPERIMENTS = ("Conserve", "Moments", "CoupleScan", "ChaosScan", "Equilibrate", "GProperties", "Branch")


def map_replicas(fn, jobs, workers: int = 1):
    """``[fn(job) for job in jobs]``, optionally on a process pool.

    Results come back in job order, so reductions do not depend on the
    number of workers.
    """
    jobs = list(jobs)
    if workers is None or workers <= 0:
        workers = os.cpu_count() or 1
    if workers == 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    import multiprocessing as mp

    with mp.get_context("fork").Pool(min(workers, len(jobs))) as pool:
        return pool.map(fn, jobs, chunksize=1)


@dataclass
class ExperimentConfig:
    name: str
    kernel: dict = field(default_factory=dict)
    sim: dict = field(default_factory=dict)
    ensemble: dict = field(default_factory=dict)
    experiment: dict = field(default_factory=dict)
    output_dir: str = "out"

    @property
    def spec(self) -> KernelSpec:
        k = self.kernel
        return KernelSpec(d=int(k.get("d", 3)), gamma=float(k.get("gamma", 0.5)), nu=float(k.get("nu", 0.5)))

    def sim_value(self, key, default):
        return self.sim.get(key, default)

    @property
    def replicas(self) -> int:
        return int(self.ensemble.get("replicas", 1))

    @property
    def seed(self) -> int:
        return int(self.ensemble.get("master_seed", 0))

    @property
    def threads(self) -> int:
        return int(self.ensemble.get("threads", 0))


_SIM_KEYS = {"N", "K", "K_prime", "t_final", "p", "snapshots", "initial", "dt", "r", "b", "t_start"}


def parse_config(data: dict) -> ExperimentConfig:
    """Validate a configuration dictionary; raises :class:`ConfigError`."""
    unknown = set(data) - {"kernel", "sim", "ensemble", "experiment", "output_dir"}
    if unknown:
        raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")
    exp = dict(data.get("experiment", {}))
    name = exp.get("name")
    if name not in EXPERIMENTS:
        raise ConfigError(f"experiment.name must be one of {EXPERIMENTS}, got {name!r}")
    cfg = ExperimentConfig(
        name=name,
        kernel=dict(data.get("kernel", {})),
        sim=dict(data.get("sim", {})),
        ensemble=dict(data.get("ensemble", {})),
        experiment=exp,
        output_dir=str(data.get("output_dir", "out")),
    )
    bad = set(cfg.sim) - _SIM_KEYS
    if bad:
        raise ConfigError(f"unknown sim keys: {sorted(bad)}")
    try:
        cfg.spec
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    s = cfg.sim
    if int(s.get("N", 256)) < 2:
        raise ConfigError("sim.N must be at least 2")
    for key in ("K", "K_prime", "t_final", "p"):
        if key in s and not float(s[key]) >= 0:
            raise ConfigError(f"sim.{key} must be non-negative")
    if "K" in s and "K_prime" in s and float(s["K"]) > float(s["K_prime"]):
        raise ConfigError("sim.K must not exceed sim.K_prime")
    if int(s.get("snapshots", 1)) < 1:
        raise ConfigError("sim.snapshots must be at least 1")
    if cfg.replicas < 1:
        raise ConfigError("ensemble.replicas must be at least 1")
    if name == "CoupleScan":
        ks = exp.get("K_list")
        if not ks or len(ks) < 2:
            raise ConfigError("CoupleScan needs experiment.K_list with at least two levels")
        if max(ks) > float(s.get("K_prime", 2.0**14)):
            raise ConfigError("K_list entries must not exceed K_prime")
    if name == "ChaosScan":
        ns = exp.get("N_list")
        if not ns or sorted(ns) != list(ns):
            raise ConfigError("ChaosScan needs an ascending experiment.N_list")
        if max(ns) > 4096:
            raise ConfigError("ChaosScan is limited to N <= 4096")
    return cfg


def load_config(path) -> ExperimentConfig:
    try:
        with open(path, "rb") as fh:
            data = tomli.load(fh)
    except (OSError, tomli.TOMLDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(data)


def _table(cfg):
    return build_rate_table(cfg.spec)


def _sim_cfg(cfg, record="trajectory", moments=(), replica=0):
    s = cfg.sim
    t_final = float(s.get("t_final", 1.0))
    snaps = int(s.get("snapshots", 10))
    dt = float(s.get("dt", t_final / snaps if t_final > 0 else 1.0))
    return SimConfig(K=float(s.get("K", 64.0)), t_final=t_final, seed=cfg.seed, record=record,
                     dt=dt, track_moments=tuple(moments), replica=replica)


def _initial(cfg, n=None, replica=0):
    s = cfg.sim
    return sample_initial(str(s.get("initial", "gaussian")), int(n or s.get("N", 256)), cfg.spec.d,
                          cfg.seed, r=float(s.get("r", 4.0)), replica=replica)


def run_conserve(cfg: ExperimentConfig, out: Path) -> dict:
    spec, table = cfg.spec, _table(cfg)
    st = _initial(cfg, replica=0)
    tr = simulate(st, spec, table, _sim_cfg(cfg, replica=1))
    n = st.n
    rows = []
    p0 = st.velocities.sum(axis=0)
    for t, V in zip(tr.times, tr.snapshots):
        dp = float(np.linalg.norm(V.sum(axis=0) - p0))
        de = float(abs(np.einsum("ij,ij->", V, V) / n - 1.0))
        rows.append((float(t), dp, de))
    io.write_csv(out / "drift.csv", ["t", "momentum_drift", "energy_drift"], rows)
    io.write_trajectory_csv(out / "trajectory.csv", tr.times, tr.snapshots)
    max_p = max(r[1] for r in rows)
    max_e = max(r[2] for r in rows)
    return {
        "N": n, "events": tr.n_accepted, "candidates": tr.n_candidates,
        "max_momentum_drift": max_p, "max_energy_drift": max_e,
        "momentum_ok": max_p <= 1e-9 * n, "energy_ok": max_e <= 1e-9,
    }


def run_moments(cfg: ExperimentConfig, out: Path) -> dict:
    spec, table = cfg.spec, _table(cfg)
    ks = tuple(float(k) for k in cfg.experiment.get("k_list", (4.0, 6.0)))
    st = _initial(cfg, replica=0)
    tr = simulate(st, spec, table, _sim_cfg(cfg, moments=ks, replica=1))
    trace = MomentTrace.from_trajectory(tr)
    io.write_moment_csv(out / "moments.csv", trace)
    return {
        "events": tr.n_accepted,
        "k": list(ks),
        "max_jump_ratio": [tr.max_jump_ratio[k] for k in ks],
        "bound": [2.0 ** (0.5 * k + 1.0) for k in ks],
        "violations": [tr.jump_violations[k] for k in ks],
    }


def run_couple_scan(cfg: ExperimentConfig, out: Path) -> dict:
    spec, table = cfg.spec, _table(cfg)
    s = cfg.sim
    res = couple_scan(
        spec, table, cfg.experiment["K_list"], K_prime=float(s.get("K_prime", 2.0**14)),
        t_final=float(s.get("t_final", 0.5)), n=int(s.get("N", 256)), replicas=cfg.replicas,
        p=float(s.get("p", 8.0)), dist=str(s.get("initial", "gaussian")), seed=cfg.seed,
        workers=cfg.threads,
    )
    io.write_csv(out / "couple_scan.csv", ["K", "replica", "t", "bar_d_p_sq"], res.rows)
    reg = res.regression.to_dict()
    io.write_json(out / "regression.json", reg)
    return {
        "K": res.Ks, "mean": res.mean, "std_error": res.std_error, "regression": reg,
        "expected_slope": res.expected_slope,
        "monotone": nonincreasing_within(res.mean, res.std_error),
    }


def _chaos_one(args):
    spec, table, n, sim, seed, replica, p, dist = args
    a = sample_initial(dist, n, spec.d, seed, replica=4 * replica)
    b = sample_initial(dist, n, spec.d, seed, replica=4 * replica + 1)
    cfg_a = SimConfig(K=sim["K"], t_final=sim["t_final"], seed=seed, replica=4 * replica + 2)
    cfg_b = SimConfig(K=sim["K"], t_final=sim["t_final"], seed=seed, replica=4 * replica + 3)
    va = simulate(a, spec, table, cfg_a).final.velocities
    vb = simulate(b, spec, table, cfg_b).final.velocities
    return W_p(va, vb, p)


def chaos_scan(cfg: ExperimentConfig, out: Path | None = None) -> dict:
    """Mean ``W_p`` between two independent runs at each ``N``."""
    spec, table = cfg.spec, _table(cfg)
    s = cfg.sim
    sim = {"K": float(s.get("K", 64.0)), "t_final": float(s.get("t_final", 1.0))}
    p = float(s.get("p", 4.0))
    dist = str(s.get("initial", "gaussian"))
    means, ses, rows = [], [], []
    for m, n in enumerate(cfg.experiment["N_list"]):
        jobs = [(spec, table, int(n), sim, cfg.seed, m * cfg.replicas + r, p, dist) for r in range(cfg.replicas)]
        vals = np.asarray(map_replicas(_chaos_one, jobs, cfg.threads))
        rows += [(int(n), r, float(v)) for r, v in enumerate(vals)]
        means.append(float(vals.mean()))
        ses.append(float(vals.std(ddof=1) / math.sqrt(vals.size)) if vals.size > 1 else 0.0)
    if out is not None:
        io.write_csv(out / "chaos_scan.csv", ["N", "replica", "W_p"], rows)
    return {"N": list(cfg.experiment["N_list"]), "mean_W_p": means, "std_error": ses,
            "nonincreasing": nonincreasing_within(means, ses)}


def equilibrate(cfg: ExperimentConfig, out: Path | None = None) -> dict:
    """Time average of ``<|v|^4>`` over ``[t_start, t_final]`` against the
    Maxwellian value ``(d + 2) / d``.

    Each replica contributes one time average; the standard error comes from
    the spread across replicas when there are several, otherwise from ten
    batch means of the snapshot series.
    """
    spec, table = cfg.spec, _table(cfg)
    s = cfg.sim
    t_final = float(s.get("t_final", 20.0))
    t_start = float(s.get("t_start", t_final / 2))
    dt = float(s.get("dt", 0.1))
    n = int(s.get("N", 1024))
    rows, averages, series = [], [], []
    for r in range(cfg.replicas):
        st = sample_initial(str(s.get("initial", "two_temperature")), n, spec.d, cfg.seed,
                            r=float(s.get("r", 4.0)), replica=2 * r)
        sc = SimConfig(K=float(s.get("K", 64.0)), t_final=t_final, seed=cfg.seed, record="trajectory",
                       dt=dt, replica=2 * r + 1)
        tr = simulate(st, spec, table, sc)
        m4 = np.array([np.mean(np.einsum("ij,ij->i", V, V) ** 2) for V in tr.snapshots])
        rows += [(r, float(t), float(v)) for t, v in zip(tr.times, m4)]
        window = m4[tr.times >= t_start - 1e-12]
        series.append(window)
        averages.append(float(window.mean()))
    target = (spec.d + 2.0) / spec.d
    mean = float(np.mean(averages))
    if cfg.replicas > 1:
        se = float(np.std(averages, ddof=1) / math.sqrt(cfg.replicas))
    else:
        batches = np.array_split(series[0], 10)
        bm = np.array([b.mean() for b in batches])
        se = float(bm.std(ddof=1) / math.sqrt(bm.size))
    if out is not None:
        io.write_csv(out / "fourth_moment.csv", ["replica", "t", "m4"], rows)
    return {"time_average": mean, "std_error": se, "target": target,
            "z_score": (mean - target) / se if se > 0 else math.inf,
            "within_5se": abs(mean - target) <= 5 * se}


def g_properties(cfg: ExperimentConfig, out: Path | None = None, c_frozen: float | None = None) -> dict:
    """Round trip, decay band and L2-difference bound of the inverse rate
    function ``G``."""
    spec, table = cfg.spec, _table(cfg)
    z = np.logspace(-3, 8, 10_000)
    g = G_of(spec, table, z)
    rt = np.abs(H_of(spec, table, g) - z) / np.maximum(1.0, z)
    band = g * (1.0 + z) ** (1.0 / spec.nu)
    rng = np.random.default_rng(cfg.seed)
    # by homogeneity the ratio depends on y/x only; fit on a coarse grid of y/x
    grid = np.concatenate([np.logspace(-4, -1, 4), np.linspace(0.2, 0.99, 9)])
    fit = [g_difference_l2(spec, table, 1.0, r) / ((1.0 - r) ** 2 / (1.0 + r)) for r in grid]
    c = float(max(fit)) * 1.05 if c_frozen is None else c_frozen
    xs = rng.uniform(0.01, 10.0, size=(100, 2))
    ratios = [g_difference_l2(spec, table, x, y) / ((x - y) ** 2 / (x + y)) for x, y in xs]
    if out is not None:
        io.write_csv(out / "g_table.csv", ["z", "G", "roundtrip_error", "band"], zip(z, g, rt, band))
    return {
        "max_roundtrip_error": float(rt.max()),
        "monotone": bool(np.all(np.diff(g) < 0)),
        "band_min": float(band.min()),
        "band_max": float(band.max()),
        "l2_constant": c,
        "l2_max_ratio": float(max(ratios)),
        "l2_bound_holds": bool(max(ratios) <= c),
    }


def branch_growth(cfg: ExperimentConfig, out: Path | None = None) -> dict:
    """``log E<1 + |v|^2, Xi*_t>`` on a grid of ``(K, t)`` and a quadratic fit
    in ``K t``; growth is at most linear when the quadratic coefficient is
    not significant at two standard errors."""
    spec, table = cfg.spec, _table(cfg)
    s, e = cfg.sim, cfg.experiment
    k_list = [float(k) for k in e.get("K_list", (1.0, 1.5, 2.0))]
    t_list = [float(t) for t in e.get("t_list", (0.05, 0.1, 0.15))]
    n = int(s.get("N", 256))
    st = sample_initial(str(s.get("initial", "gaussian")), n, spec.d, cfg.seed, replica=0)
    env_cfg = SimConfig(K=float(s.get("K", 2.0)), t_final=max(t_list), seed=cfg.seed, record="trajectory",
                        dt=max(t_list) / 10, replica=1)
    env = Environment.from_trajectory(simulate(st, spec, table, env_cfg), spec.gamma)
    v0 = np.zeros(spec.d)
    v0[0] = 1.0
    rows, x, y, w = [], [], [], []
    for a, K in enumerate(k_list):
        for b, t in enumerate(t_list):
            vals = np.empty(cfg.replicas)
            for r in range(cfg.replicas):
                pop = branch_simulate(env, spec, table, K, SignedParticle(v0, 1, 0.0), t, seed=cfg.seed,
                                      replica=2 + (a * len(t_list) + b) * cfg.replicas + r)
                vals[r] = pop.unsigned_second_moment()
            m = float(vals.mean())
            se = float(vals.std(ddof=1) / math.sqrt(vals.size))
            rows.append((K, t, m, se))
            x.append(K * t)
            y.append(math.log(m))
            # a point with no spread (no branching in any replica) gets a small floor
            w.append(max(se / m, 1e-6))
    x, y, w = np.asarray(x), np.asarray(y), np.asarray(w)
    A = np.vstack([np.ones_like(x), x, x * x]).T / w[:, None]
    coef, *_ = np.linalg.lstsq(A, y / w, rcond=None)
    resid = y / w - A @ coef
    dof = max(len(y) - 3, 1)
    cov = np.linalg.inv(A.T @ A) * max(float(resid @ resid) / dof, 1.0)
    se_q = float(math.sqrt(cov[2, 2]))
    lin = np.polyfit(x, y, 1, w=1.0 / w)
    if out is not None:
        io.write_csv(out / "branch_growth.csv", ["K", "t", "mean_unsigned_second_moment", "std_error"], rows)
    return {
        "Kt": x, "log_mean": y, "linear_slope": float(lin[0]), "linear_intercept": float(lin[1]),
        "quadratic_coefficient": float(coef[2]), "quadratic_std_error": se_q,
        "superlinear_significant": bool(coef[2] > 2.0 * se_q),
    }


RUNNERS = {
    "Conserve": run_conserve,
    "Moments": run_moments,
    "CoupleScan": run_couple_scan,
    "ChaosScan": chaos_scan,
    "Equilibrate": equilibrate,
    "GProperties": g_properties,
    "Branch": branch_growth,
}


def run_experiment(cfg: ExperimentConfig, out: Path) -> dict:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    report = RUNNERS[cfg.name](cfg, out)
    io.write_json(out / "report.json", {"experiment": cfg.name, **report})
    return report


def config_dict(cfg: ExperimentConfig) -> dict:
    return asdict(cfg)
