"""Tanaka coupling of cutoff Kac processes.

A fine process at cutoff ``K'`` (standing in for the noncutoff process) and
one or more coarse processes at cutoffs ``K <= K'`` are driven by the same
candidate stream.  Each candidate ``(t, {i,j}, z, phi)`` is tested against
every process with the *same* ``z``; a coarse process uses the azimuth
``R phi``, ``R`` being the Tanaka rotation of the pre-jump relative
velocities of the two processes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _engine
from .errors import ConfigError, DomainError, InvariantViolation
from .kernels import KernelSpec, RateTable, _check_table
from .metrics import d_p
from .particle import DRIFT_ABORT, State, default_x_cap, sample_initial, sphere_drift
from .rng import stream


@dataclass
class CoupledPair:
    """A fine state at cutoff ``K_prime`` and a coarse state at cutoff ``K``."""

    fine: State
    coarse: State
    K: float
    K_prime: float
    p: float = 8.0
    shared_clock: float = 0.0

    def __post_init__(self):
        if self.fine.velocities.shape != self.coarse.velocities.shape:
            raise DomainError("fine and coarse states must have the same shape")
        if not 0.0 <= self.K <= self.K_prime:
            raise ConfigError("need 0 <= K <= K_prime")
        if self.p < 0:
            raise ConfigError("p must be non-negative")


def bar_d_p_squared(pair_or_fine, coarse=None, p: float | None = None) -> float:
    """``(1/N) sum_i d_p(V^i, W^i)**2`` over aligned labels.

    Accepts a :class:`CoupledPair` or two velocity arrays plus ``p``.
    """
    if isinstance(pair_or_fine, CoupledPair):
        V = pair_or_fine.fine.velocities
        W = pair_or_fine.coarse.velocities
        p = pair_or_fine.p if p is None else p
    else:
        V = pair_or_fine.velocities if isinstance(pair_or_fine, State) else np.asarray(pair_or_fine, float)
        W = coarse.velocities if isinstance(coarse, State) else np.asarray(coarse, float)
        if p is None:
            raise DomainError("p is required with raw arrays")
    if V.shape != W.shape:
        raise DomainError("size mismatch between the two states")
    return float(np.mean(d_p(V, W, p) ** 2))


@dataclass
class CoupledTrajectory:
    """Snapshots of a fine process and coarse copies at levels ``Ks``.

    ``bar_d[m, s]`` is the coupled distance between the fine state and copy
    ``m`` at ``times[s]``.  ``coarse_azimuth_mean[m]`` is the mean of the
    rotated azimuths actually used by copy ``m``.
    """

    times: np.ndarray
    Ks: np.ndarray
    K_prime: float
    p: float
    bar_d: np.ndarray
    fine: State
    coarse: list
    n_candidates: int
    n_fine: int
    n_coarse: np.ndarray
    coarse_azimuth_mean: np.ndarray
    fine_snapshots: list = field(default_factory=list)
    coarse_snapshots: list = field(default_factory=list)


def couple_simulate(
    fine: State,
    coarse,
    spec: KernelSpec,
    table: RateTable,
    K_prime: float,
    Ks,
    t_final: float,
    seed: int = 0,
    replica: int = 0,
    p: float = 8.0,
    dt: float | None = None,
    record: str = "distance",
    rng=None,
    x_cap: float | None = None,
) -> CoupledTrajectory:
    """Run the coupled system up to ``t_final``.

    ``coarse`` is one state or a list with one state per entry of ``Ks``;
    several coarse levels share the fine process and the candidate stream,
    and each coarse copy on its own is coupled to the fine process exactly as
    in a two-process run.  ``record="states"`` also keeps velocity snapshots.
    Snapshots are taken every ``dt`` (default ``t_final / 64``).
    """
    _check_table(spec, table)
    Ks = np.atleast_1d(np.asarray(Ks, dtype=float))
    coarse_list = list(coarse) if isinstance(coarse, (list, tuple)) else [coarse] * Ks.size
    if len(coarse_list) != Ks.size:
        raise ConfigError("need one coarse state per coarse level")
    if np.any(Ks < 0) or np.any(Ks > K_prime):
        raise ConfigError("coarse levels must satisfy 0 <= K <= K_prime")
    if not t_final >= 0:
        raise ConfigError("t_final must be non-negative")
    if record not in ("distance", "states"):
        raise ConfigError("record must be 'distance' or 'states'")
    V = np.array(fine.velocities, dtype=float, order="C")
    Vc = np.ascontiguousarray(np.stack([np.asarray(c.velocities, dtype=float) for c in coarse_list]))
    if Vc.shape[1:] != V.shape:
        raise DomainError("fine and coarse states must have the same shape")
    if V.shape[1] != spec.d:
        raise DomainError("state dimension does not match the kernel")
    n = V.shape[0]
    gen = rng if rng is not None else stream(seed, replica)
    x_cap = default_x_cap(n) if x_cap is None else x_cap
    rate = (n - 1) * spec.sphere_area * K_prime * x_cap**spec.gamma
    t = fine.time
    t_next = t + gen.exponential(1.0 / rate) if rate > 0 else math.inf
    dt = t_final / 64 if dt is None else dt
    n_snap = max(1, int(round(t_final / dt))) if t_final > 0 else 0
    stops = [fine.time + t_final * (s + 1) / n_snap for s in range(n_snap)]

    acc = np.zeros(2 + Ks.size, dtype=np.int64)
    phi_sums = np.zeros((Ks.size, spec.d - 1))
    p0 = V.sum(axis=0)
    pc0 = Vc.sum(axis=1)

    def dist():
        return [bar_d_p_squared(V, Vc[m], p) for m in range(Ks.size)]

    times = [fine.time]
    bar = [dist()]
    fs = [V.copy()] if record == "states" else []
    cs = [Vc.copy()] if record == "states" else []
    for t_stop in stops:
        t, t_next = _engine.run_coupled(
            V, Vc, gen, t, t_next, t_stop, float(K_prime), Ks, float(spec.gamma),
            float(spec.sphere_area), float(x_cap), table.packed, acc, phi_sums,
        )
        dp, de = sphere_drift(V, p0, 1.0)
        bad = dp > DRIFT_ABORT * n or de > DRIFT_ABORT
        for m in range(Ks.size):
            cp, ce = sphere_drift(Vc[m], pc0[m], 1.0)
            bad |= cp > DRIFT_ABORT * n or ce > DRIFT_ABORT
        if bad:
            raise InvariantViolation(f"sphere invariants drifted in the coupled run at t={t_stop:.6g}")
        times.append(t_stop)
        bar.append(dist())
        if record == "states":
            fs.append(V.copy())
            cs.append(Vc.copy())
    t_end = fine.time + t_final
    used = np.maximum(acc[2:], 1)[:, None]
    return CoupledTrajectory(
        times=np.asarray(times),
        Ks=Ks,
        K_prime=float(K_prime),
        p=float(p),
        bar_d=np.asarray(bar).T,
        fine=State(V, t_end, fine.event_count + int(acc[1])),
        coarse=[State(Vc[m].copy(), t_end, coarse_list[m].event_count + int(acc[2 + m])) for m in range(Ks.size)],
        n_candidates=int(acc[0]),
        n_fine=int(acc[1]),
        n_coarse=acc[2:].copy(),
        coarse_azimuth_mean=phi_sums / used,
        fine_snapshots=fs,
        coarse_snapshots=cs,
    )


def couple_pair(pair: CoupledPair, spec, table, t_final, seed=0, replica=0, **kw) -> CoupledTrajectory:
    """Two-process form of :func:`couple_simulate` for a :class:`CoupledPair`."""
    return couple_simulate(pair.fine, pair.coarse, spec, table, pair.K_prime, [pair.K], t_final,
                           seed=seed, replica=replica, p=pair.p, **kw)


@dataclass(frozen=True)
class Regression:
    slope: float
    intercept: float
    stderr: float
    n_points: int

    def to_dict(self):
        return {"slope": self.slope, "intercept": self.intercept, "stderr": self.stderr, "n_points": self.n_points}


def log_log_fit(x, y) -> Regression:
    """Least-squares line through ``(log x, log y)`` with the slope's standard error."""
    lx = np.log(np.asarray(x, dtype=float))
    ly = np.log(np.asarray(y, dtype=float))
    n = lx.size
    if n < 2:
        raise DomainError("need at least two points")
    A = np.vstack([lx, np.ones(n)]).T
    coef, *_ = np.linalg.lstsq(A, ly, rcond=None)
    resid = ly - A @ coef
    sxx = np.sum((lx - lx.mean()) ** 2)
    se = math.sqrt(np.sum(resid**2) / (n - 2) / sxx) if n > 2 else 0.0
    return Regression(float(coef[0]), float(coef[1]), float(se), int(n))


@dataclass
class ScanResult:
    """Per-replica coupled distances ``bar_d[r, m]`` at ``t_final`` for levels
    ``Ks``, their means and standard errors, the fitted log-log slope and the
    full per-snapshot records ``rows`` as ``(K, replica, t, bar_d_p_sq)``."""

    Ks: np.ndarray
    K_prime: float
    p: float
    t_final: float
    bar_d: np.ndarray
    mean: np.ndarray
    std_error: np.ndarray
    regression: Regression
    rows: list
    expected_slope: float


def _scan_one(args):
    spec, table, K_prime, Ks, t_final, n, dist, seed, replica, p, dt = args
    st = sample_initial(dist, n, spec.d, seed, replica=2 * replica)
    tr = couple_simulate(st, [st] * len(Ks), spec, table, K_prime, Ks, t_final,
                         seed=seed, replica=2 * replica + 1, p=p, dt=dt)
    return tr.times, tr.bar_d


def couple_scan(
    spec: KernelSpec,
    table: RateTable,
    Ks,
    K_prime: float = 2.0**14,
    t_final: float = 0.5,
    n: int = 256,
    replicas: int = 50,
    p: float = 8.0,
    dist: str = "gaussian",
    seed: int = 0,
    dt: float | None = None,
    workers: int = 1,
) -> ScanResult:
    """Estimate ``E[bar_d_p^2(t_final)]`` at each coarse level and regress its
    logarithm on ``log K``.

    Every replica draws one initial state, runs one fine process and one
    coarse copy per level from that state.  Replica ``r`` uses the streams
    ``(seed, 2r)`` for its initial data and ``(seed, 2r + 1)`` for dynamics.
    """
    from .experiments import map_replicas

    Ks = np.asarray(sorted(Ks), dtype=float)
    if Ks.size < 2:
        raise ConfigError("a scan needs at least two coarse levels")
    if Ks[-1] > K_prime:
        raise ConfigError("coarse levels must not exceed K_prime")
    jobs = [(spec, table, K_prime, Ks, t_final, n, dist, seed, r, p, dt) for r in range(replicas)]
    out = map_replicas(_scan_one, jobs, workers)
    rows = []
    finals = np.empty((replicas, Ks.size))
    for r, (times, bar) in enumerate(out):
        finals[r] = bar[:, -1]
        for m, K in enumerate(Ks):
            for t, val in zip(times, bar[m]):
                rows.append((float(K), r, float(t), float(val)))
    mean = finals.mean(axis=0)
    se = finals.std(axis=0, ddof=1) / math.sqrt(replicas) if replicas > 1 else np.zeros(Ks.size)
    return ScanResult(
        Ks=Ks, K_prime=float(K_prime), p=float(p), t_final=float(t_final), bar_d=finals,
        mean=mean, std_error=se, regression=log_log_fit(Ks, mean), rows=rows,
        expected_slope=1.0 - 1.0 / spec.nu,
    )
