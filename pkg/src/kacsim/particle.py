"""Labelled N-particle states on the Boltzmann sphere and exact event-driven
simulation of the K-cutoff Kac process.

The cutoff process is driven by Poisson measures of intensity
``(2/N) ds dphi dz`` on each unordered pair, with a collision taking effect
when ``z <= K |V^i - V^j|**gamma``.  :func:`simulate` realises this by
thinning a homogeneous candidate stream whose rate uses the energy bound
``|V^i - V^j| <= 2 sqrt(N)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _engine
from ._numerics import lambda_sums
from .errors import ConfigError, DomainError, InvariantViolation
from .kernels import KernelSpec, RateTable, _check_table
from .rng import stream

DRIFT_ABORT = 1e-6
RECORD_MODES = ("final", "trajectory", "events")


@dataclass
class State:
    """N labelled velocities; ``velocities`` has shape ``(N, d)``."""

    velocities: np.ndarray
    time: float = 0.0
    event_count: int = 0

    @property
    def n(self) -> int:
        return self.velocities.shape[0]

    @property
    def d(self) -> int:
        return self.velocities.shape[1]

    def copy(self) -> "State":
        return State(self.velocities.copy(), self.time, self.event_count)

    def momentum(self) -> np.ndarray:
        return self.velocities.sum(axis=0)

    def mean_energy(self) -> float:
        return float(np.einsum("ij,ij->", self.velocities, self.velocities) / self.n)


@dataclass(frozen=True)
class EmpiricalMeasure:
    """Uniform atom cloud ``N^{-1} sum_i delta_{v_i}``; a read-only view."""

    atoms: np.ndarray

    @property
    def n(self) -> int:
        return self.atoms.shape[0]

    @property
    def mass(self) -> float:
        return 1.0

    def mean(self) -> np.ndarray:
        return self.atoms.mean(axis=0)

    def second_moment(self) -> float:
        return float(np.einsum("ij,ij->", self.atoms, self.atoms) / self.n)


def empirical(state_or_atoms) -> EmpiricalMeasure:
    atoms = state_or_atoms.velocities if isinstance(state_or_atoms, State) else state_or_atoms
    atoms = np.asarray(atoms, dtype=float)
    if atoms.ndim != 2 or atoms.shape[0] < 1:
        raise DomainError("an empirical measure needs an (N, d) array of atoms, N >= 1")
    view = atoms.view()
    view.flags.writeable = False
    return EmpiricalMeasure(view)


def normalize_to_sphere(raw) -> State:
    """Centre and rescale raw points so that the mean is 0 and the mean-square is 1."""
    u = np.array(raw, dtype=float)
    if u.ndim != 2 or u.shape[0] < 2:
        raise DomainError("need at least two d-dimensional points")
    centred = u - u.mean(axis=0)
    ms = np.einsum("ij,ij->", centred, centred) / u.shape[0]
    # spread at rounding level means the points coincide
    if not ms > 1e-24 * float(np.max(u * u)):
        raise DomainError("points are all equal; cannot normalise")
    return State(centred / math.sqrt(ms))


def sample_initial(dist: str, n: int, d: int, seed: int, r: float = 4.0, replica: int = 0) -> State:
    """Draw ``n`` i.i.d. points and normalise them onto the sphere.

    ``dist`` is ``"gaussian"`` (isotropic), ``"two_temperature"`` (half the
    particles with variance 1, half with variance ``r``) or ``"shell"``
    (uniform on a sphere).
    """
    if n < 2:
        raise ConfigError("need n >= 2 particles")
    if d < 3:
        raise ConfigError("need d >= 3")
    rng = stream(seed, replica)
    if dist == "gaussian":
        raw = rng.standard_normal((n, d))
    elif dist == "two_temperature":
        if not r > 0.0:
            raise ConfigError("two_temperature needs variance ratio r > 0")
        raw = rng.standard_normal((n, d))
        raw[n // 2 :] *= math.sqrt(r)
    elif dist == "shell":
        raw = rng.standard_normal((n, d))
        raw /= np.linalg.norm(raw, axis=1, keepdims=True)
    else:
        raise ConfigError(f"unknown initial distribution {dist!r}")
    state = normalize_to_sphere(raw)
    if dist == "shell":
        # alternate projections onto the unit shell and zero mean, then a
        # final exact normalisation; the norms end up within rounding of 1
        v = state.velocities
        for _ in range(200):
            v /= np.linalg.norm(v, axis=1, keepdims=True)
            m = v.mean(axis=0)
            v -= m
            if np.linalg.norm(m) < 1e-15:
                break
        state = normalize_to_sphere(v)
    return state


@dataclass(frozen=True)
class SimConfig:
    """Run parameters for :func:`simulate`.

    ``record`` is ``"final"``, ``"trajectory"`` (snapshots every ``dt``) or
    ``"events"`` (accepted collisions, plus rejected candidates when
    ``log_rejected``).  ``track_moments`` lists the ``k`` for which Lambda_k
    is followed event by event.  ``x_cap`` overrides the relative-speed
    bound ``2 sqrt(N)`` used by the thinning majorant; it must dominate every
    pair distance.
    """

    K: float
    t_final: float
    seed: int = 0
    record: str = "final"
    dt: Optional[float] = None
    track_moments: tuple = ()
    x_cap: Optional[float] = None
    replica: int = 0
    log_rejected: bool = False
    check_drift: bool = True

    def __post_init__(self):
        if not self.K >= 0.0:
            raise ConfigError("K must be non-negative")
        if not self.t_final >= 0.0:
            raise ConfigError("t_final must be non-negative")
        if self.record not in RECORD_MODES:
            raise ConfigError(f"record must be one of {RECORD_MODES}")
        if self.record == "trajectory" and not (self.dt and self.dt > 0):
            raise ConfigError("trajectory recording needs dt > 0")


@dataclass
class EventLog:
    t: np.ndarray
    ij: np.ndarray
    z: np.ndarray
    theta: np.ndarray
    phi: np.ndarray
    accepted: np.ndarray

    def __len__(self):
        return self.t.shape[0]

    def records(self):
        for k in range(len(self)):
            yield {
                "t": float(self.t[k]),
                "i": int(self.ij[k, 0]),
                "j": int(self.ij[k, 1]),
                "z": float(self.z[k]),
                "theta": float(self.theta[k]),
                "phi": [float(p) for p in self.phi[k]],
                "accepted": bool(self.accepted[k]),
            }


@dataclass
class Trajectory:
    """Output of :func:`simulate`.

    ``times``/``snapshots`` hold the recorded velocity arrays (just the final
    state for ``record="final"``).  ``moments`` maps each tracked ``k`` to
    its values at the recorded times; ``moment_sup`` holds the running
    supremum of Lambda_k over all jumps up to each recorded time, and
    ``max_jump_ratio``/``jump_violations`` summarise the per-jump bound
    ``Lambda_k(after) <= 2**(k/2+1) Lambda_k(before)``.
    """

    final: State
    times: np.ndarray
    snapshots: list
    n_candidates: int
    n_accepted: int
    events: Optional[EventLog] = None
    moments: dict = field(default_factory=dict)
    moment_sup: dict = field(default_factory=dict)
    max_jump_ratio: dict = field(default_factory=dict)
    jump_violations: dict = field(default_factory=dict)
    momentum_drift: float = 0.0
    energy_drift: float = 0.0


def default_x_cap(n: int) -> float:
    return 2.0 * math.sqrt(n)


def sphere_drift(V: np.ndarray, momentum0=None, energy0: float = 1.0):
    """Absolute momentum drift and relative mean-square drift of ``V``."""
    p = V.sum(axis=0)
    if momentum0 is not None:
        p = p - momentum0
    e = np.einsum("ij,ij->", V, V) / V.shape[0]
    return float(np.linalg.norm(p)), float(abs(e - energy0) / energy0)


def _check_state(V):
    if V.ndim != 2 or V.shape[0] < 2 or V.shape[1] < 3:
        raise DomainError("state must hold N >= 2 velocities of dimension d >= 3")
    if not np.all(np.isfinite(V)):
        raise DomainError("state has non-finite velocities")


def simulate(state: State, spec: KernelSpec, table: RateTable, cfg: SimConfig, rng=None) -> Trajectory:
    """Evolve the K-cutoff labelled Kac process from ``state`` up to ``cfg.t_final``.

    The input state is not modified.  ``rng`` overrides the stream
    ``(cfg.seed, cfg.replica)``.
    """
    _check_table(spec, table)
    V = np.array(state.velocities, dtype=float, order="C")
    _check_state(V)
    if V.shape[1] != spec.d:
        raise DomainError(f"state has dimension {V.shape[1]}, kernel expects {spec.d}")
    n, d = V.shape
    gen = rng if rng is not None else stream(cfg.seed, cfg.replica)
    x_cap = cfg.x_cap if cfg.x_cap is not None else default_x_cap(n)
    z_cap = cfg.K * x_cap**spec.gamma
    rate = (n - 1) * spec.sphere_area * z_cap
    t0 = state.time
    t_end = t0 + cfg.t_final
    t_next = t0 + gen.exponential(1.0 / rate) if rate > 0 else math.inf

    p0 = V.sum(axis=0)
    e0 = float(np.einsum("ij,ij->", V, V) / n)
    ks = np.asarray(cfg.track_moments, dtype=float)
    sums = np.empty(ks.size)
    lambda_sums(V, ks, sums)
    max_ratio = np.zeros(ks.size)
    violations = np.zeros(ks.size, dtype=np.int64)
    run_max = sums / n
    counters = np.zeros(4, dtype=np.int64)

    log_events = cfg.record == "events"
    cap = 1 << 16 if log_events else 0
    ev_t = np.empty(cap)
    ev_ij = np.empty((cap, 2), dtype=np.int64)
    ev_z = np.empty(cap)
    ev_theta = np.empty(cap)
    ev_phi = np.empty((cap, d - 1))
    ev_acc = np.empty(cap, dtype=np.bool_)
    chunks = []

    if cfg.record == "trajectory":
        n_snap = int(math.floor(cfg.t_final / cfg.dt + 1e-9))
        stops = [t0 + k * cfg.dt for k in range(1, n_snap + 1)]
        if not stops or stops[-1] < t_end - 1e-12:
            stops.append(t_end)
    else:
        stops = [t_end]

    times = [t0] if cfg.record == "trajectory" else []
    snaps = [V.copy()] if cfg.record == "trajectory" else []
    mom = {k: [float(s / n)] for k, s in zip(ks, sums)} if cfg.record == "trajectory" else {k: [] for k in ks}
    sup = {k: [float(s / n)] for k, s in zip(ks, sums)} if cfg.record == "trajectory" else {k: [] for k in ks}
    t = t0
    worst_p = worst_e = 0.0
    for t_stop in stops:
        while True:
            t, t_next, status = _engine.run_cutoff(
                V, gen, t, t_next, t_stop, float(cfg.K), float(spec.gamma), float(spec.sphere_area),
                float(x_cap), table.packed, ks, sums, max_ratio, violations, run_max, counters,
                ev_t, ev_ij, ev_z, ev_theta, ev_phi, ev_acc, bool(cfg.log_rejected),
            )
            if status == _engine.STATUS_BUFFER_FULL or (log_events and t_next > t_stop):
                m = int(counters[3])
                chunks.append((ev_t[:m].copy(), ev_ij[:m].copy(), ev_z[:m].copy(),
                               ev_theta[:m].copy(), ev_phi[:m].copy(), ev_acc[:m].copy()))
                counters[3] = 0
            if status == _engine.STATUS_DONE:
                break
        if cfg.check_drift or cfg.record == "trajectory":
            dp, de = sphere_drift(V, p0, e0)
            worst_p = max(worst_p, dp)
            worst_e = max(worst_e, de)
            if cfg.check_drift and (dp > DRIFT_ABORT * n or de > DRIFT_ABORT):
                raise InvariantViolation(
                    f"sphere invariants drifted at t={t_stop:.6g}: momentum {dp:.3e}, energy {de:.3e}"
                )
        if cfg.record == "trajectory":
            times.append(t_stop)
            snaps.append(V.copy())
        if ks.size:
            exact = np.empty(ks.size)
            lambda_sums(V, ks, exact)
            for q, k in enumerate(ks):
                mom[k].append(float(exact[q] / n))
                sup[k].append(float(run_max[q]))

    if cfg.record != "trajectory":
        times = [t_end]
        snaps = [V.copy()]
    final = State(V, t_end, state.event_count + int(counters[1]))
    events = None
    if log_events:
        cat = [np.concatenate(parts) if parts else None for parts in zip(*chunks)] if chunks else None
        if cat is None:
            cat = [np.empty(0), np.empty((0, 2), dtype=np.int64), np.empty(0), np.empty(0),
                   np.empty((0, d - 1)), np.empty(0, dtype=bool)]
        events = EventLog(*cat)
    return Trajectory(
        final=final,
        times=np.asarray(times),
        snapshots=snaps,
        n_candidates=int(counters[0]),
        n_accepted=int(counters[1]),
        events=events,
        moments={k: np.asarray(v) for k, v in mom.items()},
        moment_sup={k: np.asarray(v) for k, v in sup.items()},
        max_jump_ratio={k: float(r) for k, r in zip(ks, max_ratio)},
        jump_violations={k: int(c) for k, c in zip(ks, violations)},
        momentum_drift=worst_p,
        energy_drift=worst_e,
    )
