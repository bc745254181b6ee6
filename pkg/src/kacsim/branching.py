"""Signed branching particle system (the linearised Kac process) in a frozen,
piecewise-constant environment.

A particle ``(v, s)`` branches at rate ``2 |S^{d-2}| K <|v - v*|**gamma, rho_t>``.
It picks a partner ``v*`` from ``rho_t`` with weight ``|v - v*|**gamma``, and
is replaced by ``(v', s)``, ``(v*', s)`` and ``(v*, -s)``, where ``(v', v*')``
is the post-collisional pair.  Each event adds two particles and leaves the
signed mass unchanged.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _engine
from .errors import ConfigError, DomainError, PopulationExplosion
from .kernels import KernelSpec, RateTable, _check_table
from .particle import EmpiricalMeasure, Trajectory, empirical
from .rng import stream

RATE_FACTOR = 2.0
DEFAULT_CAP = 10**6


@dataclass(frozen=True)
class SignedParticle:
    v: np.ndarray
    sign: int = 1
    birth_time: float = 0.0

    def __post_init__(self):
        if self.sign not in (-1, 1):
            raise DomainError("sign must be +1 or -1")
        object.__setattr__(self, "v", np.asarray(self.v, dtype=float))


@dataclass
class Environment:
    """Piecewise-constant ``rho_t``: ``snapshots[k]`` holds on
    ``[times[k], times[k+1])``."""

    times: np.ndarray
    snapshots: list
    lambda_2_gamma_sup: float

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        if len(self.snapshots) != self.times.size or self.times.size == 0:
            raise DomainError("need one snapshot per time")
        if np.any(np.diff(self.times) <= 0):
            raise DomainError("environment times must increase")

    @classmethod
    def from_trajectory(cls, traj: Trajectory, gamma: float, tol: float = 1e-6) -> "Environment":
        snaps = [empirical(s) for s in traj.snapshots]
        for mu in snaps:
            if abs(mu.second_moment() - 1.0) > tol:
                raise DomainError("environment snapshots must have unit mean-square")
        sup = max(_lambda(mu.atoms, 2.0 + gamma) for mu in snaps)
        return cls(np.asarray(traj.times), snaps, sup)

    @classmethod
    def constant(cls, atoms, gamma: float) -> "Environment":
        mu = atoms if isinstance(atoms, EmpiricalMeasure) else empirical(atoms)
        return cls(np.zeros(1), [mu], _lambda(mu.atoms, 2.0 + gamma))

    def integral_lambda(self, k: float, t0: float, t1: float) -> float:
        """``int_{t0}^{t1} Lambda_k(rho_s) ds`` for the piecewise-constant flow."""
        total = 0.0
        edges = list(self.times[1:]) + [math.inf]
        for start, end, mu in zip(self.times, edges, self.snapshots):
            lo, hi = max(start, t0), min(end, t1)
            if hi > lo:
                total += (hi - lo) * _lambda(mu.atoms, k)
        return total


def _lambda(atoms, k):
    return float(np.mean((1.0 + np.einsum("ij,ij->i", atoms, atoms)) ** (0.5 * k)))


@dataclass
class Population:
    velocities: np.ndarray
    signs: np.ndarray
    t: float
    n_events: int

    @property
    def size(self) -> int:
        return self.signs.size

    def signed_mass(self) -> int:
        return int(self.signs.sum())

    def pairing(self, f) -> float:
        """Signed pairing ``<f, Xi_t>``."""
        return float(np.sum(self.signs * f(self.velocities)))

    def unsigned_second_moment(self) -> float:
        """``<1 + |v|^2, Xi*_t>`` (unsigned)."""
        return float(np.sum(1.0 + np.einsum("ij,ij->i", self.velocities, self.velocities)))

    def summary(self) -> dict:
        return {
            "t": self.t,
            "size": self.size,
            "signed_mass": self.signed_mass(),
            "unsigned_second_moment": self.unsigned_second_moment(),
        }


def branch_simulate(
    env: Environment,
    spec: KernelSpec,
    table: RateTable,
    K: float,
    start: SignedParticle,
    t_final: float,
    seed: int = 0,
    replica: int = 0,
    cap: int = DEFAULT_CAP,
    rng=None,
) -> Population:
    """Population at ``start.birth_time + t_final``.

    Raises :class:`PopulationExplosion` if the population would exceed ``cap``.
    """
    _check_table(spec, table)
    if not math.isfinite(K) or K < 0:
        raise ConfigError("branching needs a finite cutoff K >= 0")
    if t_final < 0:
        raise ConfigError("t_final must be non-negative")
    v0 = np.asarray(start.v, dtype=float)
    if v0.shape != (spec.d,):
        raise DomainError("start velocity has the wrong dimension")
    gen = rng if rng is not None else stream(seed, replica)
    room = min(cap, DEFAULT_CAP * 8) + 2
    pop_v = np.empty((min(1024, room), spec.d))
    pop_s = np.empty(pop_v.shape[0], dtype=np.int64)
    pop_v[0] = v0
    pop_s[0] = start.sign
    n_pop = 1
    events = 0
    t = start.birth_time
    t_end = t + t_final
    edges = list(env.times[1:]) + [math.inf]
    for k, mu in enumerate(env.snapshots):
        lo = max(env.times[k], t) if k else t
        hi = min(edges[k], t_end)
        if hi <= lo:
            continue
        t = lo
        atoms = np.ascontiguousarray(mu.atoms)
        env_norm = float(np.max(np.linalg.norm(atoms, axis=1)))
        while True:
            t, n_pop, ev, status = _engine.run_branching(
                pop_v, pop_s, n_pop, gen, t, hi, atoms, env_norm, float(K), float(spec.gamma),
                float(spec.sphere_area), table.packed, RATE_FACTOR, pop_v.shape[0],
            )
            events += ev
            if status == 0:
                break
            if pop_v.shape[0] >= cap:
                raise PopulationExplosion(f"population exceeded the cap {cap} at t={t:.6g}")
            new = min(2 * pop_v.shape[0], cap)
            pop_v = np.concatenate([pop_v, np.empty((new - pop_v.shape[0], spec.d))])
            pop_s = np.concatenate([pop_s, np.empty(new - pop_s.shape[0], dtype=np.int64)])
        t = hi
    return Population(pop_v[:n_pop].copy(), pop_s[:n_pop].copy(), t_end, events)


@dataclass(frozen=True)
class FstEstimate:
    mean: float
    std_error: float
    replicas: int
    mean_size: float
    mean_unsigned_second_moment: float


def estimate_fst(
    env: Environment,
    spec: KernelSpec,
    table: RateTable,
    K: float,
    f,
    s: float,
    t: float,
    v,
    replicas: int,
    seed: int = 0,
    cap: int = DEFAULT_CAP,
) -> FstEstimate:
    """Monte Carlo estimate of ``E_{(s,v)} <f, Xi_t>`` from ``replicas``
    populations started from ``(v, +1)`` at time ``s``.  Replica ``r`` uses
    the stream ``(seed, r)``."""
    if t < s:
        raise ConfigError("need t >= s")
    if replicas < 1:
        raise ConfigError("need at least one replica")
    vals = np.empty(replicas)
    sizes = np.empty(replicas)
    m2 = np.empty(replicas)
    start = SignedParticle(np.asarray(v, dtype=float), 1, s)
    for r in range(replicas):
        pop = branch_simulate(env, spec, table, K, start, t - s, seed=seed, replica=r, cap=cap)
        vals[r] = pop.pairing(f)
        sizes[r] = pop.size
        m2[r] = pop.unsigned_second_moment()
    se = float(vals.std(ddof=1) / math.sqrt(replicas)) if replicas > 1 else 0.0
    return FstEstimate(float(vals.mean()), se, replicas, float(sizes.mean()), float(m2.mean()))
