"""Weighted moments, moment stopping times, the Povzner coefficients and
the concentration-of-moments experiment."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import integrate

from .errors import ConfigError, DomainError
from .kernels import KernelSpec, RateTable, _b_of_angle, _check_table
from .particle import EmpiricalMeasure, SimConfig, State, Trajectory, sample_initial, simulate


def lambda_k(mu, k: float) -> float:
    """``Lambda_k(mu) = <(1 + |v|^2)^{k/2}, mu>``."""
    if k < 0:
        raise DomainError("k must be non-negative")
    atoms = mu.atoms if isinstance(mu, EmpiricalMeasure) else (
        mu.velocities if isinstance(mu, State) else np.asarray(mu, dtype=float)
    )
    sq = np.einsum("ij,ij->i", atoms, atoms)
    return float(np.mean((1.0 + sq) ** (0.5 * k)))


@dataclass
class MomentTrace:
    """``lambda_k[k]`` holds Lambda_k at ``times``; ``sup_k`` the running
    supremum over all jumps up to each time when it was tracked."""

    times: np.ndarray
    lambda_k: dict
    per_jump_ratios: Optional[dict] = None
    sup_k: dict = field(default_factory=dict)

    @classmethod
    def from_trajectory(cls, traj: Trajectory) -> "MomentTrace":
        return cls(
            times=np.asarray(traj.times),
            lambda_k={float(k): np.asarray(v) for k, v in traj.moments.items()},
            per_jump_ratios={float(k): r for k, r in traj.max_jump_ratio.items()},
            sup_k={float(k): np.asarray(v) for k, v in traj.moment_sup.items()},
        )

    @classmethod
    def from_snapshots(cls, times, snapshots, ks) -> "MomentTrace":
        lam = {float(k): np.array([lambda_k(s, k) for s in snapshots]) for k in ks}
        return cls(times=np.asarray(times, dtype=float), lambda_k=lam)

    def rows(self):
        """``(t, k, Lambda_k)`` rows ordered by ``k`` then ``t``."""
        for k in sorted(self.lambda_k):
            for t, val in zip(self.times, self.lambda_k[k]):
                yield float(t), k, float(val)


def moment_threshold(p: float, b: float) -> float:
    return b / 2.0 ** (0.5 * p + 1.0)


def stopping_time_Tb(trace: MomentTrace, p: float, b: float, use_sup: bool = False) -> float:
    """First recorded time at which ``Lambda_p > b / 2^{p/2+1}``, else ``inf``.

    With ``use_sup`` the running per-jump supremum is used instead of the
    snapshot values, which catches excursions between snapshots.
    """
    key = float(p)
    source = trace.sup_k if use_sup else trace.lambda_k
    if key not in source or len(source[key]) == 0:
        raise DomainError(f"trace does not contain Lambda_{p:g}")
    vals = np.asarray(source[key])
    hit = np.nonzero(vals > moment_threshold(p, b))[0]
    return float(trace.times[hit[0]]) if hit.size else math.inf


def povzner_beta(p, theta):
    """``1 - ((1 + cos t)/2)^{p/2} - (sin(t)/2)^{p/2}``, vectorised."""
    p = np.asarray(p, dtype=float)
    theta = np.asarray(theta, dtype=float)
    if np.any(p < 4):
        raise DomainError("p must be at least 4")
    if np.any(theta <= 0) or np.any(theta > 0.5 * math.pi):
        raise DomainError("theta must lie in (0, pi/2]")
    half_one_minus = np.sin(0.5 * theta) ** 2
    q = 0.5 * p
    # 1 - (1 - s)^q computed without cancellation for small s
    head = -np.expm1(q * np.log1p(-half_one_minus))
    return head - (0.5 * np.sin(theta)) ** q


def _lambda_integrand(spec, p, theta):
    s = math.sin(0.5 * theta) ** 2
    if s == 0.0:
        return 0.0
    return -math.expm1(0.5 * p * math.log1p(-s)) * float(_b_of_angle(spec, theta))


def lambda_p_coefficient(spec: KernelSpec, table: RateTable, p: float, method: str = "quad") -> float:
    """``|S^{d-2}| int_0^{pi/2} (1 - ((1 + cos t)/2)^{p/2}) b(cos t) dt``.

    ``method="quad"`` uses adaptive quadrature with an algebraic end-point
    weight; ``method="tanh-sinh"`` applies a double-exponential rule on the
    whole interval.  The two are independent checks of each other.
    """
    _check_table(spec, table)
    if p < 2:
        raise DomainError("p must be at least 2")
    f = lambda t: _lambda_integrand(spec, p, t)  # noqa: E731
    if method == "quad":
        split = 1e-3
        # near 0 the integrand is ~ t^{1-nu}; strip that with an algebraic weight
        g = lambda t: f(t) / t ** (1.0 - spec.nu) if t > 0 else _lambda_limit(spec, p)  # noqa: E731
        head, _ = integrate.quad(g, 0.0, split, weight="alg", wvar=(1.0 - spec.nu, 0.0),
                                 epsabs=0.0, epsrel=1e-13, limit=200)
        tail, _ = integrate.quad(f, split, 0.5 * math.pi, epsabs=0.0, epsrel=1e-13, limit=400)
        val = head + tail
    elif method == "tanh-sinh":
        val = _tanh_sinh(f, 0.5 * math.pi)
    else:
        raise DomainError(f"unknown method {method!r}")
    return spec.sphere_area * val


def _lambda_limit(spec, p):
    # limit of f(t) / t^{1-nu} at 0: (p/4) t^2 * 2^{(1+nu)/2} t^{-1-nu} / t^{1-nu}
    if spec.b_form == "canonical":
        return 0.25 * p * 2.0 ** (0.5 * (1.0 + spec.nu))
    return 0.25 * p * 2.0 ** (0.5 * (1.0 + spec.nu)) * float(spec.b_table[1][-1])


def _tanh_sinh(f, upper, h=1.0 / 64, n=384):
    """Integrate ``f`` over ``(0, upper)`` with the substitution
    ``t = upper * (1 + tanh(pi/2 sinh s)) / 2``."""
    s = np.arange(-n, n + 1) * h
    u = 0.5 * math.pi * np.sinh(s)
    x = 0.5 * upper * (1.0 + np.tanh(u))
    w = 0.5 * upper * 0.5 * math.pi * np.cosh(s) / np.cosh(u) ** 2
    keep = (x > 0.0) & (x < upper) & (w > 0.0)
    total = 0.0
    for xi, wi in zip(x[keep], w[keep]):
        total += f(float(xi)) * float(wi)
    return total * h


@dataclass
class ConcentrationReport:
    n_values: list
    p: float
    b: float
    threshold: float
    t_final: float
    replicas: int
    exceed_counts: list
    probabilities: list
    std_errors: list
    nonincreasing: bool
    n_exponent: Optional[float]

    def to_dict(self):
        return {
            "N": list(self.n_values),
            "p": self.p,
            "b": self.b,
            "threshold": self.threshold,
            "t_final": self.t_final,
            "replicas": self.replicas,
            "exceed_counts": list(self.exceed_counts),
            "probabilities": list(self.probabilities),
            "std_errors": list(self.std_errors),
            "nonincreasing_within_2se": self.nonincreasing,
            "n_exponent": self.n_exponent,
        }


def nonincreasing_within(values, errors, n_se: float = 2.0) -> bool:
    """True when no later value exceeds an earlier one by more than
    ``n_se`` combined standard errors."""
    v = np.asarray(values, dtype=float)
    e = np.asarray(errors, dtype=float)
    for i in range(len(v)):
        for j in range(i + 1, len(v)):
            if v[j] - v[i] > n_se * math.hypot(e[i], e[j]):
                return False
    return True


def concentration_experiment(
    spec: KernelSpec,
    table: RateTable,
    K: float,
    t_final: float,
    p: float,
    b: float,
    replicas: int,
    n_values=(64, 128, 256, 512),
    dist: str = "gaussian",
    seed: int = 0,
    workers: int = 1,
) -> ConcentrationReport:
    """Estimate ``P(T_b^N <= t_final)`` for each ``N`` from ``replicas``
    independent runs, using the per-jump running supremum of ``Lambda_p``.

    Replica ``r`` at size index ``m`` has index ``q = m * replicas + r``; its
    initial data use the stream ``(seed, 2q)`` and its dynamics ``(seed, 2q + 1)``.
    """
    if replicas < 1:
        raise ConfigError("need at least one replica")
    thr = moment_threshold(p, b)
    counts, probs, ses = [], [], []
    from .experiments import map_replicas

    for m, n in enumerate(n_values):
        jobs = [(spec, table, K, t_final, p, n, dist, seed, m * replicas + r, thr) for r in range(replicas)]
        hits = map_replicas(_concentration_one, jobs, workers)
        c = int(sum(hits))
        q = c / replicas
        counts.append(c)
        probs.append(q)
        ses.append(math.sqrt(max(q * (1.0 - q), 0.0) / replicas))
    expo = None
    pos = [(n, q) for n, q in zip(n_values, probs) if q > 0]
    if len(pos) >= 2:
        expo = float(np.polyfit(np.log([n for n, _ in pos]), np.log([q for _, q in pos]), 1)[0])
    return ConcentrationReport(
        n_values=list(n_values), p=p, b=b, threshold=thr, t_final=t_final, replicas=replicas,
        exceed_counts=counts, probabilities=probs, std_errors=ses,
        nonincreasing=nonincreasing_within(probs, ses), n_exponent=expo,
    )


def _concentration_one(args):
    spec, table, K, t_final, p, n, dist, seed, replica, thr = args
    st = sample_initial(dist, n, spec.d, seed, replica=2 * replica)
    cfg = SimConfig(K=K, t_final=t_final, seed=seed, replica=2 * replica + 1, track_moments=(p,))
    tr = simulate(st, spec, table, cfg)
    return bool(tr.moment_sup[float(p)][-1] > thr or lambda_k(st, p) > thr)
