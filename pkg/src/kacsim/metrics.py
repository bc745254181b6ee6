"""Weighted distances between velocities and optimal-transport distances
between equal-size empirical measures.

``d_p(v, w) = (1 + |v|**p + |w|**p)**0.5 |v - w|`` with the convention
``|v|**0 = 1`` (so ``d_0 = sqrt(3) |v - w|``).  ``W_p`` is the transport
semimetric with quadratic cost ``d_p**2``; ``w1`` and ``w2`` are the usual
Wasserstein distances.  All transport problems between uniform clouds of
equal size reduce to an assignment problem, solved exactly.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import DomainError
from .particle import EmpiricalMeasure, empirical

EXACT_LIMIT = 4096


def _pow_norm(norms, p):
    if p == 0:
        return np.ones_like(norms)
    return norms**p


def d_p(v, w, p: float):
    """Weighted distance ``(1 + |v|^p + |w|^p)^{1/2} |v - w|``; broadcasts
    over leading axes."""
    if p < 0:
        raise DomainError("p must be non-negative")
    v = np.asarray(v, dtype=float)
    w = np.asarray(w, dtype=float)
    nv = np.linalg.norm(v, axis=-1)
    nw = np.linalg.norm(w, axis=-1)
    return np.sqrt(1.0 + _pow_norm(nv, p) + _pow_norm(nw, p)) * np.linalg.norm(v - w, axis=-1)


def squared_distances(V, W) -> np.ndarray:
    """``|V_i - W_j|**2`` from explicit differences, in row blocks to bound
    memory (the Gram-matrix shortcut loses exact zeros)."""
    V = np.asarray(V, dtype=float)
    W = np.asarray(W, dtype=float)
    sq = np.empty((V.shape[0], W.shape[0]))
    step = max(1, (1 << 22) // max(1, W.shape[0] * V.shape[1]))
    for lo in range(0, V.shape[0], step):
        diff = V[lo : lo + step, None, :] - W[None, :, :]
        sq[lo : lo + step] = np.einsum("ijk,ijk->ij", diff, diff)
    return sq


def d_p_squared_matrix(V, W, p: float) -> np.ndarray:
    """Cost matrix ``c_ij = d_p(V_i, W_j)**2``."""
    nv = _pow_norm(np.linalg.norm(np.asarray(V, dtype=float), axis=1), p)
    nw = _pow_norm(np.linalg.norm(np.asarray(W, dtype=float), axis=1), p)
    return (1.0 + nv[:, None] + nw[None, :]) * squared_distances(V, W)


def _atoms(mu) -> np.ndarray:
    if isinstance(mu, EmpiricalMeasure):
        return mu.atoms
    return empirical(mu).atoms


def _pair(mu, nu):
    a = _atoms(mu)
    b = _atoms(nu)
    if a.shape != b.shape:
        raise DomainError(f"clouds must have equal size and dimension, got {a.shape} and {b.shape}")
    return a, b


def _assign(cost: np.ndarray, exact: bool, eps: float) -> float:
    n = cost.shape[0]
    if exact and n > EXACT_LIMIT:
        raise DomainError(f"exact assignment is limited to N <= {EXACT_LIMIT}")
    if exact or n <= EXACT_LIMIT:
        rows, cols = linear_sum_assignment(cost)
        return float(cost[rows, cols].sum() / n)
    return auction_assignment(cost, eps) / n


def W_p(mu, nu, p: float, exact: bool = True, eps: float = 1e-6) -> float:
    """Optimal transport semimetric with cost ``d_p**2``.

    ``exact=False`` allows an auction epsilon-approximation above
    ``N = 4096``; its total cost exceeds the optimum by at most ``N eps``.
    """
    if p < 0:
        raise DomainError("p must be non-negative")
    a, b = _pair(mu, nu)
    return math.sqrt(max(_assign(d_p_squared_matrix(a, b, p), exact, eps), 0.0))


def w1(mu, nu) -> float:
    a, b = _pair(mu, nu)
    return _assign(np.sqrt(squared_distances(a, b)), True, 0.0)


def w2(mu, nu) -> float:
    a, b = _pair(mu, nu)
    return math.sqrt(max(_assign(squared_distances(a, b), True, 0.0), 0.0))


def brute_force_assignment(cost: np.ndarray) -> float:
    """Minimum of ``sum_i cost[i, s(i)]`` over all permutations ``s``; for small N only."""
    n = cost.shape[0]
    if n > 9:
        raise DomainError("brute force is limited to N <= 9")
    idx = np.arange(n)
    return float(min(cost[idx, list(s)].sum() for s in itertools.permutations(range(n))))


def auction_assignment(cost: np.ndarray, eps: float) -> float:
    """Total cost of a Gauss-Seidel auction assignment (minimisation form).

    The result is within ``N eps`` of the optimal total cost.
    """
    n = cost.shape[0]
    value = -cost
    prices = np.zeros(n)
    owner = -np.ones(n, dtype=np.int64)
    assigned = -np.ones(n, dtype=np.int64)
    free = list(range(n))
    while free:
        i = free.pop()
        gain = value[i] - prices
        j = int(np.argmax(gain))
        best = gain[j]
        gain[j] = -np.inf
        second = gain.max() if n > 1 else best
        prices[j] += best - second + eps
        prev = owner[j]
        owner[j] = i
        assigned[i] = j
        if prev >= 0:
            assigned[prev] = -1
            free.append(int(prev))
    return float(cost[np.arange(n), assigned].sum())


def _lambda_pair(a, b, k: float) -> float:
    ha = np.mean((1.0 + np.einsum("ij,ij->i", a, a)) ** (0.5 * k))
    hb = np.mean((1.0 + np.einsum("ij,ij->i", b, b)) ** (0.5 * k))
    return float(ha + hb)


def interpolation_exponent(p: float, p_prime: float) -> float:
    """Default exponent ``alpha = (p' - p - 2) / (2 p')`` used in the upper
    interpolation check."""
    return (p_prime - p - 2.0) / (2.0 * p_prime)


@dataclass(frozen=True)
class ComparisonReport:
    w1: float
    W_p: float
    lower_holds: bool
    alpha: float
    lambda_p_prime: float
    upper_bound: float
    upper_holds: bool
    triangle_ratio: float


def check_comparisons(mu, nu, xi, p: float, p_prime: float, alpha: float | None = None) -> ComparisonReport:
    """Evaluate ``w1 <= W_p``, ``W_p <= w1**alpha Lambda_{p'}(mu, nu)`` and
    the relaxed-triangle ratio ``W_p(mu,nu) / (W_p(mu,xi) + W_p(xi,nu))``.

    ``Lambda_{p'}(mu, nu)`` is the sum of the two weighted moments.  A zero
    denominator in the triangle ratio gives ratio 0 when ``W_p(mu,nu) = 0``.
    """
    if not p_prime > p + 2:
        raise DomainError("need p' > p + 2")
    a, b = _pair(mu, nu)
    c, _ = _pair(xi, nu)
    al = interpolation_exponent(p, p_prime) if alpha is None else float(alpha)
    d1 = w1(a, b)
    dp = W_p(a, b, p)
    lam = _lambda_pair(a, b, p_prime)
    ub = d1**al * lam
    den = W_p(a, c, p) + W_p(c, b, p)
    ratio = 0.0 if dp == 0.0 else (math.inf if den == 0.0 else dp / den)
    tol = 1e-12 * max(1.0, dp)
    return ComparisonReport(
        w1=d1,
        W_p=dp,
        lower_holds=d1 <= dp + tol,
        alpha=al,
        lambda_p_prime=lam,
        upper_bound=ub,
        upper_holds=dp <= ub + tol,
        triangle_ratio=ratio,
    )
