"""Collision geometry: the tangent frame, collision displacement and the
accurate-Tanaka rotation of the azimuth sphere.

For ``v != 0`` the frame ``iota(v)`` is a set of ``d - 1`` vectors of norm
``|v|`` completing ``v / |v|`` to an orthogonal basis.  It is built by a
Householder-type completion for ``v`` in the canonical half-space (first
nonzero coordinate positive) and extended by ``iota(-v) = -iota(v)``, so the
oddness holds bit for bit.
"""

from __future__ import annotations

import numpy as np

from . import _numerics as nx
from .errors import DomainError
from .kernels import KernelSpec, RateTable, _check_table

COLINEAR_TOL = 1e-12


def _vec(v, name="v"):
    a = np.ascontiguousarray(v, dtype=float)
    if a.ndim != 1 or a.size < 3:
        raise DomainError(f"{name} must be a 1-d vector of length >= 3")
    if not np.all(np.isfinite(a)):
        raise DomainError(f"{name} has non-finite entries")
    return a


def frame_of(v) -> np.ndarray:
    """Columns ``iota_1(v), ..., iota_{d-1}(v)`` as a ``(d, d-1)`` array."""
    v = _vec(v)
    if not np.any(v):
        raise DomainError("frame is undefined at the zero vector")
    return nx.frame_matrix(v)


def gamma_of(v, phi) -> np.ndarray:
    """``Gamma(v, phi) = sum_j phi_j iota_j(v)``: a vector orthogonal to ``v``
    with ``|Gamma| = |v|`` whenever ``|phi| = 1``."""
    v = _vec(v)
    phi = np.ascontiguousarray(phi, dtype=float)
    if phi.shape != (v.size - 1,):
        raise DomainError("phi must have length d - 1")
    if not np.any(v):
        raise DomainError("Gamma is undefined at the zero vector")
    out = np.empty_like(v)
    nx.gamma_into(v, phi, out)
    return out


def displacement(spec: KernelSpec, table: RateTable, v, v_star, z: float, phi) -> np.ndarray:
    """Displacement ``a(v, v*, z, phi)`` so that ``v' = v + a``, ``v*' = v* - a``.

    Zero when ``v == v*``.  Antisymmetric in ``(v, v*)``.
    """
    _check_table(spec, table)
    v = _vec(v)
    v_star = _vec(v_star, "v_star")
    phi = np.ascontiguousarray(phi, dtype=float)
    if not z > 0.0:
        raise DomainError("z must be positive")
    out = np.empty_like(v)
    nx.displacement_into(v, v_star, float(z), phi, float(spec.gamma), table.packed, out, np.empty_like(v))
    return out


def displacement_cutoff(spec: KernelSpec, table: RateTable, v, v_star, z: float, phi, K: float) -> np.ndarray:
    """``a_K = a * 1(z <= K |v - v*|**gamma)``."""
    x = float(np.linalg.norm(np.asarray(v, dtype=float) - np.asarray(v_star, dtype=float)))
    if x == 0.0 or z > K * x**spec.gamma:
        return np.zeros(np.asarray(v).shape)
    return displacement(spec, table, v, v_star, z, phi)


def apply_collision(v, v_star, a):
    """Post-collisional pair ``(v + a, v* - a)``."""
    v = np.asarray(v, dtype=float)
    v_star = np.asarray(v_star, dtype=float)
    a = np.asarray(a, dtype=float)
    return v + a, v_star - a


def tanaka_rotation(X, Y) -> np.ndarray:
    """Orthogonal ``(d-1, d-1)`` matrix ``R = P_Y P_X^{-1}`` aligning the
    azimuth frames of ``X`` and ``Y``.

    With ``psi = P_X^{-1} phi`` (the coordinates of ``Gamma(X, phi)`` in the
    in-plane frame ``j_X``),

        Gamma(X, phi) . Gamma(Y, R phi) = psi_1**2 (X.Y) + (1 - psi_1**2) |X||Y|,

    which is never below ``X . Y``.  ``psi_1`` is returned by
    :func:`tanaka_coordinate`.  Returns the identity when ``X == Y``.
    """
    X = _vec(X, "X")
    Y = _vec(Y, "Y")
    if X.shape != Y.shape:
        raise DomainError("X and Y must have the same dimension")
    if not np.any(X) or not np.any(Y):
        raise DomainError("Tanaka rotation is undefined at the zero vector")
    return nx.tanaka_matrix(X, Y, COLINEAR_TOL)


def tanaka_coordinate(X, Y, phi) -> float:
    """First coordinate of ``P_X^{-1} phi``: the component of
    ``Gamma(X, phi) / |X|`` along the in-plane perpendicular ``j_X / |X|``."""
    X = _vec(X, "X")
    Y = _vec(Y, "Y")
    phi = np.asarray(phi, dtype=float)
    nx_ = np.linalg.norm(X)
    xh = X / nx_
    yh = Y / np.linalg.norm(Y)
    c = xh @ yh
    w = yh - c * xh
    nw = np.linalg.norm(w)
    jx = frame_of(X)[:, 0] / nx_ if nw < COLINEAR_TOL else w / nw
    return float(gamma_of(X, phi) @ jx / nx_)


def tanaka_identity_batch(X, Y, Phi):
    """For rows ``(X, Y, phi)`` return ``Gamma(X, phi) . Gamma(Y, R phi)`` and
    the in-plane coordinate ``psi_1`` (see :func:`tanaka_coordinate`)."""
    X = np.ascontiguousarray(X, dtype=float)
    Y = np.ascontiguousarray(Y, dtype=float)
    Phi = np.ascontiguousarray(Phi, dtype=float)
    if X.ndim != 2 or X.shape != Y.shape or Phi.shape != (X.shape[0], X.shape[1] - 1):
        raise DomainError("need X, Y of shape (n, d) and phi of shape (n, d-1)")
    if np.any(~np.any(X, axis=1)) or np.any(~np.any(Y, axis=1)):
        raise DomainError("Tanaka rotation is undefined at the zero vector")
    lhs = np.empty(X.shape[0])
    psi1 = np.empty(X.shape[0])
    nx.tanaka_batch(X, Y, Phi, COLINEAR_TOL, lhs, psi1)
    return lhs, psi1


def sample_sphere(rng: np.random.Generator, dim: int, size=None) -> np.ndarray:
    """Uniform points on the unit sphere of ``R^dim`` (normalised Gaussians)."""
    shape = (dim,) if size is None else (size, dim)
    g = rng.standard_normal(shape)
    return g / np.linalg.norm(g, axis=-1, keepdims=True)
