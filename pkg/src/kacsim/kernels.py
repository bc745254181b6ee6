"""Angular collision kernel, cumulative rate function H and its inverse G.

The noncutoff kernel is described by the angular density ``b`` on ``[0, 1)``;
the canonical choice is ``b(x) = (1 - x) ** (-(1 + nu) / 2)``.  Collisions are
parametrised by a rate level ``z > 0`` which is mapped to a deflection angle
through ``G``, the inverse of

    H(theta) = int_theta^{pi/2} b(cos x) dx.

``H`` diverges like ``theta ** -nu`` at zero.  A :class:`RateTable` tabulates it
on log-spaced knots down to ``theta_small``; below that a closed-form two-term
series takes over, and both ``H`` and ``G`` are refined to near machine
precision from the table.
"""

from __future__ import annotations

import hashlib
import math
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numba import njit
from scipy import integrate
from scipy.special import gamma as gamma_fn

from . import _numerics as nx
from .errors import DomainError

CANONICAL = "canonical"
USER_TABLE = "table"

CACHE_MAGIC = b"KACG"
CACHE_VERSION = 1


@dataclass(frozen=True)
class KernelSpec:
    """Parameters of a hard-potential, noncutoff collision kernel.

    Parameters
    ----------
    d : int
        Velocity dimension, at least 3.
    gamma : float
        Velocity exponent in ``[0, 1]``.
    nu : float
        Angular singularity in ``(0, 1)``.
    b_form : {"canonical", "table"}
        ``"table"`` uses ``b(x) = r(x) (1 - x) ** (-(1 + nu) / 2)`` with the
        regular part ``r`` interpolated linearly from ``b_table = (x, r)``.
    """

    d: int = 3
    gamma: float = 0.5
    nu: float = 0.5
    b_form: str = CANONICAL
    b_table: tuple | None = field(default=None, compare=False)

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 3:
            raise DomainError(f"dimension must be an integer >= 3, got {self.d}")
        if not 0.0 <= self.gamma <= 1.0:
            raise DomainError(f"gamma must lie in [0, 1], got {self.gamma}")
        if not 0.0 < self.nu < 1.0:
            raise DomainError(f"nu must lie in (0, 1), got {self.nu}")
        if self.b_form not in (CANONICAL, USER_TABLE):
            raise DomainError(f"unknown b_form {self.b_form!r}")
        if self.b_form == USER_TABLE:
            if self.b_table is None:
                raise DomainError("b_form='table' requires b_table=(x, r)")
            x, r = (np.asarray(a, dtype=float) for a in self.b_table)
            if x.ndim != 1 or x.shape != r.shape or x.size < 2:
                raise DomainError("b_table must be two 1-d arrays of equal length >= 2")
            if np.any(np.diff(x) <= 0) or x[0] < 0.0 or x[-1] > 1.0:
                raise DomainError("b_table knots must increase within [0, 1]")
            if np.any(r <= 0.0):
                raise DomainError("b_table regular part must be positive")
            object.__setattr__(self, "b_table", (x, r))

    @property
    def sphere_area(self) -> float:
        """Surface measure of the azimuth sphere S^{d-2} in R^{d-1}."""
        k = self.d - 1
        return 2.0 * math.pi ** (k / 2.0) / gamma_fn(k / 2.0)

    @property
    def kind(self) -> int:
        return nx.KIND_TABLE if self.b_form == USER_TABLE else nx.KIND_CANONICAL

    def _table_arrays(self):
        if self.b_form == USER_TABLE:
            return self.b_table
        return np.zeros(1), np.ones(1)


def b_angular(spec: KernelSpec, x):
    """Angular density ``b(x)`` on ``(-1, 1)``, zero for ``x < 0``."""
    xa = np.asarray(x, dtype=float)
    if np.any(np.abs(xa) >= 1.0):
        raise DomainError("b is defined on the open interval (-1, 1)")
    with np.errstate(divide="ignore"):
        val = np.where(xa >= 0.0, (1.0 - xa) ** (-0.5 * (1.0 + spec.nu)), 0.0)
    if spec.b_form == USER_TABLE:
        rx, ry = spec.b_table
        val = val * np.interp(xa, rx, ry)
    return val[()] if val.ndim == 0 else val


def _b_of_angle(spec: KernelSpec, theta):
    theta = np.asarray(theta, dtype=float)
    val = (2.0 * np.sin(0.5 * theta) ** 2) ** (-0.5 * (1.0 + spec.nu))
    if spec.b_form == USER_TABLE:
        rx, ry = spec.b_table
        val = val * np.interp(np.cos(theta), rx, ry)
    return val


@dataclass(frozen=True, eq=False)
class RateTable:
    """Monotone table of ``H`` on log-spaced angles, immutable once built.

    ``theta_grid`` decreases from ``pi/2`` to ``theta_small``; ``H_values``
    increases from 0.  ``small_theta_coeffs = (c0, c2)`` are the coefficients
    of ``b(cos x) ~ 2**((1+nu)/2) x**(-1-nu) (c0 + c2 x**2)`` used below the
    grid.
    """

    nu: float
    kind: int
    theta_grid: np.ndarray
    H_values: np.ndarray
    small_theta_coeffs: tuple
    tolerance: float
    r_x: np.ndarray
    r_y: np.ndarray

    @property
    def theta_small(self) -> float:
        return float(self.theta_grid[-1])

    @property
    def packed(self):
        """Tuple form consumed by the compiled routines."""
        cached = self.__dict__.get("_packed")
        if cached is None:
            c0, c2 = self.small_theta_coeffs
            params = np.array(
                [
                    self.nu,
                    self.theta_small,
                    self.H_values[-1],
                    c0,
                    c2,
                    float(self.kind),
                    self.tolerance,
                    2.0 ** (0.5 * (1.0 + self.nu)),
                ]
            )
            cached = (self.theta_grid, self.H_values, params, self.r_x, self.r_y)
            object.__setattr__(self, "_packed", cached)
        return cached

    def matches(self, spec: KernelSpec) -> bool:
        rx, ry = spec._table_arrays()
        return (
            self.nu == spec.nu
            and self.kind == spec.kind
            and np.array_equal(self.r_x, rx)
            and np.array_equal(self.r_y, ry)
        )


def _small_theta_coeffs(spec: KernelSpec):
    if spec.b_form == CANONICAL:
        return 1.0, (1.0 + spec.nu) / 24.0
    rx, ry = spec.b_table
    r1 = float(np.interp(1.0, rx, ry))
    slope = float((ry[-1] - ry[-2]) / (rx[-1] - rx[-2])) if rx[-1] >= 1.0 else 0.0
    return r1, (1.0 + spec.nu) * r1 / 24.0 - 0.5 * slope


def build_rate_table(
    spec: KernelSpec,
    n_knots: int = 4096,
    theta_small: float = 1e-3,
    tolerance: float = 1e-10,
    cache: bool = True,
) -> RateTable:
    """Tabulate ``H`` for ``spec``; reuses a binary cache under ``KAC_CACHE_DIR``."""
    rx, ry = spec._table_arrays()
    rx = np.ascontiguousarray(rx, dtype=float)
    ry = np.ascontiguousarray(ry, dtype=float)
    cache_path = None
    if cache and os.environ.get("KAC_CACHE_DIR"):
        key = hashlib.sha256(
            repr((spec.nu, spec.kind, n_knots, theta_small, tolerance)).encode()
            + rx.tobytes()
            + ry.tobytes()
        ).hexdigest()[:16]
        cache_path = Path(os.environ["KAC_CACHE_DIR"]) / f"rate_table_{key}.kacg"
        if cache_path.exists():
            try:
                return read_rate_table(cache_path)
            except (OSError, ValueError):
                pass

    grid = np.exp(np.linspace(math.log(0.5 * math.pi), math.log(theta_small), n_knots))
    grid[0] = 0.5 * math.pi

    def integrand(x):
        return float(_b_of_angle(spec, x))

    pieces = np.empty(n_knots - 1)
    for k in range(n_knots - 1):
        pieces[k], _ = integrate.quad(integrand, grid[k + 1], grid[k], epsabs=0.0, epsrel=1e-13)
    H_values = np.concatenate(([0.0], np.cumsum(pieces)))
    table = RateTable(
        nu=float(spec.nu),
        kind=spec.kind,
        theta_grid=grid,
        H_values=H_values,
        small_theta_coeffs=_small_theta_coeffs(spec),
        tolerance=tolerance,
        r_x=rx,
        r_y=ry,
    )
    if cache_path is not None:
        cache_path.parent.mkdir(parents=True, exist_ok=True)
        write_rate_table(table, cache_path)
    return table


def write_rate_table(table: RateTable, path) -> None:
    """Binary cache: ``KACG``, u32 version, header, then little-endian f64 arrays."""
    c0, c2 = table.small_theta_coeffs
    with open(path, "wb") as fh:
        fh.write(CACHE_MAGIC)
        fh.write(struct.pack("<II", CACHE_VERSION, table.kind))
        fh.write(struct.pack("<ddddI", table.nu, table.tolerance, c0, c2, table.theta_grid.size))
        fh.write(table.theta_grid.astype("<f8").tobytes())
        fh.write(table.H_values.astype("<f8").tobytes())
        fh.write(struct.pack("<I", table.r_x.size))
        fh.write(table.r_x.astype("<f8").tobytes())
        fh.write(table.r_y.astype("<f8").tobytes())


def read_rate_table(path) -> RateTable:
    data = Path(path).read_bytes()
    if data[:4] != CACHE_MAGIC:
        raise ValueError(f"{path}: not a rate-table cache")
    version, kind = struct.unpack_from("<II", data, 4)
    if version != CACHE_VERSION:
        raise ValueError(f"{path}: unsupported cache version {version}")
    nu, tol, c0, c2, n = struct.unpack_from("<ddddI", data, 12)
    off = 12 + struct.calcsize("<ddddI")
    grid = np.frombuffer(data, "<f8", n, off).astype(float)
    off += 8 * n
    hv = np.frombuffer(data, "<f8", n, off).astype(float)
    off += 8 * n
    (m,) = struct.unpack_from("<I", data, off)
    off += 4
    rx = np.frombuffer(data, "<f8", m, off).astype(float)
    off += 8 * m
    ry = np.frombuffer(data, "<f8", m, off).astype(float)
    return RateTable(nu, kind, grid, hv, (c0, c2), tol, rx, ry)


def _check_table(spec: KernelSpec, table: RateTable):
    if not table.matches(spec):
        raise DomainError("rate table was built for a different angular kernel")


@njit(cache=True)
def _H_many(thetas, tab):
    out = np.empty(thetas.shape[0])
    for k in range(thetas.shape[0]):
        out[k] = nx.H_eval(thetas[k], tab)
    return out


@njit(cache=True)
def _G_many(zs, tab):
    out = np.empty(zs.shape[0])
    for k in range(zs.shape[0]):
        out[k] = nx.G_eval(zs[k], tab)
    return out


def H_of(spec: KernelSpec, table: RateTable, theta):
    """Cumulative rate ``H(theta)`` for ``theta`` in ``(0, pi/2]``."""
    _check_table(spec, table)
    th = np.asarray(theta, dtype=float)
    if np.any(~(th > 0.0)) or np.any(th > 0.5 * math.pi):
        raise DomainError("H is defined for theta in (0, pi/2]")
    out = _H_many(np.ascontiguousarray(th.ravel()), table.packed).reshape(th.shape)
    return out[()] if out.ndim == 0 else out


def G_of(spec: KernelSpec, table: RateTable, z):
    """Deflection angle ``G(z)``, the inverse of ``H``, for ``z > 0``."""
    _check_table(spec, table)
    za = np.asarray(z, dtype=float)
    if np.any(~(za > 0.0)):
        raise DomainError("G is defined for z > 0")
    out = _G_many(np.ascontiguousarray(za.ravel()), table.packed).reshape(za.shape)
    return out[()] if out.ndim == 0 else out


def cutoff_angle(spec: KernelSpec, table: RateTable, K: float) -> float:
    """Smallest deflection angle retained at cutoff level ``K``, i.e. ``G(K)``."""
    return float(G_of(spec, table, K))


def theta_of(spec: KernelSpec, table: RateTable, v, v_star, z) -> float:
    """Deflection angle ``G(z / |v - v*|**gamma)`` of a collision."""
    rel = np.asarray(v, dtype=float) - np.asarray(v_star, dtype=float)
    x = float(np.linalg.norm(rel))
    if x == 0.0:
        raise DomainError("theta is undefined for coincident velocities")
    return float(G_of(spec, table, z / x**spec.gamma))


def g_difference_l2(spec: KernelSpec, table: RateTable, x: float, y: float) -> float:
    """``int_0^inf (G(z/x) - G(z/y))**2 dz`` for ``x, y > 0``.

    Integrated in ``log z`` decade by decade; the range below ``1e-12 min(x,y)``
    contributes O(z**3) and the tail beyond ``1e10 max(x,y)`` is closed with
    the ``z**(-2/nu)`` decay of the integrand.
    """
    _check_table(spec, table)
    if not (x > 0.0 and y > 0.0):
        raise DomainError("x and y must be positive")
    if x == y:
        return 0.0
    tab = table.packed

    def f(s):
        z = np.exp(np.atleast_1d(s))
        diff = _G_many(z / x, tab) - _G_many(z / y, tab)
        return diff * diff * z

    lo = math.log(1e-12 * min(x, y))
    hi = math.log(1e10 * max(x, y))
    edges = np.arange(lo, hi + 2.303, 2.302585092994046)
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        val, _ = integrate.quad(lambda s: float(f(s)[0]), a, b, epsabs=1e-15 * max(x, y), epsrel=1e-10, limit=400)
        total += val
    z_hi = math.exp(edges[-1])
    tail_density = float(f(edges[-1])[0]) / z_hi
    total += tail_density * z_hi / (2.0 / spec.nu - 1.0)
    return total
