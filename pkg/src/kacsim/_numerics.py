"""Compiled scalar primitives shared by the public modules and the event loops.

Everything here is a numba ``njit`` function operating on plain float arrays so
that the event loops in :mod:`kacsim._engine` can call them without leaving
nopython mode.  The rate table is passed around as the tuple

    (theta_grid, H_values, params, r_x, r_y)

where ``params`` holds ``[nu, theta_small, H_small, c0, c2, kind, tol, lead]``
(see :class:`kacsim.kernels.RateTable`).
"""

import math

import numpy as np
from numba import njit

HALF_PI = 0.5 * math.pi

# 8-point Gauss-Legendre rule on [-1, 1]; knot intervals are short enough
# (relative width < 0.2%) that this is exact to rounding for the smooth
# integrand b(cos x).
_GL_X, _GL_W = np.polynomial.legendre.leggauss(8)

P_NU, P_THETA_S, P_H_S, P_C0, P_C2, P_KIND, P_TOL, P_LEAD = range(8)
KIND_CANONICAL = 0
KIND_TABLE = 1


@njit(cache=True)
def one_minus_cos(theta):
    s = math.sin(0.5 * theta)
    return 2.0 * s * s


@njit(cache=True)
def regular_part(xc, r_x, r_y):
    # piecewise-linear interpolation of the user table, clamped at the ends
    n = r_x.shape[0]
    if xc <= r_x[0]:
        return r_y[0]
    if xc >= r_x[n - 1]:
        return r_y[n - 1]
    lo = 0
    hi = n - 1
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if r_x[mid] <= xc:
            lo = mid
        else:
            hi = mid
    w = (xc - r_x[lo]) / (r_x[hi] - r_x[lo])
    return (1.0 - w) * r_y[lo] + w * r_y[hi]


@njit(cache=True)
def b_of_angle(theta, tab):
    """b(cos theta) for theta in (0, pi/2], using 1 - cos = 2 sin^2(theta/2)."""
    params = tab[2]
    nu = params[P_NU]
    val = one_minus_cos(theta) ** (-0.5 * (1.0 + nu))
    if params[P_KIND] == KIND_TABLE:
        val *= regular_part(math.cos(theta), tab[3], tab[4])
    return val


@njit(cache=True)
def _gl_integral(lo, hi, tab):
    mid = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo)
    acc = 0.0
    for k in range(_GL_X.shape[0]):
        acc += _GL_W[k] * b_of_angle(mid + half * _GL_X[k], tab)
    return acc * half


@njit(cache=True)
def _series(theta, params):
    # integral of the two-term small-angle expansion from theta to theta_small
    nu = params[P_NU]
    ts = params[P_THETA_S]
    return params[P_LEAD] * (
        params[P_C0] * (theta ** (-nu) - ts ** (-nu)) / nu
        + params[P_C2] * (ts ** (2.0 - nu) - theta ** (2.0 - nu)) / (2.0 - nu)
    )


@njit(cache=True)
def _series_slope(theta, params):
    nu = params[P_NU]
    return -params[P_LEAD] * (params[P_C0] * theta ** (-1.0 - nu) + params[P_C2] * theta ** (1.0 - nu))


@njit(cache=True)
def _knot_interval(theta, grid):
    # grid strictly decreasing; returns k with grid[k] >= theta >= grid[k+1]
    lo = 0
    hi = grid.shape[0] - 1
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if grid[mid] >= theta:
            lo = mid
        else:
            hi = mid
    return lo


@njit(cache=True)
def H_eval(theta, tab):
    grid = tab[0]
    hv = tab[1]
    params = tab[2]
    if theta >= HALF_PI:
        return 0.0
    if theta >= params[P_THETA_S]:
        k = _knot_interval(theta, grid)
        return hv[k] + _gl_integral(theta, grid[k], tab)
    return params[P_H_S] + _series(theta, params)


@njit(cache=True)
def G_eval(z, tab):
    """Inverse of H: the angle theta in (0, pi/2) with H(theta) = z."""
    if z <= 0.0:
        return HALF_PI
    if not z < np.inf:
        return 0.0
    grid = tab[0]
    hv = tab[1]
    params = tab[2]
    h_s = params[P_H_S]
    if z >= h_s:
        nu = params[P_NU]
        ts = params[P_THETA_S]
        # leading-order inversion, then Newton on the closed-form series
        theta = (nu * (z - h_s) / (params[P_LEAD] * params[P_C0]) + ts ** (-nu)) ** (-1.0 / nu)
        if theta < 1e-8:
            # the theta**2 correction is below double precision here
            return theta
        for _ in range(50):
            r = _series(theta, params) - (z - h_s)
            step = r / _series_slope(theta, params)
            new = theta - step
            if new <= 0.0:
                new = 0.5 * theta
            elif new > ts:
                new = 0.5 * (theta + ts)
            if abs(new - theta) <= 1e-15 * theta:
                theta = new
                break
            theta = new
        return theta
    n = hv.shape[0]
    lo = 0
    hi = n - 1
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if hv[mid] <= z:
            lo = mid
        else:
            hi = mid
    t_hi = grid[lo]
    t_lo = grid[lo + 1]
    f = (z - hv[lo]) / (hv[lo + 1] - hv[lo])
    theta = t_hi * (t_lo / t_hi) ** f
    a = t_lo
    b = t_hi
    for _ in range(60):
        r = hv[lo] + _gl_integral(theta, t_hi, tab) - z
        if r > 0.0:
            a = theta
        else:
            b = theta
        new = theta + r / b_of_angle(theta, tab)
        if new <= a or new >= b:
            new = 0.5 * (a + b)
        if abs(new - theta) <= 1e-15 * theta:
            theta = new
            break
        theta = new
    return theta


# --------------------------------------------------------------------------
# geometry


@njit(cache=True)
def vnorm(v):
    # scaled so that tiny or huge components neither underflow nor overflow
    big = 0.0
    for k in range(v.shape[0]):
        a = abs(v[k])
        if a > big:
            big = a
    if big == 0.0 or big == np.inf:
        return big
    acc = 0.0
    for k in range(v.shape[0]):
        r = v[k] / big
        acc += r * r
    return big * math.sqrt(acc)


@njit(cache=True)
def canonical_sign(v):
    for k in range(v.shape[0]):
        if v[k] > 0.0:
            return 1.0
        if v[k] < 0.0:
            return -1.0
    return 0.0


@njit(cache=True)
def gamma_into(v, phi, out):
    """out <- sum_k phi_k iota_k(v); zero if v = 0."""
    d = v.shape[0]
    nv = vnorm(v)
    if nv == 0.0:
        for m in range(d):
            out[m] = 0.0
        return
    sgn = canonical_sign(v)
    # u = sgn * v / |v| has u[0] >= 0, so 1 + u[0] >= 1; dividing (rather than
    # multiplying by 1/|v|) keeps subnormal v finite
    s = 1.0 + sgn * (v[0] / nv)
    dot = 0.0
    for k in range(1, d):
        dot += sgn * (v[k] / nv) * phi[k - 1]
    out[0] = -dot * sgn * nv
    for m in range(1, d):
        out[m] = (phi[m - 1] - dot / s * (sgn * (v[m] / nv))) * sgn * nv


@njit(cache=True)
def frame_matrix(v):
    d = v.shape[0]
    F = np.empty((d, d - 1))
    e = np.zeros(d - 1)
    col = np.empty(d)
    for k in range(d - 1):
        e[:] = 0.0
        e[k] = 1.0
        gamma_into(v, e, col)
        F[:, k] = col
    return F


@njit(cache=True)
def displacement_into(v, vs, z, phi, gamma, tab, out, work):
    """Collision displacement a(v, v*, z, phi); returns theta (nan if v == v*)."""
    d = v.shape[0]
    same = True
    for m in range(d):
        work[m] = v[m] - vs[m]
        if work[m] != 0.0:
            same = False
    if same:
        for m in range(d):
            out[m] = 0.0
        return np.nan
    x = vnorm(work)
    theta = G_eval(z / x ** gamma, tab)
    omc = 0.5 * one_minus_cos(theta)
    hs = 0.5 * math.sin(theta)
    gamma_into(work, phi, out)
    for m in range(d):
        out[m] = -omc * work[m] + hs * out[m]
    return theta


@njit(cache=True)
def _complement(basis, d):
    """Greedy Gram-Schmidt completion of the orthonormal rows of ``basis``
    (shape (2, d)) with standard basis vectors; returns (d-2, d)."""
    out = np.zeros((d - 2, d))
    have = np.zeros((d, d))
    have[0] = basis[0]
    have[1] = basis[1]
    count = 2
    used = np.zeros(d, dtype=np.bool_)
    r = np.empty(d)
    best = np.empty(d)
    while count < d:
        best_norm = -1.0
        best_k = -1
        for k in range(d):
            if used[k]:
                continue
            r[:] = 0.0
            r[k] = 1.0
            for _ in range(2):
                for q in range(count):
                    c = 0.0
                    for m in range(d):
                        c += have[q, m] * r[m]
                    for m in range(d):
                        r[m] -= c * have[q, m]
            nr = vnorm(r)
            if nr > best_norm:
                best_norm = nr
                best_k = k
                best[:] = r
        used[best_k] = True
        for m in range(d):
            have[count, m] = best[m] / best_norm
        out[count - 2] = have[count]
        count += 1
    return out


@njit(cache=True)
def tanaka_matrix(X, Y, colinear_tol):
    """Isometry R of S^{d-2} with Gamma(X, phi).Gamma(Y, R phi) maximal in the
    sense of the accurate Tanaka construction.  Exact identity when X == Y."""
    d = X.shape[0]
    R = np.eye(d - 1)
    same = True
    for m in range(d):
        if X[m] != Y[m]:
            same = False
            break
    if same:
        return R
    nx = vnorm(X)
    ny = vnorm(Y)
    xh = X / nx
    yh = Y / ny
    c = 0.0
    for m in range(d):
        c += xh[m] * yh[m]
    w = yh - c * xh
    nw = vnorm(w)
    if nw < colinear_tol:
        FX = frame_matrix(X)
        jx = FX[:, 0] / nx
        jy = jx.copy() if c >= 0.0 else -jx
    else:
        jx = w / nw
        jy = c * jx - nw * xh
    basis = np.empty((2, d))
    basis[0] = xh
    basis[1] = jx
    U = _complement(basis, d)
    BX = np.empty((d, d - 1))
    BY = np.empty((d, d - 1))
    BX[:, 0] = jx
    BY[:, 0] = jy
    for k in range(d - 2):
        BX[:, k + 1] = U[k]
        BY[:, k + 1] = U[k]
    AX = frame_matrix(X) / nx
    AY = frame_matrix(Y) / ny
    PX = AX.T @ BX
    PY = AY.T @ BY
    return PY @ PX.T


@njit(cache=True)
def tanaka_batch(X, Y, Phi, colinear_tol, lhs, psi1):
    """Row-wise Gamma(X, phi).Gamma(Y, R phi) and the in-plane coordinate
    psi_1 = Gamma(X, phi).j_X / |X|^2."""
    n, d = X.shape
    gx = np.empty(d)
    gy = np.empty(d)
    rphi = np.empty(d - 1)
    for r in range(n):
        R = tanaka_matrix(X[r], Y[r], colinear_tol)
        for a in range(d - 1):
            acc = 0.0
            for b in range(d - 1):
                acc += R[a, b] * Phi[r, b]
            rphi[a] = acc
        gamma_into(X[r], Phi[r], gx)
        gamma_into(Y[r], rphi, gy)
        acc = 0.0
        for m in range(d):
            acc += gx[m] * gy[m]
        lhs[r] = acc
        nx = vnorm(X[r])
        ny = vnorm(Y[r])
        c = 0.0
        for m in range(d):
            c += X[r, m] * Y[r, m]
        c /= nx * ny
        w = Y[r] / ny - c * X[r] / nx
        nw = vnorm(w)
        if nw < colinear_tol:
            jx = frame_matrix(X[r])[:, 0] / nx
        else:
            jx = w / nw
        acc = 0.0
        for m in range(d):
            acc += gx[m] * jx[m]
        psi1[r] = acc / nx


@njit(cache=True)
def lambda_sums(V, ks, out):
    n = V.shape[0]
    for q in range(ks.shape[0]):
        out[q] = 0.0
    for i in range(n):
        e = 1.0
        for m in range(V.shape[1]):
            e += V[i, m] * V[i, m]
        for q in range(ks.shape[0]):
            out[q] += e ** (0.5 * ks[q])
