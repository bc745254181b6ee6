"""Compiled event loops for the cutoff Kac process, its Tanaka coupling and
the linearised branching process.

All loops simulate by global thinning: candidates arrive at a constant
majorant rate, and each is accepted with the exact state-dependent
probability.  Each loop advances until ``t_stop`` and hands back the pending
candidate time so that the Python caller can take snapshots and resume
without disturbing the law (the candidate stream is memoryless).
"""

import math

import numpy as np
from numba import njit

from . import _numerics as nx

STATUS_DONE = 0
STATUS_BUFFER_FULL = 1
FULL_RECOMPUTE_EVERY = 1 << 16


@njit(cache=True)
def _draw_pair(gen, n):
    i = gen.integers(0, n)
    j = gen.integers(0, n - 1)
    if j >= i:
        j += 1
    if i > j:
        return j, i
    return i, j


@njit(cache=True)
def _draw_sphere(gen, out):
    acc = 0.0
    while acc == 0.0:
        acc = 0.0
        for k in range(out.shape[0]):
            out[k] = gen.standard_normal()
            acc += out[k] * out[k]
    s = 1.0 / math.sqrt(acc)
    for k in range(out.shape[0]):
        out[k] *= s


@njit(cache=True)
def _energy(V, i):
    e = 1.0
    for m in range(V.shape[1]):
        e += V[i, m] * V[i, m]
    return e


@njit(cache=True)
def run_cutoff(
    V,
    gen,
    t,
    t_next,
    t_stop,
    K,
    gamma,
    area,
    x_cap,
    tab,
    ks,
    sums,
    max_ratio,
    violations,
    run_max,
    counters,
    ev_t,
    ev_ij,
    ev_z,
    ev_theta,
    ev_phi,
    ev_acc,
    record_rejected,
):
    """Advance the K-cutoff labelled process in place until ``t_stop``.

    ``counters = [candidates, accepted, events_since_recompute, n_logged]``.
    Returns ``(t, t_next, status)``.
    """
    n = V.shape[0]
    d = V.shape[1]
    nk = ks.shape[0]
    z_cap = K * x_cap**gamma
    rate = (n - 1) * area * z_cap
    scale = 1.0 / rate if rate > 0.0 else 0.0
    phi = np.empty(d - 1)
    a = np.empty(d)
    work = np.empty(d)
    bound = np.empty(nk)
    for q in range(nk):
        bound[q] = 2.0 ** (0.5 * ks[q] + 1.0) * (1.0 + 1e-10)
    cap = ev_t.shape[0]
    while t_next <= t_stop:
        if cap > 0 and counters[3] >= cap:
            return t, t_next, STATUS_BUFFER_FULL
        t = t_next
        counters[0] += 1
        i, j = _draw_pair(gen, n)
        z = (1.0 - gen.random()) * z_cap
        x = 0.0
        for m in range(d):
            diff = V[i, m] - V[j, m]
            x += diff * diff
        x = math.sqrt(x)
        accepted = x > 0.0 and z <= K * x**gamma
        if accepted:
            _draw_sphere(gen, phi)
            theta = nx.displacement_into(V[i], V[j], z, phi, gamma, tab, a, work)
            if nk > 0:
                ei = _energy(V, i)
                ej = _energy(V, j)
            for m in range(d):
                V[i, m] += a[m]
                V[j, m] -= a[m]
            counters[1] += 1
            if nk > 0:
                fi = _energy(V, i)
                fj = _energy(V, j)
                counters[2] += 1
                for q in range(nk):
                    h = 0.5 * ks[q]
                    before = sums[q]
                    sums[q] += fi**h + fj**h - ei**h - ej**h
                    ratio = sums[q] / before
                    if ratio > max_ratio[q]:
                        max_ratio[q] = ratio
                    if ratio > bound[q]:
                        violations[q] += 1
                    if sums[q] / n > run_max[q]:
                        run_max[q] = sums[q] / n
                if counters[2] >= FULL_RECOMPUTE_EVERY:
                    nx.lambda_sums(V, ks, sums)
                    counters[2] = 0
            if cap > 0:
                k = counters[3]
                ev_t[k] = t
                ev_ij[k, 0] = i
                ev_ij[k, 1] = j
                ev_z[k] = z
                ev_theta[k] = theta
                for m in range(d - 1):
                    ev_phi[k, m] = phi[m]
                ev_acc[k] = True
                counters[3] += 1
        elif record_rejected and cap > 0:
            k = counters[3]
            ev_t[k] = t
            ev_ij[k, 0] = i
            ev_ij[k, 1] = j
            ev_z[k] = z
            ev_theta[k] = np.nan
            for m in range(d - 1):
                ev_phi[k, m] = np.nan
            ev_acc[k] = False
            counters[3] += 1
        if scale > 0.0:
            t_next = t + gen.exponential(scale)
        else:
            t_next = np.inf
    return t, t_next, STATUS_DONE


@njit(cache=True)
def run_coupled(
    V,
    Vc,
    gen,
    t,
    t_next,
    t_stop,
    K_fine,
    Ks,
    gamma,
    area,
    x_cap,
    tab,
    accepted,
    phi_sums,
):
    """Advance a fine K'-cutoff process ``V`` and coarse K-cutoff copies
    ``Vc[m]`` under one shared candidate stream.

    A candidate ``(t, {i,j}, z, phi)`` moves the fine pair iff
    ``z <= K' |V^i - V^j|**gamma`` and coarse copy ``m`` iff
    ``z <= Ks[m] |Vc^i - Vc^j|**gamma``, the latter with azimuth ``R phi`` where
    ``R`` is the Tanaka rotation of the pre-jump relative velocities.
    ``accepted[0]`` counts candidates, ``accepted[1]`` fine jumps and
    ``accepted[2 + m]`` coarse jumps.  ``phi_sums[m]`` accumulates the
    rotated azimuths actually used by copy ``m`` (first moment check).
    """
    n = V.shape[0]
    d = V.shape[1]
    nc = Vc.shape[0]
    z_cap = K_fine * x_cap**gamma
    rate = (n - 1) * area * z_cap
    scale = 1.0 / rate if rate > 0.0 else 0.0
    k_max = 0.0
    for m in range(nc):
        if Ks[m] > k_max:
            k_max = Ks[m]
    coarse_cap = k_max * x_cap**gamma
    phi = np.empty(d - 1)
    rphi = np.empty(d - 1)
    a = np.empty(d)
    work = np.empty(d)
    X = np.empty(d)
    Y = np.empty(d)
    hits = np.zeros(nc, dtype=np.bool_)
    coarse_a = np.empty((nc, d))
    while t_next <= t_stop:
        t = t_next
        accepted[0] += 1
        i, j = _draw_pair(gen, n)
        z = (1.0 - gen.random()) * z_cap
        x = 0.0
        for m in range(d):
            X[m] = V[i, m] - V[j, m]
            x += X[m] * X[m]
        x = math.sqrt(x)
        fine_hit = x > 0.0 and z <= K_fine * x**gamma
        any_coarse = False
        if z <= coarse_cap:
            for c in range(nc):
                y = 0.0
                for m in range(d):
                    diff = Vc[c, i, m] - Vc[c, j, m]
                    y += diff * diff
                y = math.sqrt(y)
                hits[c] = y > 0.0 and z <= Ks[c] * y**gamma
                if hits[c]:
                    any_coarse = True
        if fine_hit or any_coarse:
            _draw_sphere(gen, phi)
            if any_coarse:
                for c in range(nc):
                    if not hits[c]:
                        continue
                    for m in range(d):
                        Y[m] = Vc[c, i, m] - Vc[c, j, m]
                    if x > 0.0:
                        R = nx.tanaka_matrix(X, Y, 1e-12)
                        for r in range(d - 1):
                            acc = 0.0
                            for s in range(d - 1):
                                acc += R[r, s] * phi[s]
                            rphi[r] = acc
                    else:
                        rphi[:] = phi
                    for r in range(d - 1):
                        phi_sums[c, r] += rphi[r]
                    nx.displacement_into(Vc[c, i], Vc[c, j], z, rphi, gamma, tab, a, work)
                    for m in range(d):
                        coarse_a[c, m] = a[m]
                for c in range(nc):
                    if hits[c]:
                        for m in range(d):
                            Vc[c, i, m] += coarse_a[c, m]
                            Vc[c, j, m] -= coarse_a[c, m]
                        accepted[2 + c] += 1
                        hits[c] = False
            if fine_hit:
                nx.displacement_into(V[i], V[j], z, phi, gamma, tab, a, work)
                for m in range(d):
                    V[i, m] += a[m]
                    V[j, m] -= a[m]
                accepted[1] += 1
        if scale > 0.0:
            t_next = t + gen.exponential(scale)
        else:
            t_next = np.inf
    return t, t_next


@njit(cache=True)
def run_branching(
    pop_v,
    pop_s,
    n_pop,
    gen,
    t,
    t_stop,
    env,
    env_max_norm,
    K,
    gamma,
    area,
    tab,
    rate_factor,
    cap,
):
    """Linearised Kac branching in a fixed environment ``env`` (atoms) until
    ``t_stop``.  Returns ``(t, n_pop, n_events, status)`` where status 1
    means the buffer has no room for another event (checked before any
    draw, so the caller can grow the buffer and resume).

    A particle of velocity ``v`` branches at rate
    ``rate_factor * area * K * <|v - v*|**gamma, env>``.  Candidates are
    generated at the population-wide majorant with
    ``x_bound = max_particle_norm + env_max_norm``, a uniform particle and a
    uniform environment atom, and accepted with probability
    ``(|v - v*| / x_bound)**gamma``.
    """
    d = pop_v.shape[1]
    n_env = env.shape[0]
    phi = np.empty(d - 1)
    a = np.empty(d)
    work = np.empty(d)
    vstar = np.empty(d)
    events = 0
    vmax = 0.0
    for p in range(n_pop):
        nv = nx.vnorm(pop_v[p])
        if nv > vmax:
            vmax = nv
    while True:
        if n_pop + 2 > cap:
            return t, n_pop, events, 1
        x_bound = vmax + env_max_norm
        rate = n_pop * rate_factor * area * K * x_bound**gamma
        if rate <= 0.0:
            return t_stop, n_pop, events, 0
        t_new = t + gen.exponential(1.0 / rate)
        if t_new > t_stop:
            return t_stop, n_pop, events, 0
        t = t_new
        p = gen.integers(0, n_pop)
        q = gen.integers(0, n_env)
        x = 0.0
        for m in range(d):
            vstar[m] = env[q, m]
            diff = pop_v[p, m] - vstar[m]
            x += diff * diff
        x = math.sqrt(x)
        if x == 0.0:
            continue
        if gen.random() * x_bound**gamma > x**gamma:
            continue
        z = (1.0 - gen.random()) * K * x**gamma
        _draw_sphere(gen, phi)
        nx.displacement_into(pop_v[p], vstar, z, phi, gamma, tab, a, work)
        s = pop_s[p]
        for m in range(d):
            pop_v[n_pop, m] = vstar[m] - a[m]
            pop_v[n_pop + 1, m] = vstar[m]
            pop_v[p, m] += a[m]
        pop_s[n_pop] = s
        pop_s[n_pop + 1] = -s
        for r in (p, n_pop):
            nv = nx.vnorm(pop_v[r])
            if nv > vmax:
                vmax = nv
        n_pop += 2
        events += 1
