"""Signed branching particles in a frozen environment.

Each branching event adds two particles and keeps the signed mass fixed, so
<1, Xi_t> stays at its starting value while the unsigned population grows
roughly exponentially in K t.
"""

import numpy as np

from kacsim import Environment, KernelSpec, SignedParticle, branch_simulate, build_rate_table, sample_initial

spec = KernelSpec(d=3, gamma=0.5, nu=0.5)
table = build_rate_table(spec)
env = Environment.constant(sample_initial("gaussian", 256, spec.d, seed=3).velocities, spec.gamma)
start = SignedParticle(np.array([1.0, 0.0, 0.0]))

for K, t in [(1.0, 0.05), (1.0, 0.1), (2.0, 0.1)]:
    pops = [branch_simulate(env, spec, table, K, start, t, seed=3, replica=r) for r in range(200)]
    m2 = np.mean([p.unsigned_second_moment() for p in pops])
    size = np.mean([p.size for p in pops])
    mass = {p.signed_mass() for p in pops}
    print(f"K={K:3.1f} t={t:4.2f}  mean size {size:8.1f}  E<1+|v|^2, |Xi|> {m2:9.2f}  signed mass {sorted(mass)}")
