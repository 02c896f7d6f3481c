"""
Tail bounds from moments
========================

Moments control the tail of u_t(x) from both sides: an exponential Markov bound
from above and Paley-Zygmund from below.  Both are compared with the empirical
tail of a particle simulation.
"""

import numpy as np

from sbm_moments import (
    InitialCondition,
    MomentRequest,
    SimulationConfig,
    fit_k_star,
    moment,
    paley_zygmund_lower,
    tail_upper_bound,
)
from sbm_moments.particles import empirical_tail

flat = InitialCondition.constant(1.0)
t = 1.0
moms = {n: moment(MomentRequest(n, t, 0.0, flat)).value for n in range(1, 7)}

##############################################################################
# The constant K* is fitted from the first five moments; the bound then decays
# like exp(-z / (2 K* sqrt t)).

K = fit_k_star([(n, moms[n]) for n in range(1, 6)], t)
print(f"K* = {K:.4f}")

cfg = SimulationConfig(particles_N=2000, t_end=t, replicates=4000, seed=1)
zs = np.arange(0.0, 6.01, 0.5)
for z, p, se, count in empirical_tail(cfg, flat, 0.0, zs):
    print(f"z={z:4.1f}  empirical {p:.4f} +- {se:.4f}  upper bound {tail_upper_bound(z, t, K):.4f}")

##############################################################################
# Paley-Zygmund at theta = 1/2 gives a floor at z = theta m_n^{1/n}.

for n in (1, 2, 3):
    thr, bound = paley_zygmund_lower(moms[n], moms[2 * n], n, 0.5)
    print(f"n={n}: P(u > {thr:.3f}) >= {bound:.4f}")
