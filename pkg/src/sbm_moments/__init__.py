"""Integer moments of one-dimensional super-Brownian motion.

Exact moment formula evaluation (index enumeration, Gaussian kernel networks, simplex
quadrature), a branching-particle simulator to check it against, and numerical checks
of the growth and tail statements built on top.
"""
from .analysis import (
    H1,
    H2,
    BoundsReport,
    SlopeEstimate,
    TailReport,
    bounds_report,
    compute_cx,
    fit_k_star,
    fit_log_slope,
    high_moment_ratio,
    hypothesis_for,
    large_deviation_probe,
    moment_envelope,
    normalized_log_ratio,
    paley_zygmund_lower,
    tail_report,
    tail_upper_bound,
)
from .engine import MomentRequest, MomentResult, QuadSettings, closed_form_moment, moment, moment_term
from .gaussian import (
    Fixed,
    HeatKernelFactor,
    InitialCondition,
    KernelGraph,
    Var,
    build_kernel_graph,
    heat_kernel,
    initial_potential,
    spatial_integral,
)
from .indexing import (
    IndexTriple,
    MomentIndexPair,
    enumerate_index_pairs,
    enumerate_pairings,
    enumerate_triples,
    triple_count_closed_form,
)
from .particles import (
    EmpiricalMoments,
    ParticleSystem,
    PopulationExplosion,
    SimulationConfig,
    empirical_moments,
    empirical_tail,
    estimate_density,
    simulate_path,
)
from .quadrature import QuadratureResult, SimplexIntegrand, integrate_ordered_simplex, reference_weight_integral

__version__ = "0.1.0"
