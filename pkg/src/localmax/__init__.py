"""Local max norms: weighted trace norm to max norm interpolation for matrix completion."""
from .weights import (MarginalDist, SegmentSet, WeightSet, capped_exponent,
                      capped_multiplicative, dual_offset, full_simplex, linmax,
                      lower_bounded, singleton, smoothed, smoothing_segment,
                      uniform_cap, vec_norm)
from .normcore import (Decomposition, NormCertificate, decompose_vector,
                       local_max_norm, optimal_factorization, penalty_beta_tau,
                       weighted_trace_norm)

__version__ = "0.1.0"

__all__ = [
    "MarginalDist", "SegmentSet", "WeightSet", "capped_exponent", "capped_multiplicative",
    "dual_offset", "full_simplex", "linmax", "lower_bounded", "singleton", "smoothed",
    "smoothing_segment", "uniform_cap", "vec_norm",
    "Decomposition", "NormCertificate", "decompose_vector", "local_max_norm",
    "optimal_factorization", "penalty_beta_tau", "weighted_trace_norm",
]
