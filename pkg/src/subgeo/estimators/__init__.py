"""Monte Carlo estimators, convergence diagnostics and regime tables."""
from .convergence import (DistanceCurve, RateFit, distance_curve, fnorm_distance, rate_fit,
                          sample_invariant)
from .mdp import MDPVariance, TailRow, gaussian_tail_is, mdp_tail_scaling, mdp_variance
from .moments import (DriftTriple, MomentEstimate, Target, exp_moment_hitting, first_passage_integrals,
                      hitting_times, modulated_moment, modulated_moments, skeleton_sum, return_time_bound,
                      young_moment)
from .regimes import LangevinRegime, classify_langevin_regime, hamiltonian_rate_exponent

__all__ = [
    "DistanceCurve", "RateFit", "distance_curve", "fnorm_distance", "rate_fit", "sample_invariant",
    "MDPVariance", "TailRow", "gaussian_tail_is", "mdp_tail_scaling", "mdp_variance",
    "DriftTriple", "MomentEstimate", "Target", "exp_moment_hitting", "first_passage_integrals",
    "hitting_times", "modulated_moment", "modulated_moments", "skeleton_sum", "return_time_bound",
    "young_moment", "LangevinRegime", "classify_langevin_regime", "hamiltonian_rate_exponent",
]
