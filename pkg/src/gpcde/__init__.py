"""Density evolution and simulation for spatially-coupled generalized product codes."""

from .construction import (
    AveragingMatrix, ConstructionError, EnsembleParams, EtaSpec, RationalMatrix,
    averaging_matrix, ensemble_A, ensemble_B, interleave, deinterleave, make_braided,
    make_ensemble_emulating, make_extended_braided, make_pc, make_staircase,
    symmetric_block, validate,
)
from .density_evolution import (
    DeConfig, DeTrace, ErasureProfile, ThresholdError, Verdict, check_domination,
    de_run, de_step, de_threshold, ensemble_de_run, poisson_pmf, poisson_tail,
    reduce_symmetric,
)
from .potential import (
    H_closed, loss_mixture, loss_single, min_Vs, potential_threshold,
    potential_threshold_stationary, potential_Vs, random_profile, semi_regular,
)
from .graph_sim import (
    GraphError, TannerGraph, assign_capabilities, build_graph, monte_carlo, peel,
    sample_erasures, state_from_erased,
)

__version__ = "0.1.0"
