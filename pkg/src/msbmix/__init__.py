"""Multiscale stick-breaking mixture models for density estimation on the real line."""

__version__ = "0.1.0"

from .basemeasures import LocationBase, PartitionCell, ScaleBase, scale_decay, verify_centering
from .density import (
    Grid,
    PosteriorSummary,
    default_grid,
    eval_density,
    kl_divergence,
    l1_distance,
    lpml,
    posterior_mean_scale,
    summarize,
)
from .rng import RandomSource
from .sampler import (
    GibbsConfig,
    ModelState,
    NodeCounts,
    accumulate_counts,
    allocate_one,
    prior_chain,
    refresh_slice,
    run_fit,
    run_fit_grouped,
    update_locations,
    update_scales,
    update_sticks,
)
from .simdata import GaussianMixture, StandardizationRecord, scenario, standardize
from .tree import Direction, NodeId, PathStep, ancestor, children, path
from .weights import (
    MsbHyper,
    StickVars,
    WeightTree,
    calibrate_alpha,
    compute_weights,
    expected_node_weight,
    expected_scale,
    expected_scale_totals,
    residual_mass,
    sample_prior_sticks,
)

__all__ = [name for name in dir() if not name.startswith("_")]
