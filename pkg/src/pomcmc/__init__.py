"""Partial order MCMC for estimating arc posteriors of Bayesian networks."""

from .data import Dataset, NetworkSpec, load_dataset, load_network, sample_network_data
from .scores import ScoreTable, build_score_table, log_local_score, log_parent_prior
from .posets import (
    IdealLattice,
    ParallelBucketOrder,
    apply_flip,
    count_ideals,
    count_reorderings,
    enumerate_ideals,
    is_compatible,
    linear_extensions,
    make_order,
    random_reordering,
)
from .dp import (
    AlphaTables,
    ArcPosteriorMatrix,
    Engine,
    ForwardBackward,
    ModularFeature,
    arc_posteriors,
    build_alpha,
    exact_posteriors,
    feature_posterior,
    forward_backward,
    log_joint,
)
from .mcmc import (
    ChainState,
    ChainTrace,
    McmcConfig,
    estimate_arc_posteriors,
    largest_absolute_error,
    max_arc_deviation,
    mh_step,
    propose_flip,
    run_chain,
    run_chains,
)

__version__ = "0.1.0"
from .reports import ExperimentConfig, resolve_defaults, run_experiment
