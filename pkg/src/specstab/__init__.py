"""Stability of spectral clustering for weighted undirected graphs.

Measures how robust a spectral k-clustering is against perturbations of
the edge weights: the kth spectral gap of the graph Laplacian (scaled by
1/sqrt(2), the distance to the nearest arbitrary symmetric matrix with a
coalesced kth eigenvalue pair) and the structured distance to ambiguity
(the distance to the nearest admissible perturbed graph whose Laplacian
has a coalesced kth pair), computed by a two-level eigenvalue-optimization
algorithm.
"""

__version__ = "0.1.0"

from .clustering import ClusterAssignment, Embedding, kmeans, spectral_cluster, spectral_embed
from .eigen import (
    EigenSystem,
    GapReport,
    connected_components_via_kernel,
    eig_symmetric,
    spectral_gap,
    unstructured_minimizer,
)
from .experiments import (
    CentersSpec,
    SbmSpec,
    chain_sweep,
    frequency_experiment,
    gaussian_similarity,
    reduced_chain_model,
    sample_centers,
    sample_sbm,
)
from .graph_core import (
    PatternMatrix,
    SparsityPattern,
    WeightMatrix,
    frobenius_inner,
    laplacian,
    laplacian_adjoint,
    project_pattern,
    read_graph,
    write_graph,
)
from .sda_inner import (
    InnerConfig,
    InnerState,
    free_flow_rescale,
    functional_F,
    gradient_G,
    inner_minimize,
    multiplier_kappa,
    penalized_gradient,
    penalty_Q,
)
from .sda_outer import (
    OuterConfig,
    SdaResult,
    certificate,
    compute_sda,
    f_and_derivative,
    initial_guess,
    k_opt_sweep,
    newton_bisection,
)
