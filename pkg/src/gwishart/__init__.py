"""Exact G-Wishart sampling and Gaussian graphical model search.

The public surface is re-exported here; see the submodules for details.
"""

__version__ = "0.1.0"

from .graph import (
    Graph,
    GraphError,
    all_graphs,
    from_edge_list,
    is_decomposable,
    maximal_cliques,
    nu_counts,
    read_graph,
    toggle_edge,
    write_graph,
)
from .linalg import (
    NotPositiveDefiniteError,
    chol_upper,
    clique_transform,
    complete_cholesky,
    free_entry_gradient,
    log_jacobian_k_to_phi,
    log_unnorm_density,
    schur_complement_b,
    trace_inner,
)
from .samplers import (
    CompletionError,
    CompletionSettings,
    GWishartParams,
    block_gibbs_step,
    gwishart_complete,
    gwishart_mode,
    ips_fixed_point,
    log_ig_decomposable,
    posterior_params,
    rng_stream,
    sample_gwishart,
    sample_wishart,
)
from .drj import (
    DrjChainState,
    DrjConfig,
    DrjProposal,
    DrjSummary,
    drj_step,
    exact_graph_posterior,
    propose_move,
    run_drj,
)
from .io import (
    Dataset,
    InputFileError,
    RunReport,
    ScatterResult,
    compute_scatter,
    generate_dataset,
    iris_virginica,
    load_dataset,
    read_matrix,
    write_matrix,
)

__all__ = [name for name in dir() if not name.startswith("_")]
