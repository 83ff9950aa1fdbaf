"""Structure learning for Markov random fields with copula edge potentials.

Edge weights of a Markov network are estimated by minimizing ensemble
negative log-likelihoods built from the weighted matrix-tree identity: a
tree-ensemble estimator for connected graphs and two forest-ensemble
estimators (minimum-cut averaging, and L1-regularized with eBIC model
selection) that recover disconnected topologies.
"""

from ._backend import backend_name
from .copulas import (
    CopulaSpec,
    EmpiricalCDF,
    Family,
    copula_cdf,
    copula_density,
    copula_log_density,
    fit_copula_mpl,
    fit_copula_tau,
    sample_copula,
    to_pseudoobservations,
)
from .cuts import enumerate_min_cuts, gomory_hu_tree
from .learner import (
    FitConfig,
    FitReport,
    Method,
    build_potentials,
    ebic_score,
    fit,
    initialize_beta,
    select_copulas,
)
from .objectives import (
    GraphCut,
    connected_components,
    ef_cuts_grad,
    ef_cuts_objective,
    ef_lambda_grad,
    ef_lambda_objective,
    et_grad,
    et_nll,
    exact_ef_nll,
    trivial_cut,
)
from .spg import SpgConfig, SpgResult, spg_minimize
from .synth import (
    GroundTruthGraph,
    gen_clique_graph,
    gen_gmrf_data,
    gen_graph,
    gen_tclique_data,
    roc_curve,
    score,
)
from .treekernel import brute_force_tree_sum, log_det_q, m_matrix, q_matrix

__version__ = "0.1.0"

__all__ = [
    "CopulaSpec",
    "EmpiricalCDF",
    "Family",
    "FitConfig",
    "FitReport",
    "GraphCut",
    "GroundTruthGraph",
    "Method",
    "SpgConfig",
    "SpgResult",
    "backend_name",
    "brute_force_tree_sum",
    "build_potentials",
    "connected_components",
    "copula_cdf",
    "copula_density",
    "copula_log_density",
    "ebic_score",
    "ef_cuts_grad",
    "ef_cuts_objective",
    "ef_lambda_grad",
    "ef_lambda_objective",
    "enumerate_min_cuts",
    "et_grad",
    "et_nll",
    "exact_ef_nll",
    "fit",
    "fit_copula_mpl",
    "fit_copula_tau",
    "gen_clique_graph",
    "gen_gmrf_data",
    "gen_graph",
    "gen_tclique_data",
    "gomory_hu_tree",
    "initialize_beta",
    "log_det_q",
    "m_matrix",
    "q_matrix",
    "roc_curve",
    "sample_copula",
    "score",
    "select_copulas",
    "spg_minimize",
    "to_pseudoobservations",
    "trivial_cut",
]
