"""Executable checks for causal identification across graphical and
potential-outcome models: mixed graphs, m-separation, the ID algorithm,
structural causal models and effect estimators."""

from .graph import (
    Edge,
    EdgeKind,
    GraphError,
    GraphSyntaxError,
    MixedGraph,
    Node,
    ancestors,
    cluster_nodes,
    descendants,
    latent_project,
    parse_graph,
    render_graph,
    topological_order,
)
from .sep import d_separated, enumerate_adjustment_sets, is_valid_backdoor, open_path
from .expr import JointTable, P, eval_expr, parse_expr, to_latex, to_text
from .ident import (
    complex_frontdoor_formula,
    evaluate_effect,
    identify,
    simplify,
    trapdoor_formula,
)
from .scm import Scm, build_example, exact_joint, implied_covariance, sample, solve_cyclic, true_effect
from .estim import (
    diff_in_means,
    faithfulness_check,
    ipw,
    positivity_diagnostic,
    regression_adjustment,
    stratified_adjustment,
)

__version__ = "0.1.0"
