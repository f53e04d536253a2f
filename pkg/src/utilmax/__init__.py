"""Optimal investment on finite scenario trees."""
from .concave import PLConcave, from_utility
from .config import Config, default_config
from .engine import (PathProblem, SolveResult, expected_utility, solve, solve_path,
                     verify_optimality, verify_uniqueness)
from .errors import (UtilMaxError, MalformedInput, InvalidProbabilities, BrokenFiliation, LeafNode,
                     NotConcaveOnGrid, DegenerateSupport, ArbitrageDetected, UnboundedObjective,
                     InfeasibleCone, ValueDiverged, GridNotConverged, BoundaryOptimum,
                     ZeroDerivative, BracketFailure, AENotSatisfied)
from .geometry import (NACertificate, Subspace, check_na, na_certificate, project_strategy,
                       span_subspace, support_subspace, validate_tree)
from .measure import (Claim, MeasureReport, PriceResult, envelope_check, martingale_measure,
                      price_claim, supermartingale_check)
from .one_step import OneStepProblem, OneStepSolution, solve_one_step
from .tree import (ConditionalDist, Node, ScenarioTree, binomial_tree, build_tree, conditional_dist,
                   load_tree, save_tree, tree_from_dict, uniform_tree)
from .utility import (CheckReport, Example73, Exponential, ExponentialBelowLinearAbove,
                      LinearBelowPowerAbove, PiecewiseLinear, Shifted, Utility, check_ae_minus,
                      check_ae_plus, linear, shift, utility_from_dict)

__version__ = "0.1.0"

__all__ = [
    'PLConcave',
    'from_utility',
    'Config',
    'default_config',
    'PathProblem',
    'SolveResult',
    'expected_utility',
    'solve',
    'solve_path',
    'verify_optimality',
    'verify_uniqueness',
    'UtilMaxError',
    'MalformedInput',
    'InvalidProbabilities',
    'BrokenFiliation',
    'LeafNode',
    'NotConcaveOnGrid',
    'DegenerateSupport',
    'ArbitrageDetected',
    'UnboundedObjective',
    'InfeasibleCone',
    'ValueDiverged',
    'GridNotConverged',
    'BoundaryOptimum',
    'ZeroDerivative',
    'BracketFailure',
    'AENotSatisfied',
    'NACertificate',
    'Subspace',
    'check_na',
    'na_certificate',
    'project_strategy',
    'span_subspace',
    'support_subspace',
    'validate_tree',
    'Claim',
    'MeasureReport',
    'PriceResult',
    'envelope_check',
    'martingale_measure',
    'price_claim',
    'supermartingale_check',
    'OneStepProblem',
    'OneStepSolution',
    'solve_one_step',
    'ConditionalDist',
    'Node',
    'ScenarioTree',
    'binomial_tree',
    'build_tree',
    'conditional_dist',
    'load_tree',
    'save_tree',
    'tree_from_dict',
    'uniform_tree',
    'CheckReport',
    'Example73',
    'Exponential',
    'ExponentialBelowLinearAbove',
    'LinearBelowPowerAbove',
    'PiecewiseLinear',
    'Shifted',
    'Utility',
    'check_ae_minus',
    'check_ae_plus',
    'linear',
    'shift',
    'utility_from_dict',
]
