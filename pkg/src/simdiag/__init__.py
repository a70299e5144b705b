"""Tests for simultaneous diagonalizability of asymmetric matrices."""
from .estimators import MatrixEstimate, markov_transition_estimator, mean_estimator, var_ls_estimator
from .optim import fit_partial_eigvecs, joint_diagonalize, partial_subspace, simplex_qp_stationary
from .stattests import (
    TestReport,
    commutator_test,
    llr_test,
    multi_eig_gamma_test,
    multi_eig_test,
    pairwise_pvalue_matrix,
    partial_test,
)

__version__ = "0.1.0"

__all__ = [
    "MatrixEstimate",
    "TestReport",
    "commutator_test",
    "fit_partial_eigvecs",
    "joint_diagonalize",
    "llr_test",
    "markov_transition_estimator",
    "mean_estimator",
    "multi_eig_gamma_test",
    "multi_eig_test",
    "pairwise_pvalue_matrix",
    "partial_subspace",
    "partial_test",
    "simplex_qp_stationary",
    "var_ls_estimator",
]
