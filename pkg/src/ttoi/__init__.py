"""Tensor-train decompositions by TT-SVD and tensor-train orthogonal iteration."""

from .linalg import NumericError, OrthonormalFrame, sin_theta, svd_left, svd_right
from .markov import MarkovModel, Trajectory, estimate_transition, simplex_project
from .rankselect import BicResult, bic_score, select_ranks
from .tensor_core import DenseTensor, fold, sequential_unfold, vectorize
from .tt import (
    StateError,
    TtoiState,
    TTTensor,
    backward_update,
    contract,
    extract_cores,
    forward_update,
    tt_ranks_of,
    tt_svd,
    ttoi,
)

__version__ = "0.1.0"

__all__ = [
    "BicResult",
    "DenseTensor",
    "MarkovModel",
    "NumericError",
    "OrthonormalFrame",
    "StateError",
    "TTTensor",
    "Trajectory",
    "TtoiState",
    "backward_update",
    "bic_score",
    "contract",
    "estimate_transition",
    "extract_cores",
    "fold",
    "forward_update",
    "select_ranks",
    "sequential_unfold",
    "simplex_project",
    "sin_theta",
    "svd_left",
    "svd_right",
    "tt_ranks_of",
    "tt_svd",
    "ttoi",
    "vectorize",
]
