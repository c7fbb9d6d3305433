"""Tensor-train container, TT-SVD and tensor-train orthogonal iteration.

Shapes follow one convention everywhere:

* left frames ``U_k`` are ``(r_{k-1} p_k) x r_k`` with the rank index fastest,
* right frames ``V_k`` are ``(p_k r_k) x r_{k-1}`` with the mode index fastest,
* ``U_prod`` and ``V_prod`` are the accumulated chains
  ``(I ⊗ U_prod) U_k`` and ``(V_prod ⊗ I) V_k``, kept explicitly because they
  are never larger than ``p^{d-1} r``.

No Kronecker product is ever formed; each chain step is a reshape and a GEMM.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .linalg import DENSE_CUTOFF, frame_from_factorization, left_factorization, svd_left, svd_right
from .tensor_core import DenseTensor, checked_prod, sequential_unfold

log = logging.getLogger(__name__)

ROUNDING_SLACK = 64 * np.finfo(np.float64).eps


class StateError(RuntimeError):
    """An update was applied to a state of the wrong parity."""


@dataclass
class TTTensor:
    """TT cores ``G_1`` (``p_1 x r_1``), ``G_k`` (``r_{k-1} x p_k x r_k``), ``G_d`` (``p_d x r_{d-1}``)."""

    core_first: np.ndarray
    cores_mid: list[np.ndarray]
    core_last: np.ndarray

    def __post_init__(self):
        self.core_first = np.asarray(self.core_first, dtype=np.float64)
        self.core_last = np.asarray(self.core_last, dtype=np.float64)
        self.cores_mid = [np.asarray(g, dtype=np.float64) for g in self.cores_mid]
        if self.core_first.ndim != 2 or self.core_last.ndim != 2:
            raise ValueError("first and last cores must be matrices")
        r = self.core_first.shape[1]
        for k, g in enumerate(self.cores_mid, start=2):
            if g.ndim != 3 or g.shape[0] != r:
                raise ValueError(f"core {k} has shape {g.shape}, expected leading rank {r}")
            r = g.shape[2]
        if self.core_last.shape[1] != r:
            raise ValueError(f"last core has shape {self.core_last.shape}, expected rank {r}")

    @property
    def order(self) -> int:
        return len(self.cores_mid) + 2

    @property
    def dims(self) -> tuple[int, ...]:
        return (
            (self.core_first.shape[0],)
            + tuple(g.shape[1] for g in self.cores_mid)
            + (self.core_last.shape[0],)
        )

    @property
    def ranks(self) -> tuple[int, ...]:
        return (self.core_first.shape[1],) + tuple(g.shape[2] for g in self.cores_mid)

    def cores(self) -> list[np.ndarray]:
        """All cores as 3-way arrays with ``r_0 = r_d = 1`` made explicit."""
        first = self.core_first[np.newaxis, :, :]
        last = self.core_last.T[:, :, np.newaxis]
        return [first, *self.cores_mid, last]

    def param_count(self) -> int:
        return sum(g.size for g in self.cores())

    def full(self) -> DenseTensor:
        return contract(self)


def _fmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """``a @ b`` laid out column-major, so Fortran reshapes of it are views."""
    return (b.T @ a.T).T


def _left_extend(prod: np.ndarray, core: np.ndarray) -> np.ndarray:
    """``(I_{p_k} ⊗ prod) [G_k]_2`` for a 3-way core ``G_k``."""
    rows = prod.shape[0]
    r_prev, p, r = core.shape
    stacked = _fmul(prod, core.reshape(r_prev, p * r, order="F"))
    return stacked.reshape(rows * p, r, order="F")


def _right_extend(prod: np.ndarray, frame: np.ndarray, p: int) -> np.ndarray:
    """``(prod ⊗ I_p) V`` for ``V`` of shape ``(p r) x r_prev``."""
    rows, r = prod.shape
    r_prev = frame.shape[1]
    v3 = frame.reshape(p, r, r_prev, order="F")
    out = np.tensordot(v3, prod, axes=([1], [1]))  # (p, r_prev, rows)
    return out.transpose(0, 2, 1).reshape(p * rows, r_prev, order="F")


def contract(x: TTTensor) -> DenseTensor:
    """Evaluate the full tensor by a left-to-right sweep over the cores."""
    prod = x.core_first
    for g in x.cores_mid:
        prod = _left_extend(prod, g)
    unfolded = prod @ x.core_last.T
    return DenseTensor(x.dims, unfolded.reshape(-1, order="F"))


def check_ranks(dims: Sequence[int], ranks: Sequence[int], iterative: bool = True) -> tuple[int, ...]:
    """Validate TT ranks against the dimensions.

    TT-SVD needs ``r_k <= min(r_{k-1} p_k, p_{k+1}...p_d)``. The backward
    sweep additionally needs ``r_{k-1} <= p_k r_k`` so that every right
    frame fits in its ambient space.
    """
    dims = tuple(int(p) for p in dims)
    ranks = tuple(int(r) for r in ranks)
    d = len(dims)
    if d < 2:
        raise ValueError("TT decompositions need order >= 2")
    if len(ranks) != d - 1:
        raise ValueError(f"need {d - 1} ranks for dims {dims}, got {len(ranks)}")
    full = (1,) + ranks + (1,)
    for k in range(1, d):
        r = full[k]
        if r < 1:
            raise ValueError(f"rank r_{k}={r} must be positive")
        if r > full[k - 1] * dims[k - 1] or r > checked_prod(dims[k:]):
            raise ValueError(f"rank r_{k}={r} infeasible for dims {dims} and ranks {ranks}")
        if iterative and r > dims[k] * full[k + 1]:
            raise ValueError(
                f"rank r_{k}={r} exceeds p_{k + 1} r_{k + 1}={dims[k] * full[k + 1]}"
            )
    return ranks


@dataclass
class TtoiState:
    """Everything one TTOI iteration hands to the next.

    Even ``t`` (including the TT-SVD initialization ``t = 0``) carries the
    left frames and the residuals ``R~_k``; odd ``t`` carries the right
    frames, their accumulated product chain and ``V_1``.
    """

    t: int
    dims: tuple[int, ...]
    ranks: tuple[int, ...]
    y_norm_sq: float
    norm_sq: float
    left_frames: list[np.ndarray] | None = None
    residuals: list[np.ndarray] | None = None
    u_prod: np.ndarray | None = None
    right_frames: list[np.ndarray] | None = None
    v_prods: list[np.ndarray] | None = None
    v1: np.ndarray | None = None
    objective_trace: list[float] = field(default_factory=list)
    flags: list[str] = field(default_factory=list)
    _estimate: DenseTensor | None = field(default=None, repr=False)

    @property
    def is_forward(self) -> bool:
        return self.t % 2 == 0

    @property
    def objective(self) -> float:
        """``||Y||_F^2 - ||X^(t)||_F^2``."""
        return self.y_norm_sq - self.norm_sq

    def estimate(self) -> DenseTensor:
        """The dense iterate ``X^(t)``, formed on first request."""
        if self._estimate is None:
            if self.is_forward:
                unfolded = _fmul(self.u_prod, self.residuals[-1])
            else:
                unfolded = _fmul(self.v1, self.v_prods[0].T)
            self._estimate = DenseTensor(self.dims, unfolded.reshape(-1, order="F"))
        return self._estimate


def _note(flags: list[str], frame, label: str) -> None:
    if frame.padded:
        flags.append(f"{label}:padded")
    if frame.gap_degenerate:
        flags.append(f"{label}:gap_degenerate")


def tt_svd(y: DenseTensor, ranks: Sequence[int]) -> tuple[TtoiState, TTTensor]:
    """Sequential truncated SVDs of the projected residuals."""
    dims = y.dims
    ranks = check_ranks(dims, ranks, iterative=False)
    d = len(dims)
    full = (1,) + ranks + (1,)
    flags: list[str] = []
    frames, residuals = [], []
    r_mat = sequential_unfold(y, 1)
    u_prod = None
    for k in range(1, d):
        if k == 1 and min(r_mat.shape) <= DENSE_CUTOFF:
            # the first unfolding does not depend on the ranks; factor it once
            u_all, s_all = y.memo("left1", lambda: left_factorization(r_mat))
            frame = frame_from_factorization(u_all, s_all, full[1])
        else:
            frame = svd_left(r_mat, full[k])
        _note(flags, frame, f"t0:U{k}")
        u = frame.matrix
        frames.append(u)
        if u_prod is None:
            u_prod = u
        else:
            u_prod = _left_extend(u_prod, u.reshape(full[k - 1], dims[k - 1], full[k], order="F"))
        r_tilde = _fmul(u.T, r_mat)
        residuals.append(r_tilde)
        if k < d - 1:
            r_mat = r_tilde.reshape(full[k] * dims[k], -1, order="F")
    y_norm_sq = float(y.data @ y.data)
    norm_sq = float(np.sum(residuals[-1] ** 2))
    state = TtoiState(
        t=0,
        dims=dims,
        ranks=ranks,
        y_norm_sq=y_norm_sq,
        norm_sq=norm_sq,
        left_frames=frames,
        residuals=residuals,
        u_prod=u_prod,
        objective_trace=[y_norm_sq - norm_sq],
        flags=flags,
    )
    return state, extract_cores(state)


def backward_update(y: DenseTensor, state: TtoiState) -> TtoiState:
    """Right frames from the residuals of a forward state (odd ``t``)."""
    if not state.is_forward:
        raise StateError(f"backward update needs an even-t state, got t={state.t}")
    dims, ranks = state.dims, state.ranks
    check_ranks(dims, ranks, iterative=True)
    d = len(dims)
    full = (1,) + ranks + (1,)
    t = state.t + 1
    flags = list(state.flags)
    frames: list[np.ndarray] = [None] * (d - 1)  # V_2..V_d
    prods: list[np.ndarray] = [None] * (d - 1)  # V_prod,2..V_prod,d

    frame = svd_right(state.residuals[d - 2], full[d - 1])
    _note(flags, frame, f"t{t}:V{d}")
    frames[d - 2] = prods[d - 2] = frame.matrix
    for k in range(d - 1, 1, -1):
        r_prev, p = full[k - 1], dims[k - 1]
        v_prod = prods[k - 1]
        stacked = _fmul(state.residuals[k - 2].reshape(r_prev * p, -1, order="F"), v_prod)
        target = stacked.reshape(r_prev, p * full[k], order="F")
        frame = svd_right(target, r_prev)
        _note(flags, frame, f"t{t}:V{k}")
        frames[k - 2] = frame.matrix
        prods[k - 2] = _right_extend(v_prod, frame.matrix, p)
    v1 = sequential_unfold(y, 1) @ prods[0]
    norm_sq = float(np.sum(v1**2))
    return TtoiState(
        t=t,
        dims=dims,
        ranks=ranks,
        y_norm_sq=state.y_norm_sq,
        norm_sq=norm_sq,
        right_frames=frames,
        v_prods=prods,
        v1=v1,
        objective_trace=state.objective_trace + [state.y_norm_sq - norm_sq],
        flags=flags,
    )


def forward_update(y: DenseTensor, state: TtoiState) -> TtoiState:
    """Left frames refined against the right chains of a backward state (even ``t``).

    ``U_k`` is the leading left frame of ``R_k V_prod,k+1``, a
    ``(r_{k-1} p_k) x r_k`` matrix; the residual ``R~_k = U_k^T R_k`` is then
    taken against the full ``R_k``.
    """
    if state.is_forward:
        raise StateError(f"forward update needs an odd-t state, got t={state.t}")
    dims, ranks = state.dims, state.ranks
    d = len(dims)
    full = (1,) + ranks + (1,)
    t = state.t + 1
    flags = list(state.flags)
    frames, residuals = [], []
    r_mat = sequential_unfold(y, 1)
    u_prod = None
    for k in range(1, d):
        if k == 1:
            target = state.v1
        else:
            target = r_mat @ state.v_prods[k - 1]
        frame = svd_left(target, full[k])
        _note(flags, frame, f"t{t}:U{k}")
        u = frame.matrix
        frames.append(u)
        if u_prod is None:
            u_prod = u
        else:
            u_prod = _left_extend(u_prod, u.reshape(full[k - 1], dims[k - 1], full[k], order="F"))
        r_tilde = _fmul(u.T, r_mat)
        residuals.append(r_tilde)
        if k < d - 1:
            r_mat = r_tilde.reshape(full[k] * dims[k], -1, order="F")
    norm_sq = float(np.sum(residuals[-1] ** 2))
    return TtoiState(
        t=t,
        dims=dims,
        ranks=ranks,
        y_norm_sq=state.y_norm_sq,
        norm_sq=norm_sq,
        left_frames=frames,
        residuals=residuals,
        u_prod=u_prod,
        objective_trace=state.objective_trace + [state.y_norm_sq - norm_sq],
        flags=flags,
    )


def extract_cores(state: TtoiState) -> TTTensor:
    """TT cores whose contraction is the state's iterate."""
    dims = state.dims
    full = (1,) + state.ranks + (1,)
    d = len(dims)
    if state.is_forward:
        mids = [
            state.left_frames[k - 1].reshape(full[k - 1], dims[k - 1], full[k], order="F")
            for k in range(2, d)
        ]
        return TTTensor(state.left_frames[0], mids, state.residuals[-1].T)
    mids = [
        state.right_frames[k - 2].T.reshape(full[k - 1], dims[k - 1], full[k], order="F")
        for k in range(2, d)
    ]
    return TTTensor(state.v1, mids, state.right_frames[-1])


@dataclass
class TtoiDiagnostics:
    iterations: int
    objective_trace: list[float]
    increments: list[float]
    stopped_by: str
    epsilon: float
    flags: list[str]
    states: list[TtoiState] | None = None


@dataclass
class TtoiResult:
    cores: TTTensor
    estimate: DenseTensor
    diagnostics: TtoiDiagnostics

    def __iter__(self):
        return iter((self.cores, self.estimate, self.diagnostics))


def default_epsilon(y: DenseTensor) -> float:
    return 1e-6 * float(y.data @ y.data)


def ttoi(
    y: DenseTensor,
    ranks: Sequence[int],
    epsilon: float | None = None,
    t_max: int = 10,
    keep_states: bool = False,
) -> TtoiResult:
    """TT-SVD followed by alternating backward/forward updates.

    Stops after ``t_max`` updates or as soon as ``||X^(t)||^2 - ||X^(t-1)||^2``
    drops to ``epsilon`` or below (default ``1e-6 ||Y||_F^2``). Increments
    within ``ROUNDING_SLACK * ||Y||_F^2`` of zero are treated as zero.
    """
    if t_max < 0:
        raise ValueError("t_max must be non-negative")
    if epsilon is None:
        epsilon = default_epsilon(y)
    if epsilon < 0:
        raise ValueError("epsilon must be non-negative")
    check_ranks(y.dims, ranks, iterative=t_max > 0)
    state, _ = tt_svd(y, ranks)
    states = [state] if keep_states else None
    increments: list[float] = []
    stopped_by = "t_max"
    for _ in range(t_max):
        prev = state
        state = backward_update(y, prev) if prev.is_forward else forward_update(y, prev)
        if keep_states:
            states.append(state)
        increments.append(state.norm_sq - prev.norm_sq)
        # increments below the rounding level of ||Y||^2 count as zero
        if increments[-1] <= epsilon + ROUNDING_SLACK * state.y_norm_sq:
            stopped_by = "tolerance"
            break
    if t_max == 0:
        stopped_by = "t_max"
    log.debug("ttoi stopped at t=%d (%s)", state.t, stopped_by)
    diagnostics = TtoiDiagnostics(
        iterations=state.t,
        objective_trace=list(state.objective_trace),
        increments=increments,
        stopped_by=stopped_by,
        epsilon=float(epsilon),
        flags=list(state.flags),
        states=states,
    )
    return TtoiResult(extract_cores(state), state.estimate(), diagnostics)


class RankTuple(tuple):
    """A rank tuple that also reports whether the input was degenerate."""

    degenerate: bool = False

    def __new__(cls, values, degenerate: bool = False):
        obj = super().__new__(cls, values)
        obj.degenerate = degenerate
        return obj


def tt_ranks_of(x: DenseTensor, tol: float = 1e-10) -> RankTuple:
    """Numerical ranks ``#{s_i([X]_k) > tol * s_1([X]_k)}`` of each unfolding."""
    if not 0 < tol < 1:
        raise ValueError("tol must lie in (0, 1)")
    out = []
    for k in range(1, x.order):
        s = np.linalg.svd(sequential_unfold(x, k), compute_uv=False)
        out.append(int(np.sum(s > tol * s[0])) if s[0] > 0 else 0)
    return RankTuple(out, degenerate=not np.any(x.data))


def unfolding_gaps(x: DenseTensor, ranks: Sequence[int]) -> list[float]:
    """``s_{r_k}([X]_k)`` for each k, the signal strength in the error bounds."""
    return [
        float(np.linalg.svd(sequential_unfold(x, k), compute_uv=False)[r - 1])
        for k, r in enumerate(ranks, start=1)
    ]
