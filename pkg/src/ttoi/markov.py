"""High-order Markov chains with low TT-rank transition tensors.

A chain of order ``d - 1`` on ``p`` states is described by an order-``d``
tensor ``P`` whose mode-``d`` fibers are the next-state distributions:
``P[i_1, ..., i_d] = Pr(X_{t+d-1} = i_d | X_t = i_1, ..., X_{t+d-2} = i_{d-1})``.
In the column-major layout the fibers are the rows of ``[P]_{d-1}``, and the
row of a prefix ``(i_1, ..., i_{d-1})`` is ``i_1 + p i_2 + ... + p^{d-2} i_{d-1}``.

State labels are 0-based inside the package and 1-based in files.
"""

from __future__ import annotations

from bisect import bisect_right
from dataclasses import dataclass

import numpy as np

from .linalg import NumericError
from .rng import generator
from .tensor_core import DenseTensor, checked_prod
from .tt import TTTensor, contract, ttoi

FIBER_TOL = 1e-12


def _fibers(t: DenseTensor) -> np.ndarray:
    p = t.dims[-1]
    return t.data.reshape(-1, p, order="F")


def _from_fibers(rows: np.ndarray, p: int, d: int) -> DenseTensor:
    return DenseTensor((p,) * d, rows.reshape(-1, order="F"))


@dataclass(frozen=True)
class MarkovModel:
    """Order-``d - 1`` chain on ``p`` states with a stochastic transition tensor."""

    p: int
    order: int
    transition: DenseTensor

    def __post_init__(self):
        if self.p < 1 or self.order < 1:
            raise ValueError(f"need p >= 1 and order >= 1, got p={self.p}, order={self.order}")
        dims = (self.p,) * (self.order + 1)
        if self.transition.dims != dims:
            raise ValueError(f"transition has dims {self.transition.dims}, expected {dims}")
        rows = _fibers(self.transition)
        if np.any(rows < 0):
            raise ValueError("transition tensor has negative entries")
        if np.max(np.abs(rows.sum(axis=1) - 1.0)) > FIBER_TOL:
            raise ValueError("transition fibers do not sum to one")

    @property
    def d(self) -> int:
        return self.order + 1


@dataclass(frozen=True)
class Trajectory:
    """Observed states ``X_0, ..., X_{N-1}`` as 0-based labels in ``[0, p)``."""

    states: np.ndarray
    p: int

    def __post_init__(self):
        s = np.asarray(self.states)
        if s.ndim != 1:
            raise ValueError("a trajectory is a 1-D sequence of states")
        if s.size and not np.issubdtype(s.dtype, np.integer):
            raise ValueError("trajectory states must be integers")
        s = s.astype(np.int64)
        if s.size and (s.min() < 0 or s.max() >= self.p):
            raise ValueError(f"states must lie in [0, {self.p})")
        s.setflags(write=False)
        object.__setattr__(self, "states", s)

    def __len__(self) -> int:
        return int(self.states.size)

    @classmethod
    def from_labels(cls, labels, p: int) -> "Trajectory":
        """Build from 1-based labels in ``[1, p]``."""
        arr = np.asarray(labels, dtype=np.int64)
        if arr.size and (arr.min() < 1 or arr.max() > p):
            raise ValueError(f"labels must lie in [1, {p}]")
        return cls(arr - 1, p)

    def labels(self) -> np.ndarray:
        return self.states + 1


def aggregatable_cores(p: int, d: int, ranks, seed) -> TTTensor:
    """Nonnegative cores whose contraction has stochastic mode-``d`` fibers.

    Gaussian cores are replaced by their absolute values and normalized so
    that every core is stochastic along its trailing index; for the last
    core that index is the next state.
    """
    ranks = tuple(int(r) for r in ranks)
    if p < 1 or d < 2 or len(ranks) != d - 1 or any(r < 1 for r in ranks):
        raise ValueError(f"invalid shape p={p}, d={d}, ranks={ranks}")
    rng = generator(seed)
    full = (1,) + ranks + (1,)

    def normalized(shape, axis):
        g = np.abs(rng.standard_normal(shape))
        return g / g.sum(axis=axis, keepdims=True)

    first = normalized((p, ranks[0]), 1)
    mids = [normalized((full[k - 1], p, full[k]), 2) for k in range(2, d)]
    # drawn as r_{d-1} x p, stored as the p x r_{d-1} last core
    last = normalized((ranks[-1], p), 1).T
    return TTTensor(first, mids, last)


def generate_aggregatable(p: int, d: int, ranks, seed) -> MarkovModel:
    """A random state-aggregatable chain whose TT-ranks are at most ``ranks``."""
    cores = aggregatable_cores(p, d, ranks, seed)
    return MarkovModel(p, d - 1, contract(cores))


def sample_trajectory(m: MarkovModel, n_steps: int, seed) -> Trajectory:
    """``n_steps`` states: ``d - 1`` uniform draws, then the chain itself."""
    d, p = m.d, m.p
    if n_steps < d - 1:
        raise ValueError(f"need at least {d - 1} states, got n_steps={n_steps}")
    rng = generator(seed)
    states = np.empty(n_steps, dtype=np.int64)
    states[: d - 1] = rng.integers(0, p, size=d - 1)
    n_rest = n_steps - (d - 1)
    if n_rest == 0:
        return Trajectory(states, p)
    cum = np.cumsum(_fibers(m.transition), axis=1)
    cum[:, -1] = np.inf  # absorb rounding in the last bin
    table = cum.tolist()
    shift = p ** (d - 2)
    row = 0
    for j in range(d - 1):
        row += int(states[j]) * p**j
    draws = rng.random(n_rest).tolist()
    out = states.tolist()
    for i, u in enumerate(draws):
        nxt = bisect_right(table[row], u)
        out[d - 1 + i] = nxt
        row = row // p + shift * nxt
    return Trajectory(np.asarray(out, dtype=np.int64), p)


def transition_counts(traj: Trajectory, d: int) -> np.ndarray:
    """``(p^{d-1}, p)`` counts of every length-``d`` window of the trajectory."""
    p = traj.p
    s = traj.states
    n_windows = s.size - d + 1
    counts = np.zeros(checked_prod((p,) * d), dtype=np.int64)
    if n_windows > 0:
        code = np.zeros(n_windows, dtype=np.int64)
        for j in range(d):
            code += s[j : j + n_windows] * p**j
        counts = np.bincount(code, minlength=counts.size)
    return counts.reshape(-1, p, order="F")


def empirical_from_trajectory(traj: Trajectory, p: int, d: int) -> DenseTensor:
    """Window-count ratios, with the uniform fiber for prefixes never completed."""
    if traj.p != p:
        raise ValueError(f"trajectory is over {traj.p} states, not {p}")
    if d < 2:
        raise ValueError("order-d tensors need d >= 2")
    counts = transition_counts(traj, d)
    totals = counts.sum(axis=1)
    rows = np.full(counts.shape, 1.0 / p)
    seen = totals > 0
    rows[seen] = counts[seen] / totals[seen, None]
    return _from_fibers(rows, p, d)


def empirical_generative(m: MarkovModel, n: int, seed) -> DenseTensor:
    """Frequencies of ``n`` independent next-state draws from every prefix."""
    if n < 1:
        raise ValueError("n must be positive")
    rng = generator(seed)
    rows = _fibers(m.transition)
    counts = rng.multinomial(n, rows)
    return _from_fibers(counts / n, m.p, m.d)


def simplex_project(v) -> np.ndarray:
    """Euclidean projection onto ``{x >= 0, sum(x) = 1}``.

    Sort-and-threshold: with ``u`` sorted in decreasing order, the support
    size is the largest ``j`` with ``u_j > (u_1 + ... + u_j - 1) / j``. A 2-D
    input is projected row by row.
    """
    v = np.asarray(v, dtype=np.float64)
    if v.ndim not in (1, 2) or v.shape[-1] == 0:
        raise ValueError(f"expected a non-empty vector or matrix, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise NumericError("cannot project non-finite entries")
    rows = np.atleast_2d(v)
    u = -np.sort(-rows, axis=1)
    css = np.cumsum(u, axis=1) - 1.0
    j = np.arange(1, rows.shape[1] + 1)
    support = np.count_nonzero(u - css / j > 0, axis=1)
    theta = css[np.arange(rows.shape[0]), support - 1] / support
    out = np.maximum(rows - theta[:, None], 0.0)
    return out[0] if v.ndim == 1 else out


def estimate_transition(
    p_emp: DenseTensor,
    ranks,
    t_max: int = 1,
    epsilon: float | None = None,
    full_output: bool = False,
):
    """Low-rank transition estimate: TTOI on ``p_emp``, then project each fiber.

    With ``full_output`` the unprojected TTOI iterate is returned as well.
    """
    d = p_emp.order
    p = p_emp.dims[-1]
    if p_emp.dims != (p,) * d:
        raise ValueError(f"transition tensors are cubical, got dims {p_emp.dims}")
    _, smooth, _ = ttoi(p_emp, ranks, epsilon=epsilon, t_max=t_max)
    projected = _from_fibers(simplex_project(_fibers(smooth)), p, d)
    return (projected, smooth) if full_output else projected
