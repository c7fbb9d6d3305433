"""TT-rank selection by a Bayesian information criterion."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence


from .tensor_core import DenseTensor, checked_prod
from .tt import ROUNDING_SLACK, check_ranks, ttoi

RESIDUAL_FLOOR = 1e-300
EXHAUSTIVE_LIMIT = 1024


def param_count(dims: Sequence[int], ranks: Sequence[int]) -> int:
    """``p_1 r_1 + sum_k p_k r_{k-1} r_k + p_d r_{d-1}``."""
    full = (1,) + tuple(ranks) + (1,)
    return sum(p * full[k] * full[k + 1] for k, p in enumerate(dims))


def bic_value(
    dims: Sequence[int], ranks: Sequence[int], residual_sq: float, floor: float = RESIDUAL_FLOOR
) -> float:
    n = checked_prod(dims)
    log_dims = sum(math.log(p) for p in dims)
    return n * math.log(max(residual_sq, floor)) + param_count(dims, ranks) * log_dims


def residual_floor(y: DenseTensor) -> float:
    """Smallest residual the fit term can tell apart from an exact fit.

    Below ``(ROUNDING_SLACK ||Y||_F)^2`` a residual is rounding error, and
    letting it drive the logarithm would reward overfitting noiseless data.
    """
    return max(RESIDUAL_FLOOR, ROUNDING_SLACK**2 * float(y.data @ y.data))


@dataclass
class BicResult:
    ranks: tuple[int, ...]
    score: float
    residual_sq: float
    param_count: int
    dims: tuple[int, ...]
    search_log: list[tuple[tuple[int, ...], float]] = field(default_factory=list)
    floor: float = RESIDUAL_FLOOR

    def recompute(self) -> float:
        return bic_value(self.dims, self.ranks, self.residual_sq, self.floor)


def bic_score(
    y: DenseTensor,
    ranks: Sequence[int],
    epsilon: float | None = None,
    t_max: int = 10,
) -> BicResult:
    """Fit TTOI at ``ranks`` and score the fit."""
    ranks = tuple(int(r) for r in ranks)
    _, estimate, _ = ttoi(y, ranks, epsilon=epsilon, t_max=t_max)
    diff = y.data - estimate.data
    residual_sq = float(diff @ diff)
    floor = y.memo("residual_floor", lambda: residual_floor(y))
    score = bic_value(y.dims, ranks, residual_sq, floor)
    return BicResult(
        ranks=ranks,
        score=score,
        residual_sq=residual_sq,
        param_count=param_count(y.dims, ranks),
        dims=y.dims,
        search_log=[(ranks, score)],
        floor=floor,
    )


def _feasible(dims, ranks, t_max) -> bool:
    try:
        check_ranks(dims, ranks, iterative=t_max > 0)
    except ValueError:
        return False
    return True


def _better(a: BicResult, b: BicResult | None) -> bool:
    """Lower score wins; ties go to fewer parameters, then lexicographic order."""
    if b is None:
        return True
    return (a.score, a.param_count, a.ranks) < (b.score, b.param_count, b.ranks)


def select_ranks(
    y: DenseTensor,
    r_max: Sequence[int] | int,
    strategy: str = "auto",
    epsilon: float | None = None,
    t_max: int = 10,
) -> BicResult:
    """Minimize the criterion over ranks in the box ``[1, r_max]^{d-1}``.

    ``strategy`` is ``"exhaustive"``, ``"greedy"`` (coordinate descent from
    all-ones, two full sweeps) or ``"auto"`` (exhaustive when the box holds
    at most 1024 points). Rank tuples that the dimensions cannot support are
    skipped and do not appear in the search log.
    """
    dims = y.dims
    d = len(dims)
    if isinstance(r_max, int):
        r_max = (r_max,) * (d - 1)
    r_max = tuple(int(r) for r in r_max)
    if len(r_max) != d - 1:
        raise ValueError(f"r_max needs {d - 1} entries, got {len(r_max)}")
    if any(r < 1 for r in r_max):
        raise ValueError(f"empty search box r_max={r_max}")
    if strategy == "auto":
        strategy = "exhaustive" if checked_prod(r_max) <= EXHAUSTIVE_LIMIT else "greedy"
    if strategy not in ("exhaustive", "greedy"):
        raise ValueError(f"unknown strategy {strategy!r}")

    evaluated: dict[tuple[int, ...], BicResult] = {}
    order: list[tuple[int, ...]] = []

    def evaluate(ranks):
        if ranks not in evaluated:
            evaluated[ranks] = bic_score(y, ranks, epsilon=epsilon, t_max=t_max)
            order.append(ranks)
        return evaluated[ranks]

    best = None
    if strategy == "exhaustive":
        for ranks in itertools.product(*(range(1, r + 1) for r in r_max)):
            if _feasible(dims, ranks, t_max):
                res = evaluate(ranks)
                if _better(res, best):
                    best = res
    else:
        current = (1,) * (d - 1)
        if _feasible(dims, current, t_max):
            best = evaluate(current)
        for _ in range(2):
            for k in range(d - 1):
                for r in range(1, r_max[k] + 1):
                    cand = current[:k] + (r,) + current[k + 1 :]
                    if not _feasible(dims, cand, t_max):
                        continue
                    res = evaluate(cand)
                    if _better(res, best):
                        best = res
                if best is not None:
                    current = best.ranks
    if best is None:
        raise ValueError(f"no feasible ranks in the box r_max={r_max} for dims {dims}")
    return BicResult(
        ranks=best.ranks,
        score=best.score,
        residual_sq=best.residual_sq,
        param_count=best.param_count,
        dims=dims,
        search_log=[(r, evaluated[r].score) for r in order],
        floor=best.floor,
    )

