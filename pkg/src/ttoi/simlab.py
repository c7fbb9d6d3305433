"""Spiked TT models and Monte-Carlo sweeps.

A replication is addressed by ``(seed, replication)``: cores and noise are
redrawn for every replication from their own Philox stream, so a cell can be
rerun or extended without touching the others. Every method in a cell sees
the same ``(X, Y)`` pair.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import statistics
import time
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import markov
from .rankselect import select_ranks
from .rng import generator
from .tensor_core import DenseTensor, checked_prod
from .tt import TTTensor, check_ranks, contract, tt_ranks_of, ttoi

log = logging.getLogger(__name__)

NOISE_FAMILIES = ("gaussian", "uniform")
SPIKED_METHODS = {"ttsvd": 0, "ttoi1": 1, "ttoi2": 2}
MARKOV_METHODS = ("empirical", "ttoi-markov")
# errors a sweep cell survives; anything else is a bug and propagates
CELL_ERRORS = (ValueError, ArithmeticError, np.linalg.LinAlgError)


@dataclass(frozen=True)
class SpikedModelConfig:
    """``Y = X + Z`` with Gaussian TT cores and i.i.d. noise.

    ``level`` is the standard deviation for ``"gaussian"`` noise and the
    half-width ``b`` of ``Unif(-b, b)`` for ``"uniform"``.
    """

    dims: tuple[int, ...]
    ranks: tuple[int, ...]
    noise: str = "gaussian"
    level: float = 1.0
    seed: int = 0
    replications: int = 50

    def __post_init__(self):
        object.__setattr__(self, "dims", tuple(int(p) for p in self.dims))
        object.__setattr__(self, "ranks", tuple(int(r) for r in self.ranks))
        object.__setattr__(self, "level", float(self.level))
        if self.noise not in NOISE_FAMILIES:
            raise ValueError(f"noise must be one of {NOISE_FAMILIES}, got {self.noise!r}")
        if not math.isfinite(self.level) or self.level < 0:
            raise ValueError(f"noise level must be finite and >= 0, got {self.level}")
        if self.replications < 1:
            raise ValueError("replications must be >= 1")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")
        check_ranks(self.dims, self.ranks, iterative=False)

    def digest(self) -> str:
        """Short stable hash of the configuration."""
        blob = json.dumps(asdict(self), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:12]

    def cell(self) -> dict:
        return {
            "dims": _join(self.dims),
            "ranks": _join(self.ranks),
            "noise": self.noise,
            "level": self.level,
        }


def _join(values) -> str:
    return "x".join(str(v) for v in values)


def random_cores(dims: Sequence[int], ranks: Sequence[int], rng) -> TTTensor:
    full = (1,) + tuple(ranks) + (1,)
    d = len(dims)
    first = rng.standard_normal((dims[0], full[1]))
    mids = [rng.standard_normal((full[k - 1], dims[k - 1], full[k])) for k in range(2, d)]
    last = rng.standard_normal((dims[-1], full[d - 1]))
    return TTTensor(first, mids, last)


def generate_spiked(config: SpikedModelConfig, replication: int) -> tuple[DenseTensor, DenseTensor]:
    """Signal and observation for one replication."""
    if replication < 0:
        raise ValueError("replication index must be non-negative")
    rng = generator(config.seed, replication)
    x = contract(random_cores(config.dims, config.ranks, rng))
    if config.level == 0.0:
        return x, x
    n = checked_prod(config.dims)
    if config.noise == "gaussian":
        z = config.level * rng.standard_normal(n)
    else:
        z = rng.uniform(-config.level, config.level, n)
    return x, DenseTensor(config.dims, x.data + z)


@dataclass
class ExperimentRecord:
    """Per-replication errors of one method in one sweep cell.

    ``mean`` and ``sd`` are always derived from ``errors`` (sample standard
    deviation, 0 for a single replication); failed replications hold NaN.
    """

    digest: str
    method: str
    cell: dict
    errors: list[float]
    wall_ms: list[float]
    failures: list[str] = field(default_factory=list)
    checks: dict = field(default_factory=dict)

    @property
    def failed(self) -> bool:
        return bool(self.failures)

    @property
    def mean(self) -> float:
        return aggregate(self.errors)[0]

    @property
    def sd(self) -> float:
        return aggregate(self.errors)[1]


def aggregate(values: Sequence[float]) -> tuple[float, float]:
    vals = [float(v) for v in values]
    if not vals:
        return math.nan, math.nan
    mean = statistics.fmean(vals)
    sd = statistics.stdev(vals) if len(vals) > 1 else 0.0
    return mean, sd


def _timed(fn):
    start = time.perf_counter()
    out = fn()
    return out, 1e3 * (time.perf_counter() - start)


def run_spiked_sweep(
    configs: Iterable[SpikedModelConfig],
    methods: Sequence[str] = ("ttsvd", "ttoi1", "ttoi2"),
) -> list[ExperimentRecord]:
    """Error ``||X_hat - X||_F`` of each method, paired across methods.

    ``ttsvd``, ``ttoi1`` and ``ttoi2`` run TTOI with exactly 0, 1 and 2
    updates (the increment tolerance is 0, so only an exact fixed point
    stops them early).
    """
    configs = list(configs)
    if not configs:
        raise ValueError("empty sweep grid")
    for m in methods:
        if m not in SPIKED_METHODS:
            raise ValueError(f"unknown method {m!r}")
    records = []
    for cfg in configs:
        cell = {m: ExperimentRecord(cfg.digest(), m, cfg.cell(), [], []) for m in methods}
        for rep in range(cfg.replications):
            try:
                x, y = generate_spiked(cfg, rep)
            except CELL_ERRORS as exc:
                for rec in cell.values():
                    _fail(rec, rep, exc)
                continue
            for m in methods:
                rec = cell[m]
                try:
                    res, ms = _timed(lambda: ttoi(y, cfg.ranks, epsilon=0.0, t_max=SPIKED_METHODS[m]))
                except CELL_ERRORS as exc:
                    _fail(rec, rep, exc)
                    continue
                rec.errors.append((res.estimate - x).norm())
                rec.wall_ms.append(ms)
        records.extend(cell.values())
    return records


def _fail(rec: ExperimentRecord, rep: int, exc: Exception) -> None:
    log.warning("cell %s method %s replication %d failed: %s", rec.digest, rec.method, rep, exc)
    rec.errors.append(math.nan)
    rec.wall_ms.append(math.nan)
    rec.failures.append(f"rep {rep}: {type(exc).__name__}: {exc}")


def _markov_digest(payload: dict) -> str:
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()[:12]


def run_markov_sweep(
    p: int,
    d: int,
    ranks: Sequence[int],
    lengths: Sequence[int],
    reps: int,
    seed: int = 0,
    mode: str = "trajectory",
    t_max: int = 1,
) -> list[ExperimentRecord]:
    """Empirical versus TTOI transition estimates, ``||P_hat - P||_F``.

    One chain is drawn per replication and shared by every length. In
    ``"trajectory"`` mode a length is the number of observed states; in
    ``"generative"`` mode it is the number of draws per prefix.

    Each ``ttoi-markov`` record carries ``checks`` with counts of runs that
    violated fiber stochasticity, the TT-rank bound of the true chain, or
    the projection bound ``||P_hat - P|| <= 2 ||P_hat^(1) - P||``.
    """
    ranks = tuple(int(r) for r in ranks)
    if mode not in ("trajectory", "generative"):
        raise ValueError(f"unknown mode {mode!r}")
    if reps < 1 or not lengths:
        raise ValueError("need reps >= 1 and at least one length")
    base = {"p": p, "d": d, "ranks": list(ranks), "seed": seed, "mode": mode, "t_max": t_max}
    records: dict[tuple[int, str], ExperimentRecord] = {}
    for n in lengths:
        digest = _markov_digest({**base, "length": int(n)})
        cell = {"p": p, "d": d, "ranks": _join(ranks), "mode": mode, "length": int(n)}
        for m in MARKOV_METHODS:
            records[(n, m)] = ExperimentRecord(digest, m, dict(cell), [], [])
        records[(n, "ttoi-markov")].checks = {
            "fiber_violations": 0,
            "rank_violations": 0,
            "projection_violations": 0,
        }
    for rep in range(reps):
        try:
            model = markov.generate_aggregatable(p, d, ranks, generator(seed, rep, 0))
        except CELL_ERRORS as exc:
            for rec in records.values():
                _fail(rec, rep, exc)
            continue
        truth = model.transition
        true_ranks = tt_ranks_of(truth, 1e-10)
        rank_bad = any(a > b for a, b in zip(true_ranks, ranks))
        for li, n in enumerate(lengths):
            emp_rec, est_rec = records[(n, "empirical")], records[(n, "ttoi-markov")]
            stream = generator(seed, rep, 1, li)
            try:
                start = time.perf_counter()
                if mode == "trajectory":
                    traj = markov.sample_trajectory(model, int(n), stream)
                    p_emp = markov.empirical_from_trajectory(traj, p, d)
                else:
                    p_emp = markov.empirical_generative(model, int(n), stream)
                emp_ms = 1e3 * (time.perf_counter() - start)
                (p_hat, p_one), est_ms = _timed(
                    lambda: markov.estimate_transition(p_emp, ranks, t_max=t_max, full_output=True)
                )
            except CELL_ERRORS as exc:
                _fail(emp_rec, rep, exc)
                _fail(est_rec, rep, exc)
                continue
            emp_rec.errors.append((p_emp - truth).norm())
            emp_rec.wall_ms.append(emp_ms)
            err = (p_hat - truth).norm()
            est_rec.errors.append(err)
            est_rec.wall_ms.append(emp_ms + est_ms)
            checks = est_rec.checks
            checks["rank_violations"] += int(rank_bad)
            if not (fibers_ok(p_hat) and fibers_ok(p_emp)):
                checks["fiber_violations"] += 1
            if err > 2.0 * (p_one - truth).norm() + 1e-12:
                checks["projection_violations"] += 1
    return list(records.values())


def fibers_ok(t: DenseTensor, tol: float = markov.FIBER_TOL) -> bool:
    rows = t.data.reshape(-1, t.dims[-1], order="F")
    return bool(np.all(rows >= 0) and np.max(np.abs(rows.sum(axis=1) - 1.0)) <= tol)


@dataclass
class SelectionRecord:
    """Ranks chosen by the criterion in each replication of one cell."""

    digest: str
    cell: dict
    true_ranks: tuple[int, ...]
    selected: list[tuple[int, ...] | None]
    wall_ms: list[float]
    failures: list[str] = field(default_factory=list)

    @property
    def frequency(self) -> float:
        """Share of replications that recovered the true ranks."""
        hits = sum(1 for s in self.selected if s == self.true_ranks)
        return hits / len(self.selected) if self.selected else math.nan


def run_rank_selection_sweep(
    configs: Iterable[SpikedModelConfig],
    r_max: Sequence[int] | int | None = None,
    strategy: str = "auto",
) -> list[SelectionRecord]:
    """``select_ranks`` per replication; the search box defaults to truth + 1."""
    configs = list(configs)
    if not configs:
        raise ValueError("empty sweep grid")
    out = []
    for cfg in configs:
        box = r_max if r_max is not None else tuple(r + 1 for r in cfg.ranks)
        cell = {**cfg.cell(), "r_max": _join(box if not isinstance(box, int) else (box,) * len(cfg.ranks))}
        rec = SelectionRecord(cfg.digest(), cell, cfg.ranks, [], [])
        for rep in range(cfg.replications):
            try:
                _, y = generate_spiked(cfg, rep)
                res, ms = _timed(lambda: select_ranks(y, box, strategy=strategy))
            except CELL_ERRORS as exc:
                log.warning("selection cell %s replication %d failed: %s", rec.digest, rep, exc)
                rec.selected.append(None)
                rec.wall_ms.append(math.nan)
                rec.failures.append(f"rep {rep}: {type(exc).__name__}: {exc}")
                continue
            rec.selected.append(res.ranks)
            rec.wall_ms.append(ms)
        out.append(rec)
    return out


__all__ = [
    "SpikedModelConfig",
    "ExperimentRecord",
    "SelectionRecord",
    "aggregate",
    "fibers_ok",
    "generate_spiked",
    "random_cores",
    "run_markov_sweep",
    "run_rank_selection_sweep",
    "run_spiked_sweep",
]
