"""Sparsity-parameter selection by grid search over repeated hold-out splits."""

from __future__ import annotations

import itertools
import json
import logging
import math
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from joblib import Parallel, delayed

from . import _kernels as K
from .engine import (
    STREAM_SPLIT,
    CanonicalVariable,
    EngineConfig,
    fit_one_component,
    stream,
)
from .errors import (
    ConfigError,
    ConvergenceWarning,
    LambdaWarning,
    NoConvergedRun,
    SpccaError,
    TooFewSamples,
)
from .matrix import DataMatrix, constant_mask, as_matrix, column_moments

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class GridSpec:
    """Candidate lambdas per data set (design last) and the hold-out scheme."""

    grids: tuple[tuple[float, ...], ...]
    n_holdouts: int = 10
    holdout_fraction: float = 1 / 8
    seed: int = 0

    def __post_init__(self):
        grids = tuple(tuple(float(v) for v in g) for g in self.grids)
        if not grids or any(len(g) == 0 for g in grids):
            raise ConfigError("every data set needs a non-empty lambda grid")
        if any(list(g) != sorted(g) for g in grids):
            raise ConfigError("lambda grids must be ascending")
        if any(v < 0 or not math.isfinite(v) for g in grids for v in g):
            raise ConfigError("lambdas must be finite and >= 0")
        if not 0 < self.holdout_fraction < 1:
            raise ConfigError("holdout_fraction must lie in (0, 1)")
        if self.n_holdouts < 1:
            raise ConfigError("n_holdouts must be >= 1")
        object.__setattr__(self, "grids", grids)

    def cells(self) -> list[tuple[float, ...]]:
        return list(itertools.product(*self.grids))


def holdout_size(n: int, fraction: float) -> int:
    return max(1, int(math.floor(fraction * n + 0.5)))


def make_splits(n: int, spec: GridSpec) -> list[tuple[np.ndarray, np.ndarray]]:
    """``spec.n_holdouts`` random (train, test) index splits.

    ``holdout_fraction`` of the samples (rounded, at least one) form the test
    set; the rest train.  Deterministic in ``spec.seed``.
    """
    t = holdout_size(n, spec.holdout_fraction)
    if n - t < 3:
        raise TooFewSamples(f"{n} samples leave {n - t} for training (need >= 3)")
    out = []
    for i in range(spec.n_holdouts):
        perm = stream(spec.seed, STREAM_SPLIT, i).permutation(n)
        out.append((np.sort(perm[t:]), np.sort(perm[:t])))
    return out


@dataclass
class CellResult:
    index: int
    lambdas: tuple[float, ...]
    scores: list[float | None]
    errors: list[str] = field(default_factory=list)
    n_unconverged: int = 0
    seconds: float = 0.0

    @property
    def valid(self) -> list[float]:
        return [s for s in self.scores if s is not None]

    @property
    def n_failed(self) -> int:
        return sum(s is None for s in self.scores)

    @property
    def mean(self) -> float:
        v = self.valid
        return float(np.mean(v)) if v else -math.inf

    @property
    def std(self) -> float:
        v = self.valid
        return float(np.std(v, ddof=1)) if len(v) > 1 else 0.0

    def to_dict(self) -> dict:
        return {"index": self.index, "lambdas": list(self.lambdas), "scores": self.scores,
                "errors": self.errors, "n_unconverged": self.n_unconverged}

    @classmethod
    def from_dict(cls, d) -> "CellResult":
        return cls(int(d["index"]), tuple(d["lambdas"]), list(d["scores"]), list(d["errors"]),
                   int(d.get("n_unconverged", 0)))

    def same_scores(self, other: "CellResult") -> bool:
        return self.lambdas == other.lambdas and self.scores == other.scores


@dataclass
class GridSearchResult:
    cells: list[CellResult]
    selected: int
    splits: list[tuple[np.ndarray, np.ndarray]]
    set_names: tuple[str, ...]
    median: CanonicalVariable | None = None
    split_objectives: list[float | None] = field(default_factory=list)

    @property
    def selected_cell(self) -> CellResult:
        return self.cells[self.selected]

    @property
    def selected_lambdas(self) -> tuple[float, ...]:
        return self.selected_cell.lambdas

    def rows(self):
        for c in self.cells:
            yield [c.index, *c.lambdas, c.mean, c.std, c.n_failed]

    def header(self) -> list[str]:
        return ["cell", *(f"lambda_{s}" for s in self.set_names), "mean_test_corr", "std_test_corr",
                "n_failed"]

    def audit(self) -> list[dict]:
        return [{"split": i, "train": tr.tolist(), "test": te.tolist()}
                for i, (tr, te) in enumerate(self.splits)]


@dataclass(frozen=True)
class _Split:
    train: list[DataMatrix]
    test: list[np.ndarray]


def _split_data(mats: Sequence[DataMatrix], train, test) -> _Split:
    """Standardize on training rows and carry the same transform to the test rows.

    Columns constant on the training rows are zeroed in both parts; their
    weights then never matter.
    """
    tr_out, te_out = [], []
    for m in mats:
        x_tr = m.values[train]
        mean, sd = column_moments(x_tr)
        const = constant_mask(x_tr, mean, sd, 0.0)
        sd = np.where(const, 1.0, sd)
        z_tr = (x_tr - mean) / sd
        z_te = (m.values[test] - mean) / sd
        z_tr[:, const] = 0.0
        z_te[:, const] = 0.0
        tr_out.append(DataMatrix(z_tr, m.col_labels, True))
        te_out.append(z_te)
    return _Split(tr_out, te_out)


def _test_score(var: CanonicalVariable, test: Sequence[np.ndarray]) -> float:
    zm = test[-1] @ var.weights[-1]
    total = 0.0
    for k in range(len(test) - 1):
        u = test[k] @ var.weights[k]
        if np.ptp(u) == 0.0 or np.ptp(zm) == 0.0:
            raise ValueError("degenerate test variate")
        total += K.pearson(u, zm)
    return total / (len(test) - 1)


def _run_cell(index, lambdas, splits: Sequence[_Split], config: EngineConfig, keep=False):
    t0 = time.perf_counter()
    cfg = config.with_lambdas(lambdas)
    scores, errors, comps, unconv = [], [], [], 0
    for s in splits:
        try:
            var = fit_one_component(s.train[:-1], s.train[-1], cfg)
            scores.append(_test_score(var, s.test))
            unconv += not var.converged
            comps.append(var)
        except (SpccaError, ValueError) as exc:
            scores.append(None)
            errors.append(f"{type(exc).__name__}: {exc}")
            comps.append(None)
    cell = CellResult(index, tuple(lambdas), scores, errors, unconv, time.perf_counter() - t0)
    log.debug("cell %d %s mean=%.4f (%.2fs)", index, lambdas, cell.mean, cell.seconds)
    return (cell, comps) if keep else (cell, None)


def select_cell(cells: Sequence[CellResult], tie_tol: float = 1e-12) -> int:
    """Index of the best mean test correlation; near-ties go to the larger (sparser) lambdas."""
    best = max(c.mean for c in cells)
    if best == -math.inf:
        raise NoConvergedRun("every grid cell failed on every split")
    cands = [c for c in cells if c.mean >= best - tie_tol]
    return max(cands, key=lambda c: (sum(c.lambdas), c.lambdas)).index


def median_component(components: Sequence[CanonicalVariable | None]) -> CanonicalVariable:
    """The converged component with the (lower) median objective."""
    conv = [c for c in components if c is not None and c.converged]
    if not conv:
        raise NoConvergedRun("no converged component to take the median of")
    ranked = sorted(conv, key=lambda c: c.objective)
    return ranked[(len(ranked) - 1) // 2]


def _cell_path(checkpoint_dir, index):
    return Path(checkpoint_dir) / f"cell_{index:05d}.json"


def _load_checkpoint(checkpoint_dir, index, lambdas):
    p = _cell_path(checkpoint_dir, index)
    if not p.exists():
        return None
    try:
        cell = CellResult.from_dict(json.loads(p.read_text(encoding="utf-8")))
    except (ValueError, KeyError):
        return None
    return cell if cell.lambdas == tuple(lambdas) else None


def grid_search(data, design, spec: GridSpec, engine_config: EngineConfig, *,
                n_jobs: int = 1, checkpoint_dir=None,
                set_names: Sequence[str] | None = None) -> GridSearchResult:
    """Exhaustive search over ``spec.cells()``.

    For every cell and split one component is fitted on the training rows;
    the score is the mean correlation of each biological test variate with the
    design test variate.  Failed splits are recorded and skipped; a cell that
    fails everywhere scores ``-inf``.  With ``checkpoint_dir`` each finished
    cell is written there and already present cells are reused.  The median
    component of the selected cell's splits is attached for diagnostics.
    """
    mats = [as_matrix(x) for x in list(data) + [design]]
    if len(spec.grids) != len(mats):
        raise ConfigError(f"{len(spec.grids)} lambda grids for {len(mats)} data sets")
    n = mats[0].rows
    if any(m.rows != n for m in mats):
        raise ConfigError("data sets differ in sample count")
    splits_idx = make_splits(n, spec)
    splits = [_split_data(mats, tr, te) for tr, te in splits_idx]
    names = tuple(set_names) if set_names else tuple(
        [f"X{k + 1}" for k in range(len(mats) - 1)] + ["design"])
    cells_l = spec.cells()

    results: dict[int, CellResult] = {}
    todo = []
    if checkpoint_dir is not None:
        Path(checkpoint_dir).mkdir(parents=True, exist_ok=True)
    for i, lams in enumerate(cells_l):
        cached = _load_checkpoint(checkpoint_dir, i, lams) if checkpoint_dir else None
        if cached is not None:
            results[i] = cached
        else:
            todo.append((i, lams))
    log.info("grid search: %d cells, %d cached, %d splits", len(cells_l), len(results), len(splits))

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", LambdaWarning)
        warnings.simplefilter("ignore", ConvergenceWarning)
        jobs = (delayed(_run_cell)(i, lams, splits, engine_config) for i, lams in todo)
        par = Parallel(n_jobs=n_jobs, prefer="threads", return_as="generator")
        for cell, _ in par(jobs):
            results[cell.index] = cell
            if checkpoint_dir is not None:
                _cell_path(checkpoint_dir, cell.index).write_text(
                    json.dumps(cell.to_dict(), sort_keys=True) + "\n", encoding="utf-8")

        cells = [results[i] for i in range(len(cells_l))]
        sel = select_cell(cells)
        _, comps = _run_cell(sel, cells_l[sel], splits, engine_config, keep=True)
    try:
        med = median_component(comps)
    except NoConvergedRun:
        med = None
    objs = [None if c is None else c.objective for c in comps]
    return GridSearchResult(cells, sel, splits_idx, names, med, objs)
