"""Permutation null distribution for the supervised objective."""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from joblib import Parallel, delayed

from .engine import STREAM_PERMUTATION, EngineConfig, FitResult, fit_one_component, stream
from .errors import ConvergenceWarning, LambdaWarning, PermutationAborted, SpccaError
from .matrix import DataMatrix, as_matrix, standardize

log = logging.getLogger(__name__)

MAX_FAILURE_RATE = 0.2


@dataclass
class PermutationResult:
    threshold: float
    null_samples: np.ndarray
    alpha: float
    n_permutations: int
    n_failed: int

    def threshold_at(self, alpha: float) -> float:
        return nearest_rank_quantile(self.null_samples, 1.0 - alpha)


def nearest_rank_quantile(values, q: float) -> float:
    """Smallest sample with at least a fraction ``q`` of the samples at or below it."""
    v = np.sort(np.asarray(values, dtype=float))
    if v.size == 0:
        raise ValueError("no samples")
    rank = min(max(int(math.ceil(q * v.size - 1e-12)), 1), v.size)
    return float(v[rank - 1])


def permute_rows(x: DataMatrix, rng: np.random.Generator, blocks=None) -> DataMatrix:
    """Shuffle the rows of ``x``; with ``blocks`` only within equal block labels."""
    n = x.rows
    if blocks is None:
        perm = rng.permutation(n)
    else:
        blocks = np.asarray(blocks)
        perm = np.arange(n)
        for b in np.unique(blocks):
            idx = np.flatnonzero(blocks == b)
            perm[idx] = idx[rng.permutation(idx.size)]
    return DataMatrix(x.values[perm], x.col_labels, x.standardized, x.sample_ids)


def _one(i, mats, design, config, seed, blocks, component):
    rng = stream(seed, STREAM_PERMUTATION, component, i)
    shuffled = [permute_rows(m, rng, blocks) for m in mats]
    try:
        return fit_one_component(shuffled, design, config, component,
                                 strict_rank=component == 0).objective, None
    except SpccaError as exc:
        return None, f"{type(exc).__name__}: {exc}"


def permutation_threshold(data, design, engine_config: EngineConfig, n_permutations: int = 1000,
                          alpha: float = 0.05, seed: int = 0, *, blocks=None,
                          n_jobs: int = 1, component: int = 0) -> PermutationResult:
    """Empirical ``1 - alpha`` quantile of the first-component objective under the null.

    Each permutation shuffles the rows of every biological set independently
    while the design stays fixed, then refits one component with
    ``engine_config``.  Failed permutations are skipped; more than 20% failures
    raises :class:`PermutationAborted`.  ``component`` selects an independent
    family of permutation streams and relaxes the rank check for deflated input.
    """
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    if n_permutations < 1:
        raise ValueError("n_permutations must be >= 1")
    if n_permutations < 1 / alpha:
        warnings.warn(f"{n_permutations} permutations cannot resolve alpha={alpha}", stacklevel=2)
    mats = [m if m.standardized else standardize(m) for m in map(as_matrix, data)]
    design = as_matrix(design)
    design = design if design.standardized else standardize(design)

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", LambdaWarning)
        warnings.simplefilter("ignore", ConvergenceWarning)
        out = Parallel(n_jobs=n_jobs, prefer="threads")(
            delayed(_one)(i, mats, design, engine_config, seed, blocks, component)
            for i in range(n_permutations))
    null = np.array([o for o, _ in out if o is not None])
    errors = [e for _, e in out if e is not None]
    if len(errors) > MAX_FAILURE_RATE * n_permutations:
        raise PermutationAborted(
            f"{len(errors)} of {n_permutations} permutations failed; first: {errors[0]}")
    if errors:
        log.warning("%d permutations failed and were skipped", len(errors))
    return PermutationResult(nearest_rank_quantile(null, 1 - alpha), null, alpha,
                             n_permutations, len(errors))


def sequential_thresholds(fit: FitResult, engine_config: EngineConfig, n_permutations: int = 1000,
                          alpha: float = 0.05, seed: int = 0, *, blocks=None,
                          n_jobs: int = 1) -> list[PermutationResult]:
    """One permutation null per component, built from the deflated sets it was fitted on.

    A single null from the undeflated data understates the null for later
    components whenever strong earlier components dominate the data.
    """
    out = []
    for c, sets in enumerate(fit.inputs):
        out.append(permutation_threshold(sets[:-1], sets[-1], engine_config, n_permutations, alpha,
                                         seed, blocks=blocks, n_jobs=n_jobs, component=c))
    return out


def classify_components(fit: FitResult | Sequence, threshold) -> list[tuple[int, bool]]:
    """``(component number, objective > threshold)`` for every component, numbered from 1.

    ``threshold`` is one number or one per component.
    """
    variables = fit.variables if isinstance(fit, FitResult) else fit
    if np.ndim(threshold) == 0:
        threshold = [threshold] * len(variables)
    if len(threshold) != len(variables):
        raise ValueError(f"{len(threshold)} thresholds for {len(variables)} components")
    return [(i + 1, bool(v.objective > t)) for i, (v, t) in enumerate(zip(variables, threshold))]
