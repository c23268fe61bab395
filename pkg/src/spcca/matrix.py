"""Dense matrix services: standardization, pseudoinverses, correlation, deflation."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .errors import ConstantColumn, DegenerateVariate, NonFinite, RankDeficient

log = logging.getLogger(__name__)

EXACT = "exact"
STRONG_RIDGE = "strong-ridge"
PINV_MODES = (EXACT, STRONG_RIDGE)

#: squared-norm floor below which a variate is treated as degenerate
DEGENERATE_SQNORM = 1e-12


@dataclass(frozen=True, eq=False)
class DataMatrix:
    """An ``n x p`` block of samples by features.

    ``values`` is stored as a read-only C-contiguous float64 array.
    ``sample_ids`` is optional and only used for I/O.
    """

    values: np.ndarray
    col_labels: tuple[str, ...] = ()
    standardized: bool = False
    sample_ids: tuple[str, ...] | None = None

    def __post_init__(self):
        vals = np.array(self.values, dtype=np.float64, order="C", copy=True)
        if vals.ndim == 1:
            vals = vals[:, None]
        if vals.ndim != 2:
            raise ValueError("values must be a 2-d array")
        n, p = vals.shape
        if n < 2 or p < 1:
            raise ValueError(f"need n >= 2 and p >= 1, got {n}x{p}")
        if not np.all(np.isfinite(vals)):
            raise NonFinite("matrix contains missing or non-finite values")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        labels = tuple(str(c) for c in self.col_labels) or tuple(f"V{j + 1}" for j in range(p))
        if len(labels) != p:
            raise ValueError(f"{len(labels)} column labels for {p} columns")
        object.__setattr__(self, "col_labels", labels)
        if self.sample_ids is not None:
            ids = tuple(str(s) for s in self.sample_ids)
            if len(ids) != n:
                raise ValueError(f"{len(ids)} sample ids for {n} rows")
            object.__setattr__(self, "sample_ids", ids)

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def cols(self) -> int:
        return self.values.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def take_rows(self, idx) -> "DataMatrix":
        ids = None if self.sample_ids is None else tuple(self.sample_ids[i] for i in idx)
        return DataMatrix(self.values[idx], self.col_labels, False, ids)

    def take_cols(self, idx) -> "DataMatrix":
        idx = list(idx)
        return replace(self, values=self.values[:, idx],
                       col_labels=tuple(self.col_labels[j] for j in idx))

    def __eq__(self, other):
        if not isinstance(other, DataMatrix):
            return NotImplemented
        return (self.col_labels == other.col_labels
                and self.standardized == other.standardized
                and self.sample_ids == other.sample_ids
                and np.array_equal(self.values, other.values))

    __hash__ = None


def as_matrix(x, labels: Sequence[str] = ()) -> DataMatrix:
    if isinstance(x, DataMatrix):
        return x
    return DataMatrix(np.asarray(x, dtype=float), tuple(labels))


def column_moments(values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Column means and sample standard deviations (ddof=1)."""
    mean = values.mean(axis=0)
    sd = values.std(axis=0, ddof=1)
    return mean, sd


def constant_mask(values, mean, sd, min_variance):
    meansq = np.mean(values * values, axis=0)
    var = sd * sd
    return (var <= 1e-12 * meansq) | (var <= min_variance)


def standardize(m, on_constant_column: str = "error", *, min_variance: float = 0.0) -> DataMatrix:
    """Center each column and scale it to unit sample variance.

    With ``on_constant_column="drop"`` zero-variance columns are removed and
    logged; callers can recover them by diffing ``col_labels``.  A column counts
    as constant when its variance is negligible next to its mean square or
    below ``min_variance``.
    """
    m = as_matrix(m)
    if on_constant_column not in ("error", "drop"):
        raise ValueError(f"unknown constant-column policy {on_constant_column!r}")
    x = m.values
    mean, sd = column_moments(x)
    const = constant_mask(x, mean, sd, min_variance)
    keep = np.flatnonzero(~const)
    if const.any():
        bad = [m.col_labels[j] for j in np.flatnonzero(const)]
        if on_constant_column == "error":
            raise ConstantColumn(bad)
        log.info("dropping constant columns: %s", ", ".join(bad))
        if keep.size == 0:
            raise ConstantColumn(bad)
    z = (x[:, keep] - mean[keep]) / sd[keep]
    # second pass removes residual rounding in the mean
    z -= z.mean(axis=0)
    z /= z.std(axis=0, ddof=1)
    return DataMatrix(z, tuple(m.col_labels[j] for j in keep), True, m.sample_ids)


@dataclass(frozen=True, eq=False)
class Pseudoinverse:
    mode: str
    matrix: np.ndarray = field(repr=False)
    rank: int = -1


def pseudoinverse(m, mode: str = EXACT, *, strict: bool = True) -> Pseudoinverse:
    """``X^+`` for a standardized matrix.

    ``exact`` is the Moore-Penrose inverse computed from an SVD and refuses
    rank-deficient input unless ``strict=False``.  ``strong-ridge`` is the
    infinite-ridge limit, i.e. ``X.T / (n - 1)``: covariances between features
    are ignored and only per-feature scale is kept.
    """
    m = as_matrix(m)
    x = m.values
    n, p = x.shape
    if mode == STRONG_RIDGE:
        return Pseudoinverse(mode, np.ascontiguousarray(x.T / (n - 1)), min(n, p))
    if mode != EXACT:
        raise ValueError(f"unknown pseudoinverse mode {mode!r}")
    u, s, vt = np.linalg.svd(x, full_matrices=False)
    tol = s.max() * max(n, p) * np.finfo(float).eps if s.size else 0.0
    rank = int(np.sum(s > tol))
    if strict and rank < p:
        raise RankDeficient(rank, p)
    inv = np.zeros_like(s)
    inv[:rank] = 1.0 / s[:rank]
    pinv = (vt.T * inv) @ u.T
    return Pseudoinverse(mode, np.ascontiguousarray(pinv), rank)


def correlation(u, v) -> float:
    """Pearson correlation of two n-vectors."""
    u = np.asarray(u, dtype=float).ravel()
    v = np.asarray(v, dtype=float).ravel()
    if u.shape != v.shape:
        raise ValueError("vectors differ in length")
    du = u - u.mean()
    dv = v - v.mean()
    su = du @ du
    sv = dv @ dv
    if su / max(u.size - 1, 1) < 1e-20 or sv / max(v.size - 1, 1) < 1e-20:
        raise DegenerateVariate("variate has (near) zero variance")
    r = (du @ dv) / np.sqrt(su * sv)
    return float(min(1.0, max(-1.0, r)))


def deflate(m, w) -> DataMatrix:
    """Residual of every column after regression on the variate ``m @ w``.

    The result is not re-standardized; callers do that (with the drop
    policy) before extracting the next component.
    """
    m = as_matrix(m)
    w = np.asarray(w, dtype=float).ravel()
    if w.size != m.cols:
        raise ValueError(f"weight length {w.size} != {m.cols} columns")
    u = m.values @ w
    uu = u @ u
    if uu < DEGENERATE_SQNORM:
        raise DegenerateVariate(f"variate squared norm {uu:.3g} too small to deflate")
    resid = m.values - np.outer(u, (u @ m.values) / uu)
    return DataMatrix(resid, m.col_labels, False, m.sample_ids)
