"""Binary dummy coding of experimental factors into a design data set."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConfigError, EmptyLevel, RedundantDesign
from .matrix import DataMatrix, standardize


@dataclass(frozen=True, eq=False)
class Factor:
    """One experimental factor.

    ``assignment[i]`` is the level index of sample ``i``.  The reference level
    gets no indicator column.
    """

    name: str
    levels: tuple[str, ...]
    assignment: np.ndarray
    reference_level: int = 0

    def __post_init__(self):
        levels = tuple(str(v) for v in self.levels)
        if len(levels) < 2:
            raise ConfigError(f"factor {self.name!r} needs at least 2 levels")
        if len(set(levels)) != len(levels):
            raise ConfigError(f"factor {self.name!r} has duplicate level names")
        a = np.asarray(self.assignment)
        if a.ndim != 1 or not np.issubdtype(a.dtype, np.integer):
            raise ConfigError(f"factor {self.name!r}: assignment must be a 1-d integer array")
        if a.size and (a.min() < 0 or a.max() >= len(levels)):
            raise ConfigError(f"factor {self.name!r}: level index out of range")
        if not 0 <= self.reference_level < len(levels):
            raise ConfigError(f"factor {self.name!r}: reference level out of range")
        a = a.astype(np.int64)
        a.setflags(write=False)
        object.__setattr__(self, "levels", levels)
        object.__setattr__(self, "assignment", a)

    @classmethod
    def from_labels(cls, name: str, labels: Sequence[str], levels: Sequence[str] | None = None,
                    reference_level: int = 0) -> "Factor":
        """Build a factor from per-sample level names (levels in order of first appearance)."""
        labels = [str(v) for v in labels]
        if levels is None:
            levels = list(dict.fromkeys(labels))
        index = {lv: i for i, lv in enumerate(levels)}
        try:
            assignment = np.array([index[v] for v in labels], dtype=np.int64)
        except KeyError as exc:
            raise ConfigError(f"factor {name!r}: undeclared level {exc.args[0]!r}") from None
        return cls(name, tuple(levels), assignment, reference_level)

    @property
    def k(self) -> int:
        return len(self.levels)


@dataclass(frozen=True, eq=False)
class DesignMatrix:
    """Raw 0/1 design plus ``(factor, level)`` provenance for each column."""

    matrix: DataMatrix
    provenance: tuple[tuple[str, str], ...]

    @property
    def labels(self) -> tuple[str, ...]:
        return self.matrix.col_labels


def _dependency_message(x: np.ndarray, labels: Sequence[str]) -> str:
    xc = x - x.mean(axis=0)
    _, s, vt = np.linalg.svd(xc, full_matrices=False)
    null = vt[-1]
    null = null / np.abs(null).max()
    terms = [f"{c:+.3g}*[{labels[j]}]" for j, c in enumerate(null) if abs(c) > 1e-8]
    return " ".join(terms) + " = const"


def encode(factors: Sequence[Factor], n: int) -> DesignMatrix:
    """Treatment-code each factor with ``k - 1`` indicator columns.

    Columns are labelled ``"factor=level"``.  The assembled matrix (together
    with an intercept) must have full column rank, otherwise the factors alias
    and :class:`RedundantDesign` names the dependency.
    """
    if not factors:
        raise ConfigError("design needs at least one factor")
    names = [f.name for f in factors]
    if len(set(names)) != len(names):
        raise ConfigError("factor names must be unique")
    cols, provenance = [], []
    for f in factors:
        if f.assignment.size != n:
            raise ConfigError(f"factor {f.name!r} assigns {f.assignment.size} samples, expected {n}")
        counts = np.bincount(f.assignment, minlength=f.k)
        unused = [f.levels[i] for i in np.flatnonzero(counts == 0)]
        if unused:
            raise EmptyLevel(f"factor {f.name!r}: level(s) {', '.join(unused)} never used")
        for i, level in enumerate(f.levels):
            if i == f.reference_level:
                continue
            cols.append((f.assignment == i).astype(float))
            provenance.append((f.name, level))
    x = np.column_stack(cols)
    labels = tuple(f"{a}={b}" for a, b in provenance)
    # rank with an implicit intercept: centered columns must be independent
    rank = np.linalg.matrix_rank(x - x.mean(axis=0))
    if rank < x.shape[1]:
        raise RedundantDesign(
            f"design columns are aliased (rank {rank} < {x.shape[1]}): "
            + _dependency_message(x, labels))
    return DesignMatrix(DataMatrix(x, labels), tuple(provenance))


def standardize_design(d: DesignMatrix) -> DataMatrix:
    return standardize(d.matrix, "error")


def factors_from_spec(spec: dict) -> tuple[list[Factor], int]:
    """Parse the JSON design specification ``{"n": .., "factors": [..]}``."""
    try:
        n = int(spec["n"])
        raw = spec["factors"]
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"design spec needs 'n' and 'factors': {exc}") from None
    factors = []
    for item in raw:
        try:
            levels = item["levels"]
            assignment = item["assignment"]
            name = item["name"]
        except KeyError as exc:
            raise ConfigError(f"factor entry missing {exc.args[0]!r}") from None
        if assignment and isinstance(assignment[0], str):
            factors.append(Factor.from_labels(name, assignment, levels, item.get("reference_level", 0)))
        else:
            factors.append(Factor(name, tuple(levels), np.asarray(assignment, dtype=np.int64),
                                  int(item.get("reference_level", 0))))
    return factors, n


def load_spec(path) -> tuple[list[Factor], int]:
    with open(path, encoding="utf-8") as fh:
        try:
            spec = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return factors_from_spec(spec)


def spec_to_json(factors: Sequence[Factor], n: int) -> dict:
    return {
        "n": n,
        "factors": [
            {"name": f.name, "levels": list(f.levels), "assignment": f.assignment.tolist(),
             "reference_level": f.reference_level}
            for f in factors
        ],
    }


def read_factor_csv(path) -> tuple[list[Factor], int, tuple[str, ...]]:
    """Factors from a samples x factors CSV of level names."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 3:
        raise ConfigError(f"{path}: factor table needs a header and at least 2 samples")
    header = rows[0][1:]
    ids = tuple(r[0] for r in rows[1:])
    cols = {name: [r[j + 1] for r in rows[1:]] for j, name in enumerate(header)}
    return [Factor.from_labels(name, vals) for name, vals in cols.items()], len(ids), ids
