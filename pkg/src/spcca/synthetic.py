"""Seeded planted-factor data sets shaped like a multi-factor omics experiment."""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .design import DesignMatrix, Factor, encode
from .errors import ConfigError
from .matrix import DataMatrix, standardize

GENOTYPES = ("gl1", "pen2", "pen2erp1", "pen2erp2", "erp2D", "erp140")


def arabidopsis_factors() -> list[Factor]:
    """The 6 x 2 x 2 x 3 = 72 sample layout with 11 non-redundant design columns.

    Samples are ordered genotype > treatment > time > replicate, replicates
    consecutive.  Genotype, treatment, time and replicate are main effects
    (5 + 1 + 1 + 2 columns).  Each repeat of the experiment used a fresh
    pathogen culture, which only touches infected samples, so the culture
    factor marks infected samples of repeats 2 and 3 (2 more columns); this
    keeps it from aliasing the replicate factor.
    """
    rows = list(itertools.product(range(6), range(2), range(2), range(3)))
    g, tr, tm, rep = (np.array(c, dtype=np.int64) for c in zip(*rows))
    culture = np.where(tr == 1, rep, 0)
    return [
        Factor("genotype", GENOTYPES, g),
        Factor("treatment", ("H2O", "P.infestans"), tr),
        Factor("time", ("6h", "12h"), tm),
        Factor("replicate", ("1", "2", "3"), rep),
        Factor("culture", ("baseline", "culture2", "culture3"), culture),
    ]


@dataclass(frozen=True)
class PlantedFactor:
    """A design-column combination injected into ``counts[k]`` features of set ``k``.

    ``combination`` maps design column labels (``"factor=level"``) to
    coefficients applied to the standardized design columns.
    """

    combination: Mapping[str, float]
    counts: tuple[int, ...]
    effect_size: float = 1.0


@dataclass(frozen=True)
class SyntheticSpec:
    n_features: tuple[int, ...]
    factors: Sequence[Factor]
    planted: Sequence[PlantedFactor]
    noise_sd: float = 0.3
    seed: int = 0
    set_names: tuple[str, ...] | None = None

    @property
    def n(self) -> int:
        return int(self.factors[0].assignment.size)

    def names(self) -> tuple[str, ...]:
        return self.set_names or tuple(f"X{k + 1}" for k in range(len(self.n_features)))


@dataclass
class GroundTruth:
    set_names: tuple[str, ...]
    combinations: list[dict[str, float]]
    signals: list[np.ndarray]
    supports: list[list[tuple[str, ...]]] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "set_names": list(self.set_names),
            "planted": [
                {"combination": dict(c), "supports": {name: list(s) for name, s in zip(self.set_names, sup)},
                 "signal": [float(v) for v in z]}
                for c, sup, z in zip(self.combinations, self.supports, self.signals)
            ],
        }


def _validate(spec: SyntheticSpec, design: DesignMatrix):
    if spec.noise_sd < 0:
        raise ConfigError("noise_sd must be >= 0")
    for pf in spec.planted:
        if len(pf.counts) != len(spec.n_features):
            raise ConfigError("planted counts need one entry per data set")
        unknown = set(pf.combination) - set(design.labels)
        if unknown:
            raise ConfigError(f"planted combination uses unknown design columns {sorted(unknown)}")
    for k, p in enumerate(spec.n_features):
        need = sum(pf.counts[k] for pf in spec.planted)
        if need > p:
            raise ConfigError(f"set {k}: planted supports need {need} features, only {p}")


def generate(spec: SyntheticSpec):
    """Return ``(data_sets, design, truth)``.

    Each planted factor adds ``effect_size * z`` to its features, where ``z``
    is its design combination rescaled to unit sample variance; every entry
    also gets i.i.d. Gaussian noise with sd ``noise_sd``.  Supports are
    disjoint and drawn at random.
    """
    n = spec.n
    design = encode(spec.factors, n)
    _validate(spec, design)
    zdesign = standardize(design.matrix, "error")
    col = {lab: j for j, lab in enumerate(zdesign.col_labels)}
    rng = np.random.default_rng(spec.seed)
    names = spec.names()
    ids = tuple(f"s{i + 1:03d}" for i in range(n))

    signals = []
    for pf in spec.planted:
        coef = np.zeros(zdesign.cols)
        for lab, c in pf.combination.items():
            coef[col[lab]] = c
        z = zdesign.values @ coef
        sd = z.std(ddof=1)
        if sd == 0:
            raise ConfigError("planted combination has zero variance")
        signals.append(z / sd)

    data, supports = [], [[] for _ in spec.planted]
    for k, p in enumerate(spec.n_features):
        labels = tuple(f"{names[k]}_{j + 1:04d}" for j in range(p))
        x = spec.noise_sd * rng.standard_normal((n, p))
        order = rng.permutation(p)
        start = 0
        for j, pf in enumerate(spec.planted):
            idx = np.sort(order[start:start + pf.counts[k]])
            start += pf.counts[k]
            x[:, idx] += pf.effect_size * signals[j][:, None]
            supports[j].append(tuple(labels[i] for i in idx))
        data.append(DataMatrix(x, labels, False, ids))
    design = DesignMatrix(DataMatrix(design.matrix.values, design.labels, False, ids), design.provenance)
    truth = GroundTruth(names, [dict(pf.combination) for pf in spec.planted], signals, supports)
    return data, design, truth


def planted_scenario(seed: int = 2013, noise_sd: float = 0.3,
                     n_features: tuple[int, int] = (200, 60)) -> SyntheticSpec:
    """Two orthogonal planted factors on the 72-sample layout.

    The infection response hits 30 genes / 15 metabolites, the pen2erp2
    genotype 15 genes / 8 metabolites, so the two components have clearly
    separated strengths.
    """
    return SyntheticSpec(
        n_features=n_features,
        factors=arabidopsis_factors(),
        planted=(
            PlantedFactor({"treatment=P.infestans": 1.0}, (30, 15), 1.0),
            PlantedFactor({"genotype=pen2erp2": 1.0}, (15, 8), 1.0),
        ),
        noise_sd=noise_sd,
        seed=seed,
        set_names=("genes", "metabolites"),
    )


def noise_scenario(seed: int, n_features: tuple[int, int] = (200, 60)) -> SyntheticSpec:
    """Same shape as :func:`planted_scenario` with nothing planted."""
    return SyntheticSpec(n_features, arabidopsis_factors(), (), 1.0, seed, ("genes", "metabolites"))


def write_truth(truth: GroundTruth, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(truth.to_json(), fh, indent=2, sort_keys=True)
        fh.write("\n")
