"""Iterative penalized CCA: supervised (spCCA), unsupervised two-set, and SUMCOR modes.

The supervised iteration couples each biological set only to the design set::

    v_k = w_k + X_k^+ X_m w_m            (k < m, previous design weights)
    v_m = w_m + X_m^+ sum_k X_k w_k      (current biological weights)

and every update is normalized, hard-thresholded at ``lambda_k / 2`` and
normalized again.  Several random restarts are run and the one with the largest
mean design correlation is kept.  Further components come from deflating the
biological sets; the design set is never deflated.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from . import _kernels as K
from .errors import (
    AllZeroed,
    ConfigError,
    ConstantColumn,
    ConvergenceWarning,
    DegenerateVariate,
    LambdaWarning,
)
from .matrix import (
    EXACT,
    PINV_MODES,
    STRONG_RIDGE,
    DataMatrix,
    DEGENERATE_SQNORM,
    Pseudoinverse,
    as_matrix,
    deflate,
    pseudoinverse,
    standardize,
)

log = logging.getLogger(__name__)

HARD = "hard"
SOFT = "soft"


@dataclass(frozen=True)
class EngineConfig:
    """Parameters of one engine run.

    ``lambdas`` holds one sparsity value per data set with the design (or
    partner) set last.  ``pinv_modes=None`` selects strong-ridge pseudoinverses
    for biological sets and the exact one for the design set.
    """

    lambdas: tuple[float, ...]
    pinv_modes: tuple[str, ...] | None = None
    restarts: int = 10
    max_iterations: int = 1000
    tolerance: float = 1e-6
    seed: int = 0
    thresholding: str = HARD

    def __post_init__(self):
        lams = tuple(float(v) for v in self.lambdas)
        object.__setattr__(self, "lambdas", lams)
        if any(not math.isfinite(v) or v < 0 for v in lams):
            raise ConfigError(f"lambdas must be finite and >= 0, got {lams}")
        if self.pinv_modes is not None:
            modes = tuple(self.pinv_modes)
            bad = [m for m in modes if m not in PINV_MODES]
            if bad:
                raise ConfigError(f"unknown pseudoinverse mode(s) {bad}")
            if len(modes) != len(lams):
                raise ConfigError("need one pseudoinverse mode per lambda")
            object.__setattr__(self, "pinv_modes", modes)
        if self.restarts < 1:
            raise ConfigError("restarts must be >= 1")
        if self.max_iterations < 1:
            raise ConfigError("max_iterations must be >= 1")
        if not self.tolerance > 0:
            raise ConfigError("tolerance must be > 0")
        if self.thresholding not in (HARD, SOFT):
            raise ConfigError(f"thresholding must be 'hard' or 'soft', got {self.thresholding!r}")

    def modes(self, m: int, default: Sequence[str] | None = None) -> tuple[str, ...]:
        if self.pinv_modes is not None:
            return self.pinv_modes
        if default is not None:
            return tuple(default)
        return (STRONG_RIDGE,) * (m - 1) + (EXACT,)

    def with_lambdas(self, lambdas) -> "EngineConfig":
        return EngineConfig(tuple(lambdas), self.pinv_modes, self.restarts, self.max_iterations,
                            self.tolerance, self.seed, self.thresholding)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["lambdas"] = list(self.lambdas)
        d["pinv_modes"] = None if self.pinv_modes is None else list(self.pinv_modes)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "EngineConfig":
        known = {"lambdas", "pinv_modes", "restarts", "max_iterations", "tolerance", "seed",
                 "thresholding"}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown engine option(s): {sorted(extra)}")
        d = dict(d)
        if d.get("pinv_modes") is not None:
            d["pinv_modes"] = tuple(d["pinv_modes"])
        return cls(**d)


@dataclass(frozen=True, eq=False)
class CanonicalVariable:
    """One extracted component.

    ``weights``, ``variates`` and ``labels`` are per data set, design (or
    partner) last.  ``labels[k]`` names the columns ``weights[k]`` refers to,
    which after deflation may be a subset of the original features.
    """

    weights: tuple[np.ndarray, ...]
    variates: tuple[np.ndarray, ...]
    labels: tuple[tuple[str, ...], ...]
    objective: float
    per_set_correlations: tuple[float, ...]
    converged: bool
    iterations_used: int
    restart: int = 0
    n_degenerate: int = 0

    def support(self, k: int) -> tuple[str, ...]:
        """Labels of the nonzero weights of set ``k``."""
        return tuple(self.labels[k][i] for i in np.flatnonzero(self.weights[k]))

    def same_as(self, other: "CanonicalVariable") -> bool:
        return (self.objective == other.objective
                and self.labels == other.labels
                and self.per_set_correlations == other.per_set_correlations
                and all(np.array_equal(a, b) for a, b in zip(self.weights, other.weights))
                and all(np.array_equal(a, b) for a, b in zip(self.variates, other.variates)))


@dataclass(eq=False)
class FitResult:
    variables: list[CanonicalVariable]
    config: EngineConfig
    set_names: tuple[str, ...]
    trace: list[dict] = field(default_factory=list)
    stop_reason: str = "requested components extracted"
    # standardized (bio..., partner) sets each component was fitted on
    inputs: list[list[DataMatrix]] = field(default_factory=list, repr=False)

    @property
    def objectives(self) -> list[float]:
        return [v.objective for v in self.variables]

    def same_as(self, other: "FitResult") -> bool:
        return (len(self.variables) == len(other.variables)
                and all(a.same_as(b) for a, b in zip(self.variables, other.variables))
                and self.trace == other.trace and self.config == other.config)


# -- single steps --------------------------------------------------------

def soft_threshold(v, lam: float, soft: bool = False, set_index: int = 0) -> np.ndarray:
    """Zero every entry with magnitude ``<= lam / 2``.

    Hard thresholding by default; ``soft=True`` additionally shrinks the
    survivors by ``lam / 2``.  The result is not renormalized.
    """
    out = K.threshold(np.ascontiguousarray(v, dtype=np.float64), float(lam), bool(soft))
    if not np.any(out):
        raise AllZeroed(set_index, lam)
    return out


def _pinv_matrix(p):
    return p.matrix if isinstance(p, Pseudoinverse) else np.asarray(p, dtype=float)


def _pack(mats: Sequence[np.ndarray], pinvs: Sequence[np.ndarray]):
    offs = np.zeros(len(mats) + 1, dtype=np.int64)
    offs[1:] = np.cumsum([x.shape[1] for x in mats])
    XT = np.ascontiguousarray(np.vstack([x.T for x in mats]))
    P = np.ascontiguousarray(np.vstack(pinvs))
    return XT, P, offs


def supervised_iterate_once(weights, data, pinvs, lambdas, thresholding: str = HARD):
    """One supervised update of all weight vectors (design set last).

    Biological sets are updated from the previous design weights; the design
    set is then updated from the new biological weights.
    """
    mats = [as_matrix(x).values for x in data]
    pin = [_pinv_matrix(p) for p in pinvs]
    XT, P, offs = _pack(mats[:-1], pin[:-1])
    w = np.concatenate([np.asarray(x, dtype=float) for x in weights[:-1]])
    wm = np.asarray(weights[-1], dtype=float).copy()
    w_new, wm_new, status = K.spcca_step(
        XT, P, offs, np.ascontiguousarray(mats[-1].T), np.ascontiguousarray(pin[-1]),
        np.asarray(lambdas, dtype=float), w, wm, thresholding == SOFT)
    if status != K.OK:
        k = int(status) if status >= 0 else 0
        raise AllZeroed(k, float(lambdas[k]))
    return [w_new[offs[k]:offs[k + 1]].copy() for k in range(len(offs) - 1)] + [wm_new]


# -- one component -------------------------------------------------------

def _prepare(data) -> list[DataMatrix]:
    mats = [as_matrix(x) for x in data]
    n = {m.rows for m in mats}
    if len(n) != 1:
        raise ConfigError(f"data sets differ in sample count: {sorted(n)}")
    return [m if m.standardized else standardize(m, "error") for m in mats]


def _warn_lambdas(mats, lambdas):
    for k, (m, lam) in enumerate(zip(mats, lambdas)):
        if lam >= 2.0 / math.sqrt(m.cols):
            warnings.warn(
                f"lambda={lam:g} for set {k} is >= 2/sqrt(p)={2 / math.sqrt(m.cols):.3g}; "
                "it may zero every weight", LambdaWarning, stacklevel=3)


def _init(rng, sizes):
    out = []
    for p in sizes:
        v = rng.uniform(-1.0, 1.0, p)
        out.append(v / np.linalg.norm(v))
    return out


STREAM_RESTART = 0
STREAM_SPLIT = 1
STREAM_PERMUTATION = 2


def stream(seed: int, purpose: int, *keys: int) -> np.random.Generator:
    """Independent generator for ``(seed, purpose, keys...)``."""
    return np.random.default_rng([int(seed), purpose, *(int(k) for k in keys)])


def _restart_rng(seed, component, restart):
    return stream(seed, STREAM_RESTART, component, restart)


def _choose(runs):
    conv = [r for r in runs if r["converged"]]
    pool = conv or runs
    best = pool[0]
    for r in pool[1:]:
        if r["objective"] > best["objective"]:
            best = r
    return best, bool(conv)


def _zeroed_error(zeroed, lambdas):
    k = min(zeroed, key=lambda i: (lambdas[i], i))
    return AllZeroed(k, lambdas[k])


def _variable(mats, weights, objective, pairs, run, n_bad):
    variates = tuple(m.values @ w for m, w in zip(mats, weights))
    corr = tuple(K.pearson(variates[a], variates[b]) for a, b in pairs)
    return CanonicalVariable(
        weights=tuple(weights), variates=variates, labels=tuple(m.col_labels for m in mats),
        objective=float(objective), per_set_correlations=corr, converged=run["converged"],
        iterations_used=int(run["iterations"]), restart=run["restart"], n_degenerate=n_bad)


def fit_one_component(data, design, config: EngineConfig, component_index: int = 0,
                      *, strict_rank: bool = True) -> CanonicalVariable:
    """Best of ``config.restarts`` supervised runs for one canonical variable.

    ``data`` are the biological sets, ``design`` the design (or partner) set.
    Restarts that zero a whole weight vector are discarded; if all of them do,
    :class:`AllZeroed` names the smallest offending lambda.  When no restart
    converges the best run is returned with ``converged=False`` and a
    :class:`ConvergenceWarning`.
    """
    mats = _prepare(list(data) + [design])
    m = len(mats)
    if m < 2:
        raise ConfigError("need at least one biological set and a design set")
    if len(config.lambdas) != m:
        raise ConfigError(f"{len(config.lambdas)} lambdas for {m} data sets")
    _warn_lambdas(mats, config.lambdas)
    modes = config.modes(m)
    pin = [pseudoinverse(x, mode, strict=strict_rank).matrix for x, mode in zip(mats, modes)]
    XT, P, offs = _pack([x.values for x in mats[:-1]], pin[:-1])
    XmT = np.ascontiguousarray(mats[-1].values.T)
    Pm = np.ascontiguousarray(pin[-1])
    lams = np.asarray(config.lambdas, dtype=float)
    soft = config.thresholding == SOFT
    sizes = [x.cols for x in mats]

    runs, zeroed = [], set()
    for r in range(config.restarts):
        init = _init(_restart_rng(config.seed, component_index, r), sizes)
        w, wm, obj, it, conv, status = K.spcca_run(
            XT, P, offs, XmT, Pm, lams, np.concatenate(init[:-1]), init[-1],
            config.max_iterations, config.tolerance, soft)
        if status != K.OK:
            zeroed.add(int(status) if status >= 0 else m - 1)
            continue
        runs.append(dict(w=w, wm=wm, objective=float(obj), iterations=int(it),
                         converged=bool(conv), restart=r))
    if not runs:
        raise _zeroed_error(zeroed, config.lambdas)
    best, any_conv = _choose(runs)
    if not any_conv:
        warnings.warn(f"no restart converged within {config.max_iterations} iterations; "
                      "returning the best unconverged run", ConvergenceWarning, stacklevel=2)
    w, wm = best["w"], best["wm"]
    if wm[np.argmax(np.abs(wm))] < 0:
        w, wm = -w, -wm
    weights = [w[offs[k]:offs[k + 1]].copy() for k in range(m - 1)] + [wm.copy()]
    pairs = [(k, m - 1) for k in range(m - 1)]
    return _variable(mats, weights, best["objective"], pairs, best, config.restarts - len(runs))


# -- sequences of components ---------------------------------------------

def _deflate_set(x: DataMatrix, w) -> DataMatrix:
    return standardize(deflate(x, w), "drop", min_variance=DEGENERATE_SQNORM)


def _fit_sequence(bio, partner, config, n_components, deflate_partner, set_names):
    if n_components < 1:
        raise ConfigError("n_components must be >= 1")
    current = _prepare(list(bio) + [partner])
    names = tuple(set_names) if set_names else tuple(
        [f"X{k + 1}" for k in range(len(current) - 1)] + ["design"])
    result = FitResult([], config, names)
    for c in range(n_components):
        try:
            var = fit_one_component(current[:-1], current[-1], config, c, strict_rank=(c == 0))
        except AllZeroed as exc:
            if c == 0:
                raise
            result.stop_reason = f"component {c + 1}: {exc}"
            break
        if var.objective < 0:
            result.stop_reason = f"component {c + 1}: negative objective {var.objective:.4g}"
            break
        result.variables.append(var)
        result.inputs.append(current)
        if c == n_components - 1:
            break
        ndefl = len(current) if deflate_partner else len(current) - 1
        nxt, dropped = [], {}
        try:
            for k in range(ndefl):
                new = _deflate_set(current[k], var.weights[k])
                gone = [lab for lab in current[k].col_labels if lab not in set(new.col_labels)]
                if gone:
                    dropped[names[k]] = gone
                nxt.append(new)
        except (DegenerateVariate, ConstantColumn) as exc:
            result.stop_reason = f"data set {names[k]} degenerate after component {c + 1}: {exc}"
            break
        result.trace.append({"component": c + 1, "dropped": dropped})
        current = nxt + current[ndefl:]
    return result


def fit(data, design, config: EngineConfig, n_components: int = 1,
        set_names: Sequence[str] | None = None) -> FitResult:
    """Extract up to ``n_components`` supervised canonical variables.

    After each component every biological set is deflated against its own
    variate and re-standardized (constant columns dropped and recorded in
    ``trace``).  Extraction stops early, without error, on a negative
    objective, a degenerate data set, or exhausted rank.
    """
    return _fit_sequence(data, design, config, n_components, False, set_names)


def pcca_fit(x1, x2, config: EngineConfig, n_components: int = 1,
             set_names: Sequence[str] | None = None) -> FitResult:
    """Unsupervised two-set penalized CCA; ``x2`` takes the partner role and is deflated too."""
    if config.pinv_modes is None:
        config = EngineConfig(config.lambdas, (STRONG_RIDGE, STRONG_RIDGE), config.restarts,
                              config.max_iterations, config.tolerance, config.seed,
                              config.thresholding)
    names = set_names or ("X1", "X2")
    return _fit_sequence([x1], x2, config, n_components, True, names)


def sumcor_iterate(data, config: EngineConfig, component_index: int = 0) -> CanonicalVariable:
    """Generalized CCA (SUMCOR) for one component.

    Each set is regressed on the sum of all variates, ``w_k <- X_k^+ sum_i X_i w_i``,
    then normalized and optionally thresholded.  Pseudoinverses default to
    exact.  The objective is the mean pairwise correlation over all pairs.
    An empty ``config.lambdas`` means no sparsity.
    """
    mats = _prepare(data)
    m = len(mats)
    if m < 2:
        raise ConfigError("SUMCOR needs at least two data sets")
    lambdas = config.lambdas or (0.0,) * m
    if len(lambdas) != m:
        raise ConfigError(f"{len(lambdas)} lambdas for {m} data sets")
    modes = config.pinv_modes or (EXACT,) * m
    if len(modes) != m:
        raise ConfigError("need one pseudoinverse mode per data set")
    pin = [pseudoinverse(x, mode).matrix for x, mode in zip(mats, modes)]
    XT, P, offs = _pack([x.values for x in mats], pin)
    lams = np.asarray(lambdas, dtype=float)
    soft = config.thresholding == SOFT
    sizes = [x.cols for x in mats]

    runs, zeroed = [], set()
    for r in range(config.restarts):
        init = _init(_restart_rng(config.seed, component_index, r), sizes)
        w, obj, it, conv, status = K.sumcor_run(XT, P, offs, lams, np.concatenate(init),
                                                config.max_iterations, config.tolerance, soft)
        if status != K.OK:
            zeroed.add(max(int(status), 0))
            continue
        runs.append(dict(w=w, objective=float(obj), iterations=int(it), converged=bool(conv),
                         restart=r))
    if not runs:
        raise _zeroed_error(zeroed, lambdas)
    best, any_conv = _choose(runs)
    if not any_conv:
        warnings.warn("no SUMCOR restart converged", ConvergenceWarning, stacklevel=2)
    w = best["w"]
    weights = [w[offs[k]:offs[k + 1]].copy() for k in range(m)]
    if weights[0][np.argmax(np.abs(weights[0]))] < 0:
        weights = [-x for x in weights]
    pairs = [(a, b) for a in range(m) for b in range(a + 1, m)]
    return _variable(mats, weights, best["objective"], pairs, best, config.restarts - len(runs))
