"""Exact small-scale CCA solvers.

:func:`standard_cca` solves the classical two-set problem through its
generalized eigenproblem.  :func:`brute_force_cca` searches weight directions
on a grid over the unit sphere and shares no linear algebra with it, which makes
the pair usable as mutual oracles in tests.
"""

from __future__ import annotations

import itertools
from typing import NamedTuple

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular

from .errors import IllPosed, RankDeficient, TooLarge
from .matrix import as_matrix


class CCAComponent(NamedTuple):
    w1: np.ndarray
    w2: np.ndarray
    rho: float


def _check_full_rank(x, which):
    n, p = x.shape
    if p >= n:
        raise IllPosed(
            f"set {which} has p={p} >= n={n}: X^T X is singular, use the penalized engine")
    rank = np.linalg.matrix_rank(x)
    if rank < p:
        raise RankDeficient(rank, p)


def _canonical_sign(w1, w2):
    if w1[np.argmax(np.abs(w1))] < 0:
        return -w1, -w2
    return w1, w2


def standard_cca(x1, x2, n_components: int | None = None) -> list[CCAComponent]:
    """Classical CCA of two full-rank data sets.

    Weights satisfy ``w_k^T X_k^T X_k w_k = 1``.  Components come back in
    order of non-increasing correlation.
    """
    x1 = as_matrix(x1).values
    x2 = as_matrix(x2).values
    if x1.shape[0] != x2.shape[0]:
        raise ValueError("data sets differ in sample count")
    _check_full_rank(x1, 1)
    _check_full_rank(x2, 2)
    c11 = x1.T @ x1
    c22 = x2.T @ x2
    c12 = x1.T @ x2
    l1 = np.linalg.cholesky(c11)
    f22 = cho_factor(c22)
    # L^-1 C12 C22^-1 C21 L^-T is symmetric and shares eigenvalues rho^2
    b = solve_triangular(l1, c12, lower=True)
    m = b @ cho_solve(f22, b.T)
    m = 0.5 * (m + m.T)
    evals, evecs = np.linalg.eigh(m)
    order = np.argsort(evals)[::-1]
    k = min(x1.shape[1], x2.shape[1])
    if n_components is not None:
        k = min(k, int(n_components))
    l2 = np.linalg.cholesky(c22)
    out = []
    for i, j in enumerate(order[:k]):
        rho = float(np.sqrt(max(evals[j], 0.0)))
        w1 = solve_triangular(l1.T, evecs[:, j], lower=False)
        if rho > 1e-12:
            w2 = cho_solve(f22, c12.T @ w1) / rho
        else:
            # no correlation left: any unit-variance direction of set 2 will do
            e = np.zeros(x2.shape[1])
            e[min(i, e.size - 1)] = 1.0
            w2 = solve_triangular(l2.T, e, lower=False)
        w2 = w2 / np.sqrt(w2 @ c22 @ w2)
        w1, w2 = _canonical_sign(w1, w2)
        out.append(CCAComponent(w1, w2, min(rho, 1.0)))
    return out


# -- brute force -----------------------------------------------------------

def _directions(angles, p):
    """Unit vectors for angle arrays of shape (..., p-1)."""
    if p == 1:
        return np.ones(angles.shape[:-1] + (1,))
    if p == 2:
        t = angles[..., 0]
        return np.stack([np.cos(t), np.sin(t)], axis=-1)
    t, f = angles[..., 0], angles[..., 1]
    return np.stack([np.sin(t) * np.cos(f), np.sin(t) * np.sin(f), np.cos(t)], axis=-1)


def _angle_grid(p, step):
    if p == 1:
        return np.zeros((1, 0))
    # half the sphere suffices: w and -w give correlations of opposite sign
    if p == 2:
        return np.arange(0.0, np.pi, step)[:, None]
    t = np.arange(0.0, np.pi + step / 2, step)
    f = np.arange(0.0, np.pi, step)
    return np.array(list(itertools.product(t, f)))


def _corr(x, w):
    u = x @ w
    u = u - u.mean(axis=0)
    return u / np.sqrt((u * u).sum(axis=0))


def brute_force_cca(x1, x2, resolution: float = 1e-3, coarse_step: float = 0.05):
    """Maximize correlation over unit-sphere grids, then polish by compass search.

    Only for ``p1, p2 <= 3``.  Returns ``(w1, w2, rho)`` with unit-length
    weights.  The coarse grid picks the basin and the polish halves its step
    until it drops below ``resolution`` radians.
    """
    x1 = as_matrix(x1).values
    x2 = as_matrix(x2).values
    p1, p2 = x1.shape[1], x2.shape[1]
    if p1 > 3 or p2 > 3:
        raise TooLarge(f"brute force limited to 3 features per set, got ({p1}, {p2})")

    step = max(coarse_step, resolution)
    a1 = _angle_grid(p1, step)
    a2 = _angle_grid(p2, step)
    z1 = _corr(x1, _directions(a1, p1).T)
    z2 = _corr(x2, _directions(a2, p2).T)
    c = z1.T @ z2
    i, j = np.unravel_index(np.argmax(np.abs(c)), c.shape)
    sign = 1.0 if c[i, j] >= 0 else -1.0
    theta = np.concatenate([a1[i], a2[j]])

    def score(th):
        w1 = _directions(th[: p1 - 1], p1)
        w2 = _directions(th[p1 - 1:], p2)
        u = _corr(x1, w1[:, None])[:, 0]
        v = _corr(x2, w2[:, None])[:, 0]
        return sign * float(u @ v)

    best = score(theta)
    dims = theta.size
    h = step / 2
    while dims and h >= resolution / 2:
        improved = False
        for d in range(dims):
            for s in (h, -h):
                trial = theta.copy()
                trial[d] += s
                val = score(trial)
                if val > best:
                    best, theta, improved = val, trial, True
        if not improved:
            h /= 2
    w1 = _directions(theta[: p1 - 1], p1)
    w2 = sign * _directions(theta[p1 - 1:], p2)
    w1, w2 = _canonical_sign(w1, w2)
    return w1, w2, best
