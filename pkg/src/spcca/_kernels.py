"""Inner iteration loops of the penalized CCA engine.

Data sets are passed packed: ``XT`` stacks the transposed biological matrices
row-wise (shape ``(sum p_k, n)``), ``P`` stacks their pseudoinverses the same
way, and ``offs[k]:offs[k+1]`` addresses set ``k``.  Weights are packed with
the same offsets.  Every function here is decorated with :func:`jit`, so it is
compiled by numba unless ``SPCCA_DISABLE_NUMBA`` is set.

Status codes: ``-1`` success, ``k >= 0`` means set ``k`` could not be
normalized, because every weight was thresholded away or the update vanished
(the design set is index ``m - 1`` for the supervised kernels).
"""

import numpy as np

from ._backend import jit

OK = -1
ZERO_NORM = 1e-12


@jit
def threshold(v, lam, soft):
    """Zero entries with ``|v_i| <= lam / 2``; soft mode also shrinks survivors."""
    t = 0.5 * lam
    a = np.abs(v)
    if soft:
        out = np.sign(v) * (a - t)
    else:
        out = v.copy()
    out[a <= t] = 0.0
    return out


@jit
def pearson(u, v):
    du = u - u.mean()
    dv = v - v.mean()
    su = np.dot(du, du)
    sv = np.dot(dv, dv)
    if su <= 1e-300 or sv <= 1e-300:
        return 0.0
    r = np.dot(du, dv) / np.sqrt(su * sv)
    return min(1.0, max(-1.0, r))


@jit
def _prox(v, lam, soft):
    """Normalize, threshold, normalize again.  Returns (w, ok)."""
    nrm = np.sqrt(np.dot(v, v))
    # updates are built from unit vectors; anything this small is cancellation noise
    if nrm <= ZERO_NORM:
        return v, False
    v = v / nrm
    if lam > 0.0:
        v = threshold(v, lam, soft)
    nrm = np.sqrt(np.dot(v, v))
    if nrm == 0.0:
        return v, False
    return v / nrm, True


@jit
def spcca_step(XT, P, offs, XmT, Pm, lams, w, wm, soft):
    """One supervised update; returns ``(w, wm, status)``."""
    nsets = offs.shape[0] - 1
    zm = np.dot(wm, XmT)
    w_new = np.empty_like(w)
    total = np.zeros(XT.shape[1])
    for k in range(nsets):
        a = offs[k]
        b = offs[k + 1]
        v = w[a:b] + np.dot(P[a:b], zm)
        wk, ok = _prox(v, lams[k], soft)
        if not ok:
            return w, wm, k
        w_new[a:b] = wk
        total += np.dot(wk, XT[a:b])
    v = wm + np.dot(Pm, total)
    wm_new, ok = _prox(v, lams[nsets], soft)
    if not ok:
        return w, wm, nsets
    return w_new, wm_new, OK


@jit
def spcca_objective(XT, offs, XmT, w, wm):
    nsets = offs.shape[0] - 1
    zm = np.dot(wm, XmT)
    s = 0.0
    for k in range(nsets):
        a = offs[k]
        b = offs[k + 1]
        s += pearson(np.dot(w[a:b], XT[a:b]), zm)
    return s / nsets


@jit
def spcca_run(XT, P, offs, XmT, Pm, lams, w0, wm0, max_iter, tol, soft):
    """Iterate until objective and weights both move less than ``tol``.

    Returns ``(w, wm, objective, iterations, converged, status)``.
    """
    w = w0.copy()
    wm = wm0.copy()
    obj = spcca_objective(XT, offs, XmT, w, wm)
    for it in range(1, max_iter + 1):
        w_new, wm_new, status = spcca_step(XT, P, offs, XmT, Pm, lams, w, wm, soft)
        if status != OK:
            return w, wm, obj, it, False, status
        obj_new = spcca_objective(XT, offs, XmT, w_new, wm_new)
        dw = max(np.max(np.abs(w_new - w)), np.max(np.abs(wm_new - wm)))
        dobj = abs(obj_new - obj)
        w = w_new
        wm = wm_new
        obj = obj_new
        if dobj < tol and dw < tol:
            return w, wm, obj, it, True, OK
    return w, wm, obj, max_iter, False, OK


@jit
def sumcor_step(XT, P, offs, lams, w, soft):
    nsets = offs.shape[0] - 1
    total = np.zeros(XT.shape[1])
    for k in range(nsets):
        total += np.dot(w[offs[k]:offs[k + 1]], XT[offs[k]:offs[k + 1]])
    w_new = np.empty_like(w)
    for k in range(nsets):
        a = offs[k]
        b = offs[k + 1]
        wk, ok = _prox(np.dot(P[a:b], total), lams[k], soft)
        if not ok:
            return w, k
        w_new[a:b] = wk
    return w_new, OK


@jit
def sumcor_objective(XT, offs, w):
    nsets = offs.shape[0] - 1
    n = XT.shape[1]
    u = np.empty((nsets, n))
    for k in range(nsets):
        u[k] = np.dot(w[offs[k]:offs[k + 1]], XT[offs[k]:offs[k + 1]])
    s = 0.0
    for k in range(nsets):
        for l in range(k + 1, nsets):
            s += pearson(u[k], u[l])
    return 2.0 * s / (nsets * (nsets - 1))


@jit
def sumcor_run(XT, P, offs, lams, w0, max_iter, tol, soft):
    w = w0.copy()
    obj = sumcor_objective(XT, offs, w)
    for it in range(1, max_iter + 1):
        w_new, status = sumcor_step(XT, P, offs, lams, w, soft)
        if status != OK:
            return w, obj, it, False, status
        obj_new = sumcor_objective(XT, offs, w_new)
        dw = np.max(np.abs(w_new - w))
        dobj = abs(obj_new - obj)
        w = w_new
        obj = obj_new
        if dobj < tol and dw < tol:
            return w, obj, it, True, OK
    return w, obj, max_iter, False, OK
