"""Epsilon-SVR trained by sequential minimal optimisation.

The dual is solved in LIBSVM's doubled form: variables ``beta = (alpha, alpha*)``
with labels ``y = (+1, ..., -1, ...)``, ``Q = y y' K`` and linear term
``p = (eps - z, eps + z)``::

    min 1/2 beta' Q beta + p' beta   s.t.  y' beta = 0,  0 <= beta <= C

Working pairs use second-order selection; ties go to the lowest index.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import TrainingError

TAU = 1e-12


@njit(cache=True)
def _smo(K, z, C, eps, tol, max_iter):
    n = K.shape[0]
    l = 2 * n
    beta = np.zeros(l)
    y = np.empty(l)
    G = np.empty(l)
    QD = np.empty(l)
    for t in range(n):
        y[t] = 1.0
        y[t + n] = -1.0
        G[t] = eps - z[t]
        G[t + n] = eps + z[t]
        QD[t] = K[t, t]
        QD[t + n] = K[t, t]
    it = 0
    gap = 0.0
    while it < max_iter:
        # i: maximal violator from the "up" set
        gmax = -np.inf
        i = -1
        for t in range(l):
            if y[t] > 0:
                if beta[t] < C and -G[t] > gmax:
                    gmax = -G[t]
                    i = t
            else:
                if beta[t] > 0 and G[t] > gmax:
                    gmax = G[t]
                    i = t
        gmax2 = -np.inf
        j = -1
        best = np.inf
        ii = i % n if i >= 0 else 0
        for t in range(l):
            tt = t % n
            if y[t] > 0:
                if beta[t] > 0:
                    if G[t] > gmax2:
                        gmax2 = G[t]
                    gd = gmax + G[t]
                    if i >= 0 and gd > 0:
                        qc = QD[i] + QD[t] - 2.0 * y[i] * K[ii, tt]
                        if qc <= 0:
                            qc = TAU
                        obj = -(gd * gd) / qc
                        if obj < best:
                            best = obj
                            j = t
            else:
                if beta[t] < C:
                    if -G[t] > gmax2:
                        gmax2 = -G[t]
                    gd = gmax - G[t]
                    if i >= 0 and gd > 0:
                        qc = QD[i] + QD[t] + 2.0 * y[i] * K[ii, tt]
                        if qc <= 0:
                            qc = TAU
                        obj = -(gd * gd) / qc
                        if obj < best:
                            best = obj
                            j = t
        gap = gmax + gmax2
        if gap < tol or j == -1:
            break
        it += 1

        jj = j % n
        qij = y[i] * y[j] * K[ii, jj]
        old_i = beta[i]
        old_j = beta[j]
        if y[i] != y[j]:
            qc = QD[i] + QD[j] + 2.0 * qij
            if qc <= 0:
                qc = TAU
            delta = (-G[i] - G[j]) / qc
            diff = beta[i] - beta[j]
            beta[i] += delta
            beta[j] += delta
            if diff > 0:
                if beta[j] < 0:
                    beta[j] = 0.0
                    beta[i] = diff
            else:
                if beta[i] < 0:
                    beta[i] = 0.0
                    beta[j] = -diff
            if diff > 0:
                if beta[i] > C:
                    beta[i] = C
                    beta[j] = C - diff
            else:
                if beta[j] > C:
                    beta[j] = C
                    beta[i] = C + diff
        else:
            qc = QD[i] + QD[j] - 2.0 * qij
            if qc <= 0:
                qc = TAU
            delta = (G[i] - G[j]) / qc
            s = beta[i] + beta[j]
            beta[i] -= delta
            beta[j] += delta
            if s > C:
                if beta[i] > C:
                    beta[i] = C
                    beta[j] = s - C
            else:
                if beta[j] < 0:
                    beta[j] = 0.0
                    beta[i] = s
            if s > C:
                if beta[j] > C:
                    beta[j] = C
                    beta[i] = s - C
            else:
                if beta[i] < 0:
                    beta[i] = 0.0
                    beta[j] = s
        di = beta[i] - old_i
        dj = beta[j] - old_j
        for t in range(l):
            tt = t % n
            G[t] += y[t] * (y[i] * K[ii, tt] * di + y[j] * K[jj, tt] * dj)
    return beta, G, it, gap


def _gradient(K, z, theta, eps):
    f = K @ theta
    return np.concatenate([f + eps - z, -f + eps + z])


def kkt_violation(K, z, theta, C, eps) -> float:
    """Maximal violating-pair gap ``m - M`` of a dual solution (0 when optimal)."""
    K = np.asarray(K, float)
    n = len(z)
    alpha = np.maximum(theta, 0.0)
    alpha_s = np.maximum(-theta, 0.0)
    G = _gradient(K, z, theta, eps)
    beta = np.concatenate([alpha, alpha_s])
    y = np.concatenate([np.ones(n), -np.ones(n)])
    up = ((y > 0) & (beta < C)) | ((y < 0) & (beta > 0))
    low = ((y > 0) & (beta > 0)) | ((y < 0) & (beta < C))
    v = -y * G
    if not up.any() or not low.any():
        return 0.0
    return max(0.0, float(v[up].max() - v[low].min()))


def _rho(theta, G, C, n):
    beta = np.concatenate([np.maximum(theta, 0.0), np.maximum(-theta, 0.0)])
    y = np.concatenate([np.ones(n), -np.ones(n)])
    yG = y * G
    at_ub = beta >= C
    at_lb = beta <= 0
    free = ~(at_ub | at_lb)
    if free.any():
        return float(yG[free].mean())
    ub_mask = (at_ub & (y < 0)) | (at_lb & (y > 0))
    lb_mask = (at_ub & (y > 0)) | (at_lb & (y < 0))
    ub = yG[ub_mask].min() if ub_mask.any() else np.inf
    lb = yG[lb_mask].max() if lb_mask.any() else -np.inf
    if not np.isfinite(ub):
        return float(lb)
    if not np.isfinite(lb):
        return float(ub)
    return float(0.5 * (ub + lb))


def _polish(K, z, theta, C, eps):
    """Solve the KKT equalities exactly on the free set found by SMO.

    Returns the refined coefficients, or ``None`` if the active set was not
    confirmed (sign or box violated).
    """
    free = (np.abs(theta) > 0) & (np.abs(theta) < C)
    if not free.any():
        return None
    F = np.flatnonzero(free)
    B = np.flatnonzero(~free)
    s = np.sign(theta[F])
    rhs = np.concatenate([z[F] - eps * s - K[np.ix_(F, B)] @ theta[B], [-theta[B].sum()]])
    m = len(F)
    A = np.zeros((m + 1, m + 1))
    A[:m, :m] = K[np.ix_(F, F)]
    A[:m, m] = -1.0
    A[m, :m] = 1.0
    sol = np.linalg.lstsq(A, rhs, rcond=None)[0]
    cand = theta.copy()
    cand[F] = sol[:m]
    if np.any(np.sign(cand[F]) != s) or np.any(np.abs(cand[F]) > C):
        return None
    return cand


@dataclass(frozen=True)
class SvrSolution:
    theta: np.ndarray   # alpha - alpha*, each in [-C, C]
    bias: float         # b = -rho
    iterations: int
    kkt: float


def svr_solve(K, z, C: float, eps: float = 0.1, tol: float = 1e-3, max_iter: int = 10_000_000,
              polish: bool = True) -> SvrSolution:
    """Solve the epsilon-SVR dual for a precomputed kernel matrix."""
    K = np.ascontiguousarray(K, dtype=float)
    z = np.ascontiguousarray(z, dtype=float)
    n = len(z)
    if K.shape != (n, n):
        raise TrainingError(f"kernel matrix shape {K.shape} does not match {n} targets")
    if n < 2:
        raise TrainingError("SVR needs at least 2 samples")
    if not (np.all(np.isfinite(K)) and np.all(np.isfinite(z))):
        raise TrainingError("non-finite kernel values or targets")
    if not (C > 0 and eps >= 0):
        raise TrainingError("SVR needs C > 0 and epsilon >= 0")
    beta, G, it, gap = _smo(K, z, float(C), float(eps), float(tol), int(max_iter))
    if gap >= tol and it >= max_iter:
        raise TrainingError(f"SMO did not converge in {max_iter} iterations (gap {gap:.3g})")
    theta = beta[:n] - beta[n:]
    kkt = kkt_violation(K, z, theta, C, eps)
    if polish:
        cand = _polish(K, z, theta, C, eps)
        if cand is not None:
            cand_kkt = kkt_violation(K, z, cand, C, eps)
            if cand_kkt <= kkt:
                theta, kkt = cand, cand_kkt
    G = _gradient(K, z, theta, eps)
    rho = _rho(theta, G, C, n)
    return SvrSolution(theta, -rho, int(it), kkt)


def dual_objective(K, z, theta, eps) -> float:
    """LIBSVM dual objective ``1/2 beta'Q beta + p'beta`` written in ``theta``."""
    theta = np.asarray(theta, float)
    return float(0.5 * theta @ K @ theta - z @ theta + eps * np.abs(theta).sum())
