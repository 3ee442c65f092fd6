"""Kernel CCA over the geometric and appearance views, and the two-RBF
kernel the learner uses on the canonical projections."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ExtractionError, RegularizationError, SizeError


def sq_dists(a, b) -> np.ndarray:
    a = np.atleast_2d(np.asarray(a, float))
    b = np.atleast_2d(np.asarray(b, float))
    d2 = np.einsum("ij,ij->i", a, a)[:, None] + np.einsum("ij,ij->i", b, b)[None, :] - 2.0 * a @ b.T
    return np.maximum(d2, 0.0)


def rbf_kernel(x, y, gamma: float) -> float:
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    if x.shape != y.shape:
        raise ExtractionError(f"rbf_kernel: length mismatch {x.shape} vs {y.shape}")
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    diff = x - y
    return float(np.exp(-gamma * (diff @ diff)))


def rbf_matrix(a, b, gamma: float) -> np.ndarray:
    return np.exp(-gamma * sq_dists(a, b))


def median_gamma(x) -> float:
    """1 / median squared distance between distinct rows (1.0 if all coincide)."""
    d2 = sq_dists(x, x)
    iu = np.triu_indices(d2.shape[0], 1)
    vals = d2[iu]
    vals = vals[vals > 0]
    return 1.0 / float(np.median(vals)) if vals.size else 1.0


def two_view_kernel(z1a, z2a, z1b, z2b, gamma1: float, gamma2: float) -> np.ndarray:
    """Equal-weight sum of RBF kernels on the two projected views."""
    return 0.5 * np.exp(-gamma1 * sq_dists(z1a, z1b)) + 0.5 * np.exp(-gamma2 * sq_dists(z2a, z2b))


@dataclass(frozen=True, eq=False)
class _View:
    x: np.ndarray          # training rows
    gamma: float
    col_mean: np.ndarray   # column means of the uncentred kernel
    total_mean: float
    scale: float           # trace normalisation factor
    dual: np.ndarray       # (n, d') canonical directions
    std: np.ndarray        # (d',) training projection std

    def project(self, rows) -> np.ndarray:
        rows = np.atleast_2d(np.asarray(rows, float))
        if rows.shape[1] != self.x.shape[1]:
            raise ExtractionError(
                f"KCCA view has length {rows.shape[1]}, model was fitted on {self.x.shape[1]}")
        k = rbf_matrix(rows, self.x, self.gamma)
        kc = k - k.mean(axis=1, keepdims=True) - self.col_mean[None, :] + self.total_mean
        return (self.scale * kc) @ self.dual / self.std


@dataclass(frozen=True, eq=False)
class KccaModel:
    view1: _View
    view2: _View
    kappa: float
    correlations: np.ndarray  # descending, clamped to [0, 1]

    @property
    def components(self) -> int:
        return len(self.correlations)

    @property
    def gamma1(self) -> float:
        return self.view1.gamma

    @property
    def gamma2(self) -> float:
        return self.view2.gamma


def _centered_kernel(x: np.ndarray, gamma: float):
    k = rbf_matrix(x, x, gamma)
    col = k.mean(axis=0)
    tot = float(k.mean())
    kc = k - col[None, :] - col[:, None] + tot
    kc = 0.5 * (kc + kc.T)
    tr = float(np.trace(kc))
    scale = 1.0 / tr if tr > 0 else 1.0
    return kc * scale, col, tot, scale


def _range_basis(kc: np.ndarray):
    s, u = np.linalg.eigh(kc)
    keep = s > 1e-10 * max(float(s.max()), 1e-300)
    return s[keep], u[:, keep]


def kcca_fit(view1, view2, gamma1=None, gamma2=None, kappa: float = 1e-3, components: int = 20) -> KccaModel:
    """Regularised kernel CCA.

    Maximises ``a' K1 K2 b`` subject to ``a' ((1-k) K1^2 + k K1) a = 1`` (and
    likewise for ``b``) on centred kernels scaled to unit trace, so every
    kernel eigenvalue is at most 1 and correlations stay within [0, 1].
    Solved in the eigenbasis of each kernel, which turns the generalised
    eigenproblem into an SVD.
    """
    x1 = np.asarray(view1, float)
    x2 = np.asarray(view2, float)
    if x1.ndim != 2 or x2.ndim != 2 or x1.shape[0] != x2.shape[0]:
        raise SizeError("KCCA views must be 2-D with equal row counts")
    n = x1.shape[0]
    if components > n:
        raise SizeError(f"KCCA: {components} components requested for {n} samples")
    if not kappa > 0:
        raise RegularizationError("KCCA constraint blocks are singular at kappa = 0; use kappa > 0")
    if kappa > 1:
        raise RegularizationError("kappa must lie in (0, 1]")
    if not (np.all(np.isfinite(x1)) and np.all(np.isfinite(x2))):
        raise ExtractionError("KCCA input contains non-finite values")
    g1 = median_gamma(x1) if gamma1 is None else float(gamma1)
    g2 = median_gamma(x2) if gamma2 is None else float(gamma2)

    k1, col1, tot1, sc1 = _centered_kernel(x1, g1)
    k2, col2, tot2, sc2 = _centered_kernel(x2, g2)
    s1, u1 = _range_basis(k1)
    s2, u2 = _range_basis(k2)
    n1 = np.sqrt((1 - kappa) * s1 ** 2 + kappa * s1)
    n2 = np.sqrt((1 - kappa) * s2 ** 2 + kappa * s2)
    m = (s1 / n1)[:, None] * (u1.T @ u2) * (s2 / n2)[None, :]
    p, rho, qt = np.linalg.svd(m, full_matrices=False)
    d = min(components, len(rho))
    a = u1 @ (p[:, :d] / n1[:, None])
    b = u2 @ (qt[:d].T / n2[:, None])

    # deterministic sign: first view's training projection has positive sum of cubes
    z1 = k1 @ a
    flip = np.sign(np.sum(z1 ** 3, axis=0))
    flip[flip == 0] = 1.0
    a, b, z1 = a * flip, b * flip, z1 * flip
    z2 = k2 @ b
    std1 = z1.std(axis=0)
    std2 = z2.std(axis=0)
    std1[std1 <= 0] = 1.0
    std2[std2 <= 0] = 1.0
    rho = np.clip(rho[:d], 0.0, 1.0)
    v1 = _View(x1, g1, col1, tot1, sc1, a, std1)
    v2 = _View(x2, g2, col2, tot2, sc2, b, std2)
    return KccaModel(v1, v2, float(kappa), rho)


def kcca_project(model: KccaModel, x1, x2):
    """Canonical projections ``(z1, z2)``; accepts single vectors or row batches."""
    single = np.asarray(x1).ndim == 1
    z1 = model.view1.project(x1)
    z2 = model.view2.project(x2)
    if single:
        return z1[0], z2[0]
    return z1, z2
