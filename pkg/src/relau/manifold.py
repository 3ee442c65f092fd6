"""Isomap: k-NN graph geodesics + classical MDS, with a Nystrom-style
out-of-sample extension so test pairs can be embedded after fitting."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components, shortest_path

from .errors import ConnectivityError, ExtractionError, SizeError

# csgraph treats stored zeros as missing edges; duplicates get this weight instead
_ZERO_EDGE = 1e-300


def pairwise_distances(a: np.ndarray, b: np.ndarray, center=None) -> np.ndarray:
    """Euclidean distances between rows of ``a`` and ``b``.

    Uses the Gram expansion for speed and recomputes near-coincident pairs
    directly so that identical rows come out at exactly zero.
    """
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    if center is not None:
        a = a - center
        b = b - center
    na = np.einsum("ij,ij->i", a, a)
    nb = np.einsum("ij,ij->i", b, b)
    d2 = na[:, None] + nb[None, :] - 2.0 * (a @ b.T)
    np.maximum(d2, 0.0, out=d2)
    scale = na[:, None] + nb[None, :]
    close = np.argwhere(d2 <= 1e-8 * scale)
    for i, j in close:
        diff = a[i] - b[j]
        d2[i, j] = diff @ diff
    return np.sqrt(d2)


def _knn_graph(dist: np.ndarray, k: int) -> csr_matrix:
    n = dist.shape[0]
    order = np.argsort(dist + np.diag(np.full(n, np.inf)), axis=1, kind="stable")[:, :k]
    rows = np.repeat(np.arange(n), k)
    cols = order.ravel()
    w = dist[rows, cols]
    w = np.where(w > 0, w, _ZERO_EDGE)
    g = csr_matrix((w, (rows, cols)), shape=(n, n))
    return g.maximum(g.T)


def _top_eigen(b: np.ndarray, d: int):
    n = b.shape[0]
    vals, vecs = linalg.eigh(b, subset_by_index=[n - d, n - 1])
    order = np.lexsort((np.arange(d), -vals))
    vals, vecs = vals[order], vecs[:, order]
    # fix the sign so the largest-magnitude entry of every vector is positive
    pivots = np.argmax(np.abs(vecs), axis=0)
    signs = np.sign(vecs[pivots, np.arange(d)])
    signs[signs == 0] = 1.0
    return vals, vecs * signs


def double_center(sq: np.ndarray) -> np.ndarray:
    """``-1/2 J sq J`` with J the centring matrix."""
    row = sq.mean(axis=1, keepdims=True)
    col = sq.mean(axis=0, keepdims=True)
    return -0.5 * (sq - row - col + sq.mean())


def classical_mds(dist: np.ndarray, d: int):
    """Top-``d`` classical MDS of a distance matrix; returns (embedding, eigenvalues)."""
    vals, vecs = _top_eigen(double_center(np.asarray(dist, float) ** 2), d)
    vals = np.maximum(vals, 0.0)
    return vecs * np.sqrt(vals), vals


@dataclass(frozen=True, eq=False)
class IsomapModel:
    points: np.ndarray        # (n, D) training vectors
    center: np.ndarray        # (D,) training mean, used for stable distances
    k: int                    # neighbourhood size actually used
    geodesic: np.ndarray      # (n, n)
    embedding: np.ndarray     # (n, d)
    eigenvalues: np.ndarray   # (d,) clamped, descending
    eigenvectors: np.ndarray  # (n, d)
    sq_col_mean: np.ndarray   # (n,) column means of squared geodesics

    @property
    def d(self) -> int:
        return self.embedding.shape[1]

    @property
    def n_train(self) -> int:
        return self.points.shape[0]

    def transform(self, points) -> np.ndarray:
        return isomap_transform(self, points)


def isomap_fit(points, d: int = 40, k: int = 8) -> IsomapModel:
    """Fit Isomap on the rows of ``points``.

    If the symmetric k-NN graph is disconnected, k doubles until it is
    connected; reaching ``n - 1`` without connectivity is an error.
    """
    x = np.asarray(points, dtype=float)
    if x.ndim != 2:
        raise SizeError("Isomap input must be a 2-D array of row vectors")
    n = x.shape[0]
    if n <= d:
        raise SizeError(f"Isomap needs more than d={d} training points, got {n}")
    if not np.all(np.isfinite(x)):
        raise ExtractionError("Isomap input contains non-finite values")
    center = x.mean(axis=0)
    dist = pairwise_distances(x, x, center)
    np.fill_diagonal(dist, 0.0)
    dist = 0.5 * (dist + dist.T)

    k_used = min(max(1, k), n - 1)
    while True:
        graph = _knn_graph(dist, k_used)
        n_comp, _ = connected_components(graph, directed=False)
        if n_comp == 1:
            break
        if k_used >= n - 1:
            raise ConnectivityError(f"k-NN graph has {n_comp} components even with k={k_used}")
        k_used = min(2 * k_used, n - 1)

    geo = shortest_path(graph, method="D", directed=False)
    geo[geo < 1e-200] = 0.0  # undo the stand-in weight for duplicates
    np.fill_diagonal(geo, 0.0)
    sq = geo ** 2
    vals, vecs = _top_eigen(double_center(sq), d)
    vals = np.maximum(vals, 0.0)
    emb = vecs * np.sqrt(vals)
    return IsomapModel(x, center, k_used, geo, emb, vals, vecs, sq.mean(axis=0))


def geodesic_to_training(model: IsomapModel, points) -> np.ndarray:
    """Estimated geodesic distances from new points to every training point."""
    p = np.atleast_2d(np.asarray(points, dtype=float))
    if p.shape[1] != model.points.shape[1]:
        raise ExtractionError(
            f"Isomap input has length {p.shape[1]}, model was fitted on {model.points.shape[1]}")
    dist = pairwise_distances(p, model.points, model.center)
    k = min(model.k, model.n_train)
    nn = np.argsort(dist, axis=1, kind="stable")[:, :k]
    out = np.empty((p.shape[0], model.n_train))
    for r in range(p.shape[0]):
        out[r] = np.min(dist[r, nn[r]][:, None] + model.geodesic[nn[r]], axis=0)
    return out


def isomap_transform(model: IsomapModel, points) -> np.ndarray:
    """Embed new points; a single vector returns a ``(d,)`` array."""
    single = np.asarray(points).ndim == 1
    geo = geodesic_to_training(model, points)
    vals = model.eigenvalues
    inv = np.zeros_like(vals)
    pos = vals > 0
    inv[pos] = 1.0 / np.sqrt(vals[pos])
    y = -0.5 * ((geo ** 2 - model.sq_col_mean) @ model.eigenvectors) * inv
    return y[0] if single else y
