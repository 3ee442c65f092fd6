"""Independent reference implementations used as test oracles."""
import itertools

import numpy as np
from scipy import integrate, signal, stats


def eq1_oracle(c, t, w, T, n):
    """Literal windowed double sum; full windows use the 4 / w^2 factor."""
    h = w // 2
    prev = [i for i in range(1, h + 1) if t - i >= 0]
    nxt = [j for j in range(1, h + 1) if t + j <= n - 1]
    if not prev or not nxt:
        return "same", 0.0
    total = 0.0
    for i in prev:
        for j in nxt:
            total += c[t - i, t + j]
    if len(prev) == h and len(nxt) == h:
        s = total * (4.0 / (w * w))
    else:
        s = total * (1.0 / (len(prev) * len(nxt)))
    label = "inc" if s > T else ("dec" if s < -T else "same")
    return label, s


def lbp_oracle(img):
    """Per-pixel loop; bit k set when neighbour k (E, NE, N, NW, W, SW, S, SE) >= centre."""
    img = np.asarray(img, float)
    offs = [(0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1), (1, 0), (1, 1)]
    h, w = img.shape
    out = np.zeros((h - 2, w - 2), int)
    for y in range(1, h - 1):
        for x in range(1, w - 1):
            code = 0
            for k, (dy, dx) in enumerate(offs):
                if img[y + dy, x + dx] >= img[y, x]:
                    code |= 1 << k
            out[y - 1, x - 1] = code
    return out


def conv_magnitude_oracle(img, kernel):
    """Direct spatial convolution with symmetric boundary handling."""
    return np.abs(signal.convolve2d(np.asarray(img, float), kernel, mode="same", boundary="symm"))


def floyd_warshall(w):
    d = w.copy()
    n = len(d)
    for k in range(n):
        d = np.minimum(d, d[:, [k]] + d[[k], :])
    return d


def mds_oracle(dist, d):
    n = len(dist)
    j = np.eye(n) - 1.0 / n
    b = -0.5 * j @ (dist ** 2) @ j
    vals, vecs = np.linalg.eigh(b)
    idx = np.argsort(vals)[::-1][:d]
    return vecs[:, idx] * np.sqrt(np.maximum(vals[idx], 0))


def svr_dual_oracle(K, z, C, eps):
    """epsilon-SVR dual as a dense QP in (alpha, alpha*) solved by an interior-point method."""
    from cvxopt import matrix, solvers

    n = len(z)
    P = np.block([[K, -K], [-K, K]]) + 1e-12 * np.eye(2 * n)
    q = np.concatenate([eps - z, eps + z])
    G = np.vstack([-np.eye(2 * n), np.eye(2 * n)])
    h = np.concatenate([np.zeros(2 * n), np.full(2 * n, C)])
    A = np.concatenate([np.ones(n), -np.ones(n)])[None, :]
    solvers.options.update({"show_progress": False, "abstol": 1e-12, "reltol": 1e-12, "feastol": 1e-12,
                            "maxiters": 200})
    sol = solvers.qp(matrix(P), matrix(q), matrix(G), matrix(h), matrix(A), matrix(0.0))
    x = np.array(sol["x"]).ravel()
    theta = x[:n] - x[n:]
    return float(0.5 * theta @ K @ theta - z @ theta + eps * np.abs(x).sum()), theta


def auc_oracle(labels, scores):
    pos = [s for s, y in zip(scores, labels) if y]
    neg = [s for s, y in zip(scores, labels) if not y]
    tot = 0.0
    for a, b in itertools.product(pos, neg):
        tot += 1.0 if a > b else (0.5 if a == b else 0.0)
    return tot / (len(pos) * len(neg))


def t_pvalue_oracle(t, df):
    """Two-sided p by numerically integrating the Student t density."""
    tail, _ = integrate.quad(lambda x: stats.t.pdf(x, df), abs(t), np.inf, epsabs=1e-13, epsrel=1e-13)
    return 2 * tail
