"""Independent brute-force reference implementations used by the tests.

Everything here deliberately avoids the code paths of the package:
covariances by explicit double loops over matrix entries, eigenpairs by
cyclic Jacobi rotations, K-means by exhaustive enumeration of label
vectors, and label matching by trying every bijection.  Slow but
unambiguous.
"""

from __future__ import annotations

from itertools import permutations

import numpy as np


def lag_autocov_oracle(values: np.ndarray, k: int) -> np.ndarray:
    """Entry-wise S(k)[i, j] = (1/n) sum_t (y[i, t+k] - m[i]) (y[j, t] - m[j])."""
    p, n = values.shape
    mean = np.array([sum(values[i]) / n for i in range(p)])
    out = np.zeros((p, p))
    for i in range(p):
        for j in range(p):
            acc = 0.0
            for t in range(n - k):
                acc += (values[i, t + k] - mean[i]) * (values[j, t] - mean[j])
            out[i, j] = acc / n
    return out


def pooled_oracle(values: np.ndarray, k0: int) -> np.ndarray:
    """Sum of S(k) S(k)^T with each S(k) built by the loop oracle."""
    p = values.shape[0]
    total = np.zeros((p, p))
    for k in range(k0 + 1):
        s = lag_autocov_oracle(values, k)
        total += s @ s.T
    return (total + total.T) / 2.0


def residualize_oracle(values: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Column-by-column subtraction of the projection onto span(q)."""
    out = np.empty_like(values)
    for t in range(values.shape[1]):
        col = values[:, t]
        out[:, t] = col - q @ (q.T @ col)
    return out


def jacobi_eigh(sym: np.ndarray, tol: float = 1e-13, max_sweeps: int = 100):
    """Cyclic Jacobi eigendecomposition of a symmetric matrix.

    Returns eigenvalues (descending) and the matching eigenvector columns.
    """
    a = np.array(sym, dtype=float)
    n = a.shape[0]
    v = np.eye(n)
    scale = max(np.abs(a).max(), 1e-300)
    for _ in range(max_sweeps):
        off = 0.0
        for i in range(n - 1):
            for j in range(i + 1, n):
                off = max(off, abs(a[i, j]))
        if off <= tol * scale:
            break
        for i in range(n - 1):
            for j in range(i + 1, n):
                if abs(a[i, j]) <= 1e-300:
                    continue
                theta = (a[j, j] - a[i, i]) / (2.0 * a[i, j])
                t = np.sign(theta) / (abs(theta) + np.sqrt(theta**2 + 1.0))
                if theta == 0.0:
                    t = 1.0
                c = 1.0 / np.sqrt(t**2 + 1.0)
                s = t * c
                rot = np.eye(n)
                rot[i, i] = rot[j, j] = c
                rot[i, j] = s
                rot[j, i] = -s
                a = rot.T @ a @ rot
                v = v @ rot
    order = np.argsort(np.diag(a))[::-1]
    return np.diag(a)[order], v[:, order]


def similarity_oracle(rows: np.ndarray) -> np.ndarray:
    """Double-loop absolute cosine similarity."""
    m = rows.shape[0]
    out = np.empty((m, m))
    for i in range(m):
        for j in range(m):
            num = abs(float(np.dot(rows[i], rows[j])))
            den = float(np.sqrt(np.dot(rows[i], rows[i]) * np.dot(rows[j], rows[j])))
            out[i, j] = num / den
    return out


def frobenius_oracle(diff: np.ndarray) -> float:
    """Entry-wise sum of squares, then square root."""
    acc = 0.0
    for row in diff:
        for x in row:
            acc += float(x) * float(x)
    return float(np.sqrt(acc))


def kmeans_oracle(points: np.ndarray, d: int) -> tuple[float, np.ndarray]:
    """Globally optimal WCSS over every assignment into at most d groups.

    Enumerates all d**m label vectors (vectorized); empty groups simply
    contribute nothing, so the optimum over "at most d" equals the
    optimum over exactly d nonempty groups whenever splitting helps.
    """
    m, q = points.shape
    n_combos = d**m
    codes = (np.arange(n_combos)[:, None] // d ** np.arange(m)[None, :]) % d
    onehot = codes[:, :, None] == np.arange(d)[None, None, :]
    counts = onehot.sum(axis=1).astype(float)          # (N, d)
    sums = np.einsum("nmd,mq->ndq", onehot, points)     # (N, d, q)
    total = float(np.sum(points**2))
    with np.errstate(divide="ignore", invalid="ignore"):
        explained = np.where(
            counts > 0, np.sum(sums**2, axis=2) / counts, 0.0
        ).sum(axis=1)
    wcss = total - explained
    best = int(np.argmin(wcss))
    return float(wcss[best]), codes[best]


def misclassification_oracle(assignments, truth) -> int:
    """Minimum disagreement count over every label bijection, elementwise."""
    a = list(assignments)
    t = list(truth)
    labels_a = sorted(set(a))
    labels_t = sorted(set(t))
    big = labels_a if len(labels_a) >= len(labels_t) else labels_t
    small = labels_t if big is labels_a else labels_a
    best = len(a)
    for perm in permutations(big, len(small)):
        mapping = dict(zip(small, perm))
        if big is labels_a:
            # map truth labels into assignment labels
            mistakes = sum(1 for x, y in zip(a, t) if x != mapping[y])
        else:
            mistakes = sum(1 for x, y in zip(a, t) if mapping[x] != y)
        best = min(best, mistakes)
    return best


def partition_sets(labels) -> set[frozenset]:
    """Partition of indices induced by a label vector (for label-free compares)."""
    groups: dict = {}
    for idx, lab in enumerate(labels):
        groups.setdefault(lab, set()).add(idx)
    return {frozenset(g) for g in groups.values()}
