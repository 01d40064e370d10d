"""Estimation of factor loading spaces from pooled autocovariance eigenvectors.

Only the spans are identified, so estimates are returned as matrices with
orthonormal columns and compared through their projection matrices.  The
strong loadings are the leading eigenvectors of the pooled matrix M; the
weak loadings repeat the eigenanalysis after projecting the panel onto the
orthocomplement of the strong span, which sharpens the weaker structure.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .panel import (
    TimeSeriesPanel,
    lag_autocov_sequence,
    pooled_matrix_from_covs,
)

__all__ = [
    "LoadingError",
    "LoadingMatrix",
    "estimate_strong_loadings",
    "estimate_weak_loadings",
    "projection",
    "oracle_weak_projection",
    "save_loadings_csv",
]


class LoadingError(ValueError):
    """Invalid loading matrix or eigen-estimation failure."""


@dataclass(frozen=True)
class LoadingMatrix:
    """p x r matrix with orthonormal columns; r = 0 is an explicit empty fit."""

    matrix: np.ndarray
    kind: str  # "strong" | "weak"

    def __post_init__(self) -> None:
        m = np.array(self.matrix, dtype=float)
        if m.ndim != 2:
            raise LoadingError(f"loading must be 2-d, got shape {m.shape}")
        if self.kind not in ("strong", "weak"):
            raise LoadingError(f"kind must be 'strong' or 'weak', got {self.kind!r}")
        r = m.shape[1]
        if r > 0:
            gram = m.T @ m
            if np.abs(gram - np.eye(r)).max() > 1e-8:
                raise LoadingError("loading columns are not orthonormal within 1e-8")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def p(self) -> int:
        return self.matrix.shape[0]

    @property
    def r(self) -> int:
        return self.matrix.shape[1]

    def row_norms(self) -> np.ndarray:
        return np.linalg.norm(self.matrix, axis=1)


def _orient_columns(vectors: np.ndarray) -> np.ndarray:
    """Fix eigenvector signs: largest-magnitude entry positive, ties by lowest index."""
    out = vectors.copy()
    for j in range(out.shape[1]):
        col = out[:, j]
        i = int(np.argmax(np.abs(col)))
        if col[i] < 0:
            out[:, j] = -col
    return out


def _top_eigenvectors(sym: np.ndarray, r: int, what: str) -> np.ndarray:
    """Leading r eigenvectors of a symmetric matrix, descending, sign-fixed."""
    try:
        eigvals, eigvecs = np.linalg.eigh(sym)
    except np.linalg.LinAlgError as exc:
        raise LoadingError(f"eigen-solver failure for {what}: {exc}") from exc
    eigvals = eigvals[::-1]
    eigvecs = eigvecs[:, ::-1]
    p = sym.shape[0]
    if r < p:
        gap = eigvals[r - 1] - eigvals[r]
        scale = abs(eigvals[0]) or 1.0
        if gap < 1e-12 * scale:
            warnings.warn(
                f"eigenvalue gap at the cut r={r} is below 1e-12 relative; "
                "the returned basis spans a poorly separated eigenspace",
                stacklevel=3,
            )
    return _orient_columns(eigvecs[:, :r])


def estimate_strong_loadings(
    panel: TimeSeriesPanel, k0: int = 5, r0: int = 1
) -> LoadingMatrix:
    """Leading r0 eigenvectors of the pooled matrix M of the panel.

    Raises
    ------
    LoadingError
        If r0 is outside [1, p-1] or the eigen-solver fails.
    """
    if not 1 <= r0 < panel.p:
        raise LoadingError(f"r0={r0} outside [1, {panel.p - 1}]")
    pooled = pooled_matrix_from_covs(lag_autocov_sequence(panel, k0))
    vecs = _top_eigenvectors(pooled.matrix, r0, "strong loadings")
    return LoadingMatrix(matrix=vecs, kind="strong")


def estimate_weak_loadings(
    panel: TimeSeriesPanel, strong: LoadingMatrix, k0: int = 5, r: int = 1
) -> LoadingMatrix:
    """Leading r eigenvectors of the pooled matrix of the projected panel.

    The panel is first projected onto the orthocomplement of the strong
    span (equivalently, each lag covariance S(k) becomes E S(k) E with
    E = I - Q Q^T), so the returned columns are orthogonal to every strong
    column.

    Raises
    ------
    LoadingError
        On a row-count mismatch or r outside [1, p - r0 - 1].
    """
    p = panel.p
    if strong.p != p:
        raise LoadingError(f"strong loading has {strong.p} rows, panel has {p}")
    if not 1 <= r < p - strong.r:
        raise LoadingError(f"r={r} outside [1, {p - strong.r - 1}]")
    covs = lag_autocov_sequence(panel, k0)
    q = strong.matrix
    if strong.r > 0:
        projected = []
        for cov in covs:
            s = cov.matrix
            s = s - q @ (q.T @ s)
            s = s - (s @ q) @ q.T
            projected.append(type(cov)(lag=cov.lag, matrix=s))
        covs = projected
    pooled = pooled_matrix_from_covs(covs)
    vecs = _top_eigenvectors(pooled.matrix, r, "weak loadings")
    if strong.r > 0:
        overlap = np.abs(q.T @ vecs).max()
        if overlap > 1e-8:
            # eigenvectors attached to (numerically) zero eigenvalues can
            # drift into the strong span; project back and re-orthonormalize
            warnings.warn(
                "weak eigenvectors overlap the strong span "
                f"(max |Q^T v| = {overlap:.2e}); re-orthogonalizing",
                stacklevel=2,
            )
            vecs = vecs - q @ (q.T @ vecs)
            vecs, _ = np.linalg.qr(vecs)
            vecs = _orient_columns(vecs)
    return LoadingMatrix(matrix=vecs, kind="weak")


def projection(loading: LoadingMatrix) -> np.ndarray:
    """Projection matrix Q Q^T onto the loading span (symmetric idempotent)."""
    q = loading.matrix
    if q.shape[1] == 0:
        return np.zeros((q.shape[0], q.shape[0]))
    return q @ q.T


def oracle_weak_projection(A_true: np.ndarray, B_padded: np.ndarray) -> np.ndarray:
    """Population target of the weak projection given the true loadings.

    Computes the projection onto the span of B* = (I - P_A) B_padded where
    P_A is the projection onto the span of A_true.  Neither input needs
    orthonormal columns; general Gram-inverse projectors are used.

    Raises
    ------
    LoadingError
        If A_true is rank deficient or B*^T B* has condition number
        above 1e12.
    """
    a = np.asarray(A_true, dtype=float)
    b = np.asarray(B_padded, dtype=float)
    if a.ndim != 2 or b.ndim != 2 or a.shape[0] != b.shape[0]:
        raise LoadingError(
            f"incompatible shapes {a.shape} and {b.shape} for the true loadings"
        )
    gram_a = a.T @ a
    if np.linalg.cond(gram_a) > 1e12:
        raise LoadingError("A_true is rank deficient (condition number > 1e12)")
    b_star = b - a @ np.linalg.solve(gram_a, a.T @ b)
    gram_b = b_star.T @ b_star
    if np.linalg.cond(gram_b) > 1e12:
        raise LoadingError(
            "B* = (I - P_A) B_padded is rank deficient (condition number > 1e12)"
        )
    proj = b_star @ np.linalg.solve(gram_b, b_star.T)
    return (proj + proj.T) / 2.0


def save_loadings_csv(loading: LoadingMatrix, path: str | Path) -> None:
    """Write the loading matrix as CSV, 17 significant digits per entry."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        for row in loading.matrix:
            writer.writerow([f"{v:.17g}" for v in row])
