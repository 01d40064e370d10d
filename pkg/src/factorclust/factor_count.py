"""Estimating the numbers of strong and weak factors from eigenvalue ratios.

For each lag k the descending eigenvalues lam[k, 1] >= ... >= lam[k, p] of
S(k) S(k)^T are pooled across lags with weights (1 - k/n) into sums
W_j = sum_k (1 - k/n) lam[k, j], and the ratio sequence is

    R_0 = 1,   R_j = W_j / W_{j+1},   j = 1..J0-1.

The indices of the two largest local maxima of the ratio sequence locate
the number of strong factors (smaller index) and the total number of
factors (larger index).  Denominators below a relative floor are treated
as zero: the first such position, if its numerator is still above the
floor, is an infinite spike and remains an admissible local maximum
(the panel is numerically rank-deficient there); positions where both
sides are below the floor are 0/0 noise and are excluded from the search.

A single-matrix baseline applies the same selection rule to the plain
eigenvalue ratios of the pooled matrix M; it is known to be unstable when
strong and weak factors coexist, and is provided for comparison.
"""

from __future__ import annotations

import dataclasses
import json
import warnings
from dataclasses import dataclass

import numpy as np

from .panel import PanelError, TimeSeriesPanel, lag_autocov_sequence, pooled_matrix_from_covs

__all__ = [
    "FactorCountError",
    "FactorCountReport",
    "cumulative_ratio_sequence",
    "select_factor_counts",
    "single_matrix_ratio_baseline",
    "default_j0",
]

# Relative floor under which a weighted eigenvalue sum counts as zero.
DENOMINATOR_GUARD = 1e-14


class FactorCountError(ValueError):
    """Ratio sequence unusable for selecting the factor numbers."""


@dataclass
class FactorCountReport:
    """Ratio sequence, truncation flags and (optionally) the selection.

    Attributes
    ----------
    ratios : ndarray, shape (J0 - 1,)
        R_1..R_{J0-1}; ``inf`` marks the single admissible spike caused by
        a zero denominator, ``nan`` marks excluded 0/0 positions.
    truncated : ndarray of bool
        True where the denominator fell below the zero guard.
    local_max_indices : list of int
        1-based positions s with R_s > max(R_{s-1}, R_{s+1}), using
        R_0 = 1 and a left-sided test at s = J0 - 1.
    selected : (int, int) or None
        (r0_hat, r0_hat + r_hat) once selection has run.
    per_lag_eigenvalues : ndarray
        Row k holds the descending eigenvalues of S(k) S(k)^T; for the
        single-matrix baseline a single row holds the eigenvalues of M.
    method : {"cumulative", "pooled"}
    tie_break_applied : bool
        True when the two largest maxima were separated only by the
        smaller-index rule.
    """

    ratios: np.ndarray
    truncated: np.ndarray
    local_max_indices: list[int]
    selected: tuple[int, int] | None
    J0: int
    k0: int
    n: int
    per_lag_eigenvalues: np.ndarray
    method: str = "cumulative"
    tie_break_applied: bool = False

    def with_selection(self) -> "FactorCountReport":
        """Copy of the report with the selection filled in."""
        r0, r = select_factor_counts(self)
        return dataclasses.replace(self, selected=(r0, r0 + r))

    def to_dict(self) -> dict:
        """JSON-ready representation (inf/nan ratios become strings)."""

        def _num(x: float):
            if np.isnan(x):
                return "nan"
            if np.isinf(x):
                return "inf"
            return float(x)

        return {
            "method": self.method,
            "J0": int(self.J0),
            "k0": int(self.k0),
            "n": int(self.n),
            "ratios": [_num(x) for x in self.ratios],
            "truncated": [bool(b) for b in self.truncated],
            "local_max_indices": [int(i) for i in self.local_max_indices],
            "selected": None if self.selected is None else
                {"r0": int(self.selected[0]), "r0_plus_r": int(self.selected[1])},
            "tie_break_applied": bool(self.tie_break_applied),
            "per_lag_eigenvalues": [[float(v) for v in row]
                                    for row in np.atleast_2d(self.per_lag_eigenvalues)],
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)


def default_j0(p: int) -> int:
    """Default truncation point: floor(p/4), at least 8, at most p."""
    return min(max(8, p // 4), p)


def _ratios_from_weighted_sums(weighted: np.ndarray, j0: int):
    """Build R_1..R_{J0-1} with truncation flags from the pooled sums."""
    guard = DENOMINATOR_GUARD * weighted[0]
    ratios = np.empty(j0 - 1)
    truncated = np.zeros(j0 - 1, dtype=bool)
    for j in range(1, j0):
        num, den = weighted[j - 1], weighted[j]
        if den < guard or den <= 0.0:
            truncated[j - 1] = True
            ratios[j - 1] = np.inf if num >= guard and num > 0.0 else np.nan
        else:
            ratios[j - 1] = num / den
    return ratios, truncated


def _local_maxima(ratios: np.ndarray, truncated: np.ndarray) -> list[int]:
    """1-based indices of admissible local maxima of the ratio sequence.

    R_0 = 1 on the left; the last position J0-1 only needs to beat its
    left neighbour.  Excluded (nan) entries cannot be maxima; the single
    inf spike always qualifies.
    """
    m = len(ratios)
    out: list[int] = []
    for j in range(1, m + 1):
        value = ratios[j - 1]
        if truncated[j - 1]:
            if np.isinf(value):
                out.append(j)
            continue
        left = 1.0 if j == 1 else ratios[j - 2]
        if not value > left:
            continue
        if j < m and not value > ratios[j]:
            continue
        out.append(j)
    return out


def cumulative_ratio_sequence(
    panel: TimeSeriesPanel, k0: int = 5, J0: int | None = None
) -> FactorCountReport:
    """Lag-pooled eigenvalue-ratio sequence of a panel (selection empty).

    Parameters
    ----------
    panel : TimeSeriesPanel
    k0 : int
        Largest lag pooled; small values (<= 5) work well since serial
        correlation concentrates at short lags.
    J0 : int, optional
        Ratio truncation point; defaults to max(8, p // 4) capped at p.

    Raises
    ------
    FactorCountError
        If J0 < 2 or the eigenvalue computation fails.
    """
    p, n = panel.p, panel.n
    if J0 is None:
        J0 = default_j0(p)
    if J0 < 2:
        raise FactorCountError(f"J0 must be at least 2, got {J0}")
    if J0 > p:
        raise FactorCountError(f"J0={J0} exceeds the number of series p={p}")
    covs = lag_autocov_sequence(panel, k0)
    eigs = np.empty((k0 + 1, p))
    try:
        for k, cov in enumerate(covs):
            # singular values of S(k), squared == eigenvalues of S(k) S(k)^T
            eigs[k] = np.linalg.svd(cov.matrix, compute_uv=False) ** 2
    except np.linalg.LinAlgError as exc:
        raise FactorCountError(f"eigen-solver failure at lag {k}: {exc}") from exc
    weights = 1.0 - np.arange(k0 + 1) / n
    weighted = weights @ eigs
    ratios, truncated = _ratios_from_weighted_sums(weighted, J0)
    return FactorCountReport(
        ratios=ratios,
        truncated=truncated,
        local_max_indices=_local_maxima(ratios, truncated),
        selected=None,
        J0=J0,
        k0=k0,
        n=n,
        per_lag_eigenvalues=eigs,
        method="cumulative",
    )


def single_matrix_ratio_baseline(
    panel: TimeSeriesPanel, k0: int = 5, J0: int | None = None
) -> FactorCountReport:
    """Baseline: plain eigenvalue ratios of the pooled matrix M.

    Same selection rule as the cumulative method but with
    R_j = lam_j(M) / lam_{j+1}(M).
    """
    p, n = panel.p, panel.n
    if J0 is None:
        J0 = default_j0(p)
    if J0 < 2:
        raise FactorCountError(f"J0 must be at least 2, got {J0}")
    if J0 > p:
        raise FactorCountError(f"J0={J0} exceeds the number of series p={p}")
    pooled = pooled_matrix_from_covs(lag_autocov_sequence(panel, k0))
    try:
        eigvals = np.linalg.eigvalsh(pooled.matrix)[::-1]
    except np.linalg.LinAlgError as exc:
        raise FactorCountError(f"eigen-solver failure on pooled matrix: {exc}") from exc
    eigvals = np.clip(eigvals, 0.0, None)
    ratios, truncated = _ratios_from_weighted_sums(eigvals, J0)
    return FactorCountReport(
        ratios=ratios,
        truncated=truncated,
        local_max_indices=_local_maxima(ratios, truncated),
        selected=None,
        J0=J0,
        k0=k0,
        n=n,
        per_lag_eigenvalues=eigvals[np.newaxis, :],
        method="pooled",
    )


def select_factor_counts(report: FactorCountReport) -> tuple[int, int]:
    """Pick (r0_hat, r_hat) from the two largest local maxima.

    Ties in ratio value are broken toward the smaller index (the
    stronger-factor reading); ``report.tie_break_applied`` is set when the
    rule actually decided the cut.

    Raises
    ------
    FactorCountError
        With fewer than two local maxima; raise J0 or supply the factor
        counts manually.
    """
    maxima = report.local_max_indices
    if len(maxima) < 2:
        raise FactorCountError(
            f"found {len(maxima)} local maxima in the ratio sequence; "
            "increase J0 or supply the factor counts manually"
        )
    # sort by (value desc, index asc); inf spikes rank first
    order = sorted(maxima, key=lambda j: (-report.ratios[j - 1], j))
    top_two = order[:2]
    if len(order) > 2 and report.ratios[order[1] - 1] == report.ratios[order[2] - 1]:
        # the value at the selection cut is ambiguous
        report.tie_break_applied = True
        warnings.warn(
            "equal ratio values at different indices; smaller index preferred",
            stacklevel=2,
        )
    tau1, tau2 = sorted(top_two)
    return tau1, tau2 - tau1
