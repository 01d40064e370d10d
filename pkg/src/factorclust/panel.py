"""Panel data model, CSV ingestion, lagged autocovariances and projection.

A panel holds ``p`` observed series over ``n`` equally spaced time points.
The sample lag-k autocovariance is

    S(k) = (1/n) * sum_{t=1..n-k} (y_{t+k} - ybar)(y_t - ybar)^T,

with the full-sample mean ``ybar`` and divisor ``n`` for every lag (no
small-sample correction).  Pooling the lags gives

    M = sum_{k=0..k0} S(k) S(k)^T,

a symmetric positive semidefinite matrix whose leading eigenvectors carry
the factor loading spaces.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import IO, Iterable

import numpy as np

__all__ = [
    "PanelError",
    "TimeSeriesPanel",
    "LagCovariance",
    "PooledMatrix",
    "load_panel",
    "load_labels",
    "lag_autocov",
    "pooled_matrix",
    "residualize",
]


class PanelError(ValueError):
    """Malformed panel input or an operation called outside its domain."""


@dataclass(frozen=True)
class TimeSeriesPanel:
    """Immutable p x n panel of real observations.

    Parameters
    ----------
    values : ndarray, shape (p, n)
        One row per series, one column per time point.
    series_ids : tuple of str, optional
        Unique identifier per series.
    labels : tuple of str, optional
        Category label per series (e.g. industry sector).
    """

    values: np.ndarray
    series_ids: tuple[str, ...] | None = None
    labels: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        # own copy: the panel is immutable and must not freeze caller arrays
        values = np.array(self.values, dtype=float)
        if values.ndim != 2:
            raise PanelError(f"panel values must be 2-d, got shape {values.shape}")
        p, n = values.shape
        if p < 2:
            raise PanelError(f"panel needs at least 2 series, got {p}")
        if n < 2:
            raise PanelError(f"panel needs at least 2 time points, got {n}")
        if not np.isfinite(values).all():
            i, t = np.argwhere(~np.isfinite(values))[0]
            raise PanelError(f"non-finite value at series {i}, time {t}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        if self.series_ids is not None:
            ids = tuple(str(s) for s in self.series_ids)
            if len(ids) != p:
                raise PanelError(f"expected {p} series ids, got {len(ids)}")
            if len(set(ids)) != p:
                raise PanelError("series ids must be unique")
            object.__setattr__(self, "series_ids", ids)
        if self.labels is not None:
            labs = tuple(str(s) for s in self.labels)
            if len(labs) != p:
                raise PanelError(f"expected {p} labels, got {len(labs)}")
            object.__setattr__(self, "labels", labs)

    @property
    def p(self) -> int:
        return self.values.shape[0]

    @property
    def n(self) -> int:
        return self.values.shape[1]

    def with_values(self, values: np.ndarray) -> "TimeSeriesPanel":
        """Same ids/labels, new data matrix of identical shape."""
        return replace(self, values=values)


@dataclass(frozen=True)
class LagCovariance:
    """Sample autocovariance matrix S(k) for one lag."""

    lag: int
    matrix: np.ndarray

    def __post_init__(self) -> None:
        if self.lag < 0:
            raise PanelError(f"lag must be nonnegative, got {self.lag}")
        m = np.array(self.matrix, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise PanelError(f"covariance must be square, got shape {m.shape}")
        if not np.isfinite(m).all():
            raise PanelError("covariance has non-finite entries")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)


@dataclass(frozen=True)
class PooledMatrix:
    """Symmetric PSD pool M = sum_k S(k) S(k)^T over lags 0..k0."""

    k0: int
    matrix: np.ndarray

    def __post_init__(self) -> None:
        if self.k0 < 0:
            raise PanelError(f"k0 must be nonnegative, got {self.k0}")
        m = np.array(self.matrix, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise PanelError(f"pooled matrix must be square, got shape {m.shape}")
        scale = np.abs(m).max() or 1.0
        if np.abs(m - m.T).max() > 1e-10 * scale:
            raise PanelError("pooled matrix is not symmetric within tolerance")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)


def _open_text(source: str | Path | IO[str] | IO[bytes]) -> IO[str]:
    if isinstance(source, (str, Path)):
        return open(source, "r", newline="")
    if isinstance(source, io.TextIOBase):
        return source
    if hasattr(source, "read"):
        data = source.read()
        if isinstance(data, bytes):
            data = data.decode("utf-8")
        return io.StringIO(data)
    raise PanelError(f"unsupported CSV source type {type(source)!r}")


def _parse_cell(cell: str, row: int, col: int, col_name: str | None = None) -> float:
    where = f"row {row}, column {col}" + (f" ({col_name})" if col_name else "")
    try:
        value = float(cell)
    except ValueError:
        raise PanelError(f"non-numeric cell {cell!r} at {where}") from None
    if not math.isfinite(value):
        raise PanelError(f"non-finite cell {cell!r} at {where}")
    return value


def load_panel(
    source: str | Path | IO[str] | IO[bytes],
    orientation: str = "rows-as-time",
    labels: dict[str, str] | None = None,
) -> TimeSeriesPanel:
    """Read a panel from CSV.

    Two layouts are supported.  With ``orientation="rows-as-time"`` (the
    default, matching common panel exports) the first row is a header of
    series identifiers and every subsequent row holds one time point.
    With ``orientation="rows-as-series"`` there is no header; each row is
    ``series_id, v_1, ..., v_n``.

    Parameters
    ----------
    source : path or file-like
        CSV input; bytes are decoded as UTF-8.
    orientation : {"rows-as-time", "rows-as-series"}
    labels : dict, optional
        Mapping series_id -> category; attached where ids match.

    Raises
    ------
    PanelError
        On ragged rows, non-numeric cells (reported with row/column
        location), or fewer than 2 series / 2 time points.
    """
    if orientation not in ("rows-as-time", "rows-as-series"):
        raise PanelError(f"unknown orientation {orientation!r}")
    with _open_text(source) as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if not rows:
        raise PanelError("empty CSV input")

    if orientation == "rows-as-time":
        header = [c.strip() for c in rows[0]]
        p = len(header)
        data_rows = rows[1:]
        if len(data_rows) < 2:
            raise PanelError(f"panel needs at least 2 time points, got {len(data_rows)}")
        block = np.empty((len(data_rows), p))
        for i, row in enumerate(data_rows):
            if len(row) != p:
                raise PanelError(
                    f"ragged row {i + 2}: expected {p} cells, got {len(row)}"
                )
            for j, cell in enumerate(row):
                block[i, j] = _parse_cell(cell.strip(), i + 2, j + 1, header[j])
        values = block.T
        ids = tuple(header)
    else:
        ids_list: list[str] = []
        width = len(rows[0])
        if width < 3:
            raise PanelError(f"panel needs at least 2 time points, got {width - 1}")
        block = np.empty((len(rows), width - 1))
        for i, row in enumerate(rows):
            if len(row) != width:
                raise PanelError(
                    f"ragged row {i + 1}: expected {width} cells, got {len(row)}"
                )
            ids_list.append(row[0].strip())
            for j, cell in enumerate(row[1:]):
                block[i, j] = _parse_cell(cell.strip(), i + 1, j + 2, ids_list[-1])
        values = block
        ids = tuple(ids_list)

    if values.shape[0] < 2:
        raise PanelError(f"panel needs at least 2 series, got {values.shape[0]}")
    label_tuple = None
    if labels is not None:
        label_tuple = tuple(labels.get(s, "") for s in ids)
    return TimeSeriesPanel(values=values, series_ids=ids, labels=label_tuple)


def load_labels(source: str | Path | IO[str] | IO[bytes]) -> dict[str, str]:
    """Read a two-column sidecar CSV mapping series_id -> category.

    A first row literally starting with ``series_id`` is treated as a
    header and skipped.
    """
    with _open_text(source) as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    mapping: dict[str, str] = {}
    for i, row in enumerate(rows):
        if len(row) != 2:
            raise PanelError(f"label row {i + 1}: expected 2 cells, got {len(row)}")
        key, value = row[0].strip(), row[1].strip()
        if i == 0 and key == "series_id":
            continue
        mapping[key] = value
    return mapping


def lag_autocov(panel: TimeSeriesPanel, k: int) -> LagCovariance:
    """Sample lag-k autocovariance with full-sample centering, divisor n.

    Raises
    ------
    PanelError
        If ``k`` is negative or ``k >= n``.
    """
    n = panel.n
    if k < 0 or k >= n:
        raise PanelError(f"lag k={k} outside [0, {n - 1}]")
    centered = panel.values - panel.values.mean(axis=1, keepdims=True)
    lead = centered[:, k:]
    trail = centered[:, : n - k]
    return LagCovariance(lag=k, matrix=(lead @ trail.T) / n)


def lag_autocov_sequence(panel: TimeSeriesPanel, k0: int) -> list[LagCovariance]:
    """All S(k) for k = 0..k0, sharing one centering pass."""
    n = panel.n
    if k0 < 0 or k0 >= n:
        raise PanelError(f"k0={k0} outside [0, {n - 1}]")
    centered = panel.values - panel.values.mean(axis=1, keepdims=True)
    out = []
    for k in range(k0 + 1):
        out.append(
            LagCovariance(lag=k, matrix=(centered[:, k:] @ centered[:, : n - k].T) / n)
        )
    return out


def pooled_matrix_from_covs(covs: Iterable[LagCovariance]) -> PooledMatrix:
    """Accumulate S(k) S(k)^T and symmetrize the sum."""
    acc: np.ndarray | None = None
    k_max = -1
    for cov in covs:
        term = cov.matrix @ cov.matrix.T
        acc = term if acc is None else acc + term
        k_max = max(k_max, cov.lag)
    if acc is None:
        raise PanelError("no lag covariances supplied")
    return PooledMatrix(k0=k_max, matrix=(acc + acc.T) / 2.0)


def pooled_matrix(panel: TimeSeriesPanel, k0: int) -> PooledMatrix:
    """M = sum_{k=0..k0} S(k) S(k)^T, symmetrized after accumulation."""
    return pooled_matrix_from_covs(lag_autocov_sequence(panel, k0))


def residualize(panel: TimeSeriesPanel, loading) -> TimeSeriesPanel:
    """Project every time point onto the orthocomplement of the loading span.

    Each column y_t becomes (I - Q Q^T) y_t where Q is the loading matrix.
    A zero-column loading leaves the panel unchanged.

    Raises
    ------
    PanelError
        If the loading row count differs from p or the columns are not
        orthonormal (Gram deviates from the identity by more than 1e-8).
    """
    q = np.asarray(getattr(loading, "matrix", loading), dtype=float)
    if q.ndim != 2:
        raise PanelError(f"loading must be 2-d, got shape {q.shape}")
    if q.shape[0] != panel.p:
        raise PanelError(
            f"loading has {q.shape[0]} rows, panel has {panel.p} series"
        )
    r = q.shape[1]
    if r == 0:
        return panel.with_values(panel.values.copy())
    gram = q.T @ q
    if np.abs(gram - np.eye(r)).max() > 1e-8:
        raise PanelError("loading columns are not orthonormal within 1e-8")
    projected = panel.values - q @ (q.T @ panel.values)
    return panel.with_values(projected)
