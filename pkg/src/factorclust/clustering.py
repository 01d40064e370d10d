"""No-cluster detection, similarity matrix, K-means, and the full pipeline.

Series whose weak-loading row norm falls at or below a threshold omega are
set aside as belonging to no cluster.  The remaining rows F of the weak
loading matrix define a correlation-type similarity

    rho[l, m] = |f_l . f_m| / (||f_l|| ||f_m||),

and K-means with L2 distance on the rows of that similarity matrix
recovers the clusters.  An upper bound d_hat for the number of clusters is
the count of eigenvalues of |B B^T| (entry-wise absolute values) exceeding
1 - 1/log(n); the within-cluster sum of squares curve over d = 1..d_hat
feeds an elbow rule, which is advisory only and can be overridden.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .factor_count import (
    FactorCountReport,
    cumulative_ratio_sequence,
    select_factor_counts,
)
from .loadings import LoadingMatrix, estimate_strong_loadings, estimate_weak_loadings
from .panel import TimeSeriesPanel

__all__ = [
    "ClusteringError",
    "ClusteringResult",
    "KMeansResult",
    "omega_threshold",
    "detect_no_cluster",
    "cluster_upper_bound",
    "similarity_matrix",
    "kmeans",
    "wcss_curve",
    "elbow_select",
    "cluster_pipeline",
    "label_distribution",
]

DEFAULT_RESTARTS = 20
DEFAULT_MAX_ITER = 300
ELBOW_THRESHOLD = 0.10


class ClusteringError(ValueError):
    """Invalid clustering input or an empty retained set."""


def omega_threshold(variant, r_hat: int, p: int) -> float:
    """Row-norm threshold for the no-cluster test.

    Variants (r = r_hat):

    - ``"p1"``: sqrt(r / p) / ln p        (strictest, keeps more series)
    - ``"p2"``: sqrt(r / (p ln p))        (default elsewhere; works best)
    - ``"p3"``: sqrt(r / (p ln ln p))     (loosest, drops more series)

    A numeric value is validated and passed through unchanged.
    """
    if isinstance(variant, (int, float, np.integer, np.floating)) and not isinstance(
        variant, bool
    ):
        value = float(variant)
        if value <= 0:
            raise ClusteringError(f"explicit omega must be positive, got {value}")
        return value
    if r_hat < 1:
        raise ClusteringError(f"r_hat must be at least 1, got {r_hat}")
    if p < 3:
        raise ClusteringError(f"p must be at least 3, got {p}")
    log_p = math.log(p)
    if variant == "p1":
        return math.sqrt(r_hat / p) / log_p
    if variant == "p2":
        return math.sqrt(r_hat / (p * log_p))
    if variant == "p3":
        loglog = math.log(log_p)
        if loglog <= 0:  # unreachable for integer p >= 3; guards float misuse
            raise ClusteringError(f"omega variant p3 needs ln ln p > 0, got p={p}")
        return math.sqrt(r_hat / (p * loglog))
    raise ClusteringError(f"unknown omega variant {variant!r}")


def detect_no_cluster(weak, omega: float) -> np.ndarray:
    """Sorted 0-based indices of rows with norm <= omega.

    ``weak`` may be a LoadingMatrix or a plain (p, r) array.
    """
    if omega <= 0:
        raise ClusteringError(f"omega must be positive, got {omega}")
    b = np.asarray(getattr(weak, "matrix", weak), dtype=float)
    norms = np.linalg.norm(b, axis=1)
    return np.flatnonzero(norms <= omega)


def cluster_upper_bound(weak, n: int) -> int:
    """Count of eigenvalues of |B B^T| strictly above 1 - 1/log(n).

    ``weak`` may be a LoadingMatrix or a plain (p, r) array.
    """
    if n < 3:
        raise ClusteringError(f"n must be at least 3, got {n}")
    b = np.asarray(getattr(weak, "matrix", weak), dtype=float)
    s = np.abs(b @ b.T)
    s = (s + s.T) / 2.0
    eigvals = np.linalg.eigvalsh(s)
    return int(np.count_nonzero(eigvals > 1.0 - 1.0 / math.log(n)))


def similarity_matrix(weak_retained: np.ndarray) -> np.ndarray:
    """Absolute cosine similarity between rows of the retained loadings.

    Symmetric, unit diagonal, entries in [0, 1].

    Raises
    ------
    ClusteringError
        On a zero-norm row, which means the no-cluster detection step
        was skipped.
    """
    f = np.asarray(weak_retained, dtype=float)
    if f.ndim != 2:
        raise ClusteringError(f"retained loadings must be 2-d, got shape {f.shape}")
    norms = np.linalg.norm(f, axis=1)
    if np.any(norms == 0.0):
        bad = int(np.flatnonzero(norms == 0.0)[0])
        raise ClusteringError(
            f"zero-norm row {bad}: run the no-cluster detection step first"
        )
    sim = np.abs(f @ f.T) / np.outer(norms, norms)
    sim = (sim + sim.T) / 2.0
    np.clip(sim, 0.0, 1.0, out=sim)
    np.fill_diagonal(sim, 1.0)
    return sim


@dataclass
class KMeansResult:
    """One fitted K-means solution (best of all restarts)."""

    assignments: np.ndarray  # (m,) labels 0..d-1, no empty cluster
    centers: np.ndarray      # (d, q)
    wcss: float
    n_iter: int
    wcss_trace: list[float]  # per-iteration values of the winning restart


def _wcss(points: np.ndarray, centers: np.ndarray, labels: np.ndarray) -> float:
    return float(np.sum((points - centers[labels]) ** 2))


def _greedy_spread_init(points: np.ndarray, d: int, first: int) -> np.ndarray:
    """First center given, remaining centers maximize distance to the chosen set."""
    m = points.shape[0]
    centers = np.empty((d, points.shape[1]))
    centers[0] = points[first]
    dist = np.sum((points - centers[0]) ** 2, axis=1)
    for t in range(1, d):
        nxt = int(np.argmax(dist))
        centers[t] = points[nxt]
        dist = np.minimum(dist, np.sum((points - centers[t]) ** 2, axis=1))
    return centers


def _sampled_spread_init(
    points: np.ndarray, d: int, first: int, rng: np.random.Generator
) -> np.ndarray:
    """First center given, remaining centers sampled with probability
    proportional to the squared distance to the chosen set."""
    m = points.shape[0]
    centers = np.empty((d, points.shape[1]))
    centers[0] = points[first]
    dist = np.sum((points - centers[0]) ** 2, axis=1)
    for t in range(1, d):
        total = dist.sum()
        if total <= 0.0:
            nxt = int(rng.integers(m))
        else:
            nxt = int(rng.choice(m, p=dist / total))
        centers[t] = points[nxt]
        dist = np.minimum(dist, np.sum((points - centers[t]) ** 2, axis=1))
    return centers


# below this many d-point subsets, try them all instead of restarting
EXHAUSTIVE_INIT_LIMIT = 256


def _candidate_inits(
    points: np.ndarray, d: int, restarts: int, seed: int
) -> list[np.ndarray]:
    """Initial center sets for the restart loop.

    Tiny problems get every d-subset of the points (deterministic and, in
    practice, relentless about the global optimum).  Larger ones get one
    deterministic farthest-point spread plus seeded distance-weighted
    spreads, first centers cycling through a seeded permutation.
    """
    m = points.shape[0]
    if math.comb(m, d) <= max(restarts, EXHAUSTIVE_INIT_LIMIT):
        return [points[list(combo)] for combo in combinations(range(m), d)]
    root = np.random.SeedSequence(int(seed) % 2**63)
    children = root.spawn(restarts)
    rng = np.random.default_rng(children[0])
    order = rng.permutation(m)
    inits = [_greedy_spread_init(points, d, int(order[0]))]
    for i in range(1, restarts):
        child_rng = np.random.default_rng(children[i])
        inits.append(
            _sampled_spread_init(points, d, int(order[i % m]), child_rng)
        )
    return inits


def _lloyd(
    points: np.ndarray, centers: np.ndarray, max_iter: int
) -> tuple[np.ndarray, np.ndarray, float, int, list[float]]:
    """Lloyd iterations with empty-cluster repair; stops when labels settle."""
    m = points.shape[0]
    d = centers.shape[0]
    centers = centers.copy()
    labels = np.full(m, -1, dtype=int)
    trace: list[float] = []
    for it in range(max_iter):
        d2 = (
            np.sum(points**2, axis=1)[:, None]
            - 2.0 * points @ centers.T
            + np.sum(centers**2, axis=1)[None, :]
        )
        new_labels = np.argmin(d2, axis=1)
        # repair: reseed each empty cluster at the farthest point that is
        # not the sole member of its own cluster (m >= d guarantees one)
        while True:
            counts = np.bincount(new_labels, minlength=d)
            empties = np.flatnonzero(counts == 0)
            if empties.size == 0:
                break
            c = int(empties[0])
            gaps = np.sum((points - centers[new_labels]) ** 2, axis=1)
            gaps[counts[new_labels] <= 1] = -1.0
            far = int(np.argmax(gaps))
            centers[c] = points[far]
            new_labels[far] = c
        if np.array_equal(new_labels, labels):
            trace.append(_wcss(points, centers, labels))
            return labels, centers, trace[-1], it + 1, trace
        labels = new_labels
        for c in range(d):
            centers[c] = points[labels == c].mean(axis=0)
        trace.append(_wcss(points, centers, labels))
    return labels, centers, trace[-1], max_iter, trace


def kmeans(
    points: np.ndarray,
    d: int,
    restarts: int = DEFAULT_RESTARTS,
    max_iter: int = DEFAULT_MAX_ITER,
    seed: int = 0,
    warm_centers: np.ndarray | None = None,
) -> KMeansResult:
    """K-means with L2 distance, spread seeding, best of restarts.

    When the number of d-point subsets is small every subset serves as an
    initialization (deterministic); otherwise each restart draws spread-out
    centers from its own child generator, first centers cycling through a
    seeded permutation of the points.  Ties in the best WCSS go to the
    earliest candidate; ``warm_centers``, when given, is evaluated before
    all restarts.

    Raises
    ------
    ClusteringError
        If d is outside [1, m].
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2:
        raise ClusteringError(f"points must be 2-d, got shape {pts.shape}")
    m = pts.shape[0]
    if not 1 <= d <= m:
        raise ClusteringError(f"d={d} outside [1, {m}]")
    best: KMeansResult | None = None
    inits: list[np.ndarray] = []
    if warm_centers is not None:
        warm = np.asarray(warm_centers, dtype=float)
        if warm.shape != (d, pts.shape[1]):
            raise ClusteringError(
                f"warm_centers shape {warm.shape} does not match (d, q)=({d}, {pts.shape[1]})"
            )
        inits.append(warm)
    inits.extend(_candidate_inits(pts, d, restarts, seed))
    for init in inits:
        labels, centers, wcss, n_iter, trace = _lloyd(pts, init, max_iter)
        if best is None or wcss < best.wcss:
            best = KMeansResult(
                assignments=labels,
                centers=centers,
                wcss=wcss,
                n_iter=n_iter,
                wcss_trace=trace,
            )
    assert best is not None
    return best


def _split_farthest(points: np.ndarray, result: KMeansResult) -> np.ndarray:
    """Centers of a fitted solution plus the point farthest from its center."""
    gaps = np.sum((points - result.centers[result.assignments]) ** 2, axis=1)
    far = points[int(np.argmax(gaps))]
    return np.vstack([result.centers, far])


def wcss_curve(
    points: np.ndarray,
    d_max: int,
    restarts: int = DEFAULT_RESTARTS,
    max_iter: int = DEFAULT_MAX_ITER,
    seed: int = 0,
) -> dict[int, KMeansResult]:
    """Best K-means fit for every d = 1..d_max.

    Each d also receives a warm start splitting the previous best solution,
    which keeps the reported curve non-increasing in d.
    """
    curve: dict[int, KMeansResult] = {}
    prev: KMeansResult | None = None
    for d in range(1, d_max + 1):
        warm = _split_farthest(points, prev) if prev is not None else None
        curve[d] = kmeans(
            points, d, restarts=restarts, max_iter=max_iter, seed=seed + d,
            warm_centers=warm,
        )
        prev = curve[d]
    return curve


def elbow_select(
    wcss_by_d: dict[int, float], d_max: int, theta: float = ELBOW_THRESHOLD
) -> int:
    """Smallest d whose relative WCSS drop to d+1 falls below theta.

    Returns d_max when the curve never stabilizes.  Advisory only; report
    the whole curve alongside.
    """
    for d in range(1, d_max):
        w = wcss_by_d[d]
        w_next = wcss_by_d[d + 1]
        drop = 0.0 if w <= 0.0 else (w - w_next) / w
        if drop < theta:
            return d
    return d_max


def _canonical_labels(assignments: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Relabel clusters by a geometry-based order so label ids do not depend
    on the input row order: size desc, then center norm desc, then the
    sorted member-norm profile."""
    d = int(assignments.max()) + 1
    keys = []
    for c in range(d):
        members = points[assignments == c]
        center = members.mean(axis=0)
        profile = tuple(np.sort(np.linalg.norm(members, axis=1))[::-1])
        keys.append((-members.shape[0], -float(np.linalg.norm(center)), profile, c))
    order = [k[-1] for k in sorted(keys)]
    relabel = np.empty(d, dtype=int)
    for new, old in enumerate(order):
        relabel[old] = new
    return relabel[assignments]


@dataclass
class ClusteringResult:
    """Output of the five-step pipeline over one panel.

    ``assignments`` has one 0-based cluster id per retained series, in the
    order of ``retained_indices`` (ascending).  ``wcss_by_d`` maps each
    explored d to its best within-cluster sum of squares.
    """

    no_cluster_indices: np.ndarray
    omega: float
    d_hat: int
    d_used: int
    assignments: np.ndarray
    similarity: np.ndarray
    wcss_by_d: dict[int, float]
    retained_indices: np.ndarray
    counts: tuple[int, int]  # (r0, r) actually used
    strong: LoadingMatrix
    weak: LoadingMatrix
    factor_report: FactorCountReport | None
    provenance: dict = field(default_factory=dict)
    series_ids: tuple[str, ...] | None = None
    labels: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        sim = self.similarity
        if np.abs(sim - sim.T).max() > 1e-12:
            raise ClusteringError("similarity matrix is not symmetric")
        if np.abs(np.diag(sim) - 1.0).max() > 1e-12:
            raise ClusteringError("similarity diagonal deviates from 1")
        if len(self.assignments) != len(self.retained_indices):
            raise ClusteringError("one assignment per retained series required")
        present = np.unique(self.assignments)
        if not np.array_equal(present, np.arange(self.d_used)):
            raise ClusteringError(
                f"assignments must cover 0..{self.d_used - 1} with no empty cluster"
            )

    def to_dict(self) -> dict:
        ids = self.series_ids

        def _name(i: int) -> str | int:
            return ids[i] if ids is not None else int(i)

        out = {
            "provenance": self.provenance,
            "counts": {"r0": int(self.counts[0]), "r": int(self.counts[1])},
            "omega": float(self.omega),
            "no_cluster": [_name(i) for i in self.no_cluster_indices],
            "d_hat": int(self.d_hat),
            "d_used": int(self.d_used),
            "wcss_by_d": {str(d): float(w) for d, w in sorted(self.wcss_by_d.items())},
            "retained": [_name(i) for i in self.retained_indices],
            "assignments": [int(a) for a in self.assignments],
        }
        if self.labels is not None:
            categories, dist = label_distribution(
                self.assignments,
                [self.labels[i] for i in self.retained_indices],
                self.d_used,
            )
            out["label_distribution"] = {
                "categories": categories,
                "rows": [[float(v) for v in row] for row in dist],
            }
        return out

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)


def label_distribution(
    assignments: np.ndarray, labels: list[str], d_used: int
) -> tuple[list[str], np.ndarray]:
    """Category-by-cluster share matrix; every row sums to one.

    Entry (i, j) is the fraction of retained series in category i assigned
    to cluster j.  Categories are sorted; only categories present among
    the retained series appear.
    """
    if len(labels) != len(assignments):
        raise ClusteringError("one label per retained series required")
    categories = sorted(set(labels))
    dist = np.zeros((len(categories), d_used))
    for cat, cluster in zip(labels, assignments):
        dist[categories.index(cat), cluster] += 1.0
    dist /= dist.sum(axis=1, keepdims=True)
    return categories, dist


def cluster_pipeline(
    panel: TimeSeriesPanel,
    k0: int = 5,
    J0: int | None = None,
    counts: tuple[int, int] | None = None,
    omega="p2",
    d: int | None = None,
    seed: int = 0,
    restarts: int = DEFAULT_RESTARTS,
    max_iter: int = DEFAULT_MAX_ITER,
) -> ClusteringResult:
    """Run the whole pipeline: counts, loadings, detection, K-means.

    Parameters
    ----------
    counts : (r0, r), optional
        Overrides the ratio-based estimation of the factor numbers
        (r0 may be 0 to skip the strong stage).
    omega : variant name or positive float
        Threshold rule for the no-cluster test.
    d : int, optional
        Overrides the elbow choice; may exceed d_hat, which is only an
        asymptotic upper bound.
    """
    p, n = panel.p, panel.n
    factor_report: FactorCountReport | None = None
    counts_source = "override"
    if counts is None:
        factor_report = cumulative_ratio_sequence(panel, k0=k0, J0=J0)
        r0, r = select_factor_counts(factor_report)
        factor_report.selected = (r0, r0 + r)
        counts_source = "estimated"
    else:
        r0, r = counts
        if r0 < 0 or r < 1:
            raise ClusteringError(f"invalid counts override (r0={r0}, r={r})")
    if r0 == 0:
        strong = LoadingMatrix(matrix=np.zeros((p, 0)), kind="strong")
    else:
        strong = estimate_strong_loadings(panel, k0=k0, r0=r0)
    weak = estimate_weak_loadings(panel, strong, k0=k0, r=r)

    omega_value = omega_threshold(omega, r_hat=r, p=p)
    no_cluster = detect_no_cluster(weak, omega_value)
    retained = np.setdiff1d(np.arange(p), no_cluster)
    if len(retained) < 2:
        raise ClusteringError(
            f"only {len(retained)} series retained after the no-cluster test; "
            "nothing to cluster"
        )
    d_hat = cluster_upper_bound(weak, n)

    f_retained = weak.matrix[retained]
    sim = similarity_matrix(f_retained)

    m = len(retained)
    if d is not None and not 1 <= d <= m:
        raise ClusteringError(f"d override {d} outside [1, {m}]")
    d_cap = min(max(d_hat, 1), m)
    d_top = d_cap if d is None else max(d, d_cap)
    curve = wcss_curve(
        sim, d_top, restarts=restarts, max_iter=max_iter, seed=seed
    )
    wcss_by_d = {dd: res.wcss for dd, res in curve.items()}
    if d is None:
        d_used = elbow_select({dd: wcss_by_d[dd] for dd in range(1, d_cap + 1)}, d_cap)
    else:
        d_used = d
    final = curve[d_used]
    assignments = _canonical_labels(final.assignments, sim)

    provenance = {
        "k0": int(k0),
        "J0": int(factor_report.J0) if factor_report is not None else J0,
        "omega_variant": omega if isinstance(omega, str) else "explicit",
        "omega_value": float(omega_value),
        "counts_source": counts_source,
        "r0": int(r0),
        "r": int(r),
        "d_source": "override" if d is not None else "elbow",
        "d_hat": int(d_hat),
        "seed": int(seed),
        "restarts": int(restarts),
        "max_iter": int(max_iter),
        "elbow_threshold": ELBOW_THRESHOLD,
    }
    return ClusteringResult(
        no_cluster_indices=no_cluster,
        omega=omega_value,
        d_hat=d_hat,
        d_used=d_used,
        assignments=assignments,
        similarity=sim,
        wcss_by_d=wcss_by_d,
        retained_indices=retained,
        counts=(r0, r),
        strong=strong,
        weak=weak,
        factor_report=factor_report,
        provenance=provenance,
        series_ids=panel.series_ids,
        labels=panel.labels,
    )
