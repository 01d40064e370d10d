import math

import numpy as np
import pytest

from factorclust import (
    ClusteringError,
    LoadingMatrix,
    ScenarioSpec,
    TimeSeriesPanel,
    cluster_pipeline,
    cluster_upper_bound,
    detect_no_cluster,
    elbow_select,
    generate_scenario,
    kmeans,
    label_distribution,
    omega_threshold,
    similarity_matrix,
    wcss_curve,
)

from oracles import jacobi_eigh, kmeans_oracle, partition_sets, similarity_oracle


class TestOmegaThreshold:
    def test_p2_value_frozen(self):
        got = omega_threshold("p2", r_hat=10, p=150)
        want = math.sqrt(10.0 / (150.0 * math.log(150.0)))
        assert got == pytest.approx(want, rel=1e-12)
        assert got == pytest.approx(0.11534744360448713, rel=1e-12)
        assert abs(got - 0.1153) < 1e-3

    def test_variant_ordering(self):
        for r_hat, p in ((1, 20), (10, 150), (5, 1000)):
            w1 = omega_threshold("p1", r_hat, p)
            w2 = omega_threshold("p2", r_hat, p)
            w3 = omega_threshold("p3", r_hat, p)
            assert w1 < w2 < w3

    def test_explicit_value_passthrough(self):
        assert omega_threshold(0.05, r_hat=1, p=10) == 0.05

    def test_explicit_negative_rejected(self):
        with pytest.raises(ClusteringError, match="positive"):
            omega_threshold(-0.1, r_hat=1, p=10)

    def test_p_too_small_rejected(self):
        with pytest.raises(ClusteringError, match="at least 3"):
            omega_threshold("p3", r_hat=1, p=2)
        # ln ln p > 0 for every integer p >= 3, so p3 is defined there
        assert omega_threshold("p3", r_hat=1, p=3) > 0

    def test_unknown_variant(self):
        with pytest.raises(ClusteringError, match="unknown"):
            omega_threshold("p4", r_hat=1, p=10)


class TestDetectNoCluster:
    def test_zero_row_always_included(self):
        b = np.array([[0.0, 0.0], [0.3, 0.4]])
        assert 0 in detect_no_cluster(b, omega=1e-12)

    def test_crafted_row_norms(self):
        b = np.diag([0.01, 0.2, 0.05])
        got = detect_no_cluster(b, omega=0.06)
        np.testing.assert_array_equal(got, [0, 2])

    def test_boundary_is_inclusive(self):
        b = np.array([[0.06, 0.0], [0.7, 0.0]])
        assert 0 in detect_no_cluster(b, omega=0.06)

    def test_monotone_in_omega(self):
        rng = np.random.default_rng(0)
        for seed in range(20):
            b = np.random.default_rng(seed).uniform(-1, 1, (15, 3)) * 0.2
            lo, hi = sorted(rng.uniform(0.01, 0.4, 2))
            small = set(detect_no_cluster(b, lo).tolist())
            large = set(detect_no_cluster(b, hi).tolist())
            assert small <= large


class TestClusterUpperBound:
    def test_exact_block_diagonal(self):
        rng = np.random.default_rng(1)
        for d in (2, 3, 5):
            cols = []
            for j in range(d):
                v = np.zeros(4 * d)
                v[4 * j:4 * (j + 1)] = rng.uniform(0.2, 1.0, 4)
                cols.append(v / np.linalg.norm(v))
            b = np.column_stack(cols)
            for n in (3, 50, 10**6):
                assert cluster_upper_bound(b, n) == d

    def test_perturbed_two_block_matches_jacobi_oracle(self):
        rng = np.random.default_rng(2)
        b = np.zeros((8, 4))
        b[:4, :2], _ = np.linalg.qr(rng.standard_normal((4, 2)))
        b[4:, 2:], _ = np.linalg.qr(rng.standard_normal((4, 2)))
        b = b + 1e-3 * rng.standard_normal(b.shape)
        n = 400
        got = cluster_upper_bound(b, n)
        eigvals, _ = jacobi_eigh(np.abs(b @ b.T))
        want = int(np.sum(eigvals > 1 - 1 / math.log(n)))
        assert got == want == 2

    def test_small_n_rejected(self):
        with pytest.raises(ClusteringError, match="n"):
            cluster_upper_bound(np.eye(4), 2)


class TestSimilarityMatrix:
    def test_unit_diagonal_and_symmetry(self):
        rng = np.random.default_rng(3)
        f = rng.standard_normal((10, 4))
        sim = similarity_matrix(f)
        np.testing.assert_array_equal(np.diag(sim), 1.0)
        np.testing.assert_array_equal(sim, sim.T)
        assert sim.min() >= 0.0 and sim.max() <= 1.0

    def test_orthogonal_rows(self):
        sim = similarity_matrix(np.eye(3))
        np.testing.assert_allclose(sim, np.eye(3), atol=1e-14)

    def test_analytic_cosine(self):
        sim = similarity_matrix(np.array([[1.0, 0.0], [1.0, 1.0]]))
        assert sim[0, 1] == pytest.approx(1 / math.sqrt(2), rel=1e-12)

    def test_matches_double_loop_oracle(self):
        rng = np.random.default_rng(4)
        f = rng.standard_normal((7, 3))
        np.testing.assert_allclose(
            similarity_matrix(f), similarity_oracle(f), atol=1e-12
        )

    def test_row_scaling_and_sign_invariance(self):
        rng = np.random.default_rng(5)
        f = rng.standard_normal((6, 3))
        sim = similarity_matrix(f)
        scaled = f * rng.uniform(0.5, 3.0, (6, 1))
        scaled[2] *= -1.0
        flipped_col = scaled.copy()
        flipped_col[:, 1] *= -1.0
        np.testing.assert_allclose(similarity_matrix(scaled), sim, atol=1e-12)
        # sign flip of a whole column of F changes nothing either
        np.testing.assert_allclose(
            similarity_matrix(flipped_col[:, [0, 1, 2]]),
            similarity_matrix(scaled),
            atol=1e-12,
        )

    def test_zero_norm_row_rejected(self):
        f = np.array([[1.0, 0.0], [0.0, 0.0]])
        with pytest.raises(ClusteringError, match="zero-norm row 1"):
            similarity_matrix(f)


class TestKMeans:
    def test_every_point_its_own_center(self):
        rng = np.random.default_rng(6)
        pts = rng.standard_normal((5, 2))
        fit = kmeans(pts, d=5, restarts=5, seed=0)
        assert fit.wcss == pytest.approx(0.0, abs=1e-12)
        assert len(set(fit.assignments.tolist())) == 5

    def test_line_points_split(self):
        pts = np.array([[0.0], [0.1], [10.0], [10.1]])
        fit = kmeans(pts, d=2, restarts=4, seed=0)
        assert fit.assignments[0] == fit.assignments[1]
        assert fit.assignments[2] == fit.assignments[3]
        assert fit.assignments[0] != fit.assignments[2]
        best_wcss, best_codes = kmeans_oracle(pts, 2)
        assert fit.wcss == pytest.approx(best_wcss, abs=1e-12)
        assert partition_sets(fit.assignments) == partition_sets(best_codes)

    def test_identical_points_zero_wcss(self):
        pts = np.ones((6, 3))
        for d in (1, 2, 4):
            fit = kmeans(pts, d=d, restarts=3, seed=1)
            assert fit.wcss == 0.0
            assert np.bincount(fit.assignments, minlength=d).min() >= 1

    def test_wcss_trace_monotone(self):
        rng = np.random.default_rng(7)
        for seed in range(10):
            pts = np.random.default_rng(seed).standard_normal((30, 3))
            fit = kmeans(pts, d=4, restarts=3, seed=seed)
            trace = np.array(fit.wcss_trace)
            assert np.all(np.diff(trace) <= 1e-9 * max(1.0, trace[0]))

    def test_d_out_of_bounds(self):
        pts = np.zeros((3, 2))
        with pytest.raises(ClusteringError, match="d="):
            kmeans(pts, d=4)

    @pytest.mark.filterwarnings("error")
    def test_duplicate_heavy_points_repair_cleanly(self):
        # heavy duplication forces empty-cluster repair; stealing a sole
        # member used to cascade into an empty mean
        from oracles import kmeans_oracle

        for trial in range(30):
            r = np.random.default_rng(777_000 + trial)
            m = int(r.integers(4, 13))
            d = int(r.integers(1, 4))
            q = int(r.integers(1, 4))
            base = r.standard_normal((max(2, m // 2), q))
            pts = base[r.integers(0, len(base), m)]
            pts = pts + 1e-12 * r.standard_normal((m, q))
            fit = kmeans(pts, d, restarts=10, seed=trial)
            assert np.bincount(fit.assignments, minlength=d).min() >= 1
            best, _ = kmeans_oracle(pts, d)
            assert fit.wcss == pytest.approx(best, abs=1e-9)

    def test_curve_non_increasing(self):
        rng = np.random.default_rng(8)
        for seed in range(5):
            pts = np.random.default_rng(100 + seed).standard_normal((25, 4))
            curve = wcss_curve(pts, d_max=6, restarts=5, seed=seed)
            values = [curve[d].wcss for d in range(1, 7)]
            assert all(
                values[i + 1] <= values[i] + 1e-9 for i in range(len(values) - 1)
            )


class TestElbow:
    def test_hand_curve(self):
        curve = {1: 10.0, 2: 1.0, 3: 0.98, 4: 0.97}
        assert elbow_select(curve, 4, theta=0.10) == 2

    def test_geometric_curve_never_stabilizes(self):
        curve = {d: 2.0 ** (-d) for d in range(1, 7)}
        assert elbow_select(curve, 6, theta=0.10) == 6

    def test_zero_wcss_stabilizes(self):
        curve = {1: 5.0, 2: 0.0, 3: 0.0}
        assert elbow_select(curve, 3, theta=0.10) == 2

    def test_single_d(self):
        assert elbow_select({1: 3.0}, 1) == 1


class TestPipeline:
    def test_single_cluster_degenerate(self):
        rng = np.random.default_rng(9)
        p, n = 30, 300
        a = rng.uniform(-1, 1, p)
        x = rng.standard_normal(n) * 5.0
        panel = TimeSeriesPanel(values=np.outer(a, x) + 0.01 * rng.standard_normal((p, n)))
        result = cluster_pipeline(panel, k0=2, counts=(1, 1), seed=0)
        assert result.d_used == 1
        assert np.all(result.assignments == 0)

    def test_label_distribution_row_sums(self):
        spec = ScenarioSpec(n=300, d=3, p1=8, p_extra=4, r0=1, r_per_cluster=1, seed=11)
        panel, truth = generate_scenario(spec)
        names = ("none", "alpha", "beta", "gamma")
        labeled = TimeSeriesPanel(
            values=panel.values,
            labels=tuple(names[m] for m in truth.membership),
        )
        result = cluster_pipeline(labeled, k0=3, counts=(1, 3), seed=1)
        cats, dist = label_distribution(
            result.assignments,
            [labeled.labels[i] for i in result.retained_indices],
            result.d_used,
        )
        np.testing.assert_allclose(dist.sum(axis=1), 1.0, atol=1e-12)
        # direct counting oracle
        for i, cat in enumerate(cats):
            member = [
                a for a, idx in zip(result.assignments, result.retained_indices)
                if labeled.labels[idx] == cat
            ]
            for j in range(result.d_used):
                assert dist[i, j] == pytest.approx(
                    member.count(j) / len(member), abs=1e-15
                )

    def test_everything_detected_raises(self):
        rng = np.random.default_rng(12)
        panel = TimeSeriesPanel(values=rng.standard_normal((10, 60)))
        with pytest.raises(ClusteringError, match="retained"):
            cluster_pipeline(panel, k0=1, counts=(1, 2), omega=1e6)

    def test_d_override_beyond_d_hat(self):
        spec = ScenarioSpec(n=250, d=2, p1=8, p_extra=2, r0=1, r_per_cluster=1, seed=13)
        panel, _ = generate_scenario(spec)
        result = cluster_pipeline(panel, k0=2, counts=(1, 2), d=4, seed=0)
        assert result.d_used == 4
        assert result.provenance["d_source"] == "override"

    def test_invalid_counts_override(self):
        spec = ScenarioSpec(n=100, d=2, p1=5, p_extra=2, r0=1, r_per_cluster=1, seed=14)
        panel, _ = generate_scenario(spec)
        with pytest.raises(ClusteringError, match="counts"):
            cluster_pipeline(panel, counts=(-1, 2))

    def test_permutation_equivariance(self):
        spec = ScenarioSpec(n=250, d=3, p1=8, p_extra=4, r0=1, r_per_cluster=1, seed=21)
        panel, _ = generate_scenario(spec)
        perm = np.random.default_rng(99).permutation(panel.p)
        shuffled = TimeSeriesPanel(values=panel.values[perm])
        kwargs = dict(k0=3, counts=(1, 3), omega="p2", seed=5, restarts=20)
        base = cluster_pipeline(panel, **kwargs)
        moved = cluster_pipeline(shuffled, **kwargs)
        inverse = np.argsort(perm)  # old index i now sits at row inverse[i]
        assert set(moved.no_cluster_indices.tolist()) == {
            int(inverse[i]) for i in base.no_cluster_indices
        }
        assert base.d_hat == moved.d_hat
        assert base.d_used == moved.d_used
        base_map = dict(zip(base.retained_indices.tolist(), base.assignments.tolist()))
        moved_map = dict(zip(moved.retained_indices.tolist(), moved.assignments.tolist()))
        for old_idx, label in base_map.items():
            assert moved_map[int(inverse[old_idx])] == label

    def test_result_serializes(self):
        import json

        spec = ScenarioSpec(n=200, d=2, p1=6, p_extra=2, r0=1, r_per_cluster=1, seed=31)
        panel, _ = generate_scenario(spec)
        result = cluster_pipeline(panel, k0=2, counts=(1, 2), seed=0)
        payload = json.loads(result.to_json())
        assert payload["d_used"] == result.d_used
        assert len(payload["assignments"]) == len(result.retained_indices)
        assert payload["provenance"]["omega_variant"] == "p2"
