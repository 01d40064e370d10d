"""Property-based checks of the algebraic invariants."""

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from factorclust import (
    LoadingMatrix,
    TimeSeriesPanel,
    detect_no_cluster,
    detection_errors,
    lag_autocov,
    misclassification_count,
    pooled_matrix,
    residualize,
    similarity_matrix,
)

from oracles import lag_autocov_oracle, misclassification_oracle

settings.register_profile("numeric", deadline=None, max_examples=40)
settings.load_profile("numeric")


int_panels = arrays(
    dtype=np.int64,
    shape=st.tuples(st.integers(2, 6), st.integers(2, 12)),
    elements=st.integers(-5, 5),
)


@given(values=int_panels, k=st.integers(0, 11))
def test_lag_autocov_matches_loop_oracle(values, k):
    panel = TimeSeriesPanel(values=values.astype(float))
    k = k % panel.n
    got = lag_autocov(panel, k).matrix
    np.testing.assert_allclose(got, lag_autocov_oracle(panel.values, k), atol=1e-12)


@given(values=int_panels, k0=st.integers(0, 5))
def test_pooled_matrix_symmetric_psd(values, k0):
    panel = TimeSeriesPanel(values=values.astype(float))
    k0 = k0 % panel.n
    m = pooled_matrix(panel, k0).matrix
    np.testing.assert_array_equal(m, m.T)
    scale = np.linalg.norm(m, 2)
    assert np.linalg.eigvalsh(m).min() >= -1e-10 * max(scale, 1.0)


orthonormal_seeds = st.tuples(
    st.integers(0, 2**31 - 1), st.integers(3, 8), st.integers(1, 3)
)


@given(params=orthonormal_seeds, n=st.integers(4, 20))
def test_residualize_idempotent_and_orthogonal(params, n):
    seed, p, r = params
    rng = np.random.default_rng(seed)
    q, _ = np.linalg.qr(rng.standard_normal((p, r)))
    loading = LoadingMatrix(q, kind="weak")
    panel = TimeSeriesPanel(values=rng.standard_normal((p, n)))
    once = residualize(panel, loading)
    twice = residualize(once, loading)
    np.testing.assert_allclose(twice.values, once.values, atol=1e-10)
    np.testing.assert_allclose(q.T @ once.values, 0.0, atol=1e-10)


@given(
    seed=st.integers(0, 2**31 - 1),
    m=st.integers(2, 8),
    q=st.integers(1, 4),
)
def test_similarity_invariant_to_row_scaling_and_sign(seed, m, q):
    rng = np.random.default_rng(seed)
    f = rng.standard_normal((m, q)) + 0.1
    sim = similarity_matrix(f)
    scales = rng.uniform(0.25, 4.0, (m, 1)) * rng.choice([-1.0, 1.0], (m, 1))
    np.testing.assert_allclose(similarity_matrix(f * scales), sim, atol=1e-12)
    assert sim.min() >= 0.0 and sim.max() <= 1.0


@given(
    seed=st.integers(0, 2**31 - 1),
    lo=st.floats(1e-3, 0.5),
    hi=st.floats(1e-3, 0.5),
)
def test_detection_monotone_in_omega(seed, lo, hi):
    lo, hi = sorted((lo, hi))
    b = np.random.default_rng(seed).uniform(-1, 1, (12, 3)) * 0.3
    small = set(detect_no_cluster(b, lo).tolist())
    large = set(detect_no_cluster(b, hi).tolist())
    assert small <= large


@given(
    seed=st.integers(0, 2**31 - 1),
    m=st.integers(2, 12),
    d=st.integers(2, 4),
)
def test_misclassification_invariances(seed, m, d):
    rng = np.random.default_rng(seed)
    a = rng.integers(0, d, m)
    t = rng.integers(0, d, m)
    base = misclassification_count(a, t)
    assert base == misclassification_oracle(a, t)
    assert misclassification_count(t, a) == base
    perm = rng.permutation(d)
    assert misclassification_count(perm[a], t) == base
    assert misclassification_count(a, a) == 0


@given(
    seed=st.integers(0, 2**31 - 1),
    p=st.integers(2, 20),
)
def test_detection_errors_identity(seed, p):
    rng = np.random.default_rng(seed)
    size = int(rng.integers(0, p + 1))
    j = set(rng.choice(p, size=size, replace=False).tolist())
    errs = detection_errors(j, j, p=p)
    assert errs.e1 == 0.0 and errs.e2 == 0.0
