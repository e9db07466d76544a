from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays
from scipy.linalg import cholesky, solve_triangular
from scipy.optimize import nnls

from riesz_condenser.qp import project_capped_simplex, solve_capped_simplex, solve_nonneg_batch

vec = arrays(np.float64, st.integers(2, 12), elements=st.floats(-5, 5))


@given(vec, st.floats(0.3, 3.0))
def test_projection_feasible_and_optimal(y, cap):
    n = len(y)
    u = np.full(n, max(cap, 1.0 / n + 1e-3))
    x = project_capped_simplex(y, u)
    assert abs(x.sum() - 1.0) <= 1e-12
    assert np.all(x >= 0) and np.all(x <= u)
    # optimality: x = clip(y - t, 0, u) for a single shift t
    free = (x > 1e-12) & (x < u - 1e-12)
    if np.any(free):
        t = y[free] - x[free]
        assert np.ptp(t) <= 1e-9
        shift = t.mean()
        assert np.all(y[x <= 1e-12] - shift <= 1e-9)
        assert np.all(y[x >= u - 1e-12] - shift >= -1e-9)


@given(vec)
def test_projection_is_idempotent(y):
    x = project_capped_simplex(y, np.inf)
    assert np.allclose(project_capped_simplex(x, np.inf), x, atol=1e-12)


def test_projection_infeasible():
    with pytest.raises(ValueError, match="infeasible"):
        project_capped_simplex(np.zeros(3), np.full(3, 0.2))


def test_nonneg_batch_matches_nnls(rng):
    n = 30
    A = rng.normal(size=(n, n))
    K = A @ A.T + 0.1 * np.eye(n)
    B = rng.normal(size=(n, 6))
    X, its, conv = solve_nonneg_batch(K, B)
    assert np.all(conv)
    L = cholesky(K, lower=True)
    for j in range(B.shape[1]):
        # x'Kx - 2b'x = |L'x - c|^2 - |c|^2 with L c = b
        c = solve_triangular(L, B[:, j], lower=True)
        ref, _ = nnls(L.T, c)
        assert np.allclose(X[:, j], ref, atol=1e-8)


def test_capped_simplex_kkt(rng):
    n = 40
    A = rng.normal(size=(n, n))
    G = A @ A.T / n + np.eye(n)
    f = rng.normal(size=n)
    u = np.full(n, 0.08)
    r = solve_capped_simplex(G, f, u)
    x = r.x
    W = G @ x + f
    assert r.converged and abs(x.sum() - 1) <= 1e-12
    assert np.all(W[x < u - 1e-12] >= r.multiplier - 1e-9)
    assert np.all(W[x > 1e-12] <= r.multiplier + 1e-9)
