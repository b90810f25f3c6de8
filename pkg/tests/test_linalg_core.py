import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tvpsur.errors import DowndateBreakdown, NotPositiveDefinite, RankDeficient, SingularTriangular
from tvpsur.linalg_core import (
    back_substitute,
    gllsp_solve,
    gqrd,
    hyperbolic_eliminate,
    qrd,
    record_factor_shapes,
    reverse_cholesky,
    rq_append,
    rq_factor,
    rqd,
)

seeds = st.integers(0, 2**32 - 1)


def test_qrd_identity():
    b = np.array([1.0, -2.0, 3.0])
    R, out, _ = qrd(np.eye(3), b)
    assert np.array_equal(R, np.eye(3))
    assert np.allclose(out, b, rtol=0, atol=1e-15)


def test_qrd_column_norm():
    R, _, Q = qrd(np.array([[3.0], [4.0]]))
    assert R[0, 0] == pytest.approx(5.0, rel=1e-15)
    assert np.allclose(Q.apply_t(np.array([[3.0], [4.0]])), [[5.0], [0.0]], atol=1e-15)


def test_qrd_reconstruction():
    rng = np.random.default_rng(0)
    A = rng.standard_normal((6, 3))
    R, _, Q = qrd(A)
    assert np.allclose(Q.apply(np.vstack([R, np.zeros((3, 3))])), A, rtol=0, atol=1e-12 * np.linalg.norm(A))
    assert np.all(np.diag(R) >= 0)
    assert np.array_equal(np.tril(R, -1), np.zeros((3, 3)))


def test_qrd_rank_deficient():
    A = np.array([[1.0, 2.0], [2.0, 4.0], [3.0, 6.0]])
    with pytest.raises(RankDeficient):
        qrd(A)


def test_rqd_identity_and_row_norm():
    C, _ = rqd(np.eye(3))
    assert np.allclose(C, np.eye(3), atol=1e-15)
    B = np.array([[3.0, 4.0]])
    C, P = rqd(B)
    assert C[0, 0] == pytest.approx(5.0)
    assert np.allclose(B @ P.matrix(), [[0.0, 5.0]], atol=1e-14)


def test_rqd_univariate_covariance():
    # t=3, k=1: C C^T must equal I + A (I kron s) A^T with A rows [x1 x1; 0 x2; 0 0]
    x = np.array([0.7, -1.3, 2.0])
    s = 0.4
    A = np.array([[x[0], x[0]], [0.0, x[1]], [0.0, 0.0]])
    B = np.hstack([np.eye(3), A * np.sqrt(s)])
    C, P = rqd(B)
    Omega = np.eye(3) + s * A @ A.T
    assert np.allclose(C @ C.T, Omega, rtol=0, atol=1e-14)
    assert np.allclose(B @ P.matrix(), np.hstack([np.zeros((3, 2)), C]), atol=1e-14)


def test_reverse_cholesky_examples():
    assert np.allclose(reverse_cholesky(np.eye(3)), np.eye(3))
    assert np.allclose(reverse_cholesky(np.diag([4.0, 9.0])), np.diag([2.0, 3.0]))
    S = np.array([[5.0, 2.0], [2.0, 1.0]])
    C = reverse_cholesky(S)
    assert np.allclose(C @ C.T, S, rtol=0, atol=1e-14)
    assert C[1, 0] == 0.0 and np.all(np.diag(C) > 0)
    with pytest.raises(NotPositiveDefinite):
        reverse_cholesky(np.array([[1.0, 2.0], [2.0, 1.0]]))


def test_back_substitute_examples():
    b = np.array([1.0, 2.0])
    assert np.array_equal(back_substitute(np.eye(2), b), b)
    assert back_substitute(np.array([[2.0]]), np.array([4.0]))[0] == 2.0
    x = back_substitute(np.array([[2.0, 1.0], [0.0, 3.0]]), np.array([5.0, 6.0]))
    assert np.allclose(x, [1.5, 2.0], rtol=1e-15)
    with pytest.raises(SingularTriangular):
        back_substitute(np.array([[1.0, 1.0], [0.0, 0.0]]), b)


def test_gqrd_identity():
    y = np.array([1.0, 2.0])
    g = gqrd(np.eye(2), y, np.eye(2))
    assert np.allclose(g.R, np.eye(2)) and np.allclose(g.L, np.eye(2)) and np.allclose(g.y_A, y)


def test_gllsp_mean():
    beta, rss = gllsp_solve(np.array([[1.0], [1.0]]), np.array([1.0, 3.0]), np.eye(2))
    assert beta[0] == pytest.approx(2.0, rel=1e-15)
    assert rss == pytest.approx(2.0, rel=1e-14)


def test_gllsp_matches_gls():
    rng = np.random.default_rng(3)
    X = rng.standard_normal((5, 2))
    y = rng.standard_normal(5)
    A = rng.standard_normal((5, 5))
    Omega = A @ A.T + np.eye(5)
    beta, rss = gllsp_solve(X, y, reverse_cholesky(Omega))
    W = np.linalg.inv(Omega)
    ref = np.linalg.solve(X.T @ W @ X, X.T @ W @ y)
    assert np.allclose(beta, ref, rtol=1e-10, atol=0)
    r = y - X @ ref
    assert rss == pytest.approx(r @ W @ r, rel=1e-10)


def test_hyperbolic_eliminate_examples():
    rng = np.random.default_rng(5)
    R = np.triu(rng.standard_normal((4, 4))) + 3 * np.eye(4)
    A = rng.standard_normal((2, 4))
    # pure updating matches a stacked QR
    up = hyperbolic_eliminate(R, rows_to_add=A)
    ref = np.linalg.qr(np.vstack([R, A]), mode="r")
    ref *= np.sign(np.diag(ref))[:, None]
    assert np.allclose(up, ref, rtol=0, atol=1e-12)
    # removing what was added restores R
    back = hyperbolic_eliminate(up, rows_to_remove=A)
    assert np.allclose(back, R, rtol=0, atol=1e-10 * np.linalg.norm(R))
    # a zero row changes nothing
    assert np.allclose(hyperbolic_eliminate(R, rows_to_remove=np.zeros((1, 4))), R, atol=1e-15)


def test_hyperbolic_breakdown():
    R = np.eye(2)
    with pytest.raises(DowndateBreakdown):
        hyperbolic_eliminate(R, rows_to_remove=np.array([[2.0, 0.0]]))


@settings(max_examples=40, deadline=None)
@given(seed=seeds, m=st.integers(1, 50), extra=st.integers(0, 10))
def test_qrd_orthogonality_and_reconstruction(seed, m, extra):
    rng = np.random.default_rng(seed)
    n = max(1, m - extra) if extra < m else 1
    A = rng.standard_normal((m, n))
    R, _, Q = qrd(A)
    v = rng.standard_normal(m)
    assert np.linalg.norm(Q.apply_t(Q.apply(v)) - v) <= 1e-12 * np.linalg.norm(v)
    assert np.linalg.norm(Q.apply(np.vstack([R, np.zeros((m - n, n))])) - A) <= 1e-11 * np.linalg.norm(A)


@settings(max_examples=40, deadline=None)
@given(seed=seeds, m=st.integers(1, 50), extra=st.integers(0, 10))
def test_rqd_orthogonality_and_reconstruction(seed, m, extra):
    rng = np.random.default_rng(seed)
    B = rng.standard_normal((m, m + extra))
    C, P = rqd(B)
    v = rng.standard_normal(m + extra)
    assert np.linalg.norm(P.apply_t(P.apply(v)) - v) <= 1e-12 * np.linalg.norm(v)
    target = np.hstack([np.zeros((m, extra)), C])
    assert np.linalg.norm(B @ P.matrix() - target) <= 1e-11 * np.linalg.norm(B)
    assert np.all(np.diag(C) >= 0)


@settings(max_examples=40, deadline=None)
@given(seed=seeds, n=st.integers(1, 40))
def test_reverse_cholesky_multiply_back(seed, n):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((n, n))
    S = A @ A.T + n * np.eye(n)
    C = reverse_cholesky(S)
    assert np.linalg.norm(C @ C.T - S) <= 1e-11 * np.linalg.norm(S)


@settings(max_examples=40, deadline=None)
@given(seed=seeds, n=st.integers(1, 20), m=st.integers(1, 5))
def test_hyperbolic_round_trips(seed, n, m):
    rng = np.random.default_rng(seed)
    A = 0.5 * rng.standard_normal((m, n))
    # R already contains the rows of A, so removing them first is well posed
    base = np.triu(rng.standard_normal((n, n))) + 2 * np.sqrt(n) * np.eye(n)
    R = np.linalg.qr(np.vstack([base, A]), mode="r")
    R *= np.sign(np.diag(R))[:, None]
    there = hyperbolic_eliminate(hyperbolic_eliminate(R, rows_to_add=A), rows_to_remove=A)
    assert np.linalg.norm(there - R) <= 1e-9 * np.linalg.norm(R)
    back = hyperbolic_eliminate(hyperbolic_eliminate(R, rows_to_remove=A), rows_to_add=A)
    assert np.linalg.norm(back - R) <= 1e-9 * np.linalg.norm(R)


@settings(max_examples=30, deadline=None)
@given(seed=seeds, n=st.integers(1, 30), m=st.integers(0, 12), tri=st.booleans())
def test_rq_append_matches_gram(seed, n, m, tri):
    rng = np.random.default_rng(seed)
    T = np.triu(rng.standard_normal((n, n)))
    B = np.triu(rng.standard_normal((n, n))) if tri else rng.standard_normal((n, m))
    out = rq_append(T, B, triangular=tri)
    assert np.array_equal(np.tril(out, -1), np.zeros((n, n)))
    ref = T @ T.T + B @ B.T
    assert np.linalg.norm(out @ out.T - ref) <= 1e-12 * max(np.linalg.norm(ref), 1.0)


def test_rq_factor_tall_input_is_padded():
    rng = np.random.default_rng(2)
    B = rng.standard_normal((5, 2))
    T = rq_factor(B)
    assert T.shape == (5, 5)
    assert np.allclose(T @ T.T, B @ B.T, atol=1e-13)


def test_determinism():
    rng = np.random.default_rng(11)
    A = rng.standard_normal((20, 7))
    R1, c1, _ = qrd(A, A[:, :2])
    R2, c2, _ = qrd(A.copy(), A[:, :2].copy())
    assert R1.tobytes() == R2.tobytes() and c1.tobytes() == c2.tobytes()
    R = np.triu(A[:7]) + 5 * np.eye(7)
    h1 = hyperbolic_eliminate(R, rows_to_remove=0.1 * A[7:9])
    h2 = hyperbolic_eliminate(R.copy(), rows_to_remove=0.1 * A[7:9].copy())
    assert h1.tobytes() == h2.tobytes()


def test_shape_log():
    with record_factor_shapes() as log:
        qrd(np.eye(3))
        rq_factor(np.ones((2, 4)))
    assert log == [(3, 3), (2, 4)]
