"""Dense triangular-factorization kernels.

Everything here works on plain ``numpy`` arrays. Triangular factors are
returned with a nonnegative diagonal so that factorizations are unique.
Orthogonal factors are kept implicitly as LAPACK Householder reflectors and
only materialized on request.

Two conventions are used throughout:

* ``qrd``: ``Q.T @ A = [R; 0]`` (rows are compressed upward).
* ``rqd``: ``B @ P = [0, C]`` (columns are compressed to the right), so
  that ``C @ C.T == B @ B.T``.
"""

from __future__ import annotations

import contextlib
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
from scipy.linalg import lapack

from .errors import (
    DimensionMismatch,
    DowndateBreakdown,
    NotPositiveDefinite,
    RankDeficient,
    SingularTriangular,
)

EPS = np.finfo(float).eps
BREAKDOWN_TOL = 1e-10

__all__ = [
    "OrthogonalApplicator",
    "GQRD",
    "qrd",
    "rqd",
    "rq_factor",
    "rq_append",
    "reverse_cholesky",
    "gqrd",
    "gllsp_solve",
    "back_substitute",
    "hyperbolic_eliminate",
    "record_factor_shapes",
]

_shape_log: list | None = None


@contextlib.contextmanager
def record_factor_shapes():
    """Record the shape of every matrix handed to a factorization kernel.

    Test hook used to check that estimation never builds the full wide
    covariance factor.
    """
    global _shape_log
    previous, _shape_log = _shape_log, []
    try:
        yield _shape_log
    finally:
        _shape_log = previous


def _log(*shapes):
    if _shape_log is not None:
        _shape_log.extend(tuple(s) for s in shapes)


def _rank_tol(A):
    return max(A.shape) * EPS * np.linalg.norm(A)


def _signs(d):
    s = np.sign(d)
    s[s == 0] = 1.0
    return s


class OrthogonalApplicator:
    """Implicit orthogonal matrix ``H @ J? @ diag(signs)``.

    ``H`` is a product of Householder reflectors stored in LAPACK ``geqrf``
    format, ``J`` an optional order reversal.
    """

    def __init__(self, reflectors, tau, signs, flip=False):
        self._qr = reflectors
        self._tau = tau
        self.signs = signs
        self.flip = flip
        self.order = reflectors.shape[0]

    def _h(self, c, trans):
        c = np.asarray(c, dtype=float)
        vec = c.ndim == 1
        c2 = np.array(c.reshape(self.order, -1), order="F")
        if self._tau.size:
            lwork = max(1, c2.shape[1]) * 64
            c2, _, info = lapack.dormqr("L", trans, self._qr, self._tau, c2, lwork)
            assert info == 0
        return c2.ravel() if vec else c2

    def apply(self, v):
        """Return ``Q @ v``."""
        v = np.asarray(v, dtype=float)
        w = v * self.signs if v.ndim == 1 else v * self.signs[:, None]
        if self.flip:
            w = w[::-1]
        return self._h(w, "N")

    def apply_t(self, v):
        """Return ``Q.T @ v``."""
        w = self._h(v, "T")
        if self.flip:
            w = w[::-1]
        return w * self.signs if w.ndim == 1 else w * self.signs[:, None]

    def matrix(self):
        return self.apply(np.eye(self.order))


def qrd(A, companions=None, check_rank=True):
    """Householder QR of a tall matrix, applied to companion columns.

    Returns ``(R, Q.T @ companions, Q)``.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    m, n = A.shape
    if m < n:
        raise DimensionMismatch(f"qrd needs rows >= cols, got {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError("qrd: non-finite entries")
    _log(A.shape)
    raw, tau = sla.qr(A, mode="raw")[0]
    R = np.triu(raw[:n, :])
    d = _signs(np.diag(R))
    R *= d[:, None]
    if check_rank and n:
        tol = _rank_tol(A)
        if np.any(np.abs(np.diag(R)) <= tol):
            raise RankDeficient(f"column rank < {n} (tol {tol:.3g})")
    signs = np.ones(m)
    signs[:n] = d
    Q = OrthogonalApplicator(raw, tau, signs)
    out = None
    if companions is not None:
        out = Q.apply_t(companions)
    return R, out, Q


def rqd(B, check_rank=True):
    """RQ factorization ``B @ P = [0, C]`` of a wide matrix.

    Returns ``(C, P)`` with ``C`` upper triangular of order ``rows(B)``.
    """
    B = np.atleast_2d(np.asarray(B, dtype=float))
    m, n = B.shape
    if m > n:
        raise DimensionMismatch(f"rqd needs rows <= cols, got {B.shape}")
    _log(B.shape)
    raw, tau = sla.qr(B[::-1].T, mode="raw")[0]
    R = np.triu(raw[:m, :])
    d = _signs(np.diag(R))
    R *= d[:, None]
    C = R.T[::-1, ::-1].copy()
    if check_rank and m:
        tol = _rank_tol(B)
        if np.any(np.abs(np.diag(C)) <= tol):
            raise RankDeficient(f"row rank < {m} (tol {tol:.3g})")
    # B P = [0 C] with P = H J diag(1.., d reversed)
    signs = np.ones(n)
    signs[n - m:] = d[::-1]
    return C, OrthogonalApplicator(raw, tau, signs, flip=True)


def rq_factor(B):
    """Triangular factor only: upper ``C`` with ``C @ C.T == B @ B.T``.

    Rows may exceed columns; the input is then padded with zero columns.
    No rank check, singular factors are allowed.
    """
    B = np.atleast_2d(np.asarray(B, dtype=float))
    m, n = B.shape
    if m == 0:
        return np.zeros((0, 0))
    if n < m:
        B = np.hstack([np.zeros((m, m - n)), B])
    _log(B.shape)
    R = sla.qr(B[::-1].T, mode="r", check_finite=False)[0][:m]
    R = np.triu(R)
    R *= _signs(np.diag(R))[:, None]
    return R.T[::-1, ::-1].copy()


def rq_append(T, B, triangular=False):
    """Upper ``T'`` with ``T' T'^T = T T^T + B B^T`` for upper triangular ``T``.

    Uses the triangular-pentagonal QR kernel so the structure of ``T`` (and of
    ``B`` when ``triangular``) is not wasted.
    """
    T = np.asarray(T, dtype=float)
    B = np.atleast_2d(np.asarray(B, dtype=float))
    n = T.shape[0]
    if n == 0:
        return T.copy()
    if B.shape[0] != n:
        raise DimensionMismatch(f"rq_append: {T.shape} vs {B.shape}")
    if B.shape[1] == 0:
        return T.copy()
    _log((n, n + B.shape[1]))
    top = np.array(T[::-1, ::-1].T, order="F")
    bottom = np.array(B[::-1, ::-1].T, order="F")
    ell = n if (triangular and B.shape[1] == n) else 0
    nb = max(1, min(32, n))
    R, _, _, info = lapack.dtpqrt(ell, nb, top, bottom, overwrite_a=1, overwrite_b=1)
    if info != 0:
        raise ValueError(f"dtpqrt failed with info={info}")
    R = np.triu(R)
    R *= _signs(np.diag(R))[:, None]
    return R.T[::-1, ::-1].copy()


def reverse_cholesky(S, check_symmetric=True):
    """Upper triangular ``C`` with ``S = C @ C.T``."""
    S = np.atleast_2d(np.asarray(S, dtype=float))
    if S.shape[0] != S.shape[1]:
        raise DimensionMismatch("reverse_cholesky needs a square matrix")
    if check_symmetric:
        scale = max(np.linalg.norm(S), 1e-300)
        if np.linalg.norm(S - S.T) > 1e-12 * scale:
            raise ValueError("reverse_cholesky: matrix is not symmetric")
    try:
        L = np.linalg.cholesky(S[::-1, ::-1])
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from None
    return L[::-1, ::-1].copy()


def back_substitute(R, b):
    """Solve ``R x = b`` for upper triangular nonsingular ``R``."""
    R = np.atleast_2d(np.asarray(R, dtype=float))
    b = np.asarray(b, dtype=float)
    n = R.shape[0]
    if R.shape[1] != n or b.shape[0] != n:
        raise DimensionMismatch(f"back_substitute: {R.shape} vs {b.shape}")
    if n == 0:
        return b.copy()
    tol = n * EPS * np.linalg.norm(R)
    if np.any(np.abs(np.diag(R)) <= tol):
        raise SingularTriangular("zero pivot in triangular system")
    return sla.solve_triangular(R, b, lower=False, check_finite=False)


@dataclass(frozen=True)
class GQRD:
    R: np.ndarray
    y_A: np.ndarray
    y_B: np.ndarray
    L: np.ndarray
    Q: OrthogonalApplicator
    P2: OrthogonalApplicator

    @property
    def k(self):
        return self.R.shape[0]


def gqrd(X, y, C):
    """Generalized QR: ``Q.T (X y) = ([R;0], [y_A;y_B])`` and ``(Q.T C) P2 = L``."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    C = np.atleast_2d(np.asarray(C, dtype=float))
    y = np.asarray(y, dtype=float)
    if X.shape[0] != C.shape[0] or C.shape[0] != C.shape[1]:
        raise DimensionMismatch(f"gqrd: X {X.shape}, C {C.shape}")
    k = X.shape[1]
    R, comp, Q = qrd(X, np.column_stack([y, C]))
    L, P2 = rqd(comp[:, 1:])
    return GQRD(R, comp[:k, 0].copy(), comp[k:, 0].copy(), L, Q, P2)


def gllsp_solve(X, y, C):
    """Minimize ``||v||`` subject to ``y = X b + C v``.

    Returns ``(b, ||v||^2)``.
    """
    g = gqrd(X, y, C)
    k = g.k
    v_B = back_substitute(g.L[k:, k:], g.y_B)
    y_tilde = g.y_A - g.L[:k, k:] @ v_B
    return back_substitute(g.R, y_tilde), float(v_B @ v_B)


def _hyperbolic_pair(a, b):
    """Coefficients zeroing ``b`` against pivot ``a`` under signature (+, -)."""
    rho = b / a
    c = np.sqrt((1.0 - rho) * (1.0 + rho))
    return rho, c


def _downdate_rows(R, B, npiv):
    """Remove the rows of ``B`` from upper ``R`` (in place) by hyperbolic rotations.

    Works column by column: the removal block is first folded onto a single
    row with an orthogonal reflector, then one hyperbolic rotation cancels
    it against the pivot row. Columns past ``npiv`` are carried along.
    Returns the leftover trailing part of ``B``.
    """
    m = B.shape[0]
    for j in range(npiv):
        col = B[:, j]
        if m > 1:
            nrm = np.linalg.norm(col)
            if nrm == 0.0:
                continue
            v = col.copy()
            v[0] += np.copysign(nrm, v[0])
            B[:, j:] -= np.outer(v, (2.0 / (v @ v)) * (v @ B[:, j:]))
            B[1:, j] = 0.0
        delta = B[0, j]
        if delta == 0.0:
            continue
        a = R[j, j]
        if a < 0:
            R[j, j:] *= -1.0
            a = -a
        row_norm = np.linalg.norm(R[j, j:])
        if abs(delta) >= a:
            raise DowndateBreakdown(f"pivot {j}: |{delta:.3g}| >= {a:.3g}")
        rho, c = _hyperbolic_pair(a, delta)
        if a * c <= BREAKDOWN_TOL * row_norm:
            raise DowndateBreakdown(f"pivot {j} collapses to {a * c:.3g}")
        r_new = (R[j, j:] - rho * B[0, j:]) / c
        B[0, j:] = c * B[0, j:] - rho * r_new
        R[j, j:] = r_new
        B[0, j] = 0.0
    return B[:, npiv:]


def hyperbolic_eliminate(R, rows_to_remove=None, rows_to_add=None):
    """Up- and downdate an upper triangular factor by rows.

    Returns upper ``R'`` with
    ``R'^T R' = R^T R + A^T A - B^T B`` where ``A`` holds rows to add and
    ``B`` rows to remove. Added rows go through orthogonal rotations,
    removed rows through hyperbolic ones, all in real arithmetic.
    """
    R = np.array(R, dtype=float)
    n = R.shape[0]
    if rows_to_add is not None and np.size(rows_to_add):
        A = np.atleast_2d(np.asarray(rows_to_add, dtype=float))
        if A.shape[1] != n:
            raise DimensionMismatch("rows_to_add width")
        R = sla.qr(np.vstack([R, A]), mode="r")[0][:n]
        R = np.triu(R)
        R *= _signs(np.diag(R))[:, None]
    if rows_to_remove is not None and np.size(rows_to_remove):
        B = np.array(np.atleast_2d(rows_to_remove), dtype=float)
        if B.shape[1] != n:
            raise DimensionMismatch("rows_to_remove width")
        R *= _signs(np.diag(R))[:, None]
        _downdate_rows(R, B, n)
    return R
