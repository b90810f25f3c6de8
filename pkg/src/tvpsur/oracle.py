"""Brute-force references: dense GLS, extended-precision GLS and a Kalman filter.

Nothing here shares code with the estimation paths beyond the data
containers. Covariances are assembled entry by entry from their definitions,
so a structural mistake in the factored models shows up as a mismatch.
"""

from __future__ import annotations

from dataclasses import dataclass

import mpmath
import numpy as np
from scipy.linalg import block_diag, solve_triangular

from .errors import DimensionMismatch, NotPositiveDefinite, RankDeficient
from .model import NoiseSpec, SurDataset

MAX_ORACLE_ROWS = 200


@dataclass(frozen=True)
class DenseGlsProblem:
    y: np.ndarray
    X: np.ndarray
    Omega: np.ndarray

    def __post_init__(self):
        n = len(self.y)
        if self.X.shape[0] != n or self.Omega.shape != (n, n):
            raise DimensionMismatch(f"y {n}, X {self.X.shape}, Omega {self.Omega.shape}")
        if n > MAX_ORACLE_ROWS:
            raise DimensionMismatch(f"oracle limited to {MAX_ORACLE_ROWS} rows, got {n}")


def gls_explicit(p: DenseGlsProblem) -> tuple:
    """``beta = (X' W X)^-1 X' W y`` with ``W = Omega^-1`` via Cholesky.

    Returns ``(beta, weighted_residual)``.
    """
    try:
        L = np.linalg.cholesky(p.Omega)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from None
    Xw = solve_triangular(L, p.X, lower=True)
    yw = solve_triangular(L, p.y, lower=True)
    if np.linalg.matrix_rank(Xw) < p.X.shape[1]:
        raise RankDeficient("oracle design is rank deficient")
    beta = np.linalg.solve(Xw.T @ Xw, Xw.T @ yw)
    res = yw - Xw @ beta
    return beta, float(res @ res)


def gls_two_path(p: DenseGlsProblem) -> tuple:
    """Second route: solve ``Omega z = y`` and ``Omega W = X`` by LU, then normal equations."""
    z = np.linalg.solve(p.Omega, p.y)
    W = np.linalg.solve(p.Omega, p.X)
    beta = np.linalg.solve(p.X.T @ W, p.X.T @ z)
    res = p.y - p.X @ beta
    return beta, float(res @ np.linalg.solve(p.Omega, res))


def gls_extended(p: DenseGlsProblem, dps: int = 60) -> np.ndarray:
    """GLS in ``dps``-digit arithmetic (mpmath), returned as floats."""
    with mpmath.workdps(dps):
        Om = mpmath.matrix(p.Omega.tolist())
        X = mpmath.matrix(p.X.tolist())
        y = mpmath.matrix(p.y.tolist())
        W = mpmath.matrix(X.rows, X.cols)
        for j in range(X.cols):
            W[:, j] = mpmath.lu_solve(Om, X[:, j])
        z = mpmath.lu_solve(Om, y)
        beta = mpmath.lu_solve(X.T * W, X.T * z)
        return np.array([float(b) for b in beta])


def omega_entries(data: SurDataset, noise: NoiseSpec) -> np.ndarray:
    """Covariance of the stacked disturbances relative to ``beta_t``.

    Entry ``(i,s), (j,s')`` is
    ``sigma_ij [s == s'] + [i == j] sigma_ii x_{i,s} Sigma_i x_{i,s'}^T (t - max(s, s'))``.
    """
    G, t = data.G, data.t
    Om = np.zeros((G * t, G * t))
    for i in range(G):
        for j in range(G):
            for s in range(t):
                for u in range(t):
                    v = noise.Sigma[i, j] if s == u else 0.0
                    if i == j:
                        v += noise.Sigma[i, i] * (data.X[i][s] @ noise.Sigma_i[i] @ data.X[i][u]) * (t - 1 - max(s, u))
                    Om[i * t + s, j * t + u] = v
    return Om


def dense_problem(data: SurDataset, noise: NoiseSpec) -> DenseGlsProblem:
    return DenseGlsProblem(data.y.ravel().copy(), block_diag(*data.X), omega_entries(data, noise))


def smoothing_problem(data: SurDataset, target: int, noise: NoiseSpec) -> DenseGlsProblem:
    """Stacked system for ``beta_{target|M}``: past rows then future rows.

    Past rows carry the filtering covariance at ``target``. A future row at
    time ``s`` depends on ``beta_target`` plus the drifts up to ``s``, so two
    future rows of the same regression share ``min(s, s') - target`` drifts.
    """
    M, G = data.t, data.G
    past = data.window(0, target)
    fut = data.window(target, M)
    m = M - target
    Om_p = omega_entries(past, noise)
    Om_f = np.zeros((G * m, G * m))
    for i in range(G):
        for j in range(G):
            for a in range(m):
                for b in range(m):
                    v = noise.Sigma[i, j] if a == b else 0.0
                    if i == j:
                        v += noise.Sigma[i, i] * (fut.X[i][a] @ noise.Sigma_i[i] @ fut.X[i][b]) * (min(a, b) + 1)
                    Om_f[i * m + a, j * m + b] = v
    y = np.concatenate([past.y.ravel(), fut.y.ravel()])
    X = np.vstack([block_diag(*past.X), block_diag(*fut.X)]) if m else block_diag(*past.X)
    Om = block_diag(Om_p, Om_f) if m else Om_p
    return DenseGlsProblem(y, X, Om)


def kalman_filter_diffuse(series: SurDataset, noise: NoiseSpec, prior_scale: float = 1e8) -> np.ndarray:
    """Filtered ``beta_{t|t}`` for every ``t`` from a large-variance proper prior.

    Observation variance is ``sigma_11`` and state noise ``sigma_11 Sigma_eta``.
    Returns a ``t x k`` array.
    """
    if series.G != 1:
        raise DimensionMismatch("Kalman reference is univariate")
    k = series.k[0]
    s2 = noise.Sigma[0, 0]
    Q = s2 * noise.Sigma_i[0]
    b = np.zeros(k)
    P = prior_scale * np.eye(k)
    out = np.zeros((series.t, k))
    for s in range(series.t):
        if s:
            P = P + Q
        x = series.X[0][s]
        f = x @ P @ x + s2
        g = P @ x / f
        b = b + g * (series.y[0, s] - x @ b)
        P = P - np.outer(g, x @ P)
        P = 0.5 * (P + P.T)
        out[s] = b
    return out
