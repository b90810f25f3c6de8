"""Afresh, updating, smoothing and rolling-window estimation.

All four procedures reduce to the same generalized least squares problem

    min ||v||^2  subject to  y = X beta + N v,

with ``X`` block diagonal over regressions and ``N`` a square triangular
noise factor. ``_gllsp_reduce`` solves it by a QR of each regression block
followed by one RQ of the transformed noise factor, and keeps the pieces
needed to continue later: the triangular blocks ``R_i``, the reduced
responses and the leading block ``L11`` of the RQ factor.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg as sla

from .errors import (
    DimensionMismatch,
    DowndateBreakdown,
    InvalidTarget,
    NotPositiveDefinite,
    RankDeficient,
    WindowTooShort,
)
from .linalg_core import (
    back_substitute,
    hyperbolic_eliminate,
    qrd,
    reverse_cholesky,
    rq_append,
    rq_factor,
)
from .model import (
    NoiseSpec,
    StackedModel,
    StructuredFactor,
    SurDataset,
    _check_rows,
    build_sur_model,
    drift_loading,
    extend_factor_one_step,
    first_estimable_time,
)


@dataclass(frozen=True)
class CoefficientEstimate:
    beta: tuple
    weighted_residual_sq: float
    at_time: int
    conditioned_on: int

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate(self.beta)


@dataclass(frozen=True)
class FilterState:
    """Reusable factorization of the model at time ``t``.

    ``R_blocks[i] beta_i = y_reduced[i-block] - L11 u`` with ``u`` standard
    normal summarizes all data up to ``t``.
    """

    t: int
    R_blocks: tuple
    y_reduced: np.ndarray
    L11: np.ndarray
    residual_sq: float
    noise: NoiseSpec = field(repr=False)
    window_start: int = 0

    @property
    def k(self) -> tuple:
        return tuple(R.shape[0] for R in self.R_blocks)

    @property
    def K(self) -> int:
        return self.L11.shape[0]


def _offsets(sizes):
    return np.concatenate([[0], np.cumsum(sizes)]).astype(int)


def _gllsp_reduce(blocks, y, N):
    """Reduce ``y = (+) X_i beta_i + N v``.

    ``blocks`` lists ``(row_indices, X_i)`` pairs covering the rows of ``y``
    in disjoint sets. Returns ``(R_blocks, y_tilde, L11, ||v||^2)`` where
    ``R_i beta_i = y_tilde_i`` gives the minimizer.
    """
    A_noise, B_noise, yA, yB, R_blocks = [], [], [], [], []
    for idx, Xi in blocks:
        k = Xi.shape[1]
        R, comp, _ = qrd(Xi, np.column_stack([y[idx], N[idx]]))
        R_blocks.append(R)
        yA.append(comp[:k, 0])
        yB.append(comp[k:, 0])
        A_noise.append(comp[:k, 1:])
        B_noise.append(comp[k:, 1:])
    K = sum(R.shape[0] for R in R_blocks)
    L = rq_factor(np.vstack(A_noise + B_noise))
    yA = np.concatenate(yA)
    yB = np.concatenate(yB)
    vB = back_substitute(L[K:, K:], yB)
    y_tilde = yA - L[:K, K:] @ vB
    return tuple(R_blocks), y_tilde, L[:K, :K].copy(), float(vB @ vB)


def _solve_blocks(R_blocks, y_tilde):
    off = _offsets([R.shape[0] for R in R_blocks])
    return tuple(back_substitute(R, y_tilde[off[i]:off[i + 1]]) for i, R in enumerate(R_blocks))


def _estimate_from_state(state: FilterState, conditioned_on=None) -> CoefficientEstimate:
    beta = _solve_blocks(state.R_blocks, state.y_reduced)
    M = state.t if conditioned_on is None else conditioned_on
    return CoefficientEstimate(beta, state.residual_sq, state.t, M)


def _regression_major_blocks(X_list, offset=0):
    """Row blocks for a regression-major stack of equally long samples."""
    t = X_list[0].shape[0] if X_list else 0
    return [(offset + np.arange(i * t, (i + 1) * t), x) for i, x in enumerate(X_list)]


def estimate_afresh(model: StackedModel) -> tuple:
    """Solve the stacked GLLSP from scratch. Returns ``(estimate, state)``."""
    N = model.cov_factor.compress()
    R_blocks, y_tilde, L11, rss = _gllsp_reduce(_regression_major_blocks(model.X_blocks), model.y, N)
    state = FilterState(model.t, R_blocks, y_tilde, L11, rss, model.noise)
    return _estimate_from_state(state), state


def fit(data: SurDataset, noise: NoiseSpec) -> tuple:
    """``estimate_afresh`` on a raw dataset."""
    return estimate_afresh(build_sur_model(data, noise))


def update_one(state: FilterState, new_rows, noise: NoiseSpec | None = None) -> tuple:
    """Absorb one new time point (one row per regression)."""
    noise = state.noise if noise is None else noise
    noise.check(state.k)
    rows = _check_rows(new_rows, state.k)
    G, K = noise.G, state.K
    # drift from t to t+1 enters the reduced model as extra noise columns
    L_tilde = rq_append(state.L11, extend_factor_one_step(state.R_blocks, noise))
    N = np.zeros((K + G, K + G))
    N[:K, :K] = L_tilde
    N[K:, K:] = noise.C
    y = np.concatenate([state.y_reduced, [p for _, p in rows]])
    off = _offsets(state.k)
    blocks = []
    for i, (x, _) in enumerate(rows):
        idx = np.append(np.arange(off[i], off[i + 1]), K + i)
        blocks.append((idx, np.vstack([state.R_blocks[i], x])))
    R_blocks, y_tilde, L11, rss = _gllsp_reduce(blocks, y, N)
    new = FilterState(state.t + 1, R_blocks, y_tilde, L11, state.residual_sq + rss, noise,
                      state.window_start)
    return _estimate_from_state(new), new


def _future_factor(future: SurDataset, noise: NoiseSpec) -> np.ndarray:
    return StructuredFactor(future.X, noise.F, noise.C, future.t, future=True).compress()


def smooth(state_at_t: FilterState, future: SurDataset, noise: NoiseSpec | None = None) -> CoefficientEstimate:
    """Smoothed ``beta_{t|M}`` from the filter state at ``t`` and rows ``t+1..M``.

    The future rows are written in terms of ``beta_t``; their noise picks up
    the drifts between ``t`` and each row's time. The result is the GLS
    estimate of ``beta_t`` from all ``M`` observations.
    """
    noise = state_at_t.noise if noise is None else noise
    if future.t == 0:
        return _estimate_from_state(state_at_t)
    noise.check(future.k)
    if future.k != state_at_t.k:
        raise DimensionMismatch("future rows do not match the state dimensions")
    K, m, G = state_at_t.K, future.t, noise.G
    N = sla.block_diag(state_at_t.L11, _future_factor(future, noise))
    y = np.concatenate([state_at_t.y_reduced, future.y.ravel()])
    off = _offsets(state_at_t.k)
    blocks = []
    for i in range(G):
        idx = np.concatenate([np.arange(off[i], off[i + 1]), K + np.arange(i * m, (i + 1) * m)])
        blocks.append((idx, np.vstack([state_at_t.R_blocks[i], future.X[i]])))
    R_blocks, y_tilde, _, rss = _gllsp_reduce(blocks, y, N)
    beta = _solve_blocks(R_blocks, y_tilde)
    return CoefficientEstimate(beta, state_at_t.residual_sq + rss, state_at_t.t, state_at_t.t + m)


def smooth_afresh(data: SurDataset, target: int, noise: NoiseSpec) -> CoefficientEstimate:
    """Smoothed ``beta_{target|M}`` by solving the full stacked system from scratch.

    ``target`` is the 1-based time; ``data`` holds times ``1..M``.
    """
    M = data.t
    if not 1 <= target <= M:
        raise InvalidTarget(f"target {target} outside 1..{M}")
    past, future = data.window(0, target), data.window(target, M)
    build_sur_model(past, noise)  # rank checks
    Np = StructuredFactor(past.X, noise.F, noise.C, past.t).compress()
    N = sla.block_diag(Np, _future_factor(future, noise)) if future.t else Np
    G, t, m = data.G, target, M - target
    y = np.concatenate([past.y.ravel(), future.y.ravel()])
    blocks = []
    for i in range(G):
        idx = np.concatenate([np.arange(i * t, (i + 1) * t), G * t + np.arange(i * m, (i + 1) * m)])
        blocks.append((idx, data.X[i]))
    R_blocks, y_tilde, _, rss = _gllsp_reduce(blocks, y, N)
    return CoefficientEstimate(_solve_blocks(R_blocks, y_tilde), rss, target, M)


@dataclass
class FilterRun:
    """Filter output over a sample: last state plus retained snapshots."""

    state: FilterState
    estimates: list
    snapshots: dict

    def smooth(self, data: SurDataset, target: int) -> CoefficientEstimate:
        """Smoothed estimate at 1-based ``target`` given all of ``data``."""
        if target == self.state.t:
            return _estimate_from_state(self.state)
        if target > self.state.t or target < 1:
            raise InvalidTarget(f"target {target} not in 1..{self.state.t}")
        if target not in self.snapshots:
            raise InvalidTarget(f"no filter snapshot retained at time {target}")
        return smooth(self.snapshots[target], data.window(target, self.state.t))


def run_filter(data: SurDataset, noise: NoiseSpec, t0: int | None = None, keep_last: int = 32) -> FilterRun:
    """Fit afresh at ``t0`` then update one time point at a time to the end."""
    if t0 is None:
        t0 = first_estimable_time(data)
        if t0 is None:
            raise RankDeficient("no time point at which every regression is estimable")
    est, state = fit(data.window(0, t0), noise)
    estimates = [est]
    snaps = {state.t: state}
    for s in range(t0, data.t):
        est, state = update_one(state, data.rows_at(s), noise)
        estimates.append(est)
        snaps[state.t] = state
        if keep_last is not None and len(snaps) > keep_last:
            del snaps[min(snaps)]
    return FilterRun(state, estimates, snaps)


# ---------------------------------------------------------------------------
# rolling window


@dataclass(frozen=True)
class WindowState:
    """Moment form of a window estimate.

    The unknowns are ``z = (omega_1..omega_G, beta_1..beta_G)`` where
    ``beta_i`` is the latest coefficient and ``omega_i`` the whitened drift
    accumulated since the oldest retained time, so that the oldest row reads
    ``psi = x beta_i - x F_i omega_i + eps`` and is independent of every
    other retained row. ``z`` is the current estimate and ``U U^T`` its error
    covariance with ``U`` upper triangular.
    """

    t: int
    window_start: int
    z: np.ndarray
    U: np.ndarray
    residual_sq: float
    noise: NoiseSpec = field(repr=False)

    @property
    def r(self) -> tuple:
        return self.noise.r

    @property
    def k(self) -> tuple:
        return self.noise.k

    @property
    def length(self) -> int:
        return self.t - self.window_start

    def estimate(self) -> CoefficientEstimate:
        R = sum(self.r)
        off = R + _offsets(self.k)
        beta = tuple(self.z[off[i]:off[i + 1]].copy() for i in range(len(self.k)))
        return CoefficientEstimate(beta, self.residual_sq, self.t, self.t)


def _observation_matrix(rows, noise: NoiseSpec, oldest: bool) -> np.ndarray:
    """Map from ``z`` to one time point's responses (one row per regression)."""
    R = sum(noise.r)
    roff, koff = _offsets(noise.r), R + _offsets(noise.k)
    D = np.zeros((noise.G, R + sum(noise.k)))
    for i, (x, _) in enumerate(rows):
        D[i, koff[i]:koff[i + 1]] = x
        if oldest:
            D[i, roff[i]:roff[i + 1]] = -x @ noise.F[i]
    return D


def _drift_map(noise: NoiseSpec) -> np.ndarray:
    """``z_{t+1} = z_t + E w``: each drift enters ``omega`` and ``beta`` alike."""
    R = sum(noise.r)
    E = np.zeros((R + sum(noise.k), R))
    roff, koff = _offsets(noise.r), R + _offsets(noise.k)
    for i, F in enumerate(noise.F):
        E[roff[i]:roff[i + 1], roff[i]:roff[i + 1]] = np.eye(F.shape[1])
        E[koff[i]:koff[i + 1], roff[i]:roff[i + 1]] = F
    return E


def _cov_downdate(U, E):
    """Upper ``U'`` with ``U' U'^T = U U^T - E E^T``."""
    Uh = U.T[::-1, ::-1]
    Uh = hyperbolic_eliminate(Uh, rows_to_remove=E[::-1].T)
    return Uh.T[::-1, ::-1].copy()


def _measure(z, U, rows, D, C, sign):
    """Add (``sign=+1``) or remove (``sign=-1``) one time point in moment form.

    Adding triangularizes the array ``[[U, 0], [D U, C]]`` orthogonally.
    Removing factors the innovation covariance ``C C^T - D U U^T D^T`` with
    hyperbolic rotations and then widens ``U`` by the gain columns.
    """
    n, G = U.shape[0], C.shape[0]
    B = D @ U
    if sign > 0:
        pre = np.zeros((n + G, n + G))
        pre[:n, :n] = U
        pre[n:, :n] = B
        pre[n:, n:] = C
        post = rq_factor(pre)
        gain, Re, U_new = post[:n, n:], post[n:, n:], post[:n, :n].copy()
    else:
        Re = _cov_downdate(C, rq_factor(B))
        gain = -U @ sla.solve_triangular(Re, B).T
        U_new = rq_append(U, gain)
    innov = back_substitute(Re, np.array([p for _, p in rows]) - D @ z)
    return z + gain @ innov, U_new, float(innov @ innov)


def _shift_drift(U, R):
    """Drop one whitened drift from ``omega``: its covariance loses ``I_R``."""
    U = U.copy()
    U11 = U[:R, :R]
    try:
        U[:R, :R] = reverse_cholesky(U11 @ U11.T - np.eye(R), check_symmetric=False)
    except NotPositiveDefinite:
        raise DowndateBreakdown("window drift covariance lost definiteness") from None
    return U


def open_window(data: SurDataset, noise: NoiseSpec, start: int = 0) -> WindowState:
    """Window estimate from scratch over all of ``data``.

    ``start`` records the 0-based time of the first row of ``data`` in the
    caller's series.
    """
    noise.check(data.k)
    build_sur_model(data, noise)  # rank checks
    G, w = data.G, data.t
    if w < 2:
        raise WindowTooShort("a window needs at least two time points")
    r, k = noise.r, data.k
    R, K = sum(r), sum(k)
    roff, koff = _offsets(r), R + _offsets(k)
    n_rows = G * w + R
    # drift columns: regression-major, times 1..w-1 of the window
    doff = _offsets([(w - 1) * ri for ri in r])
    W = np.zeros((n_rows, doff[-1]))
    X = np.zeros((n_rows, R + K))
    for i in range(G):
        rows = slice(i * w, (i + 1) * w)
        F = noise.F[i]
        X[rows, koff[i]:koff[i + 1]] = data.X[i]
        X[i * w, roff[i]:roff[i + 1]] = -data.X[i][0] @ F
        load = -drift_loading(data.X[i], F)
        load[0] = 0.0  # the oldest row sees the drifts only through omega
        W[rows, doff[i]:doff[i + 1]] = load
        pr = G * w + np.arange(roff[i], roff[i + 1])
        X[pr, roff[i]:roff[i + 1]] = np.eye(r[i])
        W[pr, doff[i]:doff[i + 1]] = -np.tile(np.eye(r[i]), (1, w - 1))
    E = np.vstack([np.kron(noise.C, np.eye(w)), np.zeros((R, G * w))])
    N = rq_factor(np.hstack([W, E]))
    y = np.concatenate([data.y.ravel(), np.zeros(R)])
    (Rz,), y_tilde, L11, rss = _gllsp_reduce([(np.arange(n_rows), X)], y, N)
    z = back_substitute(Rz, y_tilde)
    U = rq_factor(sla.solve_triangular(Rz, L11))
    return WindowState(start + w, start, z, U, rss, noise)


def _add_rows(ws: WindowState, rows) -> WindowState:
    noise = ws.noise
    U = rq_append(ws.U, _drift_map(noise)) if sum(noise.r) else ws.U
    D = _observation_matrix(rows, noise, oldest=False)
    z, U, q = _measure(ws.z, U, rows, D, noise.C, +1)
    return replace(ws, t=ws.t + 1, z=z, U=U, residual_sq=ws.residual_sq + q)


def _drop_oldest(ws: WindowState, rows) -> WindowState:
    noise = ws.noise
    if ws.length - 1 < max(max(ws.k), 2):
        raise WindowTooShort(f"window of {ws.length - 1} points after deletion is below the minimum")
    D = _observation_matrix(rows, noise, oldest=True)
    z, U, q = _measure(ws.z, ws.U, rows, D, noise.C, -1)
    R = sum(noise.r)
    if R:
        # omega now spans one drift too many; that drift is unrelated to the data
        U = _shift_drift(U, R)
    return replace(ws, window_start=ws.window_start + 1, z=z, U=U,
                   residual_sq=max(ws.residual_sq - q, 0.0))


def roll_window(ws: WindowState, add_rows=None, drop_rows=None, noise: NoiseSpec | None = None) -> tuple:
    """Slide the window: absorb ``add_rows`` then delete the oldest time points.

    ``add_rows`` is one time point (one ``(x, psi)`` pair per regression) or
    ``None``; ``drop_rows`` is a list of time points, oldest first, which
    must be the oldest points currently in the window.
    """
    if noise is not None and noise is not ws.noise:
        ws = replace(ws, noise=noise)
    if add_rows is not None:
        ws = _add_rows(ws, _check_rows(add_rows, ws.k))
    for rows in drop_rows or ():
        ws = _drop_oldest(ws, _check_rows(rows, ws.k))
    return ws.estimate(), ws


def retract_latest(ws: WindowState, rows) -> tuple:
    """Undo the most recent addition of ``rows`` (the newest time point)."""
    rows = _check_rows(rows, ws.k)
    if ws.length - 1 < max(max(ws.k), 2):
        raise WindowTooShort("window too short to remove its newest point")
    noise = ws.noise
    D = _observation_matrix(rows, noise, oldest=False)
    z, U, q = _measure(ws.z, ws.U, rows, D, noise.C, -1)
    if sum(noise.r):
        U = _cov_downdate(U, _drift_map(noise))
    ws = replace(ws, t=ws.t - 1, z=z, U=U, residual_sq=max(ws.residual_sq - q, 0.0))
    return ws.estimate(), ws
