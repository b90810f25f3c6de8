"""Stacked TVP / TVP-SUR models and their structured covariance square roots.

Each regression ``i`` follows

    psi_{i,s} = x_{i,s} beta_{i,s} + eps_{i,s},
    beta_{i,s} = beta_{i,s-1} + eta_{i,s},

with ``Cov(eps_{.,s}) = Sigma`` across regressions and
``Cov(eta_{i,s}) = sigma_ii * Sigma_i``. Writing every ``beta_{i,s}`` in terms
of the latest ``beta_{i,t}`` gives one regression with correlated noise whose
covariance has the square root ``(+)_i C_{i,t}  |  C kron I_t``. Observations
are stacked regression-major: all times of regression 1, then regression 2, ...
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .errors import DimensionMismatch, NotPositiveDefinite, RankDeficient
from .linalg_core import EPS, qrd, reverse_cholesky, rq_append, rq_factor


@dataclass(frozen=True)
class SurDataset:
    """Balanced panel of G regressions observed at times ``1..t``.

    ``X[i]`` is the ``t x k_i`` regressor matrix, ``y`` the ``G x t``
    response array.
    """

    X: tuple
    y: np.ndarray
    M: int | None = None

    def __post_init__(self):
        X = tuple(np.atleast_2d(np.asarray(x, dtype=float)) for x in self.X)
        y = np.atleast_2d(np.asarray(self.y, dtype=float))
        if y.shape[0] != len(X):
            raise DimensionMismatch(f"{len(X)} regressor blocks but {y.shape[0]} response rows")
        for i, x in enumerate(X):
            if x.shape[0] != y.shape[1]:
                raise DimensionMismatch(f"regression {i}: {x.shape[0]} rows, expected {y.shape[1]}")
            if x.shape[1] < 1:
                raise DimensionMismatch(f"regression {i} has no regressors")
        if not (np.all(np.isfinite(y)) and all(np.all(np.isfinite(x)) for x in X)):
            raise ValueError("dataset contains non-finite values")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @property
    def G(self) -> int:
        return len(self.X)

    @property
    def t(self) -> int:
        return self.y.shape[1]

    @property
    def k(self) -> tuple:
        return tuple(x.shape[1] for x in self.X)

    @property
    def K(self) -> int:
        return sum(self.k)

    def window(self, start: int, stop: int) -> "SurDataset":
        """Times ``start..stop-1`` (0-based, half open)."""
        return SurDataset(tuple(x[start:stop] for x in self.X), self.y[:, start:stop], self.M)

    def rows_at(self, s: int) -> list:
        """Per-regression ``(x_{i,s}, psi_{i,s})`` for 0-based time ``s``."""
        return [(self.X[i][s].copy(), float(self.y[i, s])) for i in range(self.G)]

    def extend(self, rows) -> "SurDataset":
        rows = _check_rows(rows, self.k)
        X = tuple(np.vstack([x, r[0]]) for x, r in zip(self.X, rows))
        y = np.column_stack([self.y, [r[1] for r in rows]])
        return SurDataset(X, y, self.M)


def _check_rows(rows, k):
    rows = [(np.asarray(x, dtype=float).ravel(), float(p)) for x, p in rows]
    if len(rows) != len(k):
        raise DimensionMismatch(f"expected {len(k)} rows, got {len(rows)}")
    for i, (x, _) in enumerate(rows):
        if x.size != k[i]:
            raise DimensionMismatch(f"row for regression {i} has length {x.size}, expected {k[i]}")
    return rows


def psd_factor(S, tol=None):
    """A ``k x r`` factor ``F`` with ``F F^T = S`` and ``r = rank(S)``.

    Cholesky when ``S`` is positive definite, otherwise a truncated
    eigendecomposition dropping eigenvalues below ``eps * ||S||``.
    """
    S = np.atleast_2d(np.asarray(S, dtype=float))
    if S.shape[0] != S.shape[1]:
        raise DimensionMismatch("state-noise covariance must be square")
    if not np.allclose(S, S.T, rtol=1e-12, atol=1e-300):
        raise ValueError("state-noise covariance is not symmetric")
    norm = np.linalg.norm(S, 2) if S.size else 0.0
    if norm == 0.0:
        return np.zeros((S.shape[0], 0))
    try:
        return reverse_cholesky(S, check_symmetric=False)
    except NotPositiveDefinite:
        pass
    w, V = np.linalg.eigh(S)
    if tol is None:
        tol = S.shape[0] * EPS * norm
    if w.min() < -np.sqrt(EPS) * norm:
        raise NotPositiveDefinite("state-noise covariance has a negative eigenvalue")
    keep = w > tol
    return V[:, keep] * np.sqrt(w[keep])


@dataclass(frozen=True)
class NoiseSpec:
    """Known noise covariances.

    ``Sigma`` is the ``G x G`` cross-regression covariance and ``C`` its upper
    triangular square root. ``Sigma_i[i]`` is the state-noise covariance of
    regression ``i`` and ``C_i[i]`` a ``k_i x r_i`` square root of it.
    """

    Sigma: np.ndarray
    Sigma_i: tuple
    C: np.ndarray = field(repr=False, default=None)
    C_i: tuple = field(repr=False, default=None)

    def __post_init__(self):
        Sigma = np.atleast_2d(np.asarray(self.Sigma, dtype=float))
        Sigma_i = tuple(np.atleast_2d(np.asarray(s, dtype=float)) for s in self.Sigma_i)
        if Sigma.shape != (len(Sigma_i), len(Sigma_i)):
            raise DimensionMismatch(f"Sigma is {Sigma.shape} for {len(Sigma_i)} regressions")
        object.__setattr__(self, "Sigma", Sigma)
        object.__setattr__(self, "Sigma_i", Sigma_i)
        if self.C is None:
            object.__setattr__(self, "C", reverse_cholesky(Sigma))
        if self.C_i is None:
            object.__setattr__(self, "C_i", tuple(psd_factor(s) for s in Sigma_i))

    @classmethod
    def univariate(cls, Sigma_eta) -> "NoiseSpec":
        """Single regression with unit observation variance."""
        return cls(np.eye(1), (Sigma_eta,))

    @classmethod
    def isotropic(cls, Sigma, k, state_scale: float) -> "NoiseSpec":
        """``Sigma_i = state_scale * I_{k_i}`` for every regression."""
        return cls(Sigma, tuple(state_scale * np.eye(ki) for ki in k))

    @property
    def G(self) -> int:
        return self.Sigma.shape[0]

    @property
    def k(self) -> tuple:
        return tuple(s.shape[0] for s in self.Sigma_i)

    @property
    def r(self) -> tuple:
        return tuple(c.shape[1] for c in self.C_i)

    @property
    def F(self) -> tuple:
        """Scaled state-noise factors ``sqrt(sigma_ii) C_i``."""
        return tuple(np.sqrt(self.Sigma[i, i]) * c for i, c in enumerate(self.C_i))

    def scaled(self, c: float) -> "NoiseSpec":
        """Same model with the whole disturbance covariance multiplied by ``c``.

        ``Sigma_i`` is relative to ``sigma_ii``, so only ``Sigma`` changes.
        """
        return NoiseSpec(c * self.Sigma, self.Sigma_i)

    def check(self, k) -> None:
        if tuple(k) != self.k:
            raise DimensionMismatch(f"noise built for k={self.k}, data has k={tuple(k)}")


def drift_loading(X, F, future=False):
    """Loading of one regression's observations on its whitened drifts.

    Past form (``future=False``): row ``s`` of a ``t``-point sample carries
    ``x_s F`` on the drifts of times ``s+1..t-1``, giving a
    ``t x (t-1) r`` matrix. Future form: row ``s`` carries ``x_s F`` on the
    drifts of times ``0..s``, giving ``t x t r``.
    """
    t = X.shape[0]
    r = F.shape[1]
    XF = X @ F
    nb = t if future else t - 1
    out = np.zeros((t, nb, r))
    if r and nb:
        s = np.arange(t)[:, None]
        b = np.arange(nb)[None, :]
        mask = (b <= s) if future else (b >= s)
        out[:] = XF[:, None, :] * mask[:, :, None]
    return out.reshape(t, nb * r)


@dataclass(frozen=True)
class StructuredFactor:
    """Implicit covariance square root ``(+)_i C_{i,t}  |  C kron I_t``.

    Only regressor rows and the small factors are stored. ``compress``
    returns a square triangular factor of the same covariance without ever
    forming the wide matrix; ``densify`` is for oracles and tests.
    """

    X: tuple
    F: tuple
    C: np.ndarray
    t: int
    future: bool = False

    @property
    def G(self) -> int:
        return len(self.X)

    def direct_sum_blocks(self) -> list:
        return [drift_loading(x, f, self.future) for x, f in zip(self.X, self.F)]

    def compress(self) -> np.ndarray:
        """Upper triangular ``T`` (order ``G t``) with ``T T^T = Omega``."""
        t, G = self.t, self.G
        T = np.zeros((G * t, G * t))
        for i, x in enumerate(self.X):
            if self.F[i].shape[1]:
                T[i * t:(i + 1) * t, i * t:(i + 1) * t] = rq_factor(drift_loading(x, self.F[i], self.future))
        return rq_append(T, np.kron(self.C, np.eye(t)), triangular=True)

    def densify(self) -> np.ndarray:
        """The wide ``G t x (cols + G t)`` factor. Test and oracle use only."""
        blocks = self.direct_sum_blocks()
        return np.hstack([sla.block_diag(*blocks), np.kron(self.C, np.eye(self.t))])

    def covariance(self) -> np.ndarray:
        W = self.densify()
        return W @ W.T


@dataclass(frozen=True)
class StackedModel:
    """``y = (+)_i X_i beta_t + u`` with ``Cov(u) = cov_factor cov_factor^T``."""

    y: np.ndarray
    X_blocks: tuple
    cov_factor: StructuredFactor
    data: SurDataset
    noise: NoiseSpec

    @property
    def t(self) -> int:
        return self.data.t

    def dense_design(self) -> np.ndarray:
        return sla.block_diag(*self.X_blocks)


def first_estimable_time(data: SurDataset) -> int:
    """Smallest ``t`` at which every ``X_{i,t}`` has full column rank (or ``None``)."""
    for t in range(max(data.k), data.t + 1):
        if all(np.linalg.matrix_rank(x[:t]) == x.shape[1] for x in data.X):
            return t
    return None


def check_full_rank(data: SurDataset) -> None:
    for i, x in enumerate(data.X):
        if x.shape[0] < x.shape[1]:
            raise RankDeficient(f"regression {i}: {x.shape[0]} observations for {x.shape[1]} coefficients")
        qrd(x)  # raises RankDeficient


def build_sur_model(data: SurDataset, noise: NoiseSpec) -> StackedModel:
    """Stack ``G`` regressions into one GLLSP-ready model."""
    noise.check(data.k)
    check_full_rank(data)
    factor = StructuredFactor(data.X, noise.F, noise.C, data.t)
    return StackedModel(data.y.ravel().copy(), data.X, factor, data, noise)


def build_compact_univariate(series: SurDataset, noise: NoiseSpec) -> StackedModel:
    """Univariate model with unit observation variance, ``Omega = I + A (I kron Sigma_eta) A^T``."""
    if series.G != 1:
        raise DimensionMismatch(f"univariate model needs G=1, got {series.G}")
    if noise.k != series.k:
        raise DimensionMismatch(f"Sigma_eta is {noise.k[0]}x{noise.k[0]}, data has k={series.k[0]}")
    return build_sur_model(series, NoiseSpec(np.eye(1), noise.Sigma_i, np.eye(1), noise.C_i))


def extend_factor_one_step(R_blocks, noise: NoiseSpec) -> np.ndarray:
    """Block diagonal ``(+)_i R_i sqrt(sigma_ii) C_i``: drift entering the reduced model."""
    if len(R_blocks) != noise.G:
        raise DimensionMismatch(f"{len(R_blocks)} factor blocks for {noise.G} regressions")
    parts = []
    for R, F in zip(R_blocks, noise.F):
        if R.shape[0] != F.shape[0]:
            raise DimensionMismatch(f"R block of order {R.shape[0]} vs state noise {F.shape}")
        parts.append(R @ F)
    return sla.block_diag(*parts) if parts else np.zeros((0, 0))


def augmented_covariance(Omega, X_blocks, noise: NoiseSpec) -> np.ndarray:
    """``Omega + (+)_i sigma_ii X_i Sigma_i X_i^T``: covariance after one more drift step."""
    extra = sla.block_diag(*[sigma * x @ s @ x.T for x, s, sigma in
                             zip(X_blocks, noise.Sigma_i, np.diag(noise.Sigma))])
    return Omega + extra
