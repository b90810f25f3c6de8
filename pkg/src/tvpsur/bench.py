"""Synthetic data and afresh-versus-recursive timing comparisons.

Three comparisons are supported:

``update``  refit from scratch at each of ``s`` new time points, versus
            ``s`` calls to ``update_one``.
``smooth``  ``s`` smoothed estimates going backwards from the end of a
            sample of length ``length``, solved from scratch versus revised
            from retained filter states.
``window``  a window of ``t0`` points slid forward ``s`` times, refit from
            scratch versus rolled with up- and downdating.

Only the repeated work is timed; the common starting point (first fit,
filter pass, first window) is prepared outside the clock.
"""

from __future__ import annotations

import hashlib
import statistics
import time
from dataclasses import asdict, dataclass

import numpy as np

from .errors import DimensionMismatch, NumericalMismatch, ScenarioTooLarge
from .estimator import fit, open_window, roll_window, run_filter, smooth_afresh, update_one
from .model import NoiseSpec, SurDataset

GENERATOR = "PCG64"
MAX_K = 400
MAX_G = 50
MODES = ("update", "smooth", "window")


@dataclass(frozen=True)
class ScenarioSpec:
    G: int
    K: int
    t0: int | None = None
    s: int = 100
    mode: str = "update"
    seed: int = 0
    length: int | None = None
    repeats: int = 3

    def __post_init__(self):
        if self.G < 1 or self.K % self.G:
            raise DimensionMismatch(f"K={self.K} is not divisible by G={self.G}")
        if self.s < 1:
            raise DimensionMismatch("s must be at least 1")
        if self.mode not in MODES:
            raise DimensionMismatch(f"mode must be one of {MODES}")

    @property
    def k(self) -> int:
        return self.K // self.G

    @property
    def start(self) -> int:
        """Initial sample size (window length in window mode)."""
        if self.t0 is not None:
            return self.t0
        return 59 if self.mode == "window" else self.k + 10

    @property
    def sample_size(self) -> int:
        if self.mode == "smooth":
            M = self.length if self.length is not None else 60
            if M - self.s < self.start:
                raise DimensionMismatch(f"sample of {M} too short for {self.s} smoothing targets")
            return M
        return self.start + self.s


@dataclass(frozen=True)
class BenchReport:
    G: int
    K: int
    mode: str
    s: int
    afresh_seconds: float
    recursive_seconds: float
    ratio: float
    estimates_checksum: str
    overhead_seconds: float

    def record(self) -> dict:
        return asdict(self)


def default_noise(G: int, k: int, state_scale: float = 0.01, rho: float = 0.5) -> NoiseSpec:
    """``sigma_ij = rho^|i-j|`` and ``Sigma_i = state_scale * I``."""
    idx = np.arange(G)
    Sigma = rho ** np.abs(idx[:, None] - idx[None, :])
    return NoiseSpec.isotropic(Sigma, (k,) * G, state_scale)


def simulate_tvp_sur(spec: ScenarioSpec, noise: NoiseSpec, return_path: bool = False, T: int | None = None):
    """Draw regressors, a random-walk coefficient path and responses.

    ``T`` overrides the scenario's sample size. With ``return_path`` the
    coefficient paths (``G`` arrays of shape ``T x k``) are returned as well.
    """
    noise.check((spec.k,) * spec.G)
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    T = spec.sample_size if T is None else T
    G, k = spec.G, spec.k
    X = rng.standard_normal((G, T, k))
    paths = []
    for i in range(G):
        F = noise.F[i]
        steps = rng.standard_normal((T, F.shape[1])) @ F.T
        steps[0] = rng.standard_normal(k)
        paths.append(np.cumsum(steps, axis=0))
    eps = rng.standard_normal((T, G)) @ noise.C.T
    y = np.stack([np.einsum("tk,tk->t", X[i], paths[i]) for i in range(G)]) + eps.T
    data = SurDataset(tuple(X), y)
    return (data, paths) if return_path else data


def _time(fn, repeats):
    times, out = [], None
    for _ in range(repeats):
        t = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t)
    return statistics.median(times), out


def _arms(spec: ScenarioSpec, data: SurDataset, noise: NoiseSpec):
    t0, s = spec.start, spec.s
    if spec.mode == "update":
        _, state0 = fit(data.window(0, t0), noise)

        def afresh():
            for t in range(t0 + 1, t0 + s + 1):
                est, _ = fit(data.window(0, t), noise)
            return est

        def recursive():
            state = state0
            for t in range(t0, t0 + s):
                est, state = update_one(state, data.rows_at(t), noise)
            return est

    elif spec.mode == "smooth":
        M = data.t
        run = run_filter(data, noise, t0=t0, keep_last=s + 1)
        targets = range(M - 1, M - s - 1, -1)

        def afresh():
            return [smooth_afresh(data, target, noise) for target in targets][-1]

        def recursive():
            return [run.smooth(data, target) for target in targets][-1]

    else:
        ws0 = open_window(data.window(0, t0), noise)

        def afresh():
            for j in range(1, s + 1):
                est, _ = fit(data.window(j, j + t0), noise)
            return est

        def recursive():
            ws = ws0
            for j in range(1, s + 1):
                est, ws = roll_window(ws, data.rows_at(t0 + j - 1), [data.rows_at(j - 1)])
            return est

    return afresh, recursive


def harness_overhead(s: int, repeats: int = 3) -> float:
    """Median time of the timing loop with an empty body."""

    def loop():
        for _ in range(s):
            pass

    return _time(loop, repeats)[0]


def run_benchmark(spec: ScenarioSpec, noise: NoiseSpec | None = None, allow_large: bool = False,
                  tol: float = 1e-6) -> BenchReport:
    """Time both arms on the same data and check that they agree."""
    if not allow_large and (spec.K > MAX_K or spec.G > MAX_G):
        raise ScenarioTooLarge(f"G={spec.G}, K={spec.K} exceeds the desk budget (G<={MAX_G}, K<={MAX_K})")
    noise = default_noise(spec.G, spec.k) if noise is None else noise
    data = simulate_tvp_sur(spec, noise)
    afresh, recursive = _arms(spec, data, noise)
    t_rec, est_rec = _time(recursive, spec.repeats)
    t_afr, est_afr = _time(afresh, spec.repeats)
    a, b = est_afr.vector, est_rec.vector
    err = np.linalg.norm(a - b) / max(np.linalg.norm(a), 1e-300)
    if not err <= tol:
        raise NumericalMismatch(f"arms disagree: relative difference {err:.3g} > {tol:g}")
    digest = hashlib.sha256(np.ascontiguousarray(b, dtype="<f8").tobytes()).hexdigest()[:16]
    return BenchReport(spec.G, spec.K, spec.mode, spec.s, t_afr, t_rec, t_afr / t_rec, digest,
                       harness_overhead(spec.s))


def format_table(reports) -> str:
    """Aligned text table with the columns G, K, Afresh, Recursive, Ratio."""
    head = f"{'G':>4} {'K':>5} {'Afresh':>10} {'Recursive':>10} {'Ratio':>7}"
    lines = [head]
    for r in reports:
        lines.append(f"{r.G:>4} {r.K:>5} {r.afresh_seconds:>10.3f} {r.recursive_seconds:>10.3f} {r.ratio:>7.1f}")
    return "\n".join(lines)
