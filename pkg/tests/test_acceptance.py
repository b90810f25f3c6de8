"""Acceptance criteria 1-10, each printing a single PASS/FAIL line.

Run alone with ``pytest -s tests/test_acceptance.py`` to see the lines inline;
they are also printed with capture disabled under a plain ``pytest`` run.
"""

import time

import numpy as np

from instances import random_noise, random_spd, rel_err
from tvpsur import io
from tvpsur.bench import ScenarioSpec, default_noise, run_benchmark, simulate_tvp_sur
from tvpsur.estimator import (
    _estimate_from_state,
    estimate_afresh,
    fit,
    open_window,
    retract_latest,
    roll_window,
    run_filter,
    update_one,
)
from tvpsur.model import NoiseSpec, SurDataset, build_sur_model, first_estimable_time
from tvpsur.oracle import (
    dense_problem,
    gls_explicit,
    gls_extended,
    kalman_filter_diffuse,
    smoothing_problem,
)


def report(capsys, n, ok, detail):
    with capsys.disabled():
        print(f"\ncriterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, detail


def instance(rng, t_max=15, extra=0):
    """Random system: G in 1..3, k_i in 1..3, t between t0 and ``t_max``."""
    G = int(rng.integers(1, 4))
    k = tuple(int(v) for v in rng.integers(1, 4, size=G))
    noise = random_noise(rng, k, ("full", "rankdef", "mixed", "zero")[rng.integers(4)])
    noise = NoiseSpec(random_spd(rng, G), noise.Sigma_i)
    X = tuple(rng.standard_normal((t_max + extra, ki)) for ki in k)
    data = SurDataset(X, rng.standard_normal((G, t_max + extra)))
    t0 = first_estimable_time(data)
    t = int(rng.integers(t0, t_max + 1))
    return data, noise, t


def test_criterion_01_filtering_oracle(capsys):
    start = time.perf_counter()
    worst_b = worst_r = 0.0
    rng = np.random.default_rng(101)
    n = 250
    for _ in range(n):
        data, noise, t = instance(rng)
        d = data.window(0, t)
        est, _ = estimate_afresh(build_sur_model(d, noise))
        beta, rss = gls_explicit(dense_problem(d, noise))
        worst_b = max(worst_b, rel_err(est.vector, beta))
        # an exactly determined system has a zero residual on both sides up to
        # rounding, so the relative error is taken against a floor tied to |y|^2
        floor = 1e-14 * float(d.y.ravel() @ d.y.ravel())
        worst_r = max(worst_r, abs(est.weighted_residual_sq - rss) / max(abs(rss), floor))
    secs = time.perf_counter() - start
    ok = worst_b <= 1e-8 and worst_r <= 1e-8 and secs < 60
    report(capsys, 1, ok, f"{n} instances, max rel err beta {worst_b:.1e} rss {worst_r:.1e}, {secs:.1f}s")


def test_criterion_02_update_equals_afresh(capsys):
    start = time.perf_counter()
    rng = np.random.default_rng(102)
    worst = 0.0
    n = 150
    for _ in range(n):
        data, noise, t = instance(rng, t_max=14, extra=1)
        _, state = fit(data.window(0, t), noise)
        est, _ = update_one(state, data.rows_at(t), noise)
        ref, _ = fit(data.window(0, t + 1), noise)
        worst = max(worst, rel_err(est.vector, ref.vector),
                    abs(est.weighted_residual_sq - ref.weighted_residual_sq) / ref.weighted_residual_sq)
    k = (2, 3, 1)
    data = SurDataset(tuple(rng.standard_normal((110, ki)) for ki in k), rng.standard_normal((3, 110)))
    noise = random_noise(rng, k, "mixed")
    chain = run_filter(data, noise, t0=10).estimates[-1]
    ref, _ = fit(data, noise)
    chain_err = rel_err(chain.vector, ref.vector)
    secs = time.perf_counter() - start
    ok = worst <= 1e-8 and chain_err <= 1e-7 and secs < 120
    report(capsys, 2, ok, f"{n} single updates max rel err {worst:.1e}; "
                          f"100-step chain {chain_err:.1e}; {secs:.1f}s")


def test_criterion_03_smoothing_oracle(capsys):
    rng = np.random.default_rng(103)
    worst = 0.0
    n = 60
    for _ in range(n):
        data, noise, M = instance(rng)
        d = data.window(0, M)
        t0 = first_estimable_time(d)
        if M == t0:
            M += 1
            d = data.window(0, M) if M <= data.t else d
        run = run_filter(d, noise, t0=t0, keep_last=d.t)
        target = int(rng.integers(t0, d.t + 1))
        est = run.smooth(d, target)
        beta, _ = gls_explicit(smoothing_problem(d, target, noise))
        worst = max(worst, rel_err(est.vector, beta))
    # boundary: target M is the filtered estimate, bit for bit
    data, noise, M = instance(rng)
    run = run_filter(data, noise)
    at_end = run.smooth(data, data.t)
    filtered = _estimate_from_state(run.state)
    bitwise = all(a.tobytes() == b.tobytes() for a, b in zip(at_end.beta, filtered.beta))
    # no drift: every target gets the full-sample estimate
    still = NoiseSpec(noise.Sigma, tuple(np.zeros_like(S) for S in noise.Sigma_i))
    run0 = run_filter(data, still)
    full, _ = fit(data, still)
    flat = max(rel_err(run0.smooth(data, j).vector, full.vector) for j in range(run0.state.t - 3, data.t))
    ok = worst <= 1e-8 and bitwise and flat <= 1e-10
    report(capsys, 3, ok, f"{n} instances max rel err {worst:.1e}; boundary bitwise {bitwise}; "
                          f"zero drift {flat:.1e}")


def test_criterion_04_window(capsys):
    rng = np.random.default_rng(104)
    worst = trip = 0.0
    n = 60
    for _ in range(n):
        G = int(rng.integers(1, 4))
        k = tuple(int(v) for v in rng.integers(1, 4, size=G))
        w = int(rng.integers(max(max(k), 2) + 1, 12))
        data = SurDataset(tuple(rng.standard_normal((w + 3, ki)) for ki in k), rng.standard_normal((G, w + 3)))
        noise = random_noise(rng, k, "mixed")
        ws = open_window(data.window(0, w), noise)
        for j in range(1, 4):
            est, ws = roll_window(ws, data.rows_at(w + j - 1), [data.rows_at(j - 1)])
            ref, _ = fit(data.window(j, j + w), noise)
            worst = max(worst, rel_err(est.vector, ref.vector))
        before = ws.estimate()
        extra = [(rng.standard_normal(ki), float(rng.standard_normal())) for ki in k]
        _, grown = roll_window(ws, extra)
        after, _ = retract_latest(grown, extra)
        trip = max(trip, rel_err(after.vector, before.vector))
    ok = worst <= 1e-6 and trip <= 1e-8
    report(capsys, 4, ok, f"{n} windows x 3 slides max rel err {worst:.1e}; round trip {trip:.1e}")


def test_criterion_05_update_timing(capsys):
    start = time.perf_counter()
    desk = run_benchmark(ScenarioSpec(25, 100, s=100, mode="update"))
    ladder = [run_benchmark(ScenarioSpec(G, K, s=50, mode="update")).ratio
              for G, K in ((5, 20), (10, 40), (25, 100))]
    secs = time.perf_counter() - start
    monotone = all(a <= b for a, b in zip(ladder, ladder[1:]))
    ok = desk.recursive_seconds < desk.afresh_seconds and desk.ratio >= 2 and monotone and secs < 600
    report(capsys, 5, ok, f"(25,100) s=100 afresh {desk.afresh_seconds:.2f}s recursive "
                          f"{desk.recursive_seconds:.2f}s ratio {desk.ratio:.1f}; ladder "
                          + " <= ".join(f"{r:.1f}" for r in ladder) + f"; {secs:.0f}s")


def test_criterion_06_smoothing_timing(capsys):
    start = time.perf_counter()
    rep = run_benchmark(ScenarioSpec(25, 100, s=5, mode="smooth"))
    secs = time.perf_counter() - start
    ok = rep.recursive_seconds < rep.afresh_seconds and rep.ratio >= 2 and secs < 600
    report(capsys, 6, ok, f"(25,100) 5 targets afresh {rep.afresh_seconds:.2f}s revising "
                          f"{rep.recursive_seconds:.3f}s ratio {rep.ratio:.1f}; {secs:.0f}s")


def test_criterion_07_window_timing(capsys):
    start = time.perf_counter()
    small = run_benchmark(ScenarioSpec(10, 250, s=10, mode="window"))
    large = run_benchmark(ScenarioSpec(25, 250, s=10, mode="window"))
    secs = time.perf_counter() - start
    ok = small.ratio >= 0.8 and large.ratio >= 2 and secs < 600
    report(capsys, 7, ok, f"(10,250) ratio {small.ratio:.1f}; (25,250) ratio {large.ratio:.1f}; {secs:.0f}s")


# A prior N(0, kappa I) on the first coefficient adds kappa^-1 I of
# information, so to first order the filtered mean differs from the diffuse
# (GLS) solution by about ||P_t|| ||beta_t|| / kappa, with P_t the GLS error
# covariance of beta_t (unit observation variance). The measured error stays
# below that estimate, so twice it is used wherever it exceeds 1e-4; that only
# happens at t = t0 for nearly collinear draws.
KALMAN_FLOOR = 1e-4
KALMAN_SAFETY = 2.0


def kalman_tolerance(data, noise, est, scale):
    p = dense_problem(data.window(0, est.at_time), noise)
    P = np.linalg.inv(p.X.T @ np.linalg.solve(p.Omega, p.X))
    bound = np.linalg.norm(P, 2) * max(np.linalg.norm(est.vector), 1.0) / scale
    return max(KALMAN_FLOOR, KALMAN_SAFETY * bound)


def test_criterion_08_kalman(capsys):
    rng = np.random.default_rng(108)
    monotone, within, points, widened = True, True, 0, 0
    worst = 0.0
    for _ in range(20):
        k = int(rng.integers(1, 4))
        T = 15
        data = SurDataset((rng.standard_normal((T, k)),), rng.standard_normal((1, T)))
        noise = NoiseSpec.univariate(random_noise(rng, (k,), "full").Sigma_i[0])
        t0 = first_estimable_time(data)
        run = run_filter(data, noise, t0=t0)
        gl = np.array([e.vector for e in run.estimates])
        errs = []
        for scale in (1e4, 1e6, 1e8):
            kf = kalman_filter_diffuse(data, noise, scale)[t0 - 1:]
            errs.append(np.abs(kf - gl).max(axis=1))
        monotone &= errs[0].max() > errs[1].max() > errs[2].max()
        for est, err in zip(run.estimates, errs[-1]):
            tol = kalman_tolerance(data, noise, est, 1e8)
            within &= bool(err <= tol)
            widened += tol > KALMAN_FLOOR
            points += 1
            if tol == KALMAN_FLOOR:
                worst = max(worst, err)
    ok = within and monotone
    report(capsys, 8, ok, f"20 univariate series, {points} filtered points within tolerance {within} "
                          f"({widened} with widened bound; max err elsewhere {worst:.1e}); "
                          f"monotone in prior scale {monotone}")


def test_criterion_09_stability(capsys):
    worst, cond_min = 0.0, np.inf
    finite = True
    for seed in range(5):
        rng = np.random.default_rng(seed)
        t = 10
        X = rng.standard_normal((t, 2)) * np.array([1e4, 1e12])
        y = X @ np.array([1.0, -2.0]) + rng.standard_normal(t)
        data = SurDataset((X,), y[None])
        noise = NoiseSpec.univariate(1e-12 * np.eye(2))
        est, _ = fit(data, noise)
        p = dense_problem(data, noise)
        ref = gls_extended(p)
        finite &= bool(np.all(np.isfinite(est.vector)))
        worst = max(worst, float(np.max(np.abs(est.vector - ref) / np.abs(ref))))
        cond_min = min(cond_min, np.linalg.cond(p.Omega))
    ok = finite and worst <= 1e-4 and cond_min >= 1e12
    report(capsys, 9, ok, f"cond(Omega) >= {cond_min:.1e}; max rel err vs 60-digit oracle {worst:.1e}")


def test_criterion_10_determinism_and_persistence(capsys, tmp_path):
    spec = ScenarioSpec(3, 9, s=20, seed=2024)
    noise = default_noise(3, 3)
    runs = []
    for _ in range(2):
        data = simulate_tvp_sur(spec, noise)
        est, state = fit(data, noise)
        runs.append((est.vector.tobytes(), io.encode_state(state)))
    same = runs[0] == runs[1]
    path = tmp_path / "state.bin"
    io.save_state(path, state)
    back = io.load_state(path)["state"]
    exact = (io.encode_state(back) == runs[0][1]
             and back.L11.tobytes() == state.L11.tobytes()
             and all(a.tobytes() == b.tobytes() for a, b in zip(back.R_blocks, state.R_blocks)))
    ok = same and exact
    report(capsys, 10, ok, f"repeat run byte-identical {same}; state round trip bit-exact {exact}")
