"""Command line front end.

    tvpsur simulate --G 2 --K 4 --T 40 --out data.csv
    tvpsur fit --data data.csv --state-noise 0.01 --state fit.state
    tvpsur update --state fit.state --data next.csv
    tvpsur smooth --state fit.state --data data.csv --target 35
    tvpsur fit --data data.csv --state-noise 0.01 --window-length 20 --state win.state
    tvpsur roll --state win.state --data next.csv
    tvpsur bench --mode update --scenario 25,100 --s 100

Estimates go to stdout (a table, or JSON lines with ``--format records``)
and, with ``--out``, to a JSON file. Errors are written to stderr as a JSON
object with ``error`` and ``message``; exit codes are 0 (success), 2 (usage),
3 (numerical) and 4 (input, output or state file).
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import bench, io
from .errors import DimensionMismatch, InvalidTarget, TvpError, WindowTooShort
from .estimator import (
    FilterRun,
    FilterState,
    WindowState,
    _estimate_from_state,
    fit,
    open_window,
    retract_latest,
    roll_window,
    run_filter,
    update_one,
)
from .model import NoiseSpec, first_estimable_time

DEFAULTS = {
    "seed": 0,
    "tol": 1e-6,
    "format": "table",
    "snapshots": 32,
    "obs_noise": 1.0,
}


class UsageError(TvpError):
    code = "UsageError"
    exit_code = 2


def _add_common(p):
    p.add_argument("--config", help="JSON file of option values; flags take precedence")
    p.add_argument("--data", help="CSV dataset (time, regression_id, y, x1..xk)")
    p.add_argument("--state", help="state file")
    p.add_argument("--out", help="write results as JSON to this file")
    p.add_argument("--seed", type=int)
    p.add_argument("--tol", type=float)
    p.add_argument("--format", choices=["table", "records"])


def _add_noise(p):
    p.add_argument("--noise", help="JSON file with Sigma and Sigma_i")
    p.add_argument("--state-noise", type=float, help="shorthand Sigma_i = c I")
    p.add_argument("--obs-noise", type=float, help="shorthand Sigma = c I")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tvpsur", description="Time-varying-parameter SUR estimation.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="write a synthetic dataset")
    _add_common(p)
    _add_noise(p)
    p.add_argument("--G", type=int)
    p.add_argument("--K", type=int)
    p.add_argument("--T", type=int)

    p = sub.add_parser("fit", help="estimate from scratch and save the state")
    _add_common(p)
    _add_noise(p)
    p.add_argument("--window-length", type=int, help="keep a rolling window of this many points")
    p.add_argument("--snapshots", type=int, help="filter states kept for smoothing")

    p = sub.add_parser("update", help="absorb new time points into a saved state")
    _add_common(p)

    p = sub.add_parser("smooth", help="smoothed estimate at an earlier time")
    _add_common(p)
    p.add_argument("--target", type=int)

    p = sub.add_parser("roll", help="slide a saved window forward")
    _add_common(p)
    p.add_argument("--drop", type=int, help="oldest points to delete (default: one per added point)")
    p.add_argument("--retract", action="store_true", help="remove the newest point instead")

    p = sub.add_parser("bench", help="afresh versus recursive timings")
    _add_common(p)
    p.add_argument("--mode", choices=list(bench.MODES))
    p.add_argument("--scenario", action="append", help="G,K pair; repeatable")
    p.add_argument("--s", type=int)
    p.add_argument("--t0", type=int)
    p.add_argument("--length", type=int)
    p.add_argument("--repeats", type=int)
    p.add_argument("--allow-large", action="store_true")
    return parser


def _resolve(args) -> dict:
    """Merge config file, flags and defaults (flags win)."""
    cfg = dict(DEFAULTS)
    if getattr(args, "config", None):
        try:
            with open(args.config) as fh:
                file_cfg = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise io.DataFormatError(f"config: {exc}") from None
        if not isinstance(file_cfg, dict):
            raise io.DataFormatError("config must be a JSON object")
        cfg.update({k.replace("-", "_"): v for k, v in file_cfg.items()})
    for k, v in vars(args).items():
        if v is not None and v is not False:
            cfg[k] = v
    if cfg.get("tol", 1) <= 0:
        raise UsageError("--tol must be positive")
    return cfg


def _need(cfg, *keys):
    for k in keys:
        if cfg.get(k) is None:
            raise UsageError(f"--{k.replace('_', '-')} is required")


def _noise_for(cfg, k) -> NoiseSpec:
    if cfg.get("noise"):
        noise = io.read_noise(cfg["noise"])
        noise.check(k)
        return noise
    if cfg.get("state_noise") is None:
        raise UsageError("give --noise FILE or --state-noise c")
    return NoiseSpec.isotropic(cfg["obs_noise"] * np.eye(len(k)), k, cfg["state_noise"])


def _estimate_record(est) -> dict:
    return {"at_time": est.at_time, "conditioned_on": est.conditioned_on,
            "weighted_residual_sq": est.weighted_residual_sq,
            "beta": [b.tolist() for b in est.beta]}


def _emit(cfg, records, table: str) -> None:
    if cfg["format"] == "records":
        for r in records:
            print(json.dumps(r, sort_keys=True))
    else:
        print(table)
    if cfg.get("out"):
        with open(cfg["out"], "w") as fh:
            json.dump(records if len(records) != 1 else records[0], fh, sort_keys=True, indent=1)
            fh.write("\n")


def _estimate_table(est) -> str:
    lines = [f"t={est.at_time} given {est.conditioned_on}  weighted residual {est.weighted_residual_sq:.6g}"]
    for i, b in enumerate(est.beta):
        lines.append(f"  regression {i}: " + " ".join(f"{v: .6g}" for v in b))
    return "\n".join(lines)


def _show_estimate(cfg, est):
    _emit(cfg, [_estimate_record(est)], _estimate_table(est))


# ---------------------------------------------------------------------------
# subcommands


def cmd_simulate(cfg) -> None:
    _need(cfg, "G", "K", "T", "out")
    G, K, T = cfg["G"], cfg["K"], cfg["T"]
    spec = bench.ScenarioSpec(G, K, t0=T, s=1, seed=cfg["seed"])
    noise = _noise_for(cfg, (spec.k,) * G) if (cfg.get("noise") or cfg.get("state_noise") is not None) \
        else bench.default_noise(G, spec.k)
    data = bench.simulate_tvp_sur(spec, noise, T=T)
    io.write_dataset(cfg["out"], data)
    print(f"wrote {T} time points for {G} regressions to {cfg['out']}")


def cmd_fit(cfg) -> None:
    _need(cfg, "data", "state")
    data, _ = io.read_dataset(cfg["data"])
    noise = _noise_for(cfg, data.k)
    w = cfg.get("window_length")
    with io.locked(cfg["state"]):
        if w:
            if w > data.t:
                raise UsageError(f"window of {w} points but only {data.t} in the data")
            window = data.window(data.t - w, data.t)
            ws = open_window(window, noise, start=data.t - w)
            est = ws.estimate()
            io.save_state(cfg["state"], ws, window_data=window)
        else:
            t0 = first_estimable_time(data)
            keep = cfg["snapshots"]
            if t0 is None or data.t - t0 + 1 <= 1 or keep <= 1:
                est, state = fit(data, noise)
                snaps = [state]
            else:
                # fit where the last `keep` snapshots start, then filter to the end
                start = max(t0, data.t - keep + 1)
                run = run_filter(data, noise, t0=start, keep_last=keep)
                state, est = run.state, run.estimates[-1]
                snaps = [run.snapshots[t] for t in sorted(run.snapshots)]
            io.save_state(cfg["state"], state, snapshots=snaps)
    _show_estimate(cfg, est)


def _load(cfg, kind):
    loaded = io.load_state(cfg["state"])
    want = FilterState if kind == "filter" else WindowState
    if not isinstance(loaded["state"], want):
        raise UsageError(f"state file holds a {type(loaded['state']).__name__}, command needs a {want.__name__}")
    return loaded


def _new_rows(cfg, k):
    try:
        data, _ = io.read_dataset(cfg["data"])
    except io.EmptyDataset:
        raise UsageError("no new rows") from None
    if data.k != tuple(k):
        raise DimensionMismatch(f"new rows have k={data.k}, state has k={tuple(k)}")
    return data


def cmd_update(cfg) -> None:
    _need(cfg, "state", "data")
    with io.locked(cfg["state"]):
        loaded = _load(cfg, "filter")
        state = loaded["state"]
        new = _new_rows(cfg, state.k)
        snaps = list(loaded["snapshots"])
        for s in range(new.t):
            est, state = update_one(state, new.rows_at(s))
            snaps.append(state)
        keep = cfg["snapshots"]
        io.save_state(cfg["state"], state, snapshots=snaps[-keep:])
    _show_estimate(cfg, est)


def cmd_smooth(cfg) -> None:
    _need(cfg, "state", "data", "target")
    loaded = _load(cfg, "filter")
    state = loaded["state"]
    data, _ = io.read_dataset(cfg["data"])
    target = cfg["target"]
    if data.t != state.t:
        raise UsageError(f"dataset has {data.t} time points, state is at {state.t}")
    if target > state.t or target < 1:
        raise InvalidTarget(f"target {target} outside 1..{state.t}")
    if target == state.t:
        est = _estimate_from_state(state)
    else:
        run = FilterRun(state, [], {s.t: s for s in loaded["snapshots"]})
        est = run.smooth(data, target)
    _show_estimate(cfg, est)


def cmd_roll(cfg) -> None:
    _need(cfg, "state")
    with io.locked(cfg["state"]):
        loaded = _load(cfg, "window")
        ws, window = loaded["state"], loaded["window_data"]
        if cfg.get("retract"):
            est, ws = retract_latest(ws, window.rows_at(window.t - 1))
            window = window.window(0, window.t - 1)
        else:
            _need(cfg, "data")
            new = _new_rows(cfg, ws.k)
            n_drop = cfg.get("drop", new.t)
            if window.t + new.t - n_drop < max(max(ws.k), 2):
                raise WindowTooShort(f"window would keep {window.t + new.t - n_drop} points")
            if n_drop < 0 or n_drop > window.t:
                raise UsageError(f"cannot drop {n_drop} of {window.t} points")
            for s in range(new.t):
                est, ws = roll_window(ws, new.rows_at(s))
                window = window.extend(new.rows_at(s))
            drops = [window.rows_at(j) for j in range(n_drop)]
            est, ws = roll_window(ws, None, drops)
            window = window.window(n_drop, window.t)
        io.save_state(cfg["state"], ws, window_data=window)
    _show_estimate(cfg, est)


DESK = {"update": [(25, 100)], "smooth": [(25, 100)], "window": [(10, 250), (25, 250)]}


def cmd_bench(cfg) -> None:
    mode = cfg.get("mode", "update")
    pairs = cfg.get("scenario") or [f"{g},{k}" for g, k in DESK[mode]]
    reports = []
    for pair in pairs:
        try:
            G, K = (int(v) for v in str(pair).split(","))
        except ValueError:
            raise UsageError(f"--scenario expects G,K, got {pair!r}") from None
        spec = bench.ScenarioSpec(G, K, t0=cfg.get("t0"), s=cfg.get("s", 5 if mode == "smooth" else 100),
                                  mode=mode, seed=cfg["seed"], length=cfg.get("length"),
                                  repeats=cfg.get("repeats", 3))
        reports.append(bench.run_benchmark(spec, allow_large=bool(cfg.get("allow_large")), tol=cfg["tol"]))
    records = [r.record() for r in reports]
    if cfg["format"] == "records":
        for r in records:
            print(json.dumps(r, sort_keys=True))
    else:
        print(bench.format_table(reports))
    if cfg.get("out"):
        with open(cfg["out"], "w") as fh:
            for r in records:
                fh.write(json.dumps(r, sort_keys=True) + "\n")


COMMANDS = {
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "update": cmd_update,
    "smooth": cmd_smooth,
    "roll": cmd_roll,
    "bench": cmd_bench,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _resolve(args)
        COMMANDS[args.command](cfg)
    except TvpError as exc:
        sys.stderr.write(json.dumps({"error": exc.code, "message": str(exc)}) + "\n")
        return exc.exit_code
    except OSError as exc:
        sys.stderr.write(json.dumps({"error": "IOError", "message": str(exc)}) + "\n")
        return 4
    return 0


if __name__ == "__main__":
    sys.exit(main())
