"""Command-line interface.

Subcommands: ``simulate``, ``pathwise``, ``rate``, ``coarse-rate``,
``converge``, ``figure1``, ``figure2``.  Values may come from an INI config
file (``--config``); explicit flags override file values, and
``--dump-config`` writes the effective merged configuration back out so a
run can be reproduced exactly.  Outputs are written atomically (temp file
plus rename) with nine significant digits.

Exit status: 0 on success, 2 on a validation error (the message names the
offending field), 1 on a runtime error.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import math
import os
import sys
import tempfile

import numpy as np

from . import __version__
from .coarse import (
    FilterCoarseRate,
    GaussianCoarseModel,
    MonteCarloConfig,
    SampledCoarseRate,
    coarse_rate_along_train,
    mc_coarse_rate,
)
from .core import (
    HistoryWindows,
    read_record,
    read_train,
    write_record,
)
from .errors import CtteError, ValidationError
from .estimators import (
    DiscreteTEConfig,
    discrete_rate_convergence,
    empirical_te_rate,
    ensemble_te_rate,
)
from .figures import figure1_data, figure2_data, write_figure1_csv, write_figure2_csvs
from .models import (
    ConstantIntensity,
    GaussianModelParams,
    GaussianTargetIntensity,
    RefractoryCoarseIntensity,
    RefractoryModelParams,
    RefractorySourceIntensity,
    RefractoryTargetIntensity,
)
from .pathmeasure import cumulative_te_curve, pathwise_te
from .simulate import SimulationConfig, simulate_coupled

_FMT = "{:.9g}"

# (flag, section, key, type); the config file mirrors these as INI entries.
_CONFIG_MAP = [
    ("model", "model", "name", str),
    ("a", "model", "a", float),
    ("tau", "model", "tau", float),
    ("tau_r", "model", "tau_r", float),
    ("lambda_y", "model", "lambda_y", float),
    ("lambda_base", "model", "lambda_base", float),
    ("m", "model", "m", float),
    ("sigma", "model", "sigma", float),
    ("t_cut", "model", "t_cut", float),
    ("rate_x", "model", "rate_x", float),
    ("rate_y", "model", "rate_y", float),
    ("s", "windows", "s", str),
    ("r", "windows", "r", str),
    ("duration", "simulate", "duration", float),
    ("seed", "simulate", "seed", int),
    ("scheme", "simulate", "scheme", str),
    ("dt", "simulate", "dt", float),
    ("k_max", "montecarlo", "k_max", int),
    ("tol_k", "montecarlo", "tol_k", float),
    ("n_samples", "montecarlo", "n_samples", int),
    ("dt_int", "montecarlo", "dt_int", float),
    ("dtau_interp", "montecarlo", "dtau_interp", float),
    ("n_x", "montecarlo", "n_x_precompute", int),
    ("mc_seed", "montecarlo", "seed", int),
    ("grid_du", "montecarlo", "grid_du", float),
    ("bin_dt", "discrete", "dt", float),
    ("workers", "run", "workers", int),
]

_DEFAULTS = {
    ("model", "name"): "gaussian",
    ("windows", "s"): "inf",
    ("windows", "r"): "inf",
    ("simulate", "duration"): 100.0,
    ("simulate", "seed"): 0,
    ("simulate", "scheme"): "thinning",
    ("montecarlo", "k_max"): 12,
    ("montecarlo", "tol_k"): 1e-4,
    ("montecarlo", "n_samples"): 1000,
    ("montecarlo", "dt_int"): 1e-3,
    ("montecarlo", "dtau_interp"): 0.05,
    ("montecarlo", "n_x_precompute"): 2,
    ("montecarlo", "seed"): 0,
    ("montecarlo", "grid_du"): 0.005,
    ("run", "workers"): 1,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="ctte",
        description="Continuous-time transfer entropy for spiking processes.",
    )
    p.add_argument("--version", action="store_true", help="print version and exit")
    p.add_argument("--config", help="INI config file; flags override its values")
    p.add_argument("--dump-config", help="write the effective config to this path")
    sub = p.add_subparsers(dest="command")

    def add_common(sp, *, model=True, windows=False, mc=False, sim=False):
        if model:
            sp.add_argument("--model", choices=["gaussian", "refractory", "poisson"])
            for name in ("a", "tau", "tau-r", "lambda-y", "lambda-base", "m",
                         "sigma", "t-cut", "rate-x", "rate-y"):
                sp.add_argument(f"--{name}", type=float,
                                dest=name.replace("-", "_"))
        if windows:
            sp.add_argument("--s")
            sp.add_argument("--r")
        if mc:
            sp.add_argument("--k-max", type=int, dest="k_max")
            sp.add_argument("--tol-k", type=float, dest="tol_k")
            sp.add_argument("--n-samples", type=int, dest="n_samples")
            sp.add_argument("--dt-int", type=float, dest="dt_int")
            sp.add_argument("--dtau-interp", type=float, dest="dtau_interp")
            sp.add_argument("--n-x", type=int, dest="n_x")
            sp.add_argument("--mc-seed", type=int, dest="mc_seed")
            sp.add_argument("--grid-du", type=float, dest="grid_du")
        if sim:
            sp.add_argument("--duration", type=float)
            sp.add_argument("--seed", type=int)
            sp.add_argument("--scheme", choices=["thinning", "fixed_step"])
            sp.add_argument("--dt", type=float)
        sp.add_argument("--workers", type=int)

    sp = sub.add_parser("simulate", help="simulate a coupled record to CSV")
    add_common(sp, sim=True)
    sp.add_argument("--out", required=True)

    sp = sub.add_parser("pathwise", help="pathwise transfer entropy of a record")
    add_common(sp, windows=True, mc=True)
    sp.add_argument("--in", dest="infile", required=True)
    sp.add_argument("--start", type=float, default=0.0)
    sp.add_argument("--end", type=float, required=True)
    sp.add_argument("--grid-step", type=float, dest="grid_step", default=0.05)
    sp.add_argument("--coarse", choices=["model", "filter", "mc"], default="model")
    sp.add_argument("--prior", choices=["empty", "error"], default="empty")
    sp.add_argument("--out-dir", dest="out_dir", required=True)

    sp = sub.add_parser("rate", help="empirical or ensemble transfer entropy rate")
    add_common(sp, windows=True, mc=True, sim=True)
    sp.add_argument("--in", dest="infile")
    sp.add_argument("--start", type=float, default=0.0)
    sp.add_argument("--end", type=float)
    sp.add_argument("--n-paths", type=int, dest="n_paths")
    sp.add_argument("--coarse", choices=["model", "filter"], default="model")

    sp = sub.add_parser("coarse-rate", help="source-marginalized rate estimates")
    add_common(sp, mc=True)
    sp.add_argument("--history", help="comma-separated event times before t")
    sp.add_argument("--at", type=float, help="evaluation time t")
    sp.add_argument("--in", dest="infile", help="target train (one time per line)")
    sp.add_argument("--start", type=float, default=0.0)
    sp.add_argument("--end", type=float)
    sp.add_argument("--out", required=True)

    sp = sub.add_parser("converge", help="binned transfer entropy vs bin width")
    add_common(sp, model=False, windows=True)
    sp.add_argument("--in", dest="infile", required=True)
    sp.add_argument("--start", type=float, default=0.0)
    sp.add_argument("--end", type=float, required=True)
    sp.add_argument("--dt-list", dest="dt_list", required=True,
                    help="comma-separated decreasing bin widths")
    sp.add_argument("--out", required=True)

    sp = sub.add_parser("figure1", help="normalized rate grid data")
    add_common(sp, model=False, sim=False)
    sp.add_argument("--a-values", dest="a_values", default="0.25,0.5,0.75")
    sp.add_argument("--lam-tau-values", dest="lam_tau_values",
                    default="0.01,0.02,0.05,0.1,0.2,0.5")
    sp.add_argument("--overlay-points", dest="overlay_points",
                    help="semicolon-separated a:lambda_y_tau pairs to simulate")
    sp.add_argument("--duration", type=float, default=2e5)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out-dir", dest="out_dir", required=True)

    sp = sub.add_parser("figure2", help="annotated path decomposition data")
    add_common(sp, mc=True, sim=True)
    sp.add_argument("--grid-step", type=float, dest="grid_step", default=0.02)
    sp.add_argument("--coarse", choices=["mc", "filter"], default="mc")
    sp.add_argument("--out-dir", dest="out_dir", required=True)

    return p


def _merge_config(args) -> dict:
    """Defaults, then config-file values, then explicit flags."""
    eff = dict(_DEFAULTS)
    if getattr(args, "config", None):
        ini = configparser.ConfigParser()
        read = ini.read(args.config)
        if not read:
            raise ValidationError("config", f"cannot read {args.config!r}")
        for _, section, key, typ in _CONFIG_MAP:
            if ini.has_option(section, key):
                raw = ini.get(section, key)
                eff[(section, key)] = raw if typ is str else typ(raw)
    for flag, section, key, typ in _CONFIG_MAP:
        val = getattr(args, flag, None)
        if val is not None:
            eff[(section, key)] = val
    return eff


def _dump_config(eff: dict, path: str) -> None:
    ini = configparser.ConfigParser()
    for (section, key), val in sorted(eff.items()):
        if not ini.has_section(section):
            ini.add_section(section)
        if isinstance(val, float):
            ini.set(section, key, _FMT.format(val))
        else:
            ini.set(section, key, str(val))
    _atomic_text(path, lambda fh: ini.write(fh))


def _atomic_text(path, write_fn) -> None:
    d = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=d, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            write_fn(fh)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_csv(path, header, rows) -> None:
    def go(fh):
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_FMT.format(v) if isinstance(v, float) else v
                        for v in row])

    _atomic_text(path, go)


def _parse_depth(raw) -> float:
    if raw is None:
        return math.inf
    if isinstance(raw, str) and raw.strip().lower() in ("inf", "infinity"):
        return math.inf
    return float(raw)


def _model_params(eff):
    name = eff[("model", "name")]

    def get(key, default=None):
        v = eff.get(("model", key))
        return default if v is None else v

    if name == "gaussian":
        return name, GaussianModelParams(
            lambda_base=get("lambda_base", 0.5),
            m=get("m", 5.0),
            sigma=get("sigma", 0.1),
            t_cut=get("t_cut", 1.0),
            lambda_y=get("lambda_y", 1.0),
        )
    if name == "refractory":
        missing = [k for k in ("a", "tau", "lambda_y") if get(k) is None]
        if missing:
            raise ValidationError(missing[0], "required for the refractory model")
        return name, RefractoryModelParams(
            lambda_y=get("lambda_y"),
            a=get("a"),
            tau=get("tau"),
            tau_r=get("tau_r", get("tau")),
        )
    if name == "poisson":
        rx = get("rate_x")
        ry = get("rate_y")
        if rx is None or ry is None:
            raise ValidationError("rate_x", "poisson model needs rate_x and rate_y")
        return name, (rx, ry)
    raise ValidationError("model", f"unknown model {name!r}")


def _intensities(name, params):
    if name == "gaussian":
        return (GaussianTargetIntensity(params),
                ConstantIntensity(params.lambda_y))
    if name == "refractory":
        return (RefractoryTargetIntensity(params),
                RefractorySourceIntensity(params))
    rx, ry = params
    return ConstantIntensity(rx), ConstantIntensity(ry)


def _coarse_evaluator(kind, name, params, record, eff):
    if kind == "model":
        if name == "refractory":
            return RefractoryCoarseIntensity(params)
        if name == "poisson":
            return ConstantIntensity(params[0])
        raise ValidationError(
            "coarse", "the gaussian model has no closed-form marginal rate; "
                      "use --coarse filter or --coarse mc"
        )
    if name != "gaussian":
        raise ValidationError("coarse", f"{kind} marginalization is only "
                                        f"implemented for the gaussian model")
    if kind == "filter":
        return FilterCoarseRate(params, record.x.events, record.start_time,
                                record.end_time,
                                grid_du=eff[("montecarlo", "grid_du")])
    cfg = _mc_config(eff)
    ts, vals = coarse_rate_along_train(GaussianCoarseModel(params), record.x, cfg)
    return SampledCoarseRate(ts, vals, end_time=record.end_time)


def _mc_config(eff) -> MonteCarloConfig:
    return MonteCarloConfig(
        k_max=eff[("montecarlo", "k_max")],
        tol_k=eff[("montecarlo", "tol_k")],
        n_samples=eff[("montecarlo", "n_samples")],
        dt_int=eff[("montecarlo", "dt_int")],
        dtau_interp=eff[("montecarlo", "dtau_interp")],
        n_x_precompute=eff[("montecarlo", "n_x_precompute")],
        seed=eff[("montecarlo", "seed")],
    )


def _windows(eff) -> HistoryWindows:
    return HistoryWindows(_parse_depth(eff[("windows", "s")]),
                          _parse_depth(eff[("windows", "r")]))


def _cmd_simulate(args, eff) -> int:
    name, params = _model_params(eff)
    x_model, y_model = _intensities(name, params)
    cfg = SimulationConfig(
        duration=eff.get(("simulate", "duration")),
        seed=eff.get(("simulate", "seed")),
        scheme=eff.get(("simulate", "scheme")),
        dt=eff.get(("simulate", "dt")),
    )
    record = simulate_coupled(x_model, y_model, cfg)
    _atomic_text(args.out, lambda fh: _write_record_fh(record, fh))
    print(f"simulate: {record.x.n_events} target and {record.y.n_events} "
          f"source events on [0, {_FMT.format(cfg.duration)}) -> {args.out}")
    return 0


def _write_record_fh(record, fh) -> None:
    from .core import merge_event_streams

    w = csv.writer(fh)
    w.writerow(["time", "channel"])
    for t, tag in merge_event_streams(record):
        w.writerow([f"{t:.12g}", tag])


def _cmd_pathwise(args, eff) -> int:
    name, params = _model_params(eff)
    joint, _ = _intensities(name, params)
    record = read_record(args.infile, args.start, args.end)
    coarse = _coarse_evaluator(args.coarse, name, params, record, eff)
    windows = _windows(eff)
    grid = np.arange(args.start, args.end + 0.5 * args.grid_step, args.grid_step)
    grid = grid[grid <= args.end]
    result = pathwise_te(joint, coarse, record, windows=windows, grid=grid,
                         prior=args.prior)
    curve = cumulative_te_curve(result, grid)
    samples = dict(result.nonspiking_samples)
    os.makedirs(args.out_dir, exist_ok=True)
    _write_csv(os.path.join(args.out_dir, "te_curve.csv"),
               ["t", "te_cumulative", "nonspiking_rate"],
               [(t, c, samples[t]) for t, c in curve])
    _write_csv(os.path.join(args.out_dir, "te_jumps.csv"),
               ["t", "delta"], list(result.jump_contributions))
    print(f"pathwise: total = {_FMT.format(result.total)} nats over "
          f"{len(result.jump_contributions)} target events -> {args.out_dir}")
    return 0


def _cmd_rate(args, eff) -> int:
    name, params = _model_params(eff)
    joint, source = _intensities(name, params)
    windows = _windows(eff)
    if args.infile:
        if args.end is None:
            raise ValidationError("end", "required with --in")
        record = read_record(args.infile, args.start, args.end)
        coarse = _coarse_evaluator(args.coarse, name, params, record, eff)
        est = empirical_te_rate(record, joint, coarse, windows)
    else:
        if args.n_paths is None:
            raise ValidationError("n_paths", "give --in or --n-paths")
        kind = args.coarse
        grid_du = eff[("montecarlo", "grid_du")]

        if kind == "model":
            fixed = _coarse_evaluator("model", name, params, None, eff)

            def provider(record, _c=fixed):
                return _c
        else:
            def provider(record, _p=params, _du=grid_du):
                return FilterCoarseRate(_p, record.x.events, record.start_time,
                                        record.end_time, grid_du=_du)
        est = ensemble_te_rate(
            joint, source, provider,
            n_paths=args.n_paths,
            duration=eff.get(("simulate", "duration")),
            windows=windows,
            seed=eff.get(("simulate", "seed")),
            scheme=eff.get(("simulate", "scheme")),
            dt=eff.get(("simulate", "dt")),
            workers=eff[("run", "workers")],
        )
    print(f"rate: {_FMT.format(est.value)} +- {_FMT.format(est.stderr)} nats/s "
          f"({est.n_events} events over {_FMT.format(est.duration)} s)")
    return 0


def _cmd_coarse_rate(args, eff) -> int:
    name, params = _model_params(eff)
    if name != "gaussian":
        raise ValidationError("model", "coarse-rate is implemented for the "
                                       "gaussian model")
    model = GaussianCoarseModel(params)
    cfg = _mc_config(eff)
    if args.infile:
        if args.end is None:
            raise ValidationError("end", "required with --in")
        train = read_train(args.infile, args.start, args.end)
        ts, vals = coarse_rate_along_train(model, train, cfg)
        _write_csv(args.out, ["t", "lambda_x", "stderr"],
                   [(float(t), float(v), "") for t, v in zip(ts, vals)])
        print(f"coarse-rate: {ts.size} samples on "
              f"[{_FMT.format(args.start)}, {_FMT.format(args.end)}) -> {args.out}")
    else:
        if args.at is None:
            raise ValidationError("at", "give --at (with optional --history) "
                                        "or --in")
        hist = (np.array([float(v) for v in args.history.split(",")])
                if args.history else np.empty(0))
        est = mc_coarse_rate(model, hist, args.at, cfg)
        _write_csv(args.out, ["t", "lambda_x", "stderr"],
                   [(args.at, est.value, est.stderr)])
        print(f"coarse-rate: {_FMT.format(est.value)} +- "
              f"{_FMT.format(est.stderr)} events/s "
              f"({est.terms_used} series terms, tail {est.tail_bound:.2e}) "
              f"-> {args.out}")
    return 0


def _cmd_converge(args, eff) -> int:
    record = read_record(args.infile, args.start, args.end)
    windows = _windows(eff)
    dts = [float(v) for v in args.dt_list.split(",")]
    rows = discrete_rate_convergence(
        record, dts,
        k_of_dt=lambda dt: DiscreteTEConfig.from_windows(windows, dt).k,
        l_of_dt=lambda dt: DiscreteTEConfig.from_windows(windows, dt).l,
    )
    _write_csv(args.out, ["dt", "te_per_bin", "te_rate"], rows)
    for dt, tb, tr in rows:
        print(f"converge: dt={_FMT.format(dt)} te/bin={_FMT.format(tb)} "
              f"te/bin/dt={_FMT.format(tr)}")
    return 0


def _cmd_figure1(args, eff) -> int:
    a_vals = [float(v) for v in args.a_values.split(",")]
    lt_vals = [float(v) for v in args.lam_tau_values.split(",")]
    overlay = None
    if args.overlay_points:
        overlay = []
        for pair in args.overlay_points.split(";"):
            a, lt = pair.split(":")
            overlay.append((float(a), float(lt)))
    grid = figure1_data(a_vals, lt_vals, overlay_points=overlay,
                        overlay_duration=args.duration, seed=args.seed)
    os.makedirs(args.out_dir, exist_ok=True)
    out = os.path.join(args.out_dir, "fig1.csv")
    write_figure1_csv(grid, out)
    print(f"figure1: {len(grid.rows)} closed-form rows, "
          f"{len(grid.sim_rows)} simulated -> {out}")
    return 0


def _cmd_figure2(args, eff) -> int:
    name, params = _model_params(eff)
    if name != "gaussian":
        raise ValidationError("model", "figure2 uses the gaussian model")
    bundle = figure2_data(
        seed=eff.get(("simulate", "seed")),
        duration=eff.get(("simulate", "duration")),
        params=params,
        mc_cfg=_mc_config(eff),
        grid_step=args.grid_step,
        coarse_method=args.coarse,
        grid_du=eff[("montecarlo", "grid_du")],
    )
    os.makedirs(args.out_dir, exist_ok=True)
    write_figure2_csvs(bundle, args.out_dir)
    print(f"figure2: total = {_FMT.format(bundle.total)} nats, "
          f"{len(bundle.jumps)} jumps (seed "
          f"{bundle.metadata['seed']}, lambda_y "
          f"{_FMT.format(bundle.metadata['lambda_y'])}) -> {args.out_dir}")
    return 0


_COMMANDS = {
    "simulate": _cmd_simulate,
    "pathwise": _cmd_pathwise,
    "rate": _cmd_rate,
    "coarse-rate": _cmd_coarse_rate,
    "converge": _cmd_converge,
    "figure1": _cmd_figure1,
    "figure2": _cmd_figure2,
}


def run(argv) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.version:
        print(f"ctte {__version__} (record format v1)")
        return 0
    if args.command is None:
        parser.print_help()
        return 2
    try:
        eff = _merge_config(args)
        if args.dump_config:
            _dump_config(eff, args.dump_config)
        return _COMMANDS[args.command](args, eff)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except CtteError as exc:
        print(f"error [{args.command}]: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
