"""Command-line front end.

Exit codes: 0 success, 1 usage or invalid value, 2 fit did not converge,
3 scale/rank/identifiability problem, 4 input/output error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Optional, Sequence

from wvcal import io
from wvcal.errors import WvcalError
from wvcal.fit import fit_armav, fit_avsm, fit_gmwm
from wvcal.mc import compare_methods, emit_figure_data, experiment_from_dict, run_experiment, worker_count
from wvcal.model import DEFAULT_MIN_COEFFS, ScaleGrid, template_processes
from wvcal.simulate import SimConfig, simulate, simulate_components
from wvcal.units import PhysicalModel, convert_units
from wvcal.wv import estimate_wv, with_covariance, wv_confidence, wv_covariance

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NOT_CONVERGED = 2
EXIT_IDENTIFIABILITY = 3
EXIT_IO = 4

FITTERS = {"gmwm": fit_gmwm, "armav": fit_armav, "avsm": fit_avsm}


class UsageError(WvcalError):
    exit_code = EXIT_USAGE


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def parse_levels(text: str) -> tuple[int, ...]:
    """``"3"``, ``"1-8"`` or ``"1,2,5"``."""
    try:
        if "-" in text:
            lo, hi = text.split("-", 1)
            return tuple(range(int(lo), int(hi) + 1))
        return tuple(int(t) for t in text.split(","))
    except ValueError:
        raise UsageError(f"cannot parse levels {text!r}; use e.g. 3, 1-8 or 1,2,5") from None


def _grid(T: int, levels: Optional[str], min_coeffs: int) -> ScaleGrid:
    if levels:
        return ScaleGrid(parse_levels(levels), T)
    return ScaleGrid.default(T, min_coeffs)


def _say(msg: str) -> None:
    print(msg, file=sys.stderr)


# -- subcommands -------------------------------------------------------------


def cmd_simulate(args) -> int:
    data = io.read_json(args.model)
    model = io.model_from_dict(data)
    fs = args.fs if args.fs is not None else float(data.get("sample_rate_hz", 1.0))
    cfg = SimConfig(model, args.T, args.seed, fs, args.replication, args.rw_scheme)
    meta = {"seed": args.seed, "replication": args.replication, "model": model.to_dict()}
    io.write_signal(args.out, simulate(cfg), meta)
    if args.components:
        base = Path(args.out)
        for proc, sig in simulate_components(cfg).items():
            io.write_signal(base.with_name(f"{base.stem}.{proc}{base.suffix}"), sig, meta)
    return EXIT_OK


def _estimate_from_signal(args, cov_method: Optional[str]):
    signal = io.read_signal(args.inp, args.fs)
    grid = _grid(signal.T, args.levels, args.min_coeffs)
    convention = args.convention or "av"
    est = estimate_wv(signal, grid, convention)
    if cov_method and cov_method != "none":
        cov = wv_covariance(
            signal, grid, cov_method, convention, resamples=args.resamples, seed=args.seed, estimate=est
        )
        est = with_covariance(est, cov)
    return est


def cmd_wv(args) -> int:
    est = _estimate_from_signal(args, args.cov)
    if est.cov_hat is not None:
        est = wv_confidence(est, args.ci)
    io.write_wv(args.out, est, {"cov_method": args.cov})
    return EXIT_OK


def cmd_fit(args) -> int:
    if args.wv:
        est = io.read_wv(args.wv, args.convention)
    else:
        est = _estimate_from_signal(args, args.cov)
        if est.cov_hat is not None:
            est = wv_confidence(est, args.ci)
    active = template_processes(io.read_json(args.model_template))
    result = FITTERS[args.method](est, active)
    io.write_report(args.out, result)
    if args.plot_data:
        io.write_plot_data(args.plot_data, result)
    if result.failures:
        for proc, why in result.failures.items():
            _say(f"warning: {proc} not identified: {why}")
        return EXIT_IDENTIFIABILITY
    if not result.converged:
        _say("warning: optimizer did not converge; report written with converged=false")
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def cmd_mc(args) -> int:
    exp = experiment_from_dict(io.read_json(args.spec))
    summary = run_experiment(exp, workers=args.workers or worker_count())
    paths = emit_figure_data(summary, args.out)
    if len(exp.methods) > 1:
        ranking = compare_methods(summary)
        io.write_json(Path(args.out) / "ranking.json", ranking)
    for method, why in summary.method_errors.items():
        _say(f"warning: {method}: {why}")
    _say(f"wrote {', '.join(str(p) for p in paths.values())}")
    return EXIT_OK


def cmd_convert_units(args) -> int:
    if args.model:
        phys = PhysicalModel.from_dict(io.read_json(args.model))
        model = phys.to_model()
        if args.out:
            io.write_model(args.out, model)
        else:
            print(json.dumps(model.to_dict(), indent=2, sort_keys=True))
        return EXIT_OK
    missing = [n for n in ("process", "value", "unit", "fs") if getattr(args, n) is None]
    if missing:
        raise UsageError(f"convert-units needs --model or all of {['--' + m for m in missing]}")
    print(io.fmt(convert_units(args.value, args.process, args.direction, args.unit, args.fs)))
    return EXIT_OK


# -- parser ------------------------------------------------------------------


def _signal_options(p, cov_default: str) -> None:
    p.add_argument("--fs", type=float, help="sample rate in Hz (else read from the sidecar JSON)")
    p.add_argument("--convention", choices=["av", "wv"], help="default: av (or the --wv sidecar's)")
    p.add_argument("--levels", help="levels to compute, e.g. 1-10 or 1,2,3 (default: all with enough coefficients)")
    p.add_argument("--min-coeffs", type=int, default=DEFAULT_MIN_COEFFS)
    p.add_argument(
        "--cov",
        default=cov_default,
        choices=["auto", "bootstrap", "diag", "edof", "none"],
        help="covariance of the variance estimates",
    )
    p.add_argument("--resamples", type=int, default=200, help="bootstrap resamples")
    p.add_argument("--seed", type=int, default=0, help="bootstrap seed")
    p.add_argument("--ci", type=float, default=0.95, help="confidence level of the intervals")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="wvcal", description="Inertial sensor noise calibration by Allan/wavelet variance moments.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("simulate", help="simulate a composite noise signal")
    p.add_argument("--model", required=True, help="model JSON (per-sample or physical units)")
    p.add_argument("--T", type=int, required=True, help="number of samples")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--replication", type=int, default=0)
    p.add_argument("--fs", type=float, help="sample rate in Hz (default: model file's, else 1)")
    p.add_argument("--rw-scheme", default="averaged", choices=["averaged", "cumsum"])
    p.add_argument("--components", action="store_true", help="also write one CSV per process")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("wv", help="empirical Allan / Haar wavelet variance")
    p.add_argument("--in", dest="inp", required=True)
    _signal_options(p, "auto")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_wv)

    p = sub.add_parser("fit", help="fit a composite model")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--in", dest="inp", help="signal CSV")
    src.add_argument("--wv", help="variance CSV written by 'wv'")
    _signal_options(p, "none")
    p.add_argument("--model-template", required=True, help="JSON naming the processes to fit")
    p.add_argument("--method", default="gmwm", choices=sorted(FITTERS))
    p.add_argument("--out", required=True)
    p.add_argument("--plot-data", help="CSV with empirical and fitted variance per level")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("mc", help="Monte Carlo comparison of estimators")
    p.add_argument("--spec", required=True, help="experiment JSON")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--workers", type=int, help="worker processes (default: WVCAL_THREADS or 1)")
    p.set_defaults(func=cmd_mc)

    p = sub.add_parser("convert-units", help="physical <-> per-sample coefficients")
    p.add_argument("--model", help="physical model JSON to convert to a per-sample model")
    p.add_argument("--out", help="where to write the converted model (default: stdout)")
    p.add_argument("--process", choices=["QN", "WN", "BI", "RW", "DR"])
    p.add_argument("--value", type=float)
    p.add_argument("--unit")
    p.add_argument("--fs", type=float)
    p.add_argument("--direction", default="to_sample", choices=["to_sample", "to_physical"])
    p.set_defaults(func=cmd_convert_units)
    return parser


def run_cli(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not getattr(args, "func", None):
            raise UsageError(parser.format_usage().strip())
        return args.func(args)
    except WvcalError as exc:
        _say(f"error: {exc}")
        return exc.exit_code
    except (OSError, UnicodeDecodeError) as exc:
        _say(f"error: {exc}")
        return EXIT_IO


def main() -> None:
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
