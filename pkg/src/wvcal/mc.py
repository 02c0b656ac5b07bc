"""Monte Carlo comparison of calibration estimators.

Each replication simulates one signal from its own seed stream, computes the
Allan variance once and hands the same estimate to every method, so method
comparisons are paired. Results are keyed by replication index; the summary
does not depend on worker count or completion order.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from wvcal.errors import DomainError, WvcalError
from wvcal.fit import fit_armav, fit_avsm, fit_closed_form, fit_gmwm, fit_iterative
from wvcal.fit.result import FitResult
from wvcal.model import SQUARED, CompositeModel, ScaleGrid, model_wv
from wvcal.simulate import SimConfig, simulate
from wvcal.wv import WvEstimate, estimate_wv

REPORT_NAMES = {"QN": "Q", "WN": "sigma", "BI": "B", "RW": "gamma", "DR": "omega"}
QUANTILES = (0.05, 0.25, 0.5, 0.75, 0.95)
TIE_RTOL = 1e-12


@dataclass(frozen=True)
class MethodSpec:
    name: str
    f: Optional[str] = "identity"
    omega: Optional[str] = "diag_inverse_squared"
    solver: str = "closed_form"

    def run(self, est: WvEstimate, active) -> FitResult:
        if self.solver == "two_step":
            return fit_gmwm(est, active)
        if self.solver == "avsm":
            return fit_avsm(est, active)
        if self.solver == "closed_form":
            return fit_closed_form(est, active, self.omega)
        if self.solver == "iterative":
            if self.f == "log10" and self.omega == "diag_inverse_squared":
                return fit_armav(est, active)
            return fit_iterative(est, active, self.f, self.omega)
        raise DomainError(f"unknown solver {self.solver!r}")


METHOD_PRESETS = {
    "gmwm": MethodSpec("gmwm", "identity", "optimal", "two_step"),
    "armav": MethodSpec("armav", "log10", "diag_inverse_squared", "iterative"),
    "avsm": MethodSpec("avsm", None, None, "avsm"),
    "gmwm_onestep": MethodSpec("gmwm_onestep", "identity", "diag_inverse_squared", "closed_form"),
}


def method_spec(value: Union[str, dict, MethodSpec]) -> MethodSpec:
    if isinstance(value, MethodSpec):
        return value
    if isinstance(value, str):
        try:
            return METHOD_PRESETS[value]
        except KeyError:
            raise DomainError(f"unknown method {value!r}; presets: {sorted(METHOD_PRESETS)}") from None
    return MethodSpec(**value)


def report_value(process: str, param: float) -> float:
    """Parameter on its standard-deviation scale (Q, sigma, B, gamma, omega)."""
    return param if process in SQUARED else math.sqrt(param)


@dataclass(frozen=True)
class Experiment:
    truth: CompositeModel
    T: int
    reps: int
    seed: int = 0
    methods: tuple = ("gmwm", "armav", "avsm")
    sample_rate_hz: float = 250.0
    min_coeffs: int = 16
    convention: str = "av"
    noiseless: bool = False
    rw_scheme: str = "averaged"

    def __post_init__(self):
        if self.reps < 1:
            raise DomainError("an experiment needs at least one replication")
        if not self.methods:
            raise DomainError("an experiment needs at least one method")
        specs = tuple(method_spec(m) for m in self.methods)
        names = [s.name for s in specs]
        if len(set(names)) != len(names):
            raise DomainError(f"method names must be unique, got {names}")
        object.__setattr__(self, "methods", specs)
        # validates simulatability (no BI) up front
        SimConfig(self.truth, self.T, self.seed, self.sample_rate_hz, rw_scheme=self.rw_scheme)

    @property
    def parameters(self) -> list[str]:
        return [REPORT_NAMES[k] for k in self.truth.active]

    @property
    def truth_values(self) -> np.ndarray:
        return np.array([report_value(k, v) for k, v in self.truth.params.items()])

    def grid(self) -> ScaleGrid:
        return ScaleGrid.default(self.T, self.min_coeffs)


@dataclass
class SummaryRow:
    method: str
    parameter: str
    truth: float
    n: int
    failures: int
    mean: float
    bias: float
    sd: float
    rmse: float
    quantiles: list


@dataclass
class McSummary:
    experiment: Experiment
    rows: list
    raw: dict  # method -> (reps x p) array, NaN where the fit failed
    digests: dict  # method -> list of input digests per replication
    method_errors: dict = field(default_factory=dict)

    def row(self, method: str, parameter: str) -> SummaryRow:
        for r in self.rows:
            if r.method == method and r.parameter == parameter:
                return r
        raise KeyError((method, parameter))

    def to_dict(self) -> dict:
        exp = self.experiment
        return {
            "experiment": {
                "truth": exp.truth.to_dict(),
                "T": exp.T,
                "reps": exp.reps,
                "seed": exp.seed,
                "methods": [asdict(m) for m in exp.methods],
                "sample_rate_hz": exp.sample_rate_hz,
                "convention": exp.convention,
                "noiseless": exp.noiseless,
            },
            "units": "per-sample, standard-deviation scale",
            "rows": [asdict(r) for r in self.rows],
            "method_errors": dict(self.method_errors),
        }


def _digest(arr: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(arr, dtype=np.float64).tobytes()).hexdigest()[:16]


def _replicate(exp: Experiment, rep: int):
    grid = exp.grid()
    if exp.noiseless:
        nu = model_wv(exp.truth, exp.convention, grid)
        est = WvEstimate(grid, nu, exp.convention, sample_rate_hz=exp.sample_rate_hz)
    else:
        cfg = SimConfig(exp.truth, exp.T, exp.seed, exp.sample_rate_hz, rep, exp.rw_scheme)
        est = estimate_wv(simulate(cfg), grid, exp.convention)
    active = exp.truth.active
    out = {}
    for spec in exp.methods:
        digest = _digest(est.nu_hat)
        values = np.full(len(active), np.nan)
        error = None
        try:
            res = spec.run(est, active)
            if res.converged or res.failures:
                for i, k in enumerate(active):
                    if k in res.theta_hat.params:
                        values[i] = report_value(k, res.theta_hat[k])
            else:
                error = "not converged"
        except WvcalError as exc:
            error = str(exc)
        out[spec.name] = (values, error, digest)
    return out


def _replicate_star(args):
    return _replicate(*args)


def worker_count(default: int = 1) -> int:
    try:
        return max(1, int(os.environ.get("WVCAL_THREADS", default)))
    except ValueError:
        return default


def _summarize_column(values: np.ndarray, truth: float):
    ok = values[np.isfinite(values)]
    n = ok.size
    if n == 0:
        return None
    mean = float(ok.mean())
    bias = mean - truth
    sd = float(ok.std(ddof=1)) if n > 1 else 0.0
    rmse = float(np.sqrt(np.mean((ok - truth) ** 2)))
    qs = [float(q) for q in np.quantile(ok, QUANTILES)]
    return n, mean, bias, sd, rmse, qs


def summarize(exp: Experiment, per_rep: Sequence[dict]) -> McSummary:
    names = [m.name for m in exp.methods]
    raw = {n: np.array([rep[n][0] for rep in per_rep]) for n in names}
    digests = {n: [rep[n][2] for rep in per_rep] for n in names}
    truth = exp.truth_values
    rows, errors = [], {}
    for n in names:
        if not np.any(np.isfinite(raw[n])):
            first = next((rep[n][1] for rep in per_rep if rep[n][1]), "no estimates")
            errors[n] = f"all replications failed: {first}"
        for i, par in enumerate(exp.parameters):
            col = raw[n][:, i]
            stats = _summarize_column(col, truth[i])
            fails = int(np.sum(~np.isfinite(col)))
            if stats is None:
                nan = float("nan")
                rows.append(SummaryRow(n, par, float(truth[i]), 0, fails, nan, nan, nan, nan, [nan] * len(QUANTILES)))
                continue
            cnt, mean, bias, sd, rmse, qs = stats
            rows.append(SummaryRow(n, par, float(truth[i]), cnt, fails, mean, bias, sd, rmse, qs))
    return McSummary(exp, rows, raw, digests, errors)


def run_experiment(exp: Experiment, workers: Optional[int] = None) -> McSummary:
    workers = workers or worker_count()
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            per_rep = list(
                pool.map(_replicate_star, [(exp, r) for r in range(exp.reps)], chunksize=4)
            )
    else:
        per_rep = [_replicate(exp, r) for r in range(exp.reps)]
    return summarize(exp, per_rep)


def compare_methods(summary: McSummary) -> dict:
    """Per-parameter ranking by RMSE; equal RMSEs (to 1e-12 relative) share a rank."""
    table = {}
    for par in summary.experiment.parameters:
        rows = [r for r in summary.rows if r.parameter == par]
        key = [(math.inf if not math.isfinite(r.rmse) else r.rmse, r.method) for r in rows]
        key.sort()
        ranking, rank, prev = [], 0, None
        for i, (rmse, method) in enumerate(key):
            tied = prev is not None and (
                rmse == prev or (math.isfinite(rmse) and abs(rmse - prev) <= TIE_RTOL * max(abs(rmse), abs(prev)))
            )
            if not tied:
                rank = i + 1
            ranking.append({"rank": rank, "method": method, "rmse": rmse, "tie": tied})
            if tied:
                ranking[-2]["tie"] = True
            prev = rmse
        table[par] = ranking
    return table


def ranking_confidence(
    summary: McSummary,
    better: str,
    worse: str,
    parameter: str,
    n_boot: int = 1000,
    seed: int = 0,
) -> float:
    """Share of paired replication resamples in which ``better`` has RMSE <= ``worse``.

    A method with no successful fit inside a resample counts as infinite RMSE.
    """
    i = summary.experiment.parameters.index(parameter)
    truth = summary.experiment.truth_values[i]
    a = summary.raw[better][:, i]
    b = summary.raw[worse][:, i]
    reps = a.size
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    wins = 0
    for _ in range(n_boot):
        idx = rng.integers(0, reps, reps)
        wins += _rmse(a[idx], truth) <= _rmse(b[idx], truth)
    return wins / n_boot


def _rmse(values: np.ndarray, truth: float) -> float:
    ok = values[np.isfinite(values)]
    if ok.size == 0:
        return math.inf
    return float(np.sqrt(np.mean((ok - truth) ** 2)))


def _fmt(x) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    return format(float(x), ".17g")


def emit_figure_data(summary: McSummary, out_dir) -> dict:
    """Write boxplot and RMSE tables plus the JSON summary; returns the paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "boxplot": out / "boxplot.csv",
        "rmse": out / "rmse.csv",
        "summary": out / "summary.json",
    }
    pars = summary.experiment.parameters
    with open(paths["boxplot"], "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["method", "parameter", "replication", "estimate"])
        for m in summary.experiment.methods:
            arr = summary.raw[m.name]
            for i, par in enumerate(pars):
                for r in range(arr.shape[0]):
                    w.writerow([m.name, par, r, _fmt(arr[r, i])])
    with open(paths["rmse"], "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["method", "parameter", "bias", "sd", "rmse", "failures"])
        for r in summary.rows:
            w.writerow([r.method, r.parameter, _fmt(r.bias), _fmt(r.sd), _fmt(r.rmse), r.failures])
    with open(paths["summary"], "w", encoding="utf-8") as fh:
        json.dump(_json_safe(summary.to_dict()), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return paths


def _json_safe(obj):
    if isinstance(obj, float):
        return None if not math.isfinite(obj) else obj
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    return obj


def read_rmse_csv(path) -> dict:
    """Parse an emitted RMSE table back into ``{(method, parameter): row}``."""
    out = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for rec in csv.DictReader(fh):
            out[(rec["method"], rec["parameter"])] = {
                "bias": float(rec["bias"]) if rec["bias"] else float("nan"),
                "sd": float(rec["sd"]) if rec["sd"] else float("nan"),
                "rmse": float(rec["rmse"]) if rec["rmse"] else float("nan"),
                "failures": int(rec["failures"]),
            }
    return out


def experiment_from_dict(data: dict) -> Experiment:
    """Build an experiment from its JSON description.

    ``truth`` is either a per-sample model (``{"processes": {"WN": {"sigma2": ...}}}``)
    or, with ``"units": "physical"``, a physical description as accepted by
    :class:`wvcal.units.PhysicalModel` (``sample_rate_hz`` defaults to the
    experiment's).
    """
    from wvcal.units import PhysicalModel

    try:
        fs = float(data.get("sample_rate_hz", 250.0))
        truth_desc = data["truth"]
        if data.get("units", "per-sample") == "physical":
            truth_desc = dict(truth_desc)
            truth_desc.setdefault("sample_rate_hz", fs)
            truth = PhysicalModel.from_dict(truth_desc).to_model()
        else:
            truth = CompositeModel.from_dict(truth_desc)
        return Experiment(
            truth=truth,
            T=int(data["T"]),
            reps=int(data["reps"]),
            seed=int(data.get("seed", 0)),
            methods=tuple(data.get("methods", ("gmwm", "armav", "avsm"))),
            sample_rate_hz=fs,
            min_coeffs=int(data.get("min_coeffs", 16)),
            convention=data.get("convention", "av"),
            noiseless=bool(data.get("noiseless", False)),
        )
    except KeyError as exc:
        raise DomainError(f"experiment spec is missing {exc}") from None
