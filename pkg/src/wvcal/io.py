"""File formats: signal and wavelet-variance CSVs, model and report JSON.

Floating-point values in CSV output are written with 17 significant digits;
JSON uses Python's shortest round-trip representation. Both re-parse to the
identical doubles.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Optional, Union

import numpy as np

from wvcal.errors import DomainError, InputFormatError
from wvcal.fit.result import FitResult
from wvcal.model import CompositeModel, Convention, ScaleGrid
from wvcal.units import PhysicalModel
from wvcal.wv import Signal, WvEstimate

PathLike = Union[str, Path]

WV_COLUMNS = ("level", "half_window_samples", "tau_seconds", "nu_hat", "n_coeff", "ci_lo", "ci_hi")
PLOT_COLUMNS = ("level", "tau_seconds", "nu_hat", "ci_lo", "ci_hi", "fitted")


def fmt(x) -> str:
    if x is None:
        return ""
    x = float(x)
    if math.isnan(x):
        return ""
    return format(x, ".17g")


def sidecar_path(path: PathLike) -> Path:
    """``data/x.csv`` -> ``data/x.json``."""
    return Path(path).with_suffix(".json")


def _read_text(path: PathLike) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise InputFormatError(f"{path}: not UTF-8 text ({exc.reason})") from None


def read_json(path: PathLike) -> dict:
    text = _read_text(path)
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputFormatError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from None
    if not isinstance(data, dict):
        raise InputFormatError(f"{path}: expected a JSON object")
    return data


def write_json(path: PathLike, data: dict) -> None:
    Path(path).write_text(json.dumps(_finite(data), indent=2) + "\n", encoding="utf-8")


def _finite(obj):
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {k: _finite(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _finite(obj.tolist())
    if isinstance(obj, np.generic):
        return _finite(obj.item())
    return obj


# -- signals -----------------------------------------------------------------


def parse_signal_values(text: str, source: str = "<input>") -> np.ndarray:
    """Parse one value per line; an optional ``value`` header may open the file."""
    values = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if lineno == 1 and line.strip('"').lower() == "value":
            continue
        if "," in line:
            raise InputFormatError(f"{source}: line {lineno}: expected a single column, got {line!r}")
        try:
            v = float(line)
        except ValueError:
            raise InputFormatError(f"{source}: line {lineno}: not a number: {line!r}") from None
        if not math.isfinite(v):
            raise InputFormatError(f"{source}: line {lineno}: non-finite value {line!r}")
        values.append(v)
    if not values:
        raise InputFormatError(f"{source}: no samples")
    return np.array(values, dtype=np.float64)


def resolve_sample_rate(path: PathLike, flag: Optional[float]) -> float:
    """Sample rate from the command-line flag, else the sidecar JSON."""
    if flag is not None:
        return float(flag)
    side = sidecar_path(path)
    if side.exists():
        meta = read_json(side)
        if "sample_rate_hz" in meta:
            return float(meta["sample_rate_hz"])
    raise DomainError(
        f"no sample rate for {path}: pass --fs or provide {side} with 'sample_rate_hz'"
    )


def read_signal(path: PathLike, sample_rate_hz: Optional[float] = None) -> Signal:
    fs = resolve_sample_rate(path, sample_rate_hz)
    values = parse_signal_values(_read_text(path), str(path))
    return Signal(values, fs)


def write_signal(path: PathLike, signal: Signal, meta: Optional[dict] = None) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("value\n")
        fh.writelines(fmt(v) + "\n" for v in signal.values)
    side = {"sample_rate_hz": signal.sample_rate_hz, "T": signal.T}
    side.update(meta or {})
    write_json(sidecar_path(path), side)


# -- wavelet variance --------------------------------------------------------


def write_wv(path: PathLike, est: WvEstimate, meta: Optional[dict] = None) -> None:
    taus = est.taus
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(WV_COLUMNS)
        for i, level in enumerate(est.levels):
            w.writerow(
                [
                    level,
                    int(est.grid.half_windows[i]),
                    fmt(taus[i]),
                    fmt(est.nu_hat[i]),
                    int(est.coeff_counts[i]),
                    fmt(None if est.ci_lo is None else est.ci_lo[i]),
                    fmt(None if est.ci_hi is None else est.ci_hi[i]),
                ]
            )
    side = {
        "convention": est.convention.value,
        "sample_rate_hz": est.sample_rate_hz,
        "T": est.grid.T,
        "cov_hat": None if est.cov_hat is None else est.cov_hat.tolist(),
    }
    side.update(meta or {})
    write_json(sidecar_path(path), side)


def read_wv(path: PathLike, convention: Optional[str] = None) -> WvEstimate:
    """Read a variance table written by :func:`write_wv`.

    The sidecar JSON supplies the convention and covariance when present;
    without it the signal length is recovered from ``n_coeff`` and the sample
    rate from ``tau_seconds``.
    """
    rows = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        missing = {"level", "nu_hat", "n_coeff"} - set(reader.fieldnames or ())
        if missing:
            raise InputFormatError(f"{path}: missing columns {sorted(missing)}")
        for lineno, rec in enumerate(reader, start=2):
            try:
                rows.append(
                    (
                        int(rec["level"]),
                        float(rec["nu_hat"]),
                        int(rec["n_coeff"]),
                        _opt_float(rec.get("tau_seconds")),
                        _opt_float(rec.get("ci_lo")),
                        _opt_float(rec.get("ci_hi")),
                    )
                )
            except (TypeError, ValueError):
                raise InputFormatError(f"{path}: line {lineno}: malformed row") from None
    if not rows:
        raise InputFormatError(f"{path}: no levels")
    levels = [r[0] for r in rows]
    Ts = {n + 2 ** (j + 1) - 1 for j, _, n, *_ in rows}
    if len(Ts) != 1:
        raise InputFormatError(f"{path}: coefficient counts imply different signal lengths {sorted(Ts)}")
    T = Ts.pop()
    side = sidecar_path(path)
    meta = read_json(side) if side.exists() else {}
    conv = Convention.parse(convention or meta.get("convention", "av"))
    fs = meta.get("sample_rate_hz")
    if fs is None:
        tau0 = rows[0][3]
        fs = 2 ** levels[0] / tau0 if tau0 else 1.0
    grid = ScaleGrid(tuple(levels), T)
    nu = np.array([r[1] for r in rows])
    cov = meta.get("cov_hat")
    lo = [r[4] for r in rows]
    hi = [r[5] for r in rows]
    has_ci = all(v is not None for v in lo + hi)
    return WvEstimate(
        grid,
        nu,
        conv,
        cov_hat=None if cov is None else np.array(cov, dtype=float),
        ci_lo=np.array(lo) if has_ci else None,
        ci_hi=np.array(hi) if has_ci else None,
        sample_rate_hz=float(fs),
    )


def _opt_float(text) -> Optional[float]:
    if text is None or text.strip() == "":
        return None
    return float(text)


# -- models and reports ------------------------------------------------------


def model_from_dict(data: dict) -> CompositeModel:
    """Per-sample model, or a physical one when process entries carry units."""
    procs = data.get("processes")
    if isinstance(procs, dict) and any(isinstance(v, dict) and "unit" in v for v in procs.values()):
        return PhysicalModel.from_dict(data).to_model()
    return CompositeModel.from_dict(data)


def read_model(path: PathLike) -> tuple[CompositeModel, Convention]:
    data = read_json(path)
    return model_from_dict(data), Convention.parse(data.get("convention", "av"))


def write_model(path: PathLike, model: CompositeModel, convention="av") -> None:
    data = model.to_dict()
    data["convention"] = Convention.parse(convention).value
    write_json(path, data)


def write_report(path: PathLike, result: FitResult) -> None:
    write_json(path, result.to_report())


def write_plot_data(path: PathLike, result: FitResult) -> None:
    est = result.estimate
    taus = est.taus
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PLOT_COLUMNS)
        for i, level in enumerate(est.levels):
            w.writerow(
                [
                    level,
                    fmt(taus[i]),
                    fmt(est.nu_hat[i]),
                    fmt(None if est.ci_lo is None else est.ci_lo[i]),
                    fmt(None if est.ci_hi is None else est.ci_hi[i]),
                    fmt(None if result.fitted_wv is None else result.fitted_wv[i]),
                ]
            )
