"""Physical <-> per-sample parameter conversion.

Physical coefficients follow the usual Allan-variance conventions for a rate
signal sampled at ``fs``:

=====  =====================  ==================  ======================
proc   AV at averaging tau    per-sample value    example unit
=====  =====================  ==================  ======================
QN     3 Q^2 / tau^2          Q * fs              deg, m/s
WN     N^2 / tau              N * sqrt(fs)        deg/sqrt(hr)
BI     (2 ln2/pi) B^2         B                   deg/hr
RW     K^2 tau / 3            K / sqrt(fs)        deg/hr/sqrt(hr)
DR     R^2 tau^2 / 2          R / fs              m/s/hr/hr
=====  =====================  ==================  ======================

The per-sample value is the square root of the model parameter for QN, WN
and RW (the model stores Q^2, sigma^2, gamma^2) and the parameter itself for
BI and DR. Core numerics never see physical units.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

from wvcal.errors import DomainError
from wvcal.model import PROCESSES, SQUARED, CompositeModel

HOUR = 3600.0
PER_SAMPLE = "per-sample"

# factor taking a value in the named unit to (signal unit, seconds)
UNIT_FACTORS: dict[str, dict[str, float]] = {
    "QN": {"deg": 1.0, "rad": 1.0, "m/s": 1.0},
    "WN": {
        "deg/sqrt(hr)": 1.0 / math.sqrt(HOUR),
        "deg/sqrt(s)": 1.0,
        "rad/sqrt(hr)": 1.0 / math.sqrt(HOUR),
        "rad/sqrt(s)": 1.0,
        "m/s/sqrt(hr)": 1.0 / math.sqrt(HOUR),
        "m/s/sqrt(s)": 1.0,
    },
    "BI": {"deg/hr": 1.0 / HOUR, "deg/s": 1.0, "rad/s": 1.0, "m/s/hr": 1.0 / HOUR, "m/s^2": 1.0},
    "RW": {
        "deg/hr/sqrt(hr)": 1.0 / (HOUR * math.sqrt(HOUR)),
        "deg/s/sqrt(s)": 1.0,
        "rad/hr/sqrt(hr)": 1.0 / (HOUR * math.sqrt(HOUR)),
        "rad/s/sqrt(s)": 1.0,
        "m/s/hr/sqrt(hr)": 1.0 / (HOUR * math.sqrt(HOUR)),
        "m/s^2/sqrt(s)": 1.0,
    },
    "DR": {
        "deg/hr/hr": 1.0 / HOUR**2,
        "deg/s/s": 1.0,
        "rad/s/s": 1.0,
        "m/s/hr/hr": 1.0 / HOUR**2,
        "m/s^2/s": 1.0,
    },
}


def _rate_factor(process: str, fs: float) -> float:
    return {
        "QN": fs,
        "WN": math.sqrt(fs),
        "BI": 1.0,
        "RW": 1.0 / math.sqrt(fs),
        "DR": 1.0 / fs,
    }[process]


def supported_units(process: str) -> list[str]:
    return sorted(UNIT_FACTORS[process]) + [PER_SAMPLE]


def _unit_factor(process: str, unit: str) -> float:
    if process not in UNIT_FACTORS:
        raise DomainError(f"unknown process {process!r}; expected one of {PROCESSES}")
    token = unit.strip().replace(" ", "")
    try:
        return UNIT_FACTORS[process][token]
    except KeyError:
        raise DomainError(
            f"unknown unit {unit!r} for {process}; supported: {', '.join(supported_units(process))}"
        ) from None


def convert_units(value: float, process: str, direction: str, unit: str, sample_rate_hz: float) -> float:
    """Convert one coefficient between a physical unit and per-sample scale.

    ``direction`` is ``"to_sample"`` or ``"to_physical"``. The per-sample
    value is on the standard-deviation scale (``Q``, ``sigma``, ``B``,
    ``gamma``, ``omega``).
    """
    if not (sample_rate_hz > 0 and math.isfinite(sample_rate_hz)):
        raise DomainError(f"sample rate must be positive, got {sample_rate_hz!r}")
    if unit.strip() == PER_SAMPLE:
        if process not in UNIT_FACTORS:
            raise DomainError(f"unknown process {process!r}")
        return float(value)
    k = _unit_factor(process, unit) * _rate_factor(process, sample_rate_hz)
    if direction == "to_sample":
        return float(value) * k
    if direction == "to_physical":
        return float(value) / k
    raise DomainError(f"direction must be 'to_sample' or 'to_physical', got {direction!r}")


@dataclass(frozen=True)
class UnitSpec:
    quantity: str
    units: Mapping[str, str]
    sample_rate_hz: float

    def __post_init__(self):
        if self.quantity not in ("gyro_rate", "accel"):
            raise DomainError(f"quantity must be 'gyro_rate' or 'accel', got {self.quantity!r}")
        for proc, unit in self.units.items():
            if unit != PER_SAMPLE:
                _unit_factor(proc, unit)


@dataclass(frozen=True)
class PhysicalModel:
    """Coefficients in physical units, e.g. a row of a datasheet."""

    values: Mapping[str, float]
    spec: UnitSpec
    extra: dict = field(default_factory=dict)

    def to_model(self) -> CompositeModel:
        params = {}
        for proc, value in self.values.items():
            unit = self.spec.units.get(proc)
            if unit is None:
                raise DomainError(f"no unit given for {proc}")
            s = convert_units(value, proc, "to_sample", unit, self.spec.sample_rate_hz)
            params[proc] = s if proc in SQUARED else s * s
        return CompositeModel(params)

    @classmethod
    def from_model(cls, model: CompositeModel, spec: UnitSpec) -> "PhysicalModel":
        values = {}
        for proc, param in model.params.items():
            s = param if proc in SQUARED else math.sqrt(param)
            values[proc] = convert_units(s, proc, "to_physical", spec.units[proc], spec.sample_rate_hz)
        return cls(values, spec)

    def to_dict(self) -> dict:
        return {
            "quantity": self.spec.quantity,
            "sample_rate_hz": self.spec.sample_rate_hz,
            "processes": {
                k: {"value": v, "unit": self.spec.units[k]} for k, v in self.values.items()
            },
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "PhysicalModel":
        try:
            procs = data["processes"]
            fs = float(data["sample_rate_hz"])
            quantity = data.get("quantity", "gyro_rate")
            values = {k: float(v["value"]) for k, v in procs.items()}
            units = {k: str(v["unit"]) for k, v in procs.items()}
        except (KeyError, TypeError, ValueError) as exc:
            raise DomainError(f"malformed physical model description: {exc}") from None
        return cls(values, UnitSpec(quantity, units, fs))


TABLE_I_SAMPLE_RATE = 250.0

TABLE_I = {
    "gyro": PhysicalModel(
        {"WN": 1.57e-1, "RW": 1.34e0},
        UnitSpec("gyro_rate", {"WN": "deg/sqrt(hr)", "RW": "deg/hr/sqrt(hr)"}, TABLE_I_SAMPLE_RATE),
    ),
    "accel": PhysicalModel(
        {"QN": 1.79e-6, "WN": 4.70e-2, "RW": 4.35e1, "DR": 4.14e1},
        UnitSpec(
            "accel",
            {"QN": "m/s", "WN": "m/s/sqrt(hr)", "RW": "m/s/hr/sqrt(hr)", "DR": "m/s/hr/hr"},
            TABLE_I_SAMPLE_RATE,
        ),
    ),
}


def table_i_model(sensor: str) -> CompositeModel:
    """Per-sample truth for the ``"gyro"`` or ``"accel"`` simulation setting."""
    try:
        return TABLE_I[sensor].to_model()
    except KeyError:
        raise DomainError(f"unknown sensor {sensor!r}; use 'gyro' or 'accel'") from None
