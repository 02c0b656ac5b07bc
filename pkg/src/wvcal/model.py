"""Composite latent error model and its implied Allan / Haar wavelet variance.

The model is a sum of up to five independent processes, each with one
positive parameter expressed in per-sample units:

==== =================== ==========================================
key  parameter           contribution to nu_j (times c)
==== =================== ==========================================
QN   Q2     (Q^2)        3 Q^2 / 2^(2j)
WN   sigma2 (sigma^2)    sigma^2 / 2^j
BI   B                   (2 ln 2 / pi) B^2
RW   gamma2 (gamma^2)    gamma^2 2^j / 3
DR   omega               omega^2 2^(2j-1)
==== =================== ==========================================

Level ``j`` uses averaging windows of ``2^j`` samples (the half-width of the
Haar filter), so ``2^(j+1)`` samples enter each coefficient and a signal of
length ``T`` yields ``T - 2^(j+1) + 1`` overlapping coefficients.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from wvcal.errors import DomainError, ScaleError

PROCESSES: tuple[str, ...] = ("QN", "WN", "BI", "RW", "DR")
PARAMETER_NAMES: dict[str, str] = {
    "QN": "Q2",
    "WN": "sigma2",
    "BI": "B",
    "RW": "gamma2",
    "DR": "omega",
}
# processes whose linearizing map h squares the parameter
SQUARED = frozenset({"BI", "DR"})
BI_CONSTANT = 2.0 * math.log(2.0) / math.pi
DEFAULT_MIN_COEFFS = 16


def _canonical(processes: Iterable[str]) -> tuple[str, ...]:
    procs = set(processes)
    unknown = procs - set(PROCESSES)
    if unknown:
        raise DomainError(f"unknown process(es) {sorted(unknown)}; expected a subset of {PROCESSES}")
    return tuple(p for p in PROCESSES if p in procs)


class Convention(enum.Enum):
    AV = "av"
    WV = "wv"

    @property
    def c(self) -> float:
        return 1.0 if self is Convention.AV else 0.5

    @classmethod
    def parse(cls, value: "str | Convention") -> "Convention":
        if isinstance(value, Convention):
            return value
        key = str(value).strip().lower()
        aliases = {"av": cls.AV, "allan": cls.AV, "wv": cls.WV, "haar": cls.WV}
        try:
            return aliases[key]
        except KeyError:
            raise DomainError(f"unknown convention {value!r}; use 'av' or 'wv'") from None


@dataclass(frozen=True)
class CompositeModel:
    """Active processes and their strictly positive parameters."""

    params: Mapping[str, float]

    def __post_init__(self):
        if not self.params:
            raise DomainError("a composite model needs at least one process")
        order = _canonical(self.params)
        clean = {}
        for proc in order:
            value = float(self.params[proc])
            if not math.isfinite(value) or value <= 0.0:
                raise DomainError(
                    f"{proc} parameter {PARAMETER_NAMES[proc]} must be finite and > 0, got {value!r}"
                )
            clean[proc] = value
        object.__setattr__(self, "params", clean)

    @property
    def active(self) -> tuple[str, ...]:
        return tuple(self.params)

    @property
    def p(self) -> int:
        return len(self.params)

    def __getitem__(self, process: str) -> float:
        return self.params[process]

    def vector(self) -> np.ndarray:
        return np.array([self.params[k] for k in self.active])

    @classmethod
    def from_vector(cls, active: Sequence[str], values: Sequence[float]) -> "CompositeModel":
        active = _canonical(active)
        values = list(values)
        if len(values) != len(active):
            raise DomainError(f"expected {len(active)} values for {active}, got {len(values)}")
        return cls(dict(zip(active, values)))

    def to_dict(self) -> dict:
        return {"processes": {k: {PARAMETER_NAMES[k]: v} for k, v in self.params.items()}}

    @classmethod
    def from_dict(cls, data: Mapping) -> "CompositeModel":
        """Parse ``{"processes": {"WN": {"sigma2": 1.0}, ...}}``."""
        procs = data.get("processes") if isinstance(data, Mapping) else None
        if not isinstance(procs, Mapping):
            raise DomainError("model description must contain a 'processes' object")
        params = {}
        for proc, spec in procs.items():
            if proc not in PARAMETER_NAMES:
                raise DomainError(f"unknown process {proc!r}; expected one of {PROCESSES}")
            name = PARAMETER_NAMES[proc]
            if isinstance(spec, Mapping):
                if name not in spec:
                    raise DomainError(f"process {proc} needs parameter {name!r}")
                params[proc] = spec[name]
            else:
                params[proc] = spec
        return cls(params)


def template_processes(data: Mapping) -> tuple[str, ...]:
    """Active process set of a model description whose values may be omitted."""
    procs = data.get("processes") if isinstance(data, Mapping) else None
    if not isinstance(procs, Mapping) or not procs:
        raise DomainError("model template must contain a non-empty 'processes' object")
    return _canonical(procs)


@dataclass(frozen=True)
class ScaleGrid:
    """Dyadic levels ``j`` evaluated on a signal of ``T`` samples."""

    levels: tuple[int, ...]
    T: int
    _counts: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        levels = tuple(int(j) for j in self.levels)
        object.__setattr__(self, "levels", levels)
        object.__setattr__(self, "T", int(self.T))
        if not levels:
            raise ScaleError("scale grid is empty")
        if self.T < 1:
            raise ScaleError(f"signal length must be positive, got {self.T}")
        if any(j < 1 for j in levels):
            raise ScaleError(f"levels must be >= 1, got {list(levels)}")
        if any(b <= a for a, b in zip(levels, levels[1:])):
            raise ScaleError(f"levels must be strictly increasing, got {list(levels)}")
        for j in levels:
            if self.T - 2 ** (j + 1) + 1 < 1:
                raise ScaleError(
                    f"level {j} needs at least {2 ** (j + 1)} samples (window 2^{j + 1}), "
                    f"signal has {self.T}"
                )
        counts = np.array([self.T - 2 ** (j + 1) + 1 for j in levels], dtype=np.int64)
        counts.setflags(write=False)
        object.__setattr__(self, "_counts", counts)

    @property
    def J(self) -> int:
        return len(self.levels)

    @property
    def half_windows(self) -> np.ndarray:
        return np.array([2**j for j in self.levels], dtype=np.int64)

    @property
    def coeff_counts(self) -> np.ndarray:
        return self._counts

    def taus(self, sample_rate_hz: float) -> np.ndarray:
        return self.half_windows / float(sample_rate_hz)

    @classmethod
    def default(cls, T: int, min_coeffs: int = DEFAULT_MIN_COEFFS) -> "ScaleGrid":
        """All levels with at least ``min_coeffs`` overlapping coefficients."""
        levels = []
        j = 1
        while T - 2 ** (j + 1) + 1 >= min_coeffs:
            levels.append(j)
            j += 1
        if not levels:
            raise ScaleError(
                f"signal of {T} samples has no level with >= {min_coeffs} coefficients"
            )
        return cls(tuple(levels), T)

    @classmethod
    def first(cls, T: int, J: int) -> "ScaleGrid":
        return cls(tuple(range(1, J + 1)), T)


def _base_rows(levels: Sequence[int]) -> np.ndarray:
    j = np.asarray(levels, dtype=float)
    two_j = 2.0**j
    return np.column_stack(
        [
            3.0 / two_j**2,
            1.0 / two_j,
            np.full_like(two_j, BI_CONSTANT),
            two_j / 3.0,
            two_j**2 / 2.0,
        ]
    )


def design_matrix(active: Iterable[str], convention, grid: ScaleGrid) -> np.ndarray:
    """Matrix ``X`` with ``nu(theta) = X @ h(theta)``, columns in canonical order."""
    active = _canonical(active)
    conv = Convention.parse(convention)
    cols = [PROCESSES.index(k) for k in active]
    return conv.c * _base_rows(grid.levels)[:, cols]


def h_map(model: CompositeModel) -> np.ndarray:
    return np.array([v * v if k in SQUARED else v for k, v in model.params.items()])


def h_inverse(vartheta: Sequence[float], active: Iterable[str]) -> CompositeModel:
    """Invert ``h`` taking positive square roots (the drift sign is assumed positive)."""
    active = _canonical(active)
    vartheta = np.asarray(vartheta, dtype=float)
    if vartheta.shape != (len(active),):
        raise DomainError(f"expected {len(active)} linearized values, got shape {vartheta.shape}")
    bad = [k for k, v in zip(active, vartheta) if not (np.isfinite(v) and v > 0.0)]
    if bad:
        raise DomainError(f"cannot invert h: non-positive linearized value for {bad}")
    values = [math.sqrt(v) if k in SQUARED else float(v) for k, v in zip(active, vartheta)]
    return CompositeModel(dict(zip(active, values)))


def model_wv(model: CompositeModel, convention, grid: ScaleGrid) -> np.ndarray:
    return design_matrix(model.active, convention, grid) @ h_map(model)


def h_derivative(model: CompositeModel) -> np.ndarray:
    return np.array([2.0 * v if k in SQUARED else 1.0 for k, v in model.params.items()])


def wv_jacobian(model: CompositeModel, convention, grid: ScaleGrid) -> np.ndarray:
    """``d nu / d theta^T``, a J x p matrix."""
    return design_matrix(model.active, convention, grid) * h_derivative(model)
