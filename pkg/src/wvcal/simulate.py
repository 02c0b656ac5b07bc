"""Reproducible simulation of composite error signals.

Every (seed, replication, process) triple owns an independent
``numpy.random.SeedSequence`` stream, so components can be regenerated
individually and replications can run in any order or in parallel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from wvcal.errors import DomainError, UnsupportedProcessError
from wvcal.model import PROCESSES, CompositeModel
from wvcal.wv import Signal

MIN_LENGTH = 8
RW_SCHEMES = ("averaged", "cumsum")


@dataclass(frozen=True)
class SimConfig:
    model: CompositeModel
    T: int
    seed: int = 0
    sample_rate_hz: float = 1.0
    replication: int = 0
    rw_scheme: str = "averaged"

    def __post_init__(self):
        if int(self.T) < MIN_LENGTH:
            raise DomainError(f"simulation length must be >= {MIN_LENGTH}, got {self.T}")
        if not 0 <= int(self.seed) < 2**64:
            raise DomainError("seed must be a 64-bit unsigned integer")
        if self.rw_scheme not in RW_SCHEMES:
            raise DomainError(f"rw_scheme must be one of {RW_SCHEMES}")
        if "BI" in self.model.active:
            raise UnsupportedProcessError(
                "bias instability (BI) cannot be simulated; it is supported for fitting only"
            )


def process_rng(seed: int, replication: int, process: str) -> np.random.Generator:
    key = (int(replication), PROCESSES.index(process))
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=key))


def _white_noise(rng, T, sigma2):
    return rng.normal(0.0, math.sqrt(sigma2), T)


def _quantization_noise(rng, T, q2):
    # first difference of iid U(-1, 1) scaled so that nu_j = 3 Q^2 / 4^j
    u = rng.uniform(-1.0, 1.0, T + 1)
    return math.sqrt(3.0 * q2) * np.diff(u)


def _random_walk(rng, T, gamma2, scheme):
    gamma = math.sqrt(gamma2)
    steps = rng.normal(0.0, gamma, T)
    if scheme == "cumsum":
        return np.cumsum(steps)
    # Each sample is the average of a Brownian path over its own interval:
    # level at the interval start + steps/2 + an independent bridge term of
    # variance gamma^2/12. Window means then match the continuous-time AV
    # gamma^2 m / 3 with no 1/(6m) discretization term.
    bridge = rng.normal(0.0, gamma / math.sqrt(12.0), T)
    start = np.concatenate(([0.0], np.cumsum(steps)[:-1]))
    return start + 0.5 * steps + bridge


def _drift(T, omega):
    return omega * np.arange(1, T + 1, dtype=float)


def simulate_components(config: SimConfig) -> dict[str, Signal]:
    out = {}
    T = int(config.T)
    for proc, value in config.model.params.items():
        rng = process_rng(config.seed, config.replication, proc)
        if proc == "WN":
            x = _white_noise(rng, T, value)
        elif proc == "QN":
            x = _quantization_noise(rng, T, value)
        elif proc == "RW":
            x = _random_walk(rng, T, value, config.rw_scheme)
        elif proc == "DR":
            x = _drift(T, value)
        else:  # pragma: no cover - rejected by SimConfig
            raise UnsupportedProcessError(proc)
        out[proc] = Signal(x, config.sample_rate_hz)
    return out


def simulate(config: SimConfig) -> Signal:
    parts = simulate_components(config)
    total = np.zeros(int(config.T))
    for sig in parts.values():
        total = total + sig.values
    return Signal(total, config.sample_rate_hz)
