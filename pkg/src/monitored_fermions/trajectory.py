"""Single quantum trajectory: Poisson measurement schedule plus exact evolution.

Random streams
--------------
Trajectory ``i`` of a run with ``base_seed`` uses the 64-bit key
``trajectory_seed(base_seed, i) = splitmix64(base_seed ^ splitmix64(i))``
for a Philox counter-based generator.  Draws happen in a fixed order:
initial bitstring (if any), number of events, event times, event sites,
one uniform per event for the outcome.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .config import RunConfig
from .gaussian_state import (
    GaussianState,
    NumericalDegradationError,
    init_bitstring,
    init_ground,
    n_particles_for,
    random_bitstring,
)
from .lattice import LatticeSpec, Spectrum, build_spectrum, velocity_scales

_MASK64 = (1 << 64) - 1


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def trajectory_seed(base_seed: int, index: int) -> int:
    return splitmix64((base_seed & _MASK64) ^ splitmix64(index))


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=seed & _MASK64))


@lru_cache(maxsize=8)
def spectrum_for(lattice: LatticeSpec) -> Spectrum:
    return build_spectrum(lattice)


@dataclass
class TrajectorySchedule:
    times: np.ndarray
    sites: np.ndarray
    total_time: float

    def __len__(self):
        return self.times.shape[0]


def sample_schedule(gamma: float, total_time: float, n_sites: int,
                    rng: np.random.Generator) -> TrajectorySchedule:
    """Poisson process of rate ``gamma`` on each of ``n_sites`` sites over ``[0, T]``.

    Equivalent to drawing ``M ~ Poisson(gamma * N * T)`` events with
    i.i.d. uniform times and sites, then sorting stably by time.
    """
    if gamma < 0 or not total_time > 0:
        raise ValueError("need gamma >= 0 and T > 0")
    m = int(rng.poisson(gamma * n_sites * total_time))
    times = rng.uniform(0.0, total_time, m)
    sites = rng.integers(0, n_sites, m)
    order = np.argsort(times, kind="stable")
    return TrajectorySchedule(times[order], sites[order].astype(np.int64), float(total_time))


def steady_state_time(config: RunConfig) -> float:
    """Total evolution time: explicit ``T`` or the longer of burn-in and ballistic times."""
    if config.T is not None:
        return float(config.T)
    _, v0 = velocity_scales(config.lattice)
    ballistic = config.ballistic_traversals * config.L / v0
    if config.gamma == 0:
        return float(ballistic)
    return float(max(config.burn_in_measurements / config.gamma, ballistic))


@dataclass
class TrajectoryResult:
    green: np.ndarray
    seed: int
    config_digest: str
    outcomes: np.ndarray | None = None
    n_events: int = 0
    repurifications: list = field(default_factory=list)


class TrajectoryFailure(NumericalDegradationError):
    def __init__(self, message, seed, config_digest):
        super().__init__(f"{message} (seed={seed}, config={config_digest})")
        self.seed = seed
        self.config_digest = config_digest


def initial_state(config: RunConfig, spectrum: Spectrum, rng: np.random.Generator) -> GaussianState:
    if config.init == "ground":
        return init_ground(spectrum, config.filling)
    n = spectrum.n_modes
    pattern = random_bitstring(n, n_particles_for(n, config.filling), rng)
    return init_bitstring(spectrum, pattern, basis=config.init)


def run_trajectory(config: RunConfig, seed: int, record_outcomes: bool = True) -> TrajectoryResult:
    spectrum = spectrum_for(config.lattice)
    rng = make_rng(seed)
    state = initial_state(config, spectrum, rng)
    total_time = steady_state_time(config)
    schedule = sample_schedule(config.gamma, total_time, spectrum.n_modes, rng)
    uniforms = rng.random(len(schedule))
    try:
        outcomes, _ = state.run_events(schedule.times, schedule.sites, uniforms)
    except NumericalDegradationError as exc:
        raise TrajectoryFailure(str(exc), seed, config.digest) from exc
    state.evolve_to(total_time)
    return TrajectoryResult(
        green=state.coordinate_green(),
        seed=seed,
        config_digest=config.digest,
        outcomes=outcomes if record_outcomes else None,
        n_events=len(schedule),
        repurifications=list(state.repurifications),
    )
