"""Synthetic trajectories under the switching consensus model.

The target-pursuit geometry places one target on a square map; the walker
starts near the south-west corner and stops once it comes within
``stop_radius`` of the target.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .circular import TWO_PI, sample_von_mises, wrap
from .hidden import DwellDistribution
from .model import ModelSpec, Params, Trajectory, markov_params


def scenario_params(scenario: int = 1) -> Params:
    """Generating parameters of the two target-pursuit scenarios (state 1 first)."""
    if scenario == 1:
        return markov_params([[0.9, 0.1], [0.2, 0.8]], [[20.0, 10.0], [15.0, -6.5]], [0.7, 1.2])
    if scenario == 2:
        return markov_params([[0.6, 0.4], [0.1, 0.9]], [[5.0, 4.5], [2.0, 0.4]], [2.0, 5.0])
    raise ValueError(f"unknown scenario {scenario}")


@dataclass(frozen=True)
class ScenarioConfig:
    """Map geometry and generating parameters.

    The default map is calibrated so that the first scenario yields series
    of about 530 steps on average.
    """

    params: Params = field(default_factory=scenario_params)
    map_extent: tuple = (300.0, 300.0)
    target_position: tuple = (150.0, 150.0)
    start_region: tuple = (0.0, 0.0, 50.0, 50.0)
    stop_radius: float = 30.0
    max_steps: int = 5000

    def __post_init__(self):
        if not self.stop_radius > 0:
            raise ValueError("stop_radius must be positive")
        x0, y0, x1, y1 = self.start_region
        w, h = self.map_extent
        if not (0 <= x0 <= x1 <= w and 0 <= y0 <= y1 <= h):
            raise ValueError("start region must lie inside the map")
        if self.max_steps < 1:
            raise ValueError("max_steps must be positive")


@dataclass(frozen=True, eq=False)
class SimulatedPath:
    trajectory: Trajectory
    states: np.ndarray
    positions: np.ndarray
    truncated: bool

    @property
    def length(self) -> int:
        """Number of modeled steps T."""
        return self.trajectory.T


def y0_initialization(rng: np.random.Generator) -> float:
    """Initial heading, uniform on [0, 2 pi)."""
    return float(rng.uniform(0.0, TWO_PI))


def _draw_dwell(dwell: DwellDistribution, rng) -> int:
    return int(rng.negative_binomial(dwell.n, dwell.q)) + 1


def simulate_chain(params: Params, spec: ModelSpec, T: int, rng: np.random.Generator) -> np.ndarray:
    """Hidden states S_0..S_T (0-based labels)."""
    K = spec.K
    states = np.empty(T + 1, dtype=int)
    s = int(rng.choice(K, p=params.pi0))
    if spec.semi_markov:
        dwells = [DwellDistribution(n, q) for n, q in zip(params.dwell_n, params.dwell_q)]
        t = 0
        while t <= T:
            k = _draw_dwell(dwells[s], rng)
            states[t:t + k] = s
            t += k
            s = 1 - s
        return states
    P = np.asarray(params.transition)
    cum = np.cumsum(P, axis=1)
    u = rng.random(T)
    states[0] = s
    for t in range(1, T + 1):
        s = min(int(np.searchsorted(cum[s], u[t - 1], side="right")), K - 1)
        states[t] = s
    return states


def bearing(src, dst) -> float:
    return math.atan2(dst[1] - src[1], dst[0] - src[0])


def simulate_trajectory(config: ScenarioConfig, spec: ModelSpec, rng: np.random.Generator) -> SimulatedPath:
    """Walk toward (or away from) the target until within the stop radius."""
    params = config.params
    kappa = np.asarray(params.kappa)
    if kappa.shape[1] != 2:
        raise ValueError("the pursuit scenario uses exactly one target (p = 1)")
    states = simulate_chain(params, spec, config.max_steps, rng)
    x0, y0, x1, y1 = config.start_region
    pos = np.array([rng.uniform(x0, x1), rng.uniform(y0, y1)])
    target = np.asarray(config.target_position, dtype=float)
    positions = [pos.copy()]
    ys, ds, xs = [], [], []
    heading = y0_initialization(rng)
    truncated = True
    for t in range(config.max_steps + 1):
        s = states[t]
        x_t = bearing(pos, target)
        if t > 0:
            k0, k1 = kappa[s]
            vx = k0 * math.cos(heading) + k1 * math.cos(x_t)
            vy = k0 * math.sin(heading) + k1 * math.sin(x_t)
            ell = math.hypot(vx, vy)
            mu = math.atan2(vy, vx) if ell > 0 else 0.0
            heading = sample_von_mises(mu, ell, rng)
        dist = rng.exponential(params.lam[s])
        pos = pos + dist * np.array([math.cos(heading), math.sin(heading)])
        ys.append(heading)
        ds.append(dist)
        xs.append(x_t)
        positions.append(pos.copy())
        if t > 0 and math.hypot(*(pos - target)) <= config.stop_radius:
            truncated = False
            break
    n = len(ys)
    positions = np.array(positions)
    # store the steps as recorded by the positions; tiny steps otherwise lose
    # heading digits relative to a position-derived record
    y, d = steps_from_positions(positions)
    traj = Trajectory(y, d, np.array(xs)[:, None], np.ones((n, 1)), ("target",))
    return SimulatedPath(traj, states[:n].copy(), positions, truncated)


def steps_from_positions(positions) -> tuple:
    """Bearings and lengths of the displacements between consecutive positions."""
    pos = np.asarray(positions, dtype=float)
    delta = np.diff(pos, axis=0)
    return wrap(np.arctan2(delta[:, 1], delta[:, 0])), np.hypot(delta[:, 0], delta[:, 1])


def simulate_markov_trajectory(params: Params, spec: ModelSpec, T: int, rng: np.random.Generator,
                               target_angles=None, target_weights=None) -> tuple:
    """Free-running trajectory of T modeled steps with given target covariates.

    Without covariates, target bearings are drawn uniformly (so targets carry
    no spatial structure). Returns (Trajectory, states).
    """
    states = simulate_chain(params, spec, T, rng)
    p = spec.p
    if target_angles is None:
        target_angles = rng.uniform(-math.pi, math.pi, size=(T + 1, p))
    if target_weights is None:
        target_weights = np.ones((T + 1, p))
    x = np.asarray(target_angles, dtype=float).reshape(T + 1, p)
    z = np.asarray(target_weights, dtype=float).reshape(T + 1, p)
    y = np.empty(T + 1)
    y[0] = y0_initialization(rng)
    for t in range(1, T + 1):
        k = params.kappa[states[t]]
        vx = k[0] * math.cos(y[t - 1]) + float(np.sum(k[1:] * z[t] * np.cos(x[t])))
        vy = k[0] * math.sin(y[t - 1]) + float(np.sum(k[1:] * z[t] * np.sin(x[t])))
        ell = math.hypot(vx, vy)
        y[t] = sample_von_mises(math.atan2(vy, vx) if ell > 0 else 0.0, ell, rng)
    d = rng.exponential(params.lam[states])
    return Trajectory(y, d, x, z), states
