"""
Boat crossing a river with a nonlinear current.

State (x, y, heading, angular_velocity, speed, rudder); angles in degrees,
positions clamped to the river [0, 200]². The input is a desired heading.
"""

from dataclasses import dataclass, field
from typing import Any, List, Tuple

import numpy as np

from .base import Environment

BOAT_DIMS = ("x", "y", "heading", "angular_velocity", "speed", "rudder")

BOAT_DIRECTIONS: Tuple[float, ...] = (-100.0, -90.0, -75.0, -60.0, -45.0, -30.0, -15.0, 0.0, 15.0, 45.0, 75.0, 90.0)


@dataclass(frozen=True)
class BoatParams:
    current: float = 1.25
    inertia: float = 0.1
    max_speed: float = 2.5
    desired_speed: float = 1.75
    rudder_gain: float = 0.9
    rudder_limit: float = 45.0
    noise_std: float = 0.5
    river_size: float = 200.0
    initial_y: List[float] = field(default_factory=lambda: [60.0, 100.0])
    encoding_bounds: List[List[float]] = field(
        default_factory=lambda: [[0.0, 200.0], [0.0, 200.0], [-180.0, 180.0], [-45.0, 45.0], [0.0, 2.5], [-45.0, 45.0]]
    )


def current_effect(x: float, noise: float, p: BoatParams = BoatParams()) -> float:
    """E(x, η) = f_c [x/50 - (x/100)²] + η."""
    return p.current * (x / 50.0 - (x / 100.0) ** 2) + noise


def boat_step(s: np.ndarray, u: float, rng: np.random.Generator, p: BoatParams = BoatParams()) -> np.ndarray:
    if u not in BOAT_DIRECTIONS:
        raise ValueError(f"boat: invalid direction {u!r}, expected one of {list(BOAT_DIRECTIONS)}")
    x, y, heading, omega_h, speed, _ = np.asarray(s, dtype=np.float64)

    rudder = float(np.clip(p.rudder_gain * (u - heading), -p.rudder_limit, p.rudder_limit))
    speed_next = speed + p.inertia * (p.desired_speed - speed)
    omega_next = omega_h + (rudder - omega_h) * (speed_next / p.max_speed)
    heading_next = heading + p.inertia * omega_next

    noise = rng.normal(0.0, p.noise_std) if p.noise_std > 0 else 0.0
    rad = np.deg2rad(heading_next)
    x_next = float(np.clip(x + speed_next * np.cos(rad), 0.0, p.river_size))
    y_next = float(np.clip(y - speed_next * np.sin(rad) - current_effect(x_next, noise, p), 0.0, p.river_size))
    return np.array([x_next, y_next, heading_next, omega_next, speed_next, rudder])


class Boat(Environment):
    name = "boat"
    dims = BOAT_DIMS
    inputs = BOAT_DIRECTIONS

    def __init__(self, params: BoatParams = BoatParams()):
        self.params = params
        if len(params.initial_y) != 2 or params.initial_y[0] > params.initial_y[1]:
            raise ValueError("boat: initial_y must be an ordered [lo, hi] pair")

    @property
    def encoding_bounds(self) -> np.ndarray:
        return np.asarray(self.params.encoding_bounds, dtype=np.float64)

    def sample_next(self, s: np.ndarray, u: Any, rng: np.random.Generator) -> np.ndarray:
        return boat_step(s, u, rng, self.params)

    def sample_initial(self, rng: np.random.Generator) -> np.ndarray:
        lo, hi = self.params.initial_y
        return self.initial_state(float(rng.uniform(lo, hi)))

    @staticmethod
    def initial_state(y0: float) -> np.ndarray:
        """Left bank at height y0, at rest."""
        return np.array([0.0, y0, 0.0, 0.0, 0.0, 0.0])


def default_boat_regions() -> dict:
    """Target quay: x = 200 and y in [95, 105]."""
    return {"t": [{"x": [200.0, 200.0], "y": [95.0, 105.0]}]}
