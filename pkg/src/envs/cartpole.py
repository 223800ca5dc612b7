"""
Cart-pole with a discrete push left/right input and Gaussian angular noise.

State (position, velocity, angle, angular_velocity), angle in radians.
"""

from dataclasses import dataclass, field
from typing import Any, List, Tuple

import numpy as np

from .base import Environment

CARTPOLE_DIMS = ("position", "velocity", "angle", "angular_velocity")

# ±12 degrees
SAFE_ANGLE = float(np.deg2rad(12.0))


@dataclass(frozen=True)
class CartPoleParams:
    cart_mass: float = 1.0
    pole_mass: float = 0.1
    half_length: float = 0.5
    gravity: float = 9.8
    dt: float = 0.02
    force: float = 10.0
    noise_std: float = 0.01
    # Integrate the angle with the cart velocity instead of the angular velocity
    angle_uses_cart_velocity: bool = False
    initial_low: List[float] = field(default_factory=lambda: [-0.05, -0.05, -0.05, -0.05])
    initial_high: List[float] = field(default_factory=lambda: [0.05, 0.05, 0.05, 0.05])
    encoding_bounds: List[List[float]] = field(
        default_factory=lambda: [[-1.5, 1.5], [-3.0, 3.0], [-0.3, 0.3], [-3.0, 3.0]]
    )


def cartpole_accelerations(s: np.ndarray, u: float, p: CartPoleParams) -> Tuple[float, float, float]:
    """(a1, a2, a3): auxiliary term, angular acceleration, cart acceleration."""
    _, _, theta, omega = s
    total = p.cart_mass + p.pole_mass
    sin, cos = np.sin(theta), np.cos(theta)
    a1 = (u + p.half_length * omega * omega * sin) / total
    a2 = (p.gravity * sin - cos * a1) / (p.half_length * (4.0 / 3.0 - p.pole_mass * cos * cos / total))
    a3 = a1 - p.half_length * a2 * cos / total
    return a1, a2, a3


def cartpole_step(s: np.ndarray, u: float, rng: np.random.Generator, p: CartPoleParams = CartPoleParams()) -> np.ndarray:
    """One Euler step; the noise enters the angular velocity."""
    if u not in (-p.force, p.force):
        raise ValueError(f"cartpole: invalid force {u!r}, expected ±{p.force}")
    s = np.asarray(s, dtype=np.float64)
    _, a2, a3 = cartpole_accelerations(s, u, p)
    noise = rng.normal(0.0, p.noise_std) if p.noise_std > 0 else 0.0
    x, v, theta, omega = s
    angle_rate = v if p.angle_uses_cart_velocity else omega
    return np.array([
        x + p.dt * v,
        v + p.dt * a3,
        theta + p.dt * angle_rate,
        omega + p.dt * a2 + noise,
    ])


class CartPole(Environment):
    name = "cartpole"
    dims = CARTPOLE_DIMS

    def __init__(self, params: CartPoleParams = CartPoleParams()):
        self.params = params
        self.inputs = (-params.force, params.force)
        self._low = np.asarray(params.initial_low, dtype=np.float64)
        self._high = np.asarray(params.initial_high, dtype=np.float64)
        if self._low.shape != (4,) or self._high.shape != (4,) or np.any(self._low > self._high):
            raise ValueError("cartpole: initial_low/initial_high must be 4 ordered bounds")

    @property
    def encoding_bounds(self) -> np.ndarray:
        return np.asarray(self.params.encoding_bounds, dtype=np.float64)

    def sample_next(self, s: np.ndarray, u: Any, rng: np.random.Generator) -> np.ndarray:
        return cartpole_step(s, u, rng, self.params)

    def sample_initial(self, rng: np.random.Generator) -> np.ndarray:
        return rng.uniform(self._low, self._high)


def default_cartpole_regions() -> dict:
    """Regions of <>a & [](c1 & c2): a on [0.4, 1], c1 on [-1, 1], c2 within ±12°."""
    return {
        "a": [{"position": [0.4, 1.0]}],
        "c1": [{"position": [-1.0, 1.0]}],
        "c2": [{"angle": [-SAFE_ANGLE, SAFE_ANGLE]}],
    }
