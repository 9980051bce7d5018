"""Constant-velocity motion with per-interval velocity perturbations."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class MotionState:
    """Planar kinematic state eta = [x, y, vx, vy]."""

    x: float
    y: float
    vx: float
    vy: float

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.vx, self.vy])

    @classmethod
    def from_array(cls, eta) -> "MotionState":
        eta = np.asarray(eta, dtype=float)
        if eta.shape != (4,):
            raise ValueError(f"state must have shape (4,), got {eta.shape}")
        return cls(float(eta[0]), float(eta[1]), float(eta[2]), float(eta[3]))

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y])

    @property
    def velocity(self) -> np.ndarray:
        return np.array([self.vx, self.vy])


@dataclass(frozen=True)
class MotionNoise:
    """Variances of the independent per-interval velocity kicks."""

    var_vx: float = 0.01
    var_vy: float = 0.01

    def __post_init__(self) -> None:
        if self.var_vx < 0.0 or self.var_vy < 0.0:
            raise ValueError(
                f"velocity variances must be nonnegative, got ({self.var_vx}, {self.var_vy})"
            )

    def covariance(self) -> np.ndarray:
        """Process-noise covariance for [x, y, vx, vy] over one interval."""
        return np.diag([0.0, 0.0, self.var_vx, self.var_vy])


def transition_matrix(dt: float) -> np.ndarray:
    """Constant-velocity transition for [x, y, vx, vy]."""
    f = np.eye(4)
    f[0, 2] = dt
    f[1, 3] = dt
    return f


def kinematic_forecast(eta: MotionState, dt: float) -> MotionState:
    """Noise-free propagation: position moves with the current velocity."""
    return MotionState(eta.x + dt * eta.vx, eta.y + dt * eta.vy, eta.vx, eta.vy)


def step_motion(
    eta: MotionState, noise: MotionNoise, dt: float, rng: np.random.Generator
) -> MotionState:
    """One interval: move with the pre-step velocity, then perturb the velocity."""
    moved = kinematic_forecast(eta, dt)
    dvx = rng.normal(0.0, math.sqrt(noise.var_vx))
    dvy = rng.normal(0.0, math.sqrt(noise.var_vy))
    return MotionState(moved.x, moved.y, moved.vx + dvx, moved.vy + dvy)


def generate_trajectory(
    eta0: MotionState,
    noise: MotionNoise,
    dt: float,
    num_cpis: int,
    rng: np.random.Generator,
) -> list[MotionState]:
    """States for CPIs 1..num_cpis; the first element is eta0."""
    if num_cpis < 1:
        raise ValueError(f"num_cpis must be >= 1, got {num_cpis}")
    traj = [eta0]
    for _ in range(num_cpis - 1):
        traj.append(step_motion(traj[-1], noise, dt, rng))
    return traj
