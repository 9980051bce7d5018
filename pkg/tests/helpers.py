"""Shared samplers and independent finite-difference oracles for the tests."""

import numpy as np

from nfbeam.geometry import ArrayGeometry, PathlossModel
from nfbeam.motion import MotionState

CARRIER = 30e9
TS = 1e-5
N_SYM = 10


def geom_for(m: int) -> ArrayGeometry:
    return ArrayGeometry.half_wavelength(m, CARRIER)


def sample_state(rng: np.random.Generator, geom: ArrayGeometry) -> MotionState:
    """Random state clear of the aperture and of |.|-convention kinks.

    x starts beyond the array edge so both projection conventions see the
    same geometry-sign structure and no antenna aligns with the target.
    """
    edge = geom.aperture / 2.0
    x = float(rng.uniform(edge + 0.5, edge + 8.0))
    y = float(rng.uniform(5.0, 30.0))
    vx, vy = rng.uniform(-15.0, 15.0, size=2)
    return MotionState(x, y, float(vx), float(vy))


def sample_broadside_state(rng: np.random.Generator) -> MotionState:
    """Random state with x near 0, for signed-convention coverage."""
    x = float(rng.uniform(-2.0, 2.0))
    y = float(rng.uniform(5.0, 30.0))
    vx, vy = rng.uniform(-15.0, 15.0, size=2)
    return MotionState(x, y, float(vx), float(vy))


def fd_central(fun, x0: float, step: float) -> float:
    return (fun(x0 + step) - fun(x0 - step)) / (2.0 * step)


def fd_central4(fun, x0: float, step: float) -> float:
    # 4th-order stencil; needed where the phase curvature at 30 GHz makes
    # the 2nd-order truncation term larger than the comparison tolerance
    return (
        8.0 * (fun(x0 + step) - fun(x0 - step))
        - (fun(x0 + 2.0 * step) - fun(x0 - 2.0 * step))
    ) / (12.0 * step)


def fd_central_vec(fun, x0: float, step: float) -> np.ndarray:
    return (fun(x0 + step) - fun(x0 - step)) / (2.0 * step)


def fd_central4_vec(fun, x0: float, step: float) -> np.ndarray:
    return (
        8.0 * (fun(x0 + step) - fun(x0 - step))
        - (fun(x0 + 2.0 * step) - fun(x0 - 2.0 * step))
    ) / (12.0 * step)


def default_model() -> PathlossModel:
    return PathlossModel()
