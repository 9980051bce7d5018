"""Uniform linear array geometry, near-field response, and pathloss."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SPEED_OF_LIGHT = 299792458.0

# Positions closer than this to an antenna (or the array center) are rejected.
MIN_RANGE = 1e-9
# Below this |x - k_m1| the magnitude-projection derivative sits on its kink.
KINK_TOL = 1e-9

DOWNLINK = "downlink"
ROUNDTRIP = "roundtrip"


class DegeneratePositionError(ValueError):
    """Position coincides with an antenna or the array center."""


class ProjectionKinkError(ValueError):
    """Magnitude-projection derivative requested at a non-differentiable point."""


@dataclass(frozen=True)
class ArrayGeometry:
    """Uniform linear array along the x-axis, centered on the origin.

    Antenna m (0-based) sits at ((m - (M-1)/2) * spacing, 0).
    """

    num_antennas: int
    spacing: float
    wavelength: float

    def __post_init__(self) -> None:
        if self.num_antennas < 1:
            raise ValueError(f"num_antennas must be >= 1, got {self.num_antennas}")
        if self.spacing <= 0.0:
            raise ValueError(f"spacing must be positive, got {self.spacing}")
        if self.wavelength <= 0.0:
            raise ValueError(f"wavelength must be positive, got {self.wavelength}")

    @classmethod
    def half_wavelength(cls, num_antennas: int, carrier_freq_hz: float) -> "ArrayGeometry":
        """Array with half-wavelength spacing at the given carrier."""
        if carrier_freq_hz <= 0.0:
            raise ValueError(f"carrier frequency must be positive, got {carrier_freq_hz}")
        lam = SPEED_OF_LIGHT / carrier_freq_hz
        return cls(num_antennas=num_antennas, spacing=lam / 2.0, wavelength=lam)

    @property
    def wavenumber(self) -> float:
        """Free-space wavenumber 2*pi/lambda."""
        return 2.0 * np.pi / self.wavelength

    @property
    def aperture(self) -> float:
        return (self.num_antennas - 1) * self.spacing


def element_offsets(geom: ArrayGeometry) -> np.ndarray:
    """x-coordinates of the antennas, shape (M,)."""
    m = np.arange(geom.num_antennas, dtype=float)
    return (m - (geom.num_antennas - 1) / 2.0) * geom.spacing


def antenna_positions(geom: ArrayGeometry) -> np.ndarray:
    """Antenna coordinates in the plane, shape (M, 2)."""
    pos = np.zeros((geom.num_antennas, 2))
    pos[:, 0] = element_offsets(geom)
    return pos


def _as_position(p) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if p.shape != (2,):
        raise ValueError(f"position must have shape (2,), got {p.shape}")
    return p


def _as_velocity(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.shape != (2,):
        raise ValueError(f"velocity must have shape (2,), got {v.shape}")
    return v


def element_distances(geom: ArrayGeometry, p) -> np.ndarray:
    """Exact per-antenna distances to position p, shape (M,)."""
    p = _as_position(p)
    r = np.hypot(p[0] - element_offsets(geom), p[1])
    if np.min(r) < MIN_RANGE:
        raise DegeneratePositionError(
            f"position {p.tolist()} is within {MIN_RANGE} m of an antenna"
        )
    return r


def steering_vector(geom: ArrayGeometry, p) -> np.ndarray:
    """Near-field phase profile exp(-j * 2pi/lambda * r_m), shape (M,)."""
    return np.exp(-1j * geom.wavenumber * element_distances(geom, p))


def projection_coeffs(geom: ArrayGeometry, p, signed: bool = False):
    """Per-antenna projections (g, q) of the two axes onto the line of sight.

    Default uses magnitude numerators |x - k_m1| / r_m and |y| / r_m; with
    signed=True the numerators keep their signs. Either way g^2 + q^2 = 1.
    """
    p = _as_position(p)
    r = element_distances(geom, p)
    ux = p[0] - element_offsets(geom)
    uy = p[1]
    if signed:
        return ux / r, uy / r
    return np.abs(ux) / r, abs(uy) / r


def radial_speeds(geom: ArrayGeometry, v, p, signed: bool = False) -> np.ndarray:
    """Composite per-antenna speed g_m * vx + q_m * vy, shape (M,)."""
    v = _as_velocity(v)
    g, q = projection_coeffs(geom, p, signed=signed)
    return g * v[0] + q * v[1]


def doppler_vector(
    geom: ArrayGeometry, n: int, symbol_duration: float, v, p, signed: bool = False
) -> np.ndarray:
    """Doppler rotation accumulated after n symbol periods, shape (M,)."""
    vm = radial_speeds(geom, v, p, signed=signed)
    return np.exp(-1j * geom.wavenumber * n * symbol_duration * vm)


def array_response(
    geom: ArrayGeometry, n: int, symbol_duration: float, v, p, signed: bool = False
) -> np.ndarray:
    """Steering vector times Doppler at symbol n: a = a_tilde * d(n)."""
    return steering_vector(geom, p) * doppler_vector(
        geom, n, symbol_duration, v, p, signed=signed
    )


@dataclass(frozen=True)
class PathlossModel:
    """Free-space gains: ref_gain at 1 m one-way, rcs scales the reflection."""

    ref_gain: float = 1.0
    rcs: float = 1.0

    def __post_init__(self) -> None:
        if self.ref_gain <= 0.0:
            raise ValueError(f"ref_gain must be positive, got {self.ref_gain}")
        if self.rcs <= 0.0:
            raise ValueError(f"rcs must be positive, got {self.rcs}")


def pathloss(model: PathlossModel, p, kind: str) -> float:
    """Amplitude gain to position p: downlink (one-way) or roundtrip (echo)."""
    p = _as_position(p)
    rr = p[0] * p[0] + p[1] * p[1]
    if rr < MIN_RANGE * MIN_RANGE:
        raise DegeneratePositionError(
            f"position {p.tolist()} is within {MIN_RANGE} m of the array center"
        )
    if kind == DOWNLINK:
        return model.ref_gain / rr
    if kind == ROUNDTRIP:
        return model.rcs * model.ref_gain / (4.0 * rr)
    raise ValueError(f"unknown pathloss kind {kind!r}")


def pathloss_gradient(model: PathlossModel, p):
    """Spatial gradient (d/dx, d/dy) of the roundtrip gain."""
    p = _as_position(p)
    rr = p[0] * p[0] + p[1] * p[1]
    if rr < MIN_RANGE * MIN_RANGE:
        raise DegeneratePositionError(
            f"position {p.tolist()} is within {MIN_RANGE} m of the array center"
        )
    c = -model.rcs * model.ref_gain / (2.0 * rr * rr)
    return c * p[0], c * p[1]


def downlink_channel(
    geom: ArrayGeometry,
    model: PathlossModel,
    n: int,
    symbol_duration: float,
    v,
    p,
    signed: bool = False,
) -> np.ndarray:
    """One-way channel h(n) = alpha1 * a(n), shape (M,)."""
    return pathloss(model, p, DOWNLINK) * array_response(
        geom, n, symbol_duration, v, p, signed=signed
    )


def roundtrip_channel(
    geom: ArrayGeometry,
    model: PathlossModel,
    n: int,
    symbol_duration: float,
    v,
    p,
    signed: bool = False,
) -> np.ndarray:
    """Echo channel H(n) = alpha2 * a(n) a(n)^T, shape (M, M), symmetric rank 1."""
    a = array_response(geom, n, symbol_duration, v, p, signed=signed)
    h = pathloss(model, p, ROUNDTRIP) * np.outer(a, a)
    # complex multiply can contract to FMA, leaving H_ij and H_ji a ulp
    # apart; mirror the upper triangle so symmetry holds bit-exactly
    low = np.tril_indices(geom.num_antennas, -1)
    h[low] = h.T[low]
    return h


def projection_coeff_gradients(geom: ArrayGeometry, p, signed: bool = False):
    """Spatial derivatives of (g, q): returns (dg_dx, dq_dx, dg_dy, dq_dy).

    Under the default magnitude convention the derivative is undefined where
    x crosses an antenna (or y crosses the array plane); those points raise
    ProjectionKinkError.
    """
    p = _as_position(p)
    r = element_distances(geom, p)
    ux = p[0] - element_offsets(geom)
    uy = p[1]
    r3 = r ** 3
    if signed:
        dg_dx = uy * uy / r3
        dq_dx = -ux * uy / r3
        dg_dy = -ux * uy / r3
        dq_dy = ux * ux / r3
        return dg_dx, dq_dx, dg_dy, dq_dy
    if np.min(np.abs(ux)) < KINK_TOL:
        raise ProjectionKinkError(
            f"x = {p[0]} is within {KINK_TOL} m of an antenna; the magnitude "
            "projection has no derivative there (use the signed convention)"
        )
    if abs(uy) < KINK_TOL:
        raise ProjectionKinkError(
            f"y = {p[1]} is within {KINK_TOL} m of the array plane; the "
            "magnitude projection has no derivative there"
        )
    dg_dx = np.sign(ux) / r - ux * np.abs(ux) / r3
    dq_dx = -abs(uy) * ux / r3
    dg_dy = -np.abs(ux) * uy / r3
    dq_dy = np.sign(uy) / r - uy * abs(uy) / r3
    return dg_dx, dq_dx, dg_dy, dq_dy
