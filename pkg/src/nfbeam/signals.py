"""Echo synthesis, received SNR, and per-CPI throughput."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import geometry as geo
from .motion import MotionState

BEAM_NORM_TOL = 1e-9


class BeamNormError(ValueError):
    """Transmit beamformer is not unit norm."""


@dataclass(frozen=True)
class NoiseConfig:
    """Noise powers: comm link (sigma_c^2) and echo receiver (sigma_e^2)."""

    comm_noise_power: float = 1e-8
    echo_noise_power: float = 1e-8

    def __post_init__(self) -> None:
        if self.comm_noise_power <= 0.0:
            raise ValueError(
                f"comm_noise_power must be positive, got {self.comm_noise_power}"
            )
        if self.echo_noise_power < 0.0:
            raise ValueError(
                f"echo_noise_power must be nonnegative, got {self.echo_noise_power}"
            )


@dataclass(frozen=True)
class Observation:
    """Echo snapshot taken at the last symbol of a CPI."""

    y: np.ndarray
    cpi_index: int = 0


def check_unit_norm(f: np.ndarray, tol: float = BEAM_NORM_TOL) -> None:
    """Raise BeamNormError unless every beamformer row has unit 2-norm."""
    f = np.asarray(f)
    norms = np.linalg.norm(f, axis=-1)
    err = np.max(np.abs(norms - 1.0))
    if err > tol:
        raise BeamNormError(f"beamformer norm deviates from 1 by {err:.3e} (tol {tol})")


def echo_amplitude(tx_power_w: float, include_transmit_power: bool = True) -> float:
    """Deterministic symbol amplitude at the echo snapshot."""
    if tx_power_w < 0.0:
        raise ValueError(f"transmit power must be nonnegative, got {tx_power_w}")
    return math.sqrt(tx_power_w) if include_transmit_power else 1.0


def complex_gaussian(rng: np.random.Generator, size: int, power: float) -> np.ndarray:
    """Circularly-symmetric complex Gaussian, total variance `power` per entry."""
    if power < 0.0:
        raise ValueError(f"noise power must be nonnegative, got {power}")
    s = math.sqrt(power / 2.0)
    return rng.normal(0.0, s, size) + 1j * rng.normal(0.0, s, size)


def observation_mean(
    geom: geo.ArrayGeometry,
    model: geo.PathlossModel,
    eta: MotionState,
    f: np.ndarray,
    s_amp: float,
    num_symbols: int,
    symbol_duration: float,
    signed: bool = False,
) -> np.ndarray:
    """Noise-free echo s * H(N) f at the CPI's last symbol, shape (M,)."""
    a = geo.array_response(
        geom, num_symbols, symbol_duration, eta.velocity, eta.position, signed=signed
    )
    alpha2 = geo.pathloss(model, eta.position, geo.ROUNDTRIP)
    return s_amp * alpha2 * a * (a @ f)


def synthesize_observation(
    geom: geo.ArrayGeometry,
    model: geo.PathlossModel,
    eta: MotionState,
    beamformers: np.ndarray,
    noise: NoiseConfig,
    s_amp: float,
    symbol_duration: float,
    rng: np.random.Generator,
    cpi_index: int = 0,
    signed: bool = False,
) -> Observation:
    """Echo received at the last symbol, transmitted with beamformers[N-1]."""
    beamformers = np.asarray(beamformers)
    if beamformers.ndim != 2 or beamformers.shape[1] != geom.num_antennas:
        raise ValueError(
            f"beamformers must have shape (N, {geom.num_antennas}), got {beamformers.shape}"
        )
    check_unit_norm(beamformers)
    num_symbols = beamformers.shape[0]
    mean = observation_mean(
        geom, model, eta, beamformers[-1], s_amp, num_symbols, symbol_duration, signed=signed
    )
    z = complex_gaussian(rng, geom.num_antennas, noise.echo_noise_power)
    return Observation(y=mean + z, cpi_index=cpi_index)


def received_snr(
    geom: geo.ArrayGeometry,
    model: geo.PathlossModel,
    eta: MotionState,
    f: np.ndarray,
    n: int,
    symbol_duration: float,
    tx_power_w: float,
    comm_noise_power: float,
    signed: bool = False,
) -> float:
    """Downlink SNR at symbol n: P |h(n)^T f|^2 / sigma_c^2."""
    h = geo.downlink_channel(
        geom, model, n, symbol_duration, eta.velocity, eta.position, signed=signed
    )
    return tx_power_w * abs(h @ f) ** 2 / comm_noise_power


def cpi_throughput(
    geom: geo.ArrayGeometry,
    model: geo.PathlossModel,
    eta: MotionState,
    beamformers: np.ndarray,
    symbol_duration: float,
    tx_power_w: float,
    comm_noise_power: float,
    signed: bool = False,
) -> float:
    """Average rate over the CPI's symbols, bits/s/Hz."""
    beamformers = np.asarray(beamformers)
    num_symbols = beamformers.shape[0]
    atil = geo.steering_vector(geom, eta.position)
    vm = geo.radial_speeds(geom, eta.velocity, eta.position, signed=signed)
    n = np.arange(1, num_symbols + 1)
    phases = np.exp(-1j * geom.wavenumber * symbol_duration * np.outer(n, vm))
    alpha1 = geo.pathloss(model, eta.position, geo.DOWNLINK)
    gains = alpha1 * np.einsum("nm,nm->n", phases * atil[None, :], beamformers)
    snr = tx_power_w * np.abs(gains) ** 2 / comm_noise_power
    return float(np.mean(np.log2(1.0 + snr)))
