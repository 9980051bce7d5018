"""Transmit beamformers: predictive matched filter and the baseline pointers."""
from __future__ import annotations

import math

import numpy as np

from . import geometry as geo
from .motion import MotionState


def predictive_beamformers(
    geom: geo.ArrayGeometry,
    p_pred,
    v_pred,
    num_symbols: int,
    symbol_duration: float,
    signed: bool = False,
) -> np.ndarray:
    """Matched filter to the channel implied by an already-predicted state.

    Row n-1 is f(n) = conj(a_tilde(p_pred) * d(n; v_pred)) / sqrt(M); each row
    has unit norm. Shape (num_symbols, M).
    """
    if num_symbols < 1:
        raise ValueError(f"num_symbols must be >= 1, got {num_symbols}")
    atil = geo.steering_vector(geom, p_pred)
    vm = geo.radial_speeds(geom, v_pred, p_pred, signed=signed)
    n = np.arange(1, num_symbols + 1)
    d = np.exp(-1j * geom.wavenumber * symbol_duration * np.outer(n, vm))
    return np.conj(atil[None, :] * d) / math.sqrt(geom.num_antennas)


def opt_beamformers(
    geom: geo.ArrayGeometry,
    eta_true: MotionState,
    num_symbols: int,
    symbol_duration: float,
    signed: bool = False,
) -> np.ndarray:
    """Genie matched filter: the predictive beamformer fed the true state."""
    return predictive_beamformers(
        geom, eta_true.position, eta_true.velocity, num_symbols, symbol_duration, signed=signed
    )


def ff_beamformers(
    geom: geo.ArrayGeometry,
    eta_true: MotionState,
    num_symbols: int,
    symbol_duration: float,
) -> np.ndarray:
    """Far-field codebook at the true state: planar phases along u = p/||p||
    plus a common radial-Doppler rotation per symbol."""
    if num_symbols < 1:
        raise ValueError(f"num_symbols must be >= 1, got {num_symbols}")
    p = eta_true.position
    rnorm = float(np.linalg.norm(p))
    if rnorm < geo.MIN_RANGE:
        raise geo.DegeneratePositionError(
            f"position {p.tolist()} is within {geo.MIN_RANGE} m of the array center"
        )
    u = p / rnorm
    v_radial = float(eta_true.velocity @ u)
    n = np.arange(1, num_symbols + 1)
    # antennas sit on the x-axis, so u^T k_m reduces to u_x * k_m1
    spatial = geo.element_offsets(geom) * u[0]
    phase = geom.wavenumber * (
        n[:, None] * symbol_duration * v_radial + spatial[None, :]
    )
    return np.exp(-1j * phase) / math.sqrt(geom.num_antennas)


def feedback_latch_index(cpi_index: int, period_cpis: int) -> int:
    """CPI whose state was most recently reported before cpi_index began.

    Reports arrive at CPIs 1, 1+T, 1+2T, ...; CPI 1 itself uses the initial
    report.
    """
    if period_cpis < 1:
        raise ValueError(f"feedback period must be >= 1 CPI, got {period_cpis}")
    if cpi_index < 1:
        raise ValueError(f"cpi_index must be >= 1, got {cpi_index}")
    if cpi_index == 1:
        return 1
    return 1 + ((cpi_index - 2) // period_cpis) * period_cpis


def fd_predicted_state(
    trajectory: list[MotionState], cpi_index: int, period_cpis: int, cpi_duration: float
):
    """Dead-reckoned (position, velocity) pointing CPI cpi_index between reports.

    Holds the latched velocity for k = cpi_index - latch intervals.
    """
    latch = feedback_latch_index(cpi_index, period_cpis)
    held = cpi_index - latch
    st = trajectory[latch - 1]
    return st.position + held * cpi_duration * st.velocity, st.velocity
