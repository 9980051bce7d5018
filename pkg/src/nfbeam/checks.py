"""Built-in oracle suites behind the `check` subcommand.

Quick independent cross-checks of the analytic pieces: geometry identities,
the closed-form matched-filter SNR, finite differences against the velocity
gradient and the observation Jacobian, and the dense stacked-real Kalman
update against the production low-rank form.
"""
from __future__ import annotations

import numpy as np

from . import geometry as geo
from .agdao import grad_velocity, ml_objective
from .beamforming import predictive_beamformers
from .ekf import TrackerBelief, kalman_update, observation_jacobian
from .motion import MotionState
from .signals import (
    NoiseConfig,
    cpi_throughput,
    echo_amplitude,
    observation_mean,
    synthesize_observation,
)

# Shared desk-scale setup for the spot checks.
_CARRIER = 30.0e9
_TS = 1.0e-5
_N = 10


def _geom(m: int) -> geo.ArrayGeometry:
    return geo.ArrayGeometry.half_wavelength(m, _CARRIER)


def _random_state(rng) -> MotionState:
    # x kept beyond the aperture so magnitude-projection kinks stay far away
    return MotionState(
        float(rng.uniform(1.5, 8.0)),
        float(rng.uniform(5.0, 30.0)),
        float(rng.uniform(-15.0, 15.0)),
        float(rng.uniform(-15.0, 15.0)),
    )


def check_geometry(seed: int = 0, trials: int = 200):
    """Unit modulus, projection identity, and echo-channel rank-1 symmetry."""
    rng = np.random.default_rng(seed)
    geom = _geom(64)
    model = geo.PathlossModel()
    worst_mod = 0.0
    worst_proj = 0.0
    worst_rank = 0.0
    worst_sym = 0.0
    small = _geom(16)
    for t in range(trials):
        eta = _random_state(rng)
        signed = bool(t % 2)
        a = geo.array_response(geom, _N, _TS, eta.velocity, eta.position, signed=signed)
        worst_mod = max(worst_mod, float(np.max(np.abs(np.abs(a) - 1.0))))
        g, q = geo.projection_coeffs(geom, eta.position, signed=signed)
        worst_proj = max(worst_proj, float(np.max(np.abs(g * g + q * q - 1.0))))
        if t < 20:
            h = geo.roundtrip_channel(small, model, _N, _TS, eta.velocity, eta.position, signed=signed)
            worst_sym = max(worst_sym, float(np.max(np.abs(h - h.T))))
            s = np.linalg.svd(h, compute_uv=False)
            worst_rank = max(worst_rank, float(s[1] / np.linalg.norm(h)))
    ok = worst_mod < 1e-12 and worst_proj < 1e-12 and worst_sym < 1e-12 and worst_rank < 1e-10
    return ok, (
        f"modulus {worst_mod:.2e}, g^2+q^2 {worst_proj:.2e}, "
        f"symmetry {worst_sym:.2e}, rank-1 residual {worst_rank:.2e}"
    )


def check_mrt_snr(seed: int = 0, trials: int = 100):
    """Matched filter at the true state hits P*M*alpha1^2/sigma_c^2 exactly."""
    rng = np.random.default_rng(seed)
    geom = _geom(64)
    model = geo.PathlossModel()
    power_w, sigma_c2 = 1.0, 1e-8
    worst = 0.0
    for _ in range(trials):
        eta = _random_state(rng)
        bf = predictive_beamformers(geom, eta.position, eta.velocity, _N, _TS)
        rate = cpi_throughput(geom, model, eta, bf, _TS, power_w, sigma_c2)
        alpha1 = geo.pathloss(model, eta.position, geo.DOWNLINK)
        snr = power_w * geom.num_antennas * alpha1 ** 2 / sigma_c2
        expected = float(np.log2(1.0 + snr))
        worst = max(worst, abs(rate - expected) / expected)
    return worst < 1e-9, f"max rel error {worst:.2e} over {trials} states"


def _spot_instance(rng, geom, model, signed):
    eta = _random_state(rng)
    p_hat = eta.position + rng.normal(0.0, 0.05, 2)
    v_trial = rng.uniform(-15.0, 15.0, 2)
    bf = predictive_beamformers(geom, p_hat, v_trial, _N, _TS, signed=signed)
    s_amp = echo_amplitude(1.0)
    obs = synthesize_observation(
        geom, model, eta, bf, NoiseConfig(), s_amp, _TS, rng, signed=signed
    )
    return eta, p_hat, v_trial, bf[-1], s_amp, obs


def check_gradient(seed: int = 0, trials: int = 20):
    """Analytic velocity gradient vs central differences of the objective."""
    rng = np.random.default_rng(seed)
    geom = _geom(64)
    model = geo.PathlossModel()
    step = 1e-4
    worst = 0.0
    for t in range(trials):
        signed = bool(t % 2)
        _, p_hat, v, f, s_amp, obs = _spot_instance(rng, geom, model, signed)
        for axis, e in ((0, np.array([1.0, 0.0])), (1, np.array([0.0, 1.0]))):
            hi = ml_objective(obs.y, geom, model, p_hat, v + step * e, f, s_amp, _N, _TS, signed=signed)
            lo = ml_objective(obs.y, geom, model, p_hat, v - step * e, f, s_amp, _N, _TS, signed=signed)
            fd = (hi - lo) / (2.0 * step)
            an = grad_velocity(obs.y, geom, model, p_hat, v, f, s_amp, _N, _TS, axis=axis, signed=signed)
            worst = max(worst, abs(an - fd) / max(abs(fd), 1e-12))
    return worst < 1e-5, f"max rel error {worst:.2e} over {trials} instances"


def _fd4(fun, x0, step):
    """4th-order central difference of a vector-valued function."""
    return (
        8.0 * (fun(x0 + step) - fun(x0 - step)) - (fun(x0 + 2 * step) - fun(x0 - 2 * step))
    ) / (12.0 * step)


def check_jacobian(seed: int = 0, trials: int = 10):
    """Analytic observation Jacobian vs finite differences, all four columns."""
    rng = np.random.default_rng(seed)
    geom = _geom(64)
    model = geo.PathlossModel()
    s_amp = echo_amplitude(1.0)
    pos_step, vel_step = 1e-4, 1e-4
    worst = 0.0
    for t in range(trials):
        signed = bool(t % 2)
        eta = _random_state(rng)
        bf = predictive_beamformers(geom, eta.position, eta.velocity, _N, _TS, signed=signed)
        f = bf[-1]
        jac = observation_jacobian(geom, model, eta, f, s_amp, _N, _TS, signed=signed)

        def mean_at(state_vec):
            st = MotionState.from_array(state_vec)
            return observation_mean(geom, model, st, f, s_amp, _N, _TS, signed=signed)

        base = eta.as_array()
        for col in range(4):
            e = np.zeros(4)
            e[col] = 1.0
            step = pos_step if col < 2 else vel_step
            if col < 2:
                fd = _fd4(lambda s: mean_at(base + s * e), 0.0, step)
            else:
                fd = (mean_at(base + step * e) - mean_at(base - step * e)) / (2.0 * step)
            err = np.linalg.norm(jac[:, col] - fd) / np.linalg.norm(fd)
            worst = max(worst, float(err))
    return worst < 1e-4, f"max column rel error {worst:.2e} over {trials} states"


def _dense_reference_update(prior, y, jac, predicted_mean, echo_noise_power):
    """Textbook stacked-real Kalman update; O(M^3), used only as an oracle."""
    nu = np.asarray(y) - np.asarray(predicted_mean)
    j_r = np.vstack([np.real(jac), np.imag(jac)])
    nu_r = np.concatenate([np.real(nu), np.imag(nu)])
    p = np.asarray(prior.covariance, dtype=float)
    r_cov = (echo_noise_power / 2.0) * np.eye(j_r.shape[0])
    s = j_r @ p @ j_r.T + r_cov
    k = p @ j_r.T @ np.linalg.inv(s)
    mean = prior.mean.as_array() + k @ nu_r
    cov = (np.eye(4) - k @ j_r) @ p
    return mean, 0.5 * (cov + cov.T)


def check_kalman(seed: int = 0, trials: int = 10):
    """Low-rank production update vs the dense stacked-real reference.

    Two noise regimes: a well-conditioned one where the routes must agree to
    near machine precision, and the operating echo noise where cond(A) ~ 1e9
    caps double-precision agreement near 1e-7.
    """
    rng = np.random.default_rng(seed)
    geom = _geom(8)
    model = geo.PathlossModel()
    s_amp = echo_amplitude(1.0)
    worst_sharp = 0.0
    worst_op = 0.0
    for t in range(trials):
        signed = bool(t % 2)
        eta = _random_state(rng)
        bf = predictive_beamformers(geom, eta.position, eta.velocity, _N, _TS, signed=signed)
        f = bf[-1]
        h_bar = observation_mean(geom, model, eta, f, s_amp, _N, _TS, signed=signed)
        jac = observation_jacobian(geom, model, eta, f, s_amp, _N, _TS, signed=signed)
        y = h_bar + (rng.normal(0, 1e-4, geom.num_antennas) + 1j * rng.normal(0, 1e-4, geom.num_antennas))
        prior = TrackerBelief(mean=eta, covariance=0.1 * np.eye(4))
        for sigma_e2 in (1e-2, 1e-8):
            post, _ = kalman_update(prior, y, jac, h_bar, sigma_e2)
            ref_mean, ref_cov = _dense_reference_update(prior, y, jac, h_bar, sigma_e2)
            dev = max(
                float(np.max(np.abs(post.mean.as_array() - ref_mean))),
                float(np.max(np.abs(post.covariance - ref_cov))),
            )
            if sigma_e2 == 1e-2:
                worst_sharp = max(worst_sharp, dev)
            else:
                worst_op = max(worst_op, dev)
    ok = worst_sharp < 1e-11 and worst_op < 1e-6
    return ok, f"deviation {worst_sharp:.2e} (well-conditioned), {worst_op:.2e} (operating noise)"


def run_all(seed: int = 0):
    """All suites; returns [(name, ok, detail)]."""
    return [
        ("geometry-identities", *check_geometry(seed)),
        ("matched-filter-snr", *check_mrt_snr(seed)),
        ("velocity-gradient-fd", *check_gradient(seed)),
        ("observation-jacobian-fd", *check_jacobian(seed)),
        ("kalman-low-rank-vs-dense", *check_kalman(seed)),
    ]
