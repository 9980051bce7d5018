"""Per-CPI velocity estimation by Adam ascent on the echo log-likelihood.

The position is dead-reckoned between CPIs; only the velocity is re-estimated
from the echo snapshot, by maximizing g(v) = 2 Re{y^H b(v)} - ||b(v)||^2 where
b(v) is the model echo at the trial velocity. The default optimizer alternates
axes (x step, then y step with the fresh x); a joint-update variant and a plain
gradient ascent are included for comparison.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import geometry as geo
from .beamforming import predictive_beamformers
from .signals import Observation, check_unit_norm

VARIANTS = ("adam-ao", "adam-joint", "plain-gd")

# Relative-change denominators are floored here to survive v near zero.
REL_CHANGE_FLOOR = 1e-6


class DivergenceError(RuntimeError):
    """Optimizer produced a non-finite iterate or objective."""


@dataclass(frozen=True)
class AdamHyper:
    """Per-axis ascent hyperparameters and the shared stop rule."""

    step_x: float = 0.05
    step_y: float = 0.05
    beta1_x: float = 0.9
    beta1_y: float = 0.9
    beta2_x: float = 0.999
    beta2_y: float = 0.999
    epsilon: float = 1e-8
    max_iters: int = 500
    rel_tol_x: float = 1e-5
    rel_tol_y: float = 1e-5

    def __post_init__(self) -> None:
        for name in ("step_x", "step_y"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        for name in ("beta1_x", "beta1_y", "beta2_x", "beta2_y"):
            val = getattr(self, name)
            if not 0.0 <= val < 1.0:
                raise ValueError(f"{name} must be in [0, 1), got {val}")
        if self.epsilon <= 0.0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        if self.max_iters < 1:
            raise ValueError(f"max_iters must be >= 1, got {self.max_iters}")
        if self.rel_tol_x < 0.0 or self.rel_tol_y < 0.0:
            raise ValueError("relative tolerances must be nonnegative")


@dataclass
class OptimizerTrace:
    """Iterates (k, vx, vy, objective, grad_x, grad_y); row 0 is the init."""

    rows: list[tuple[int, float, float, float, float, float]] = field(
        default_factory=list
    )

    def append(self, k, vx, vy, objective, grad_x, grad_y) -> None:
        self.rows.append(
            (int(k), float(vx), float(vy), float(objective), float(grad_x), float(grad_y))
        )

    def __len__(self) -> int:
        return len(self.rows)

    def final_velocity(self) -> np.ndarray:
        k, vx, vy, *_ = self.rows[-1]
        return np.array([vx, vy])


class _VelocityProblem:
    """Echo likelihood at one CPI with everything but the velocity frozen."""

    def __init__(self, y, geom, model, p_hat, f, s_amp, num_symbols, symbol_duration, signed):
        f = np.asarray(f)
        check_unit_norm(f)
        self.y = np.asarray(y)
        atil = geo.steering_vector(geom, p_hat)
        self.g, self.q = geo.projection_coeffs(geom, p_hat, signed=signed)
        alpha2 = geo.pathloss(model, p_hat, geo.ROUNDTRIP)
        self.scale = s_amp * alpha2
        # phase advance per unit composite speed over the CPI
        self.rot = geom.wavenumber * num_symbols * symbol_duration
        self.atil = atil
        self.w = atil * f          # a^T f        == w @ d
        self.wg = self.g * self.w  # (g.a)^T f    == wg @ d
        self.wq = self.q * self.w
        self.yh = np.conj(self.y)

    def _fields(self, vx, vy):
        d = np.exp(-1j * self.rot * (self.g * vx + self.q * vy))
        a = self.atil * d
        af = self.w @ d
        b = self.scale * a * af
        return d, a, af, b

    def objective(self, vx, vy) -> float:
        _, _, _, b = self._fields(vx, vy)
        return float(2.0 * np.real(self.yh @ b) - np.real(np.vdot(b, b)))

    def gradient(self, vx, vy, axis: int) -> float:
        d, a, af, b = self._fields(vx, vy)
        if axis == 0:
            ca, cf = self.g * a, self.wg @ d
        else:
            ca, cf = self.q * a, self.wq @ d
        db = -1j * self.rot * self.scale * (ca * af + a * cf)
        resid = self.y - b
        return float(2.0 * np.real(np.conj(resid) @ db))


def _axis_index(axis) -> int:
    if axis in (0, "x"):
        return 0
    if axis in (1, "y"):
        return 1
    raise ValueError(f"axis must be 'x' or 'y', got {axis!r}")


def ml_objective(
    y,
    geom: geo.ArrayGeometry,
    model: geo.PathlossModel,
    p_hat,
    v,
    f,
    s_amp: float,
    num_symbols: int,
    symbol_duration: float,
    signed: bool = False,
) -> float:
    """Echo log-likelihood (up to constants) at trial velocity v."""
    prob = _VelocityProblem(y, geom, model, p_hat, f, s_amp, num_symbols, symbol_duration, signed)
    return prob.objective(float(v[0]), float(v[1]))


def grad_velocity(
    y,
    geom: geo.ArrayGeometry,
    model: geo.PathlossModel,
    p_hat,
    v,
    f,
    s_amp: float,
    num_symbols: int,
    symbol_duration: float,
    axis="x",
    signed: bool = False,
) -> float:
    """Exact derivative of ml_objective along one velocity axis."""
    prob = _VelocityProblem(y, geom, model, p_hat, f, s_amp, num_symbols, symbol_duration, signed)
    return prob.gradient(float(v[0]), float(v[1]), _axis_index(axis))


class _AdamAxis:
    """Scalar Adam ascent state for one velocity axis."""

    def __init__(self, step, beta1, beta2, epsilon):
        self.step = step
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.m = 0.0
        self.n = 0.0
        self.t = 0

    def update(self, v, grad):
        self.t += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grad
        self.n = self.beta2 * self.n + (1.0 - self.beta2) * grad * grad
        m_hat = self.m / (1.0 - self.beta1 ** self.t)
        n_hat = self.n / (1.0 - self.beta2 ** self.t)
        return v + self.step * m_hat / math.sqrt(n_hat + self.epsilon)


def _rel_change(new, old):
    return abs(new - old) / max(abs(new), REL_CHANGE_FLOOR)


def _check_finite(k, vx, vy, objective):
    if not (math.isfinite(vx) and math.isfinite(vy) and math.isfinite(objective)):
        raise DivergenceError(
            f"non-finite iterate at iteration {k}: v=({vx}, {vy}), objective={objective}"
        )


def _ascend(prob: _VelocityProblem, v_init, hyper: AdamHyper, variant: str):
    vx, vy = float(v_init[0]), float(v_init[1])
    trace = OptimizerTrace()
    trace.append(0, vx, vy, prob.objective(vx, vy), 0.0, 0.0)
    if variant in ("adam-ao", "adam-joint"):
        ax = _AdamAxis(hyper.step_x, hyper.beta1_x, hyper.beta2_x, hyper.epsilon)
        ay = _AdamAxis(hyper.step_y, hyper.beta1_y, hyper.beta2_y, hyper.epsilon)
    for k in range(1, hyper.max_iters + 1):
        gx = prob.gradient(vx, vy, 0)
        if variant == "adam-ao":
            vx_new = ax.update(vx, gx)
            gy = prob.gradient(vx_new, vy, 1)
            vy_new = ay.update(vy, gy)
        elif variant == "adam-joint":
            gy = prob.gradient(vx, vy, 1)
            vx_new = ax.update(vx, gx)
            vy_new = ay.update(vy, gy)
        elif variant == "plain-gd":
            gy = prob.gradient(vx, vy, 1)
            vx_new = vx + hyper.step_x * gx
            vy_new = vy + hyper.step_y * gy
        else:
            raise ValueError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
        objective = prob.objective(vx_new, vy_new)
        _check_finite(k, vx_new, vy_new, objective)
        trace.append(k, vx_new, vy_new, objective, gx, gy)
        done = (
            _rel_change(vx_new, vx) < hyper.rel_tol_x
            and _rel_change(vy_new, vy) < hyper.rel_tol_y
        )
        vx, vy = vx_new, vy_new
        if done:
            break
    return np.array([vx, vy]), trace


def adam_ao_estimate(
    y,
    geom: geo.ArrayGeometry,
    model: geo.PathlossModel,
    p_hat,
    v_init,
    f,
    s_amp: float,
    num_symbols: int,
    symbol_duration: float,
    hyper: AdamHyper = AdamHyper(),
    signed: bool = False,
):
    """Alternating Adam ascent: x moves first, y sees the fresh x each iteration.

    Returns (v_hat, trace). Stops at max_iters or once both axes' relative
    changes drop below their tolerances.
    """
    prob = _VelocityProblem(y, geom, model, p_hat, f, s_amp, num_symbols, symbol_duration, signed)
    return _ascend(prob, v_init, hyper, "adam-ao")


def gd_estimate(
    y,
    geom: geo.ArrayGeometry,
    model: geo.PathlossModel,
    p_hat,
    v_init,
    f,
    s_amp: float,
    num_symbols: int,
    symbol_duration: float,
    hyper: AdamHyper = AdamHyper(),
    variant: str = "plain-gd",
    signed: bool = False,
):
    """Comparison optimizers on the same objective: plain-gd or adam-joint."""
    if variant not in ("plain-gd", "adam-joint"):
        raise ValueError(f"variant must be 'plain-gd' or 'adam-joint', got {variant!r}")
    prob = _VelocityProblem(y, geom, model, p_hat, f, s_amp, num_symbols, symbol_duration, signed)
    return _ascend(prob, v_init, hyper, variant)


def estimate_velocity(variant: str, *args, **kwargs):
    """Dispatch one of VARIANTS with the adam_ao_estimate signature."""
    if variant == "adam-ao":
        return adam_ao_estimate(*args, **kwargs)
    return gd_estimate(*args, variant=variant, **kwargs)


def agdao_track_step(
    prev_p_hat,
    prev_v_hat,
    observe,
    geom: geo.ArrayGeometry,
    model: geo.PathlossModel,
    s_amp: float,
    num_symbols: int,
    symbol_duration: float,
    cpi_duration: float,
    hyper: AdamHyper = AdamHyper(),
    signed: bool = False,
):
    """One closed-loop CPI: point from the previous estimate, observe, re-estimate.

    observe maps the transmitted BeamformerSet to this CPI's Observation.
    Returns (beamformers, p_hat, v_hat, trace); p_hat is the dead-reckoned
    position also used to point the beam.
    """
    prev_p_hat = np.asarray(prev_p_hat, dtype=float)
    prev_v_hat = np.asarray(prev_v_hat, dtype=float)
    p_pred = prev_p_hat + cpi_duration * prev_v_hat
    bf = predictive_beamformers(
        geom, p_pred, prev_v_hat, num_symbols, symbol_duration, signed=signed
    )
    obs = observe(bf)
    if not isinstance(obs, Observation):
        raise TypeError(f"observe must return an Observation, got {type(obs)!r}")
    v_hat, trace = adam_ao_estimate(
        obs.y, geom, model, p_pred, prev_v_hat, bf[-1], s_amp,
        num_symbols, symbol_duration, hyper=hyper, signed=signed,
    )
    return bf, p_pred, v_hat, trace
