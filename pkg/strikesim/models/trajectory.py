"""
Trajectory models for the post-hit ball

- PiecewiseLinearXY: x as a function of y with one slope per side of the net
  and a shared intercept, plus its least-squares fit and the area loss used to
  compare two trajectories.
- Servo estimator: per-coordinate quadratics in time fit to observed ball
  positions, with an elastic bounce extrapolation until the post-bounce flight
  has been observed.
"""

import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from strikesim.core.frames import STRIKE_PLANE_Y
from strikesim.utils.validation import (
    ConfigError,
    InsufficientSamplesError,
    NoStrikeError,
    ShapeMismatchError,
    ValidationUtils,
)

logger = logging.getLogger(__name__)

BALL_RADIUS = 2.0  # cm
BOUNCE_MARGIN = 4.0  # cm above the ball radius still counted as contact
PRE_LOSS_RANGE = (140.0, -10.0)
POST_LOSS_RANGE = (-70.0, -140.0)


@dataclass(frozen=True)
class PiecewiseLinearXY:
    a1: float
    a2: float
    b: float

    def __post_init__(self):
        for name in ("a1", "a2", "b"):
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise ValueError(f"Trajectory parameter {name} must be finite")
            object.__setattr__(self, name, value)

    def to_array(self) -> np.ndarray:
        return np.array([self.a1, self.a2, self.b])

    @classmethod
    def from_array(cls, values: Sequence[float]) -> "PiecewiseLinearXY":
        a1, a2, b = np.asarray(values, dtype=float).reshape(3)
        return cls(a1, a2, b)

    def to_dict(self) -> dict:
        return {"a1": self.a1, "a2": self.a2, "b": self.b}


@dataclass(frozen=True)
class PiecewiseFit:
    params: PiecewiseLinearXY
    residual: float  # RMS x-residual, cm


def eval_piecewise(params: PiecewiseLinearXY, y):
    """x = a1*y + b for y >= 0, a2*y + b for y < 0 (scalar or array y)"""
    y_arr = np.asarray(y, dtype=float)
    x = np.where(y_arr >= 0.0, params.a1 * y_arr + params.b, params.a2 * y_arr + params.b)
    return float(x) if x.ndim == 0 else x


def strike_from_params(params: PiecewiseLinearXY, strike_y: float = STRIKE_PLANE_Y) -> float:
    return float(eval_piecewise(params, strike_y))


def fit_piecewise(samples, split_y: float = 0.0) -> PiecewiseFit:
    """
    Joint least-squares fit of (a1, a2, b) to (y, x) samples

    Args:
        samples: N x 2 array of (y, x) positions in cm
        split_y: Samples with y >= split_y belong to the a1 piece

    Returns:
        PiecewiseFit: Parameters and RMS residual
    """
    samples = ValidationUtils.require_shape(samples, (None, 2), "samples")
    ValidationUtils.require_finite(samples, "samples")
    y, x = samples[:, 0], samples[:, 1]
    pre = y >= split_y
    if pre.sum() < 2 or (~pre).sum() < 2:
        raise InsufficientSamplesError(
            f"Piecewise fit needs >= 2 samples per side of y={split_y} "
            f"(got {int(pre.sum())} / {int((~pre).sum())})"
        )
    design = np.column_stack([np.where(pre, y, 0.0), np.where(pre, 0.0, y), np.ones_like(y)])
    coef, *_ = np.linalg.lstsq(design, x, rcond=None)
    residual = float(np.sqrt(np.mean((design @ coef - x) ** 2)))
    return PiecewiseFit(PiecewiseLinearXY.from_array(coef), residual)


def _loss_grid(start: float, stop: float, step: float) -> np.ndarray:
    count = (start - stop) / step
    if abs(count - round(count)) > 1e-9:
        raise ConfigError(f"Loss step {step} does not divide the range [{stop}, {start}]")
    return start - step * np.arange(int(round(count)) + 1)


def trajectory_loss(pred: PiecewiseLinearXY, truth: PiecewiseLinearXY, step: float = 10.0) -> float:
    """
    Discretized area between two trajectories

    The pre-bounce line a1*y + b is compared over y in {140, ..., -10} and the
    post-bounce line a2*y + b over y in {-70, ..., -140}, both inclusive.
    """
    if not step > 0:
        raise ConfigError(f"Loss step must be positive, got {step}")
    y_pre = _loss_grid(*PRE_LOSS_RANGE, step)
    y_post = _loss_grid(*POST_LOSS_RANGE, step)
    pre = np.abs((pred.a1 - truth.a1) * y_pre + (pred.b - truth.b))
    post = np.abs((pred.a2 - truth.a2) * y_post + (pred.b - truth.b))
    return float(pre.sum() + post.sum())


@dataclass(frozen=True)
class QuadraticCurve:
    """c2*t^2 + c1*t + c0 with t in seconds"""
    c2: float
    c1: float
    c0: float

    def __post_init__(self):
        if not all(math.isfinite(float(c)) for c in (self.c2, self.c1, self.c0)):
            raise ValueError("Quadratic coefficients must be finite")

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        value = (self.c2 * t + self.c1) * t + self.c0
        return float(value) if value.ndim == 0 else value

    def velocity(self, t: float) -> float:
        return 2.0 * self.c2 * t + self.c1

    def coefficients(self) -> Tuple[float, float, float]:
        return (self.c2, self.c1, self.c0)

    @classmethod
    def fit(cls, t: np.ndarray, values: np.ndarray) -> "QuadraticCurve":
        c2, c1, c0 = np.polyfit(t, values, 2)
        return cls(float(c2), float(c1), float(c0))


@dataclass(frozen=True)
class ServoEstimate:
    pre_bounce: Tuple[QuadraticCurve, QuadraticCurve, QuadraticCurve]
    post_bounce: Tuple[QuadraticCurve, QuadraticCurve, QuadraticCurve]
    bounce_time: Optional[float]
    strike_time: float
    strike_point: Tuple[float, float]  # (x, z) at the strike plane
    post_refit: bool

    def position(self, t: float) -> np.ndarray:
        curves = self.post_bounce if self.bounce_time is not None and t >= self.bounce_time else self.pre_bounce
        return np.array([c(t) for c in curves])


def _level_roots(curve: QuadraticCurve, level: float) -> list:
    # numerically stable form; falls back to the linear root when c2 == 0
    a, b, c = curve.c2, curve.c1, curve.c0 - level
    if a == 0.0:
        return [] if b == 0.0 else [-c / b]
    disc = b * b - 4.0 * a * c
    if disc < 0.0:
        return []
    q = -0.5 * (b + math.copysign(math.sqrt(disc), b))
    if q == 0.0:
        return [0.0]
    return [r for r in (q / a, c / q) if math.isfinite(r)]


def solve_quadratic_time(curve: QuadraticCurve, level: float, not_before: float) -> Optional[float]:
    """Earliest t >= not_before with curve(t) == level, or None"""
    candidates = [r for r in _level_roots(curve, level) if r >= not_before]
    return min(candidates) if candidates else None


def _elastic_post_curves(pre: Sequence[QuadraticCurve], bounce_time: float):
    x_curve, y_curve, z_curve = pre
    c1 = -4.0 * z_curve.c2 * bounce_time - z_curve.c1
    z_at_bounce = z_curve(bounce_time)
    c0 = z_at_bounce - z_curve.c2 * bounce_time ** 2 - c1 * bounce_time
    return (x_curve, y_curve, QuadraticCurve(z_curve.c2, c1, c0))


def predict_contact_time(z_curve: QuadraticCurve, not_before: float,
                         ball_radius: float = BALL_RADIUS) -> Optional[float]:
    """First time the falling ball's center reaches one radius above the table"""
    falling = [r for r in _level_roots(z_curve, ball_radius)
               if r >= not_before and z_curve.velocity(r) < 0.0]
    return min(falling) if falling else None


def fit_servo_estimate(times, positions, bounce_index: Optional[int] = None,
                       strike_y: float = STRIKE_PLANE_Y,
                       ball_radius: float = BALL_RADIUS) -> ServoEstimate:
    """
    Fit the quadratic servoing estimate and solve for the strike point

    Args:
        times: N observation times (s)
        positions: N x 3 ball positions (cm)
        bounce_index: Index of the observed table-contact sample, if any.
            Samples before it feed the pre-bounce fit, samples after it the
            post-bounce fit; the contact sample itself is left out of both.
        strike_y: Strike plane
        ball_radius: Table contact happens when z equals the ball radius

    Returns:
        ServoEstimate: Curves, bounce time and strike point
    """
    times = ValidationUtils.require_finite(times, "times").reshape(-1)
    positions = ValidationUtils.require_shape(positions, (None, 3), "positions")
    if positions.shape[0] != times.shape[0]:
        raise ShapeMismatchError(f"{times.shape[0]} times for {positions.shape[0]} positions")
    ValidationUtils.require_finite(positions, "positions")

    if bounce_index is None:
        pre_idx = np.arange(times.size)
        post_idx = np.arange(0)
    else:
        pre_idx = np.arange(min(bounce_index, times.size))
        post_idx = np.arange(bounce_index + 1, times.size)
    if pre_idx.size < 3:
        raise InsufficientSamplesError(f"Servo fit needs >= 3 pre-bounce samples, got {pre_idx.size}")

    pre = tuple(QuadraticCurve.fit(times[pre_idx], positions[pre_idx, k]) for k in range(3))
    bounce_time = predict_contact_time(pre[2], times[pre_idx[0]], ball_radius)

    post_refit = post_idx.size >= 3
    if post_refit:
        post = tuple(QuadraticCurve.fit(times[post_idx], positions[post_idx, k]) for k in range(3))
        if bounce_time is None:
            bounce_time = float(times[bounce_index])
    elif bounce_time is not None:
        post = _elastic_post_curves(pre, bounce_time)
    else:
        post = pre

    pre_strike = solve_quadratic_time(pre[1], strike_y, times[0])
    if bounce_time is not None and (pre_strike is None or pre_strike > bounce_time):
        strike_time = solve_quadratic_time(post[1], strike_y, bounce_time)
        curves = post
    else:
        strike_time = pre_strike
        curves = pre
    if strike_time is None:
        raise NoStrikeError(f"Estimated trajectory never reaches y={strike_y}")

    strike_point = (curves[0](strike_time), curves[2](strike_time))
    return ServoEstimate(
        pre_bounce=pre,
        post_bounce=post,
        bounce_time=bounce_time,
        strike_time=float(strike_time),
        strike_point=(float(strike_point[0]), float(strike_point[1])),
        post_refit=post_refit,
    )


def detect_bounce_index(z, ball_radius: float = BALL_RADIUS, margin: float = BOUNCE_MARGIN) -> Optional[int]:
    """
    Index of the first table contact in a sampled z signal

    The contact is the lowest sample of the first run of samples below
    ball_radius + margin, provided z rises again afterwards (or the run is
    at the end of the signal).
    """
    z = np.asarray(z, dtype=float).reshape(-1)
    below = np.flatnonzero(z < ball_radius + margin)
    if below.size == 0:
        return None
    run_end = below[0]
    while run_end + 1 < z.size and z[run_end + 1] < ball_radius + margin:
        run_end += 1
    run = np.arange(below[0], run_end + 1)
    index = int(run[np.argmin(z[run])])
    if 0 < index < z.size - 1 and not (z[index] <= z[index - 1] and z[index] <= z[index + 1]):
        return None
    return index


def interpolate_crossing(times, positions, plane_y: float = STRIKE_PLANE_Y) -> Tuple[float, np.ndarray]:
    """
    First crossing of a sampled path with the plane y = plane_y

    Returns:
        Tuple: (crossing time, interpolated 3D position)
    """
    times = np.asarray(times, dtype=float).reshape(-1)
    positions = ValidationUtils.require_shape(positions, (times.size, 3), "positions")
    y = positions[:, 1] - plane_y
    exact = np.flatnonzero(y == 0.0)
    crossing = np.flatnonzero((y[:-1] > 0.0) & (y[1:] < 0.0))
    first_exact = exact[0] if exact.size else None
    first_cross = crossing[0] if crossing.size else None
    if first_exact is None and first_cross is None:
        raise NoStrikeError(f"Path never crosses y={plane_y}")
    if first_exact is not None and (first_cross is None or first_exact <= first_cross):
        return float(times[first_exact]), positions[first_exact].copy()
    i = first_cross
    w = y[i] / (y[i] - y[i + 1])
    t = times[i] + w * (times[i + 1] - times[i])
    point = positions[i] + w * (positions[i + 1] - positions[i])
    return float(t), point
