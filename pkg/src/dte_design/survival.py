"""Piecewise-Weibull survival model for a treatment effect that starts after a delay.

Both arms share the control hazard up to the delay; afterwards the experimental
arm follows its own Weibull hazard. All operations are pure functions of their
inputs and accept scalars or numpy arrays for the time / uniform arguments.
Times are in months throughout.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "WeibullParams",
    "DTEModel",
    "control_survival",
    "control_hazard",
    "experimental_survival",
    "hazard_ratio",
    "lambda_e_from_hr",
    "sample_control_time",
    "sample_experimental_time",
]


@dataclass(frozen=True)
class WeibullParams:
    """Weibull parameters in rate form: S(t) = exp{-(rate * t)^shape}.

    This is the rate parameterization. The more common scale form (scipy's
    ``scale``, R's ``rweibull`` scale) is ``scale = 1 / rate``; mixing the two
    up is the classic bug, so conversions should happen at the boundary, never
    inside this module. Median survival is ``ln(2)^(1/shape) / rate``.
    """

    rate: float
    shape: float

    def __post_init__(self) -> None:
        # `not x > 0` also rejects NaN
        if not self.rate > 0:
            raise ValueError(f"rate must be positive, got {self.rate}")
        if not self.shape > 0:
            raise ValueError(f"shape must be positive, got {self.shape}")

    @property
    def median(self) -> float:
        return float(np.log(2.0) ** (1.0 / self.shape) / self.rate)


@dataclass(frozen=True)
class DTEModel:
    """Two-arm model with a delayed separation of the survival curves.

    ``delay = 0`` means any effect starts immediately; setting
    ``experimental == control`` encodes "no separation" (hazard ratio 1).
    """

    control: WeibullParams
    delay: float
    experimental: WeibullParams

    def __post_init__(self) -> None:
        if not self.delay >= 0:
            raise ValueError(f"delay must be non-negative, got {self.delay}")


def _as_time(t, *, positive: bool = False) -> np.ndarray:
    arr = np.asarray(t, dtype=float)
    if positive:
        if np.any(arr <= 0):
            raise ValueError("time must be strictly positive")
    elif np.any(arr < 0):
        raise ValueError("time must be non-negative")
    return arr


def _as_uniform(u) -> np.ndarray:
    arr = np.asarray(u, dtype=float)
    if np.any(arr <= 0) or np.any(arr >= 1):
        raise ValueError("uniform draws must lie strictly inside (0, 1)")
    return arr


def _scalar_or_array(out: np.ndarray, like) -> float | np.ndarray:
    if np.ndim(like) == 0:
        return float(out)
    return out


def control_survival(t, params: WeibullParams):
    """Control-arm survival probability exp{-(rate*t)^shape}; equals 1 at t=0."""
    arr = _as_time(t)
    out = np.exp(-((params.rate * arr) ** params.shape))
    return _scalar_or_array(out, t)


def control_hazard(t, params: WeibullParams):
    """Control-arm hazard shape * rate^shape * t^(shape-1).

    For shape < 1 the hazard diverges at 0, so t <= 0 is rejected there; for
    shape >= 1 the t = 0 value is finite (0, or rate when shape == 1).
    """
    arr = _as_time(t, positive=params.shape < 1)
    out = params.shape * params.rate**params.shape * arr ** (params.shape - 1.0)
    return _scalar_or_array(out, t)


def experimental_survival(t, model: DTEModel):
    """Experimental-arm survival: control curve up to the delay, then the
    delayed-Weibull continuation. Continuous at t = delay and non-increasing."""
    arr = _as_time(t)
    ctrl, exp_ = model.control, model.experimental
    pre = np.exp(-((ctrl.rate * arr) ** ctrl.shape))
    cum_at_delay = (ctrl.rate * model.delay) ** ctrl.shape
    post = np.exp(
        -cum_at_delay
        - exp_.rate**exp_.shape * (arr**exp_.shape - model.delay**exp_.shape)
    )
    out = np.where(arr <= model.delay, pre, post)
    return _scalar_or_array(out, t)


def hazard_ratio(t, model: DTEModel):
    """Experimental/control hazard ratio: 1 up to the delay, then the ratio of
    the two Weibull hazards (constant when the shapes are equal)."""
    arr = _as_time(t, positive=True)
    ctrl, exp_ = model.control, model.experimental
    num = exp_.shape * exp_.rate**exp_.shape * arr ** (exp_.shape - 1.0)
    den = ctrl.shape * ctrl.rate**ctrl.shape * arr ** (ctrl.shape - 1.0)
    out = np.where(arr <= model.delay, 1.0, num / den)
    return _scalar_or_array(out, t)


def lambda_e_from_hr(rate_c: float, shape_c: float, hr: float) -> float:
    """Experimental rate giving a constant post-delay hazard ratio ``hr`` when
    the experimental shape equals the control shape: rate_c * hr^(1/shape_c)."""
    if not (rate_c > 0 and shape_c > 0):
        raise ValueError("control rate and shape must be positive")
    if not hr > 0:
        raise ValueError(f"hazard ratio must be positive, got {hr}")
    return rate_c * hr ** (1.0 / shape_c)


def sample_control_time(params: WeibullParams, u):
    """Invert the control survival function at u: (-ln u)^(1/shape) / rate."""
    arr = _as_uniform(u)
    out = (-np.log(arr)) ** (1.0 / params.shape) / params.rate
    return _scalar_or_array(out, u)


def sample_experimental_time(model: DTEModel, u):
    """Invert the experimental survival function at u.

    u >= S(delay) falls in the shared pre-delay segment and inverts the
    control curve; smaller u inverts the post-delay continuation.
    """
    arr = _as_uniform(u)
    ctrl, exp_ = model.control, model.experimental
    neg_log_u = -np.log(arr)
    cum_at_delay = (ctrl.rate * model.delay) ** ctrl.shape
    pre = neg_log_u ** (1.0 / ctrl.shape) / ctrl.rate
    # clamp keeps the discarded branch finite where neg_log_u < cum_at_delay
    core = np.maximum(neg_log_u - cum_at_delay, 0.0) / exp_.rate**exp_.shape
    post = (core + model.delay**exp_.shape) ** (1.0 / exp_.shape)
    out = np.where(neg_log_u <= cum_at_delay, pre, post)
    return _scalar_or_array(out, u)
