"""Fit the delayed-effect model to an observed two-arm dataset.

Method A ties the experimental shape to the control shape and least-squares
fits the experimental rate to the Kaplan-Meier curve; Method B frees both
experimental parameters and fits them by maximum likelihood. The delay is an
input (typically read off the curves), not estimated.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import optimize

from .analysis import TestSpec, kaplan_meier
from .control_posterior import SurvivalDataset, SurvivalRecord, weibull_mle
from .engine import AssuranceResult, GridPointResult, power_from_model
from .survival import DTEModel, WeibullParams, experimental_survival
from .trial import TrialDesign

__all__ = [
    "TwoArmDataset",
    "DTEFit",
    "read_two_arm_csv",
    "fit_control",
    "fit_method_a",
    "fit_method_b",
    "compare_power",
]


@dataclass(frozen=True)
class TwoArmDataset:
    control: SurvivalDataset
    experimental: SurvivalDataset


@dataclass(frozen=True)
class DTEFit:
    """Fitted delayed-effect model plus its squared deviation from the
    experimental Kaplan-Meier curve on the post-delay event grid."""

    method: str
    delay: float
    control: WeibullParams
    experimental: WeibullParams
    goodness: float

    def model(self) -> DTEModel:
        return DTEModel(self.control, self.delay, self.experimental)


def read_two_arm_csv(path: str | Path) -> TwoArmDataset:
    """Read two-arm individual-patient data: header must contain time, event
    and arm (control/experimental) columns; source is optional."""
    path = Path(path)
    control: list[SurvivalRecord] = []
    experimental: list[SurvivalRecord] = []
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        fields = [f.strip().lower() for f in reader.fieldnames or []]
        for required in ("time", "event", "arm"):
            if required not in fields:
                raise ValueError(f"{path}: missing column {required!r} (found {fields})")
        for lineno, row in enumerate(reader, start=2):
            row = {k.strip().lower(): (v or "").strip() for k, v in row.items()}
            try:
                time = float(row["time"])
                if row["event"] not in ("0", "1"):
                    raise ValueError(f"event must be 0 or 1, got {row['event']!r}")
                arm = row["arm"].lower()
                if arm not in ("control", "experimental"):
                    raise ValueError(f"arm must be control or experimental, got {row['arm']!r}")
                record = SurvivalRecord(time=time, event=row["event"] == "1", source=row.get("source") or None)
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: malformed row: {exc}") from None
            (control if arm == "control" else experimental).append(record)
    if not control or not experimental:
        raise ValueError(f"{path}: both arms must be present")
    return TwoArmDataset(SurvivalDataset(tuple(control)), SurvivalDataset(tuple(experimental)))


def fit_control(data: SurvivalDataset) -> WeibullParams:
    """Censored Weibull maximum-likelihood fit of the control arm."""
    return weibull_mle(data)


def _post_delay_event_grid(data: SurvivalDataset, delay: float) -> tuple[np.ndarray, np.ndarray]:
    """Experimental-arm event times after the delay and the KM values there."""
    event_times, km = kaplan_meier(data.times, data.events)
    keep = event_times > delay
    if not keep.any():
        raise ValueError(f"no experimental events after the delay ({delay} months); cannot fit")
    return event_times[keep], km[keep]


def _curve_sse(model: DTEModel, grid: np.ndarray, km: np.ndarray) -> float:
    fitted = experimental_survival(grid, model)
    return float(np.sum((fitted - km) ** 2))


def fit_method_a(data: TwoArmDataset, delay: float) -> DTEFit:
    """Shape tied to the control fit; rate least-squares matched to the
    experimental Kaplan-Meier estimate at post-delay event times."""
    if delay < 0:
        raise ValueError("delay must be non-negative")
    control = fit_control(data.control)
    grid, km = _post_delay_event_grid(data.experimental, delay)

    def objective(log_rate: float) -> float:
        model = DTEModel(control, delay, WeibullParams(np.exp(log_rate), control.shape))
        return _curve_sse(model, grid, km)

    res = optimize.minimize_scalar(
        objective,
        bracket=(np.log(control.rate) - 2.0, np.log(control.rate), np.log(control.rate) + 2.0),
        method="brent",
        options={"xtol": 1e-12},
    )
    rate = float(np.exp(res.x))
    experimental = WeibullParams(rate, control.shape)
    return DTEFit("A", delay, control, experimental, goodness=float(res.fun))


def _post_delay_loglik(log_params: np.ndarray, times: np.ndarray, events: np.ndarray, delay: float) -> float:
    """Experimental-arm log-likelihood terms that involve the post-delay
    parameters (pre-delay observations contribute constants only)."""
    rate, shape = np.exp(log_params)
    if not (np.isfinite(rate) and np.isfinite(shape)):
        return -np.inf
    post = times > delay
    t = times[post]
    e = events[post]
    with np.errstate(over="ignore"):
        gap = t**shape - delay**shape
        ll = -rate**shape * gap.sum()
        ll += e.sum() * (np.log(shape) + shape * np.log(rate)) + (shape - 1.0) * np.log(t[e]).sum()
    return float(ll) if np.isfinite(ll) else -np.inf


def fit_method_b(data: TwoArmDataset, delay: float) -> DTEFit:
    """Both experimental parameters fitted by maximum likelihood on the
    post-delay branch; the control fit is shared with Method A."""
    if delay < 0:
        raise ValueError("delay must be non-negative")
    fit_a = fit_method_a(data, delay)
    control = fit_a.control
    times, events = data.experimental.times, data.experimental.events
    if not ((times > delay) & events).any():
        raise ValueError(f"no experimental events after the delay ({delay} months); cannot fit")

    best = None
    starts = [
        np.log([fit_a.experimental.rate, control.shape]),
        np.log([fit_a.experimental.rate, 0.7 * control.shape]),
        np.log([fit_a.experimental.rate, 1.5 * control.shape]),
    ]
    for theta0 in starts:
        res = optimize.minimize(
            lambda th: -_post_delay_loglik(th, times, events, delay),
            theta0,
            method="Nelder-Mead",
            options={"xatol": 1e-10, "fatol": 1e-10, "maxiter": 4000},
        )
        if best is None or res.fun < best.fun:
            best = res
    if not np.isfinite(best.fun):
        raise RuntimeError(f"Method B fit did not converge: {best.message}; best iterate {np.exp(best.x)}")
    rate, shape = np.exp(best.x)
    experimental = WeibullParams(float(rate), float(shape))
    grid, km = _post_delay_event_grid(data.experimental, delay)
    goodness = _curve_sse(DTEModel(control, delay, experimental), grid, km)
    return DTEFit("B", delay, control, experimental, goodness=goodness)


def compare_power(
    fit_a: DTEFit,
    fit_b: DTEFit,
    grid: Sequence[tuple[int, int, int]],
    recruitment,
    test: TestSpec,
    iterations: int,
    seed: int,
    *,
    workers: int = 1,
) -> list[tuple[GridPointResult, GridPointResult]]:
    """Side-by-side power curves under the two fitted models.

    Grid points are (n_control, n_experimental, events); both fits share
    per-iteration random streams so the curves are directly comparable.
    """
    if not grid:
        raise ValueError("grid must be non-empty")
    out = []
    for n_c, n_e, events in grid:
        design = TrialDesign(n_c, n_e, events, recruitment)
        res_a = power_from_model(design, fit_a.model(), test, iterations, seed, workers=workers)
        res_b = power_from_model(design, fit_b.model(), test, iterations, seed, workers=workers)
        out.append(
            (GridPointResult(n_c, n_e, events, res_a), GridPointResult(n_c, n_e, events, res_b))
        )
    return out
