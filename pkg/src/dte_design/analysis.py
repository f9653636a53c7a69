"""Two-sample tests on a simulated trial: standard and weighted log-rank.

The z statistic is signed so that positive values favour the experimental arm
(more control deaths than expected under the null). Weights follow the
Fleming-Harrington family S(t-)^rho * (1 - S(t-))^gamma with S the pooled
left-continuous Kaplan-Meier estimate; rho = gamma = 0 is the plain log-rank.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from .trial import CONTROL, TrialDataset

__all__ = [
    "TestSpec",
    "TestResult",
    "kaplan_meier",
    "weighted_logrank",
    "run_test",
    "is_success",
]

_KINDS = ("log-rank", "fleming-harrington")


@dataclass(frozen=True)
class TestSpec:
    """Analysis choice: test family, weight exponents, one-sided alpha.

    Success means rejecting at level alpha with the observed effect favouring
    the experimental arm. A "log-rank" kind forces rho = gamma = 0.
    """

    kind: str = "log-rank"
    rho: float = 0.0
    gamma: float = 0.0
    alpha: float = 0.025

    def __post_init__(self) -> None:
        if self.kind not in _KINDS:
            raise ValueError(f"kind must be one of {_KINDS}, got {self.kind!r}")
        if self.rho < 0 or self.gamma < 0:
            raise ValueError("weight exponents must be non-negative")
        if not 0 < self.alpha < 1:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.kind == "log-rank" and (self.rho != 0 or self.gamma != 0):
            raise ValueError("log-rank has no weight exponents; use fleming-harrington")


@dataclass(frozen=True)
class TestResult:
    z: float
    p_value: float
    events_control: int
    events_experimental: int
    degenerate: bool = False


def kaplan_meier(times: np.ndarray, events: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Product-limit estimate on the distinct event times.

    Returns (event_times, survival) with survival the right-continuous KM
    value at each event time. Ties are grouped; censored subjects leave the
    risk set after their censoring time.
    """
    times = np.asarray(times, dtype=float)
    events = np.asarray(events, dtype=bool)
    event_times = np.unique(times[events])
    sorted_times = np.sort(times)
    n = len(times)
    at_risk = n - np.searchsorted(sorted_times, event_times, side="left")
    ev_idx = np.searchsorted(event_times, times[events])
    deaths = np.bincount(ev_idx, minlength=len(event_times)).astype(float)
    surv = np.cumprod(1.0 - deaths / at_risk)
    return event_times, surv


def weighted_logrank(data: TrialDataset, rho: float = 0.0, gamma: float = 0.0) -> TestResult:
    """Fleming-Harrington weighted log-rank statistic on a two-arm dataset.

    At each distinct event time the observed-minus-expected control deaths are
    taken from the hypergeometric 2x2 table and weighted; the variance uses the
    multi-death correction for ties. Zero total weighted variance (no
    information) yields a degenerate result.
    """
    times = np.asarray(data.time, dtype=float)
    events = np.asarray(data.event, dtype=bool)
    is_control = np.asarray(data.arm) == CONTROL
    if is_control.all() or not is_control.any():
        raise ValueError("both arms must be present")
    if not events.any():
        raise ValueError("at least one event is required")

    event_times = np.unique(times[events])
    sorted_all = np.sort(times)
    sorted_control = np.sort(times[is_control])
    n_at_risk = len(times) - np.searchsorted(sorted_all, event_times, side="left")
    n_c_at_risk = is_control.sum() - np.searchsorted(sorted_control, event_times, side="left")

    ev_idx = np.searchsorted(event_times, times[events])
    deaths = np.bincount(ev_idx, minlength=len(event_times)).astype(float)
    deaths_c = np.bincount(
        ev_idx[is_control[events]], minlength=len(event_times)
    ).astype(float)

    n, n_c, d = n_at_risk.astype(float), n_c_at_risk.astype(float), deaths
    expected_c = n_c * d / n
    with np.errstate(invalid="ignore", divide="ignore"):
        variance = n_c * (n - n_c) * d * (n - d) / (n * n * (n - 1.0))
    variance = np.where(n > 1, variance, 0.0)

    # pooled KM just before each event time: shift the product by one step
    km_left = np.concatenate(([1.0], np.cumprod(1.0 - d / n)[:-1]))
    weights = km_left**rho * (1.0 - km_left) ** gamma

    var_total = float(np.sum(weights**2 * variance))
    score = float(np.sum(weights * (deaths_c - expected_c)))
    n_events_c = int(deaths_c.sum())
    n_events_e = int(d.sum() - deaths_c.sum())
    if var_total <= 0.0:
        return TestResult(z=0.0, p_value=1.0, events_control=n_events_c,
                          events_experimental=n_events_e, degenerate=True)
    z = score / np.sqrt(var_total)
    return TestResult(
        z=float(z),
        p_value=float(stats.norm.sf(z)),
        events_control=n_events_c,
        events_experimental=n_events_e,
    )


def run_test(data: TrialDataset, spec: TestSpec) -> TestResult:
    return weighted_logrank(data, rho=spec.rho, gamma=spec.gamma)


def is_success(result: TestResult, spec: TestSpec) -> bool:
    """One-sided rejection in the direction favouring the experimental arm.

    The boundary p == alpha counts as a failure (strict inequality).
    """
    if result.degenerate:
        return False
    return result.p_value < spec.alpha and result.z > 0
