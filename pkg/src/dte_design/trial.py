"""Event-driven trial simulation.

One simulated trial draws survival times per arm and recruitment times, forms
pseudo event times (recruitment + survival), stops at the calendar time of the
E-th event, and administratively censors everyone still at risk.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np

from .survival import DTEModel, sample_control_time, sample_experimental_time

__all__ = [
    "UniformRecruitment",
    "PowerRecruitment",
    "PiecewiseRecruitment",
    "RecruitmentModel",
    "TrialDesign",
    "TrialDataset",
    "sample_recruitment",
    "simulate_trial",
    "write_trial_csv",
]

CONTROL, EXPERIMENTAL = 0, 1


@dataclass(frozen=True)
class UniformRecruitment:
    """Entry times uniform on [0, duration] months."""

    duration: float

    def __post_init__(self) -> None:
        if not self.duration > 0:
            raise ValueError(f"duration must be positive, got {self.duration}")


@dataclass(frozen=True)
class PowerRecruitment:
    """P(entry <= t) = (t / period)^exponent on [0, period]."""

    period: float
    exponent: float

    def __post_init__(self) -> None:
        if not self.period > 0:
            raise ValueError(f"period must be positive, got {self.period}")
        if not self.exponent > 0:
            raise ValueError(f"exponent must be positive, got {self.exponent}")


@dataclass(frozen=True)
class PiecewiseRecruitment:
    """Piecewise-constant entry rate; breakpoints are increasing interval ends."""

    rates: tuple[float, ...]
    breakpoints: tuple[float, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "rates", tuple(float(r) for r in self.rates))
        object.__setattr__(self, "breakpoints", tuple(float(b) for b in self.breakpoints))
        if len(self.rates) != len(self.breakpoints) or not self.rates:
            raise ValueError("rates and breakpoints must be non-empty and the same length")
        if any(r < 0 for r in self.rates) or not any(r > 0 for r in self.rates):
            raise ValueError("rates must be non-negative with at least one positive")
        edges = (0.0,) + self.breakpoints
        if any(b <= a for a, b in zip(edges, edges[1:])):
            raise ValueError("breakpoints must be positive and strictly increasing")


RecruitmentModel = Union[UniformRecruitment, PowerRecruitment, PiecewiseRecruitment]


@dataclass(frozen=True)
class TrialDesign:
    n_control: int
    n_experimental: int
    target_events: int
    recruitment: RecruitmentModel

    def __post_init__(self) -> None:
        if self.n_control < 1 or self.n_experimental < 1:
            raise ValueError("both arms need at least one subject")
        if not 1 <= self.target_events <= self.n_control + self.n_experimental:
            raise ValueError(
                f"target_events must lie in [1, {self.n_control + self.n_experimental}], got {self.target_events}"
            )

    @property
    def n_total(self) -> int:
        return self.n_control + self.n_experimental


@dataclass(frozen=True)
class TrialDataset:
    """Analysis-ready simulated trial.

    ``time`` is months since each subject's own recruitment; censored subjects
    have time == cutoff - recruit_time exactly. Exactly ``target_events`` of
    the event flags are set.
    """

    arm: np.ndarray
    recruit_time: np.ndarray
    time: np.ndarray
    event: np.ndarray
    cutoff: float

    def __len__(self) -> int:
        return len(self.time)


def sample_recruitment(model: RecruitmentModel, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw n i.i.d. entry times from the recruitment model."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    u = rng.uniform(size=n)
    if isinstance(model, UniformRecruitment):
        return model.duration * u
    if isinstance(model, PowerRecruitment):
        return model.period * u ** (1.0 / model.exponent)
    if isinstance(model, PiecewiseRecruitment):
        edges = np.concatenate(([0.0], np.asarray(model.breakpoints)))
        widths = np.diff(edges)
        masses = np.asarray(model.rates) * widths
        cum = np.concatenate(([0.0], np.cumsum(masses))) / masses.sum()
        idx = np.searchsorted(cum, u, side="right") - 1
        idx = np.clip(idx, 0, len(widths) - 1)
        frac = (u - cum[idx]) / (cum[idx + 1] - cum[idx])
        return edges[idx] + frac * widths[idx]
    raise TypeError(f"unknown recruitment model {model!r}")


def assemble_trial(
    arm: np.ndarray,
    survival: np.ndarray,
    recruit: np.ndarray,
    target_events: int,
) -> TrialDataset:
    """Turn raw (arm, survival, recruitment) draws into the analysis dataset.

    The cutoff is the target_events-th smallest pseudo event time
    (recruitment + survival), with ties broken by subject index. Subjects
    recruited strictly after the cutoff are dropped; everyone who is not one
    of the first target_events events is censored at cutoff - recruit_time.
    """
    n = len(survival)
    if not 1 <= target_events <= n:
        raise ValueError(f"target_events must lie in [1, {n}], got {target_events}")
    pseudo = recruit + survival
    order = np.lexsort((np.arange(n), pseudo))
    cutoff = float(pseudo[order[target_events - 1]])

    is_event = np.zeros(n, dtype=bool)
    is_event[order[:target_events]] = True
    keep = is_event | (recruit <= cutoff)

    time = np.where(is_event, survival, cutoff - recruit)
    return TrialDataset(
        arm=np.asarray(arm)[keep],
        recruit_time=np.asarray(recruit)[keep],
        time=time[keep],
        event=is_event[keep],
        cutoff=cutoff,
    )


def simulate_trial(design: TrialDesign, model: DTEModel, rng: np.random.Generator) -> TrialDataset:
    """Simulate one event-driven trial under the given two-arm model."""
    n_c, n_e = design.n_control, design.n_experimental
    surv_c = sample_control_time(model.control, rng.uniform(size=n_c))
    surv_e = sample_experimental_time(model, rng.uniform(size=n_e))
    survival = np.concatenate([surv_c, surv_e])
    arm = np.concatenate([np.zeros(n_c, dtype=np.int8), np.ones(n_e, dtype=np.int8)])
    recruit = sample_recruitment(design.recruitment, design.n_total, rng)
    return assemble_trial(arm, survival, recruit, design.target_events)


def write_trial_csv(data: TrialDataset, path: str | Path) -> None:
    """Dump a simulated trial as CSV (arm,recruit_time,time,event) for replication."""
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["arm", "recruit_time", "time", "event"])
        for a, r, t, e in zip(data.arm, data.recruit_time, data.time, data.event):
            writer.writerow(["experimental" if a else "control", repr(float(r)), repr(float(t)), int(e)])
