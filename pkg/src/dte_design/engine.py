"""Monte Carlo engines: assurance, power, assurance curves, and the
flexible-curve variant.

Every iteration owns a random stream derived from (master seed, stream tag,
iteration index), so results are reproducible bit-for-bit and independent of
worker count or scheduling. Common random numbers across grid points simply
reuse the same per-iteration streams.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence, Union

import numpy as np
from scipy import optimize

from .analysis import TestSpec, is_success, run_test
from .control_posterior import PosteriorSample
from .elicitation import EffectPrior, sample_delay_given_separation, sample_scenario
from .survival import (
    DTEModel,
    WeibullParams,
    experimental_survival,
    lambda_e_from_hr,
    sample_control_time,
    sample_experimental_time,
)
from .trial import TrialDesign, sample_recruitment, simulate_trial

__all__ = [
    "ControlSource",
    "AssuranceConfig",
    "AssuranceResult",
    "FlexConfig",
    "CurveMatrix",
    "GridPointResult",
    "ResampleNeeded",
    "draw_control",
    "assurance",
    "power",
    "power_from_model",
    "assurance_curve",
    "default_max_length",
    "build_curve_matrix",
    "solve_flexible_params",
    "flexible_assurance",
]

# stream tags keep the iteration, curve-matrix and horizon draws disjoint
_STREAM_ITER = 0
_STREAM_MATRIX = 1
_STREAM_HORIZON = 2

ControlSource = Union[PosteriorSample, WeibullParams]

ProgressFn = Callable[[int, int], None]


def _iteration_rng(seed: int, key: tuple[int, ...], index: int) -> np.random.Generator:
    return np.random.default_rng((seed, _STREAM_ITER, *key, index))


def draw_control(source: ControlSource, rng: np.random.Generator) -> WeibullParams:
    """One control-parameter draw: with replacement from a posterior sample, or
    the fixed value (consuming no randomness)."""
    if isinstance(source, WeibullParams):
        return source
    row = source.draws[int(rng.integers(len(source.draws)))]
    return WeibullParams(float(row[0]), float(row[1]))


@dataclass(frozen=True)
class AssuranceConfig:
    design: TrialDesign
    control: ControlSource
    effect: EffectPrior
    test: TestSpec
    iterations: int
    seed: int

    def __post_init__(self) -> None:
        if self.iterations < 1:
            raise ValueError(f"iterations must be >= 1, got {self.iterations}")


@dataclass(frozen=True)
class AssuranceResult:
    """Monte Carlo estimate of the probability of a successful trial.

    ``estimate`` is exactly successes / iterations and ``mc_se`` the binomial
    standard error sqrt(p(1-p)/N).
    """

    estimate: float
    mc_se: float
    iterations: int
    successes: int

    @classmethod
    def from_tally(cls, successes: int, iterations: int) -> "AssuranceResult":
        p = successes / iterations
        return cls(
            estimate=p,
            mc_se=math.sqrt(p * (1.0 - p) / iterations),
            iterations=iterations,
            successes=successes,
        )


class _AssuranceKernel:
    """Per-iteration model draw for the standard assurance path."""

    def __init__(self, control: ControlSource, effect: EffectPrior):
        self.control = control
        self.effect = effect

    def model(self, rng: np.random.Generator) -> DTEModel:
        ctrl = draw_control(self.control, rng)
        scenario = sample_scenario(self.effect, rng)
        rate_e = lambda_e_from_hr(ctrl.rate, ctrl.shape, scenario.hr_star)
        return DTEModel(ctrl, scenario.delay, WeibullParams(rate_e, ctrl.shape))


class _PowerKernel:
    """Fixed-model draw: classical power, no parameter uncertainty."""

    def __init__(self, model: DTEModel):
        self._model = model

    def model(self, rng: np.random.Generator) -> DTEModel:
        return self._model


def _chunk_tally(kernel, design, test, seed, key, start, stop) -> int:
    tally = 0
    for i in range(start, stop):
        rng = _iteration_rng(seed, key, i)
        model = kernel.model(rng)
        data = simulate_trial(design, model, rng)
        if is_success(run_test(data, test), test):
            tally += 1
    return tally


def _run_kernel(
    kernel,
    design: TrialDesign,
    test: TestSpec,
    iterations: int,
    seed: int,
    key: tuple[int, ...] = (),
    workers: int = 1,
    progress: ProgressFn | None = None,
    progress_every: int = 200,
) -> AssuranceResult:
    if workers <= 1:
        tally = 0
        for i in range(iterations):
            rng = _iteration_rng(seed, key, i)
            model = kernel.model(rng)
            data = simulate_trial(design, model, rng)
            if is_success(run_test(data, test), test):
                tally += 1
            if progress is not None and (i + 1) % progress_every == 0:
                progress(i + 1, tally)
        if progress is not None:
            progress(iterations, tally)
        return AssuranceResult.from_tally(tally, iterations)

    chunk = max(1, math.ceil(iterations / (workers * 8)))
    bounds = [(s, min(s + chunk, iterations)) for s in range(0, iterations, chunk)]
    tally = 0
    done = 0
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [
            pool.submit(_chunk_tally, kernel, design, test, seed, key, s, e) for s, e in bounds
        ]
        for (s, e), fut in zip(bounds, futures):
            tally += fut.result()
            done += e - s
            if progress is not None:
                progress(done, tally)
    return AssuranceResult.from_tally(tally, iterations)


def assurance(
    cfg: AssuranceConfig,
    *,
    workers: int = 1,
    progress: ProgressFn | None = None,
    stream_key: tuple[int, ...] = (),
) -> AssuranceResult:
    """Estimate the unconditional probability of a successful trial.

    Each iteration draws control parameters, an effect scenario (with the
    experimental shape tied to the control shape and the post-delay hazard
    ratio mapped to the experimental rate), simulates one event-driven trial
    and applies the analysis test.
    """
    kernel = _AssuranceKernel(cfg.control, cfg.effect)
    return _run_kernel(
        kernel, cfg.design, cfg.test, cfg.iterations, cfg.seed,
        key=stream_key, workers=workers, progress=progress,
    )


def power_from_model(
    design: TrialDesign,
    model: DTEModel,
    test: TestSpec,
    iterations: int,
    seed: int,
    *,
    workers: int = 1,
    progress: ProgressFn | None = None,
    stream_key: tuple[int, ...] = (),
) -> AssuranceResult:
    """Classical power under a fully specified two-arm model."""
    return _run_kernel(
        _PowerKernel(model), design, test, iterations, seed,
        key=stream_key, workers=workers, progress=progress,
    )


def power(
    design: TrialDesign,
    control: WeibullParams,
    delay: float,
    hr_star: float,
    test: TestSpec,
    iterations: int,
    seed: int,
    *,
    workers: int = 1,
    progress: ProgressFn | None = None,
) -> AssuranceResult:
    """Power at point-mass parameters (delay 0 gives the no-delay variant)."""
    rate_e = lambda_e_from_hr(control.rate, control.shape, hr_star)
    model = DTEModel(control, delay, WeibullParams(rate_e, control.shape))
    return power_from_model(design, model, test, iterations, seed, workers=workers, progress=progress)


@dataclass(frozen=True)
class GridPointResult:
    n_control: int
    n_experimental: int
    events: int
    result: AssuranceResult


def assurance_curve(
    cfg: AssuranceConfig,
    grid: Sequence[tuple[int, int, int]],
    *,
    common_random_numbers: bool = True,
    workers: int = 1,
    progress: ProgressFn | None = None,
) -> list[GridPointResult]:
    """Assurance over a grid of (n_control, n_experimental, events) designs.

    With common random numbers (the default) every grid point reuses the same
    per-iteration streams, which makes the curve monotone up to much smaller
    noise; otherwise each point gets an independent sub-stream.
    """
    if not grid:
        raise ValueError("grid must be non-empty")
    out: list[GridPointResult] = []
    done_total = 0

    def point_progress(done: int, tally: int) -> None:
        if progress is not None:
            progress(done_total + done, tally)

    for k, (n_c, n_e, events) in enumerate(grid):
        design = TrialDesign(n_c, n_e, events, cfg.design.recruitment)
        key = () if common_random_numbers else (k + 1,)
        point_cfg = AssuranceConfig(design, cfg.control, cfg.effect, cfg.test, cfg.iterations, cfg.seed)
        res = assurance(point_cfg, workers=workers, progress=point_progress, stream_key=key)
        out.append(GridPointResult(n_c, n_e, events, res))
        done_total += cfg.iterations
    return out


@dataclass(frozen=True)
class FlexConfig:
    """Settings for the flexible-curve assurance path.

    ``curve_samples`` is the number of stored survival curves, the time grid
    runs from 0 to ``max_length`` in steps of ``step`` (``max_length=None``
    picks 1.2x the 99.9th percentile of prior-predictive pseudo event times),
    and the two survival probabilities are sampled at ``early_fraction`` and
    ``late_fraction`` of the control horizon.
    """

    curve_samples: int = 5000
    max_length: float | None = None
    step: float = 0.01
    early_fraction: float = 0.25
    late_fraction: float = 0.6
    resample_cap: int = 1000

    def __post_init__(self) -> None:
        if self.curve_samples < 1:
            raise ValueError("curve_samples must be >= 1")
        if self.max_length is not None and not self.max_length > 0:
            raise ValueError("max_length must be positive")
        if not self.step > 0:
            raise ValueError("step must be positive")
        if not 0 < self.early_fraction < self.late_fraction < 1:
            raise ValueError("need 0 < early_fraction < late_fraction < 1")
        if self.resample_cap < 1:
            raise ValueError("resample_cap must be >= 1")


class ResampleNeeded(Exception):
    """The sampled (delay, survival point) combination admits no valid curve."""


@dataclass(frozen=True)
class CurveMatrix:
    """Sampled experimental survival curves on a shared time grid.

    Row j is the survival curve of the j-th prior draw evaluated on
    ``times()``; ``column(t)`` returns all rows at the grid time nearest t.
    Rows are stored by their parameters, so columns are evaluated on demand
    and ``values()`` materializes the full matrix only when asked.
    """

    control_rate: np.ndarray
    control_shape: np.ndarray
    delay: np.ndarray
    exp_rate: np.ndarray
    exp_shape: np.ndarray
    step: float
    n_times: int
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    @property
    def n_curves(self) -> int:
        return len(self.control_rate)

    def times(self) -> np.ndarray:
        return np.arange(self.n_times) * self.step

    def column_index(self, t: float) -> int:
        return int(np.clip(round(t / self.step), 0, self.n_times - 1))

    def column_time(self, t: float) -> float:
        return self.column_index(t) * self.step

    def column(self, t: float) -> np.ndarray:
        idx = self.column_index(t)
        cached = self._cache.get(idx)
        if cached is not None:
            return cached
        gt = idx * self.step
        pre = np.exp(-((self.control_rate * gt) ** self.control_shape))
        post = np.exp(
            -((self.control_rate * self.delay) ** self.control_shape)
            - self.exp_rate**self.exp_shape * (gt**self.exp_shape - self.delay**self.exp_shape)
        )
        col = np.where(gt <= self.delay, pre, post)
        if len(self._cache) < 512:
            self._cache[idx] = col
        return col

    def values(self) -> np.ndarray:
        return np.column_stack([self.column(t) for t in self.times()])


def default_max_length(
    design: TrialDesign,
    control: ControlSource,
    effect: EffectPrior,
    seed: int,
    n_samples: int = 20_000,
) -> float:
    """Time-grid horizon: 1.2x the 99.9th percentile of prior-predictive
    pseudo event times (recruitment + survival), so truncation never bites."""
    rng = np.random.default_rng((seed, _STREAM_HORIZON))
    kernel = _AssuranceKernel(control, effect)
    p_exp = design.n_experimental / design.n_total
    times = np.empty(n_samples)
    for k in range(n_samples):
        model = kernel.model(rng)
        recruit = float(sample_recruitment(design.recruitment, 1, rng)[0])
        u = rng.uniform()
        if rng.uniform() < p_exp:
            surv = float(sample_experimental_time(model, u))
        else:
            surv = float(sample_control_time(model.control, u))
        times[k] = recruit + surv
    return 1.2 * float(np.quantile(times, 0.999))


def build_curve_matrix(
    control: ControlSource,
    effect: EffectPrior,
    flex: FlexConfig,
    seed: int,
    *,
    max_length: float,
) -> CurveMatrix:
    """Sample ``flex.curve_samples`` experimental survival curves from the prior.

    Each row draws control parameters and an effect scenario exactly like one
    assurance iteration, so non-separated draws contribute plain control curves.
    """
    rng = np.random.default_rng((seed, _STREAM_MATRIX))
    m = flex.curve_samples
    cr = np.empty(m)
    cs = np.empty(m)
    dl = np.empty(m)
    er = np.empty(m)
    es = np.empty(m)
    for j in range(m):
        ctrl = draw_control(control, rng)
        scenario = sample_scenario(effect, rng)
        cr[j], cs[j], dl[j] = ctrl.rate, ctrl.shape, scenario.delay
        er[j] = lambda_e_from_hr(ctrl.rate, ctrl.shape, scenario.hr_star)
        es[j] = ctrl.shape
    n_times = int(math.floor(max_length / flex.step)) + 1
    return CurveMatrix(
        control_rate=cr, control_shape=cs, delay=dl, exp_rate=er, exp_shape=es,
        step=flex.step, n_times=n_times,
    )


def _log_power_gap(t: float, delay: float, shape: float) -> float:
    """ln(t^shape - delay^shape), computed stably for 0 <= delay < t."""
    if delay == 0.0:
        return shape * math.log(t)
    return shape * math.log(t) + math.log1p(-math.exp(shape * math.log(delay / t)))


def _solve_at_times(
    delay: float, s1: float, s2: float, t1: float, t2: float, control: WeibullParams
) -> tuple[float, float]:
    if not 0.0 < s2 < s1 < 1.0:
        raise ResampleNeeded(f"need 0 < s2 < s1 < 1, got s1={s1}, s2={s2}")
    if not delay < t1 < t2:
        raise ResampleNeeded(f"need delay < t1 < t2, got delay={delay}, t1={t1}, t2={t2}")
    cum_at_delay = (control.rate * delay) ** control.shape
    a1 = -math.log(s1) - cum_at_delay
    a2 = -math.log(s2) - cum_at_delay
    if a1 <= 0.0:
        raise ResampleNeeded("early survival point lies above the control curve at the delay")
    log_ratio = math.log(a2) - math.log(a1)

    if delay == 0.0:
        shape = log_ratio / math.log(t2 / t1)
        if not shape > 0.0:
            raise ResampleNeeded("no positive shape fits the two survival points")
    else:
        if log_ratio <= math.log(math.log(t2 / delay) / math.log(t1 / delay)):
            raise ResampleNeeded("survival points too close for a positive-shape curve")

        def h(log_shape: float) -> float:
            s = math.exp(log_shape)
            return _log_power_gap(t2, delay, s) - _log_power_gap(t1, delay, s) - log_ratio

        lo, hi = -12.0, 2.0
        while h(hi) <= 0.0:
            hi += 2.0
            if hi > 60.0:
                raise ResampleNeeded("shape search failed to bracket a root")
        shape = math.exp(optimize.brentq(h, lo, hi, xtol=1e-14, rtol=1e-15))

    log_rate = (math.log(a1) - _log_power_gap(t1, delay, shape)) / shape
    rate = math.exp(log_rate)
    model = DTEModel(control, delay, WeibullParams(rate, shape))
    resid = max(
        abs(float(experimental_survival(t1, model)) - s1),
        abs(float(experimental_survival(t2, model)) - s2),
    )
    if resid > 1e-8:
        raise ResampleNeeded(f"curve solution residual {resid:.2e} exceeds 1e-8")
    return rate, shape


def solve_flexible_params(
    delay: float,
    s1: float,
    s2: float,
    horizon: float,
    control: WeibullParams,
    flex: FlexConfig,
) -> tuple[float, float]:
    """Experimental (rate, shape) whose delayed curve passes through the two
    sampled survival points at the early/late fractions of ``horizon``.

    The two constraint times are snapped to the flex time grid, matching how
    curve-matrix columns are addressed. Raises ResampleNeeded when the points
    are unreachable for the given delay (the caller should redraw).
    """
    t1 = round(flex.early_fraction * horizon / flex.step) * flex.step
    t2 = round(flex.late_fraction * horizon / flex.step) * flex.step
    return _solve_at_times(delay, s1, s2, t1, t2, control)


def control_horizon(control: WeibullParams, survival_floor: float = 0.01) -> float:
    """Time at which the control survival curve reaches ``survival_floor``."""
    return (-math.log(survival_floor)) ** (1.0 / control.shape) / control.rate


class _FlexKernel:
    """Per-iteration model draw for the flexible assurance path."""

    def __init__(self, matrix: CurveMatrix, flex: FlexConfig, control: ControlSource, effect: EffectPrior):
        self.matrix = matrix
        self.flex = flex
        self.control = control
        self.effect = effect

    def model(self, rng: np.random.Generator) -> DTEModel:
        ctrl = draw_control(self.control, rng)
        horizon = control_horizon(ctrl)
        t1 = self.matrix.column_time(self.flex.early_fraction * horizon)
        t2 = self.matrix.column_time(self.flex.late_fraction * horizon)
        col1 = self.matrix.column(t1)
        col2 = self.matrix.column(t2)
        m = self.matrix.n_curves
        cap = self.flex.resample_cap
        last_error: Exception | None = None
        for _ in range(cap):
            s1 = float(col1[rng.integers(m)])
            # resample only s2 so the s1 marginal stays intact
            for _ in range(cap):
                s2 = float(col2[rng.integers(m)])
                if s2 < s1:
                    break
            else:
                raise RuntimeError(
                    f"could not draw s2 < s1={s1:.4f} after {cap} attempts "
                    f"(columns at t1={t1:.2f}, t2={t2:.2f})"
                )
            delay = sample_delay_given_separation(self.effect, rng)
            try:
                rate_e, shape_e = _solve_at_times(delay, s1, s2, t1, t2, ctrl)
            except ResampleNeeded as exc:
                last_error = exc
                continue
            return DTEModel(ctrl, delay, WeibullParams(rate_e, shape_e))
        raise RuntimeError(
            f"flexible iteration failed after {cap} resampling attempts; last error: {last_error}"
        )


def flexible_assurance(
    cfg: AssuranceConfig,
    flex: FlexConfig,
    *,
    workers: int = 1,
    progress: ProgressFn | None = None,
) -> AssuranceResult:
    """Assurance with experimental curves sampled through two survival points.

    A matrix of prior curves is sampled once; each iteration draws control
    parameters, takes the control horizon where survival hits 0.01, samples
    early/late survival probabilities from the matching matrix columns
    (rejecting until the late one is lower), draws a delay, solves for the
    experimental Weibull through those points, then simulates and tests as in
    the standard path.
    """
    max_length = flex.max_length
    if max_length is None:
        max_length = default_max_length(cfg.design, cfg.control, cfg.effect, cfg.seed)
    matrix = build_curve_matrix(cfg.control, cfg.effect, flex, cfg.seed, max_length=max_length)
    kernel = _FlexKernel(matrix, flex, cfg.control, cfg.effect)
    return _run_kernel(
        kernel, cfg.design, cfg.test, cfg.iterations, cfg.seed,
        workers=workers, progress=progress,
    )
