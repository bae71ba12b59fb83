"""Least-squares estimation of scaling-law parameters.

Fits run Levenberg-Marquardt in an unconstrained space: every positive
parameter (amplitudes, exponents, shifts, ``eps_inf``) is ``exp(u)`` and
``s_inf`` is ``1 / (1 + exp(-u))``. Whatever the optimiser does, the reported
:class:`ParamSet` is therefore valid.

All randomness (noise, resampling, Latin sampling of multistart grids) comes
from ``numpy.random.default_rng(seed)``, i.e. PCG64 seeded through
``SeedSequence``.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import asdict, dataclass, field, replace
from enum import Enum
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import (
    AllStartsDiverged,
    InsufficientBootstrapSuccess,
    MetricFormMismatch,
    NumericError,
    TooFewRecords,
    ValidationError,
    ZeroVariance,
)
from .lm import CONVERGED, levenberg_marquardt
from .models import ParamSet, ScalingForm, model_value, model_value_and_jacobian, split_inputs
from .records import ExperimentRecord

log = logging.getLogger(__name__)

SCALES = ("n_params", "data_size")

# |u| beyond these means the optimiser ran a parameter into a transform boundary
_LOG_LOWER = math.log(1e-13)
_LOG_UPPER = math.log(1e17)
_LOGIT_BOUND = 30.0
_U_CLIP = 700.0


class FitStatus(str, Enum):
    CONVERGED = "Converged"
    MAX_ITERATIONS = "MaxIterations"
    DEGENERATE = "Degenerate"


@dataclass(frozen=True)
class FitConfig:
    """Knobs for :func:`fit`.

    ``multistart_grid`` overrides the automatic grid with explicit starting
    vectors (natural parameter space, form's parameter order). ``max_starts``
    caps the automatic grid for the combined forms.
    """

    max_iterations: int = 200
    sse_rel_tol: float = 1e-10
    step_tol: float = 1e-12
    initial_damping: float = 1e-3
    damping_up: float = 10.0
    damping_down: float = 0.1
    multistart_grid: Optional[tuple[tuple[float, ...], ...]] = None
    max_starts: int = 64
    residual_space: str = "linear"
    seed: int = 0

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValidationError("max_iterations must be >= 1")
        for name in ("sse_rel_tol", "step_tol", "initial_damping"):
            if not getattr(self, name) > 0:
                raise ValidationError(f"{name} must be > 0")
        if not self.damping_up > 1:
            raise ValidationError("damping_up must be > 1")
        if not 0 < self.damping_down < 1:
            raise ValidationError("damping_down must lie in (0, 1)")
        if self.max_starts < 1:
            raise ValidationError("max_starts must be >= 1")
        if self.residual_space not in ("linear", "log"):
            raise ValidationError("residual_space must be 'linear' or 'log'")
        if not 0 <= int(self.seed) < 2**64:
            raise ValidationError("seed must be an unsigned 64-bit integer")
        if self.multistart_grid is not None:
            grid = tuple(tuple(float(v) for v in start) for start in self.multistart_grid)
            if not grid:
                raise ValidationError("multistart_grid must not be empty")
            object.__setattr__(self, "multistart_grid", grid)

    @classmethod
    def from_mapping(cls, mapping) -> "FitConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = sorted(set(mapping) - known)
        if unknown:
            raise ValidationError(f"unknown FitConfig keys: {unknown}")
        return cls(**mapping)

    def to_dict(self) -> dict:
        out = asdict(self)
        if self.multistart_grid is not None:
            out["multistart_grid"] = [list(s) for s in self.multistart_grid]
        return out


@dataclass(frozen=True)
class BootstrapResult:
    """Percentile intervals plus the per-resample parameter vectors behind them."""

    names: tuple[str, ...]
    confidence: float
    intervals: dict[str, tuple[float, float]]
    samples: np.ndarray = field(repr=False, compare=False)
    n_resamples: int = 0
    n_failed: int = 0
    seed: int = 0


@dataclass(frozen=True)
class FitResult:
    form: ScalingForm
    params: ParamSet
    r_squared: float
    sse: float
    residuals: tuple[float, ...]
    converged: FitStatus
    iterations: int
    start_index: int
    scale: str = "n_params"
    n_starts: int = 1
    bootstrap_ci: Optional[BootstrapResult] = None

    @property
    def ok(self) -> bool:
        return self.converged is FitStatus.CONVERGED

    def predict(self, inputs):
        from .models import evaluate

        return evaluate(self.form, inputs, self.params)


# ---------------------------------------------------------------------------
# fit quality
# ---------------------------------------------------------------------------


def r_squared(observed, predicted) -> float:
    """Coefficient of determination ``1 - SS_res / SS_tot``."""
    obs = np.asarray(observed, dtype=float)
    pred = np.asarray(predicted, dtype=float)
    if obs.ndim != 1 or obs.shape != pred.shape or obs.size == 0:
        raise ValidationError("observed and predicted must be equal-length, non-empty sequences")
    ss_tot = float(np.sum((obs - obs.mean()) ** 2))
    if ss_tot == 0.0:
        raise ZeroVariance("observed values are all identical; R^2 is undefined")
    ss_res = float(np.sum((obs - pred) ** 2))
    return 1.0 - ss_res / ss_tot


# ---------------------------------------------------------------------------
# parameter transforms
# ---------------------------------------------------------------------------


def _is_logit(name: str) -> bool:
    return name == "s_inf"


def to_unconstrained(form: ScalingForm, theta) -> np.ndarray:
    u = np.empty(form.n_params)
    for i, (name, v) in enumerate(zip(form.param_names, theta)):
        if _is_logit(name):
            v = min(max(v, 1e-15), 1 - 1e-15)
            u[i] = math.log(v / (1 - v))
        else:
            u[i] = math.log(max(v, 1e-300))
    return u


def _logit_mask(form: ScalingForm) -> np.ndarray:
    return np.array([_is_logit(n) for n in form.param_names])


def from_unconstrained(form: ScalingForm, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Natural parameters and d(theta)/du for an unconstrained vector."""
    u = np.clip(u, -_U_CLIP, _U_CLIP)
    mask = _logit_mask(form)
    theta = np.exp(u)
    dtheta = theta.copy()
    if mask.any():
        s = 1.0 / (1.0 + np.exp(-u[mask]))
        theta[mask] = s
        dtheta[mask] = s * (1.0 - s)
    return theta, dtheta


def _at_boundary(form: ScalingForm, u: np.ndarray) -> list[str]:
    pinned = []
    for name, v in zip(form.param_names, u):
        if _is_logit(name):
            if abs(v) > _LOGIT_BOUND:
                pinned.append(name)
        elif v < _LOG_LOWER or v > _LOG_UPPER:
            pinned.append(name)
    return pinned


# ---------------------------------------------------------------------------
# multistart grid
# ---------------------------------------------------------------------------

_EXPONENT_STARTS = (0.1, 0.3, 0.5, 1.0)
_AMPLITUDE_FACTORS = (1.0, 2.0, 0.5)


def _shift_starts(x: np.ndarray) -> list[float]:
    med = float(np.median(x))
    out = []
    for c in (1.0, med / 10.0, med):
        if c > 0 and c not in out:
            out.append(c)
    return out


def _asymptote_starts(form: ScalingForm, y: np.ndarray) -> list[float]:
    span = float(y.max() - y.min()) or max(abs(float(y.mean())), 1e-3)
    out = []
    if form.metric_kind == "score":
        best = float(y.max())
        for frac in (0.1, 0.01):
            s = best + frac * span
            if s >= 1.0:
                s = best + (1.0 - best) / 2 if best < 1 else 1.0 - 1e-9
            out.append(min(s, 1.0))
    else:
        best = float(y.min())
        for frac in (0.1, 0.01):
            e = best - frac * span
            if e <= 0:
                e = best / 2 if best > 0 else 1e-9 * span
            out.append(e)
    return list(dict.fromkeys(out))


def _term_levels(x: np.ndarray, span: float, shifted: bool) -> list[tuple[float, ...]]:
    """(a, b[, c]) triples for one power term, a scaled to the observed range at min(x)."""
    levels = []
    shifts = _shift_starts(x) if shifted else [0.0]
    x_ref = float(x.min())
    for b, k, c in itertools.product(_EXPONENT_STARTS, _AMPLITUDE_FACTORS, shifts):
        base = x_ref + c
        if base <= 0:
            base = c if c > 0 else 1.0
        a = k * span * math.exp(b * math.log(base))
        levels.append((a, b, c) if shifted else (a, b))
    return levels


def _latin_pick(level_counts: Sequence[int], n: int, rng: np.random.Generator) -> np.ndarray:
    """n rows of level indices, each column cycling its levels evenly then shuffled."""
    cols = []
    for count in level_counts:
        col = np.arange(n) % count
        rng.shuffle(col)
        cols.append(col)
    return np.column_stack(cols)


def default_starts(form: ScalingForm, cols, y: np.ndarray, config: FitConfig) -> list[np.ndarray]:
    """Initial parameter vectors (natural space) derived from the data."""
    y = np.asarray(y, dtype=float)
    span = float(y.max() - y.min()) or max(abs(float(y.mean())), 1e-3)
    asym = _asymptote_starts(form, y)
    shifted = form in (ScalingForm.SHIFTED_ERROR, ScalingForm.SHIFTED_SCORE, ScalingForm.COMBINED_SCORE)
    if not form.is_combined:
        starts = [np.array(term + (s,)) for term in _term_levels(cols[0], span, shifted) for s in asym]
        return starts
    # each term gets half of the observed range
    lv_d = _term_levels(cols[0], span / 2, shifted)
    lv_n = _term_levels(cols[1], span / 2, shifted)
    total = len(lv_d) * len(lv_n) * len(asym)
    if total <= config.max_starts:
        picks = list(itertools.product(range(len(lv_d)), range(len(lv_n)), range(len(asym))))
    else:
        rng = np.random.default_rng(config.seed)
        picks = [tuple(row) for row in _latin_pick((len(lv_d), len(lv_n), len(asym)), config.max_starts, rng)]
    return [np.array(lv_d[i] + lv_n[j] + (asym[k],)) for i, j, k in picks]


# ---------------------------------------------------------------------------
# fitting
# ---------------------------------------------------------------------------


def records_to_arrays(form: ScalingForm, records: Sequence[ExperimentRecord], scale: str = "n_params"):
    """Input columns and observed metric values for ``form``.

    Single-variable forms read X from ``scale`` (``"n_params"`` for model
    scaling, ``"data_size"`` for data scaling). Combined forms read ``(D, N)``.
    """
    form = ScalingForm.parse(form)
    if scale not in SCALES:
        raise ValidationError(f"scale must be one of {SCALES}, got {scale!r}")
    kinds = {r.metric_kind for r in records}
    if len(kinds) > 1:
        raise MetricFormMismatch(f"records mix metric kinds {sorted(kinds)}")
    if kinds and kinds != {form.metric_kind}:
        raise MetricFormMismatch(
            f"{form.value} models {form.metric_kind} metrics but records carry {kinds.pop()} values"
        )
    if form.is_combined or scale == "data_size":
        units = {r.data_unit for r in records}
        if len(units) > 1:
            raise ValidationError(f"records mix data units {sorted(units)}")
    y = np.array([r.metric_value for r in records], dtype=float)
    if form.is_combined:
        cols = (
            np.array([r.data_size for r in records], dtype=float),
            np.array([r.n_params for r in records], dtype=float),
        )
    else:
        cols = (np.array([getattr(r, scale) for r in records], dtype=float),)
    return cols, y


def _objective(form, cols, y, sqrt_w, residual_space):
    if residual_space == "log":
        log_y = np.log(y)

        def fun(u):
            theta, dtheta = from_unconstrained(form, u)
            value, jac = model_value_and_jacobian(form, cols, theta)
            with np.errstate(all="ignore"):
                r = np.where(value > 0, np.log(value) - log_y, np.inf)
                j = jac * (dtheta / value[:, None])
            return sqrt_w * r, sqrt_w[:, None] * j

    else:

        def fun(u):
            theta, dtheta = from_unconstrained(form, u)
            value, jac = model_value_and_jacobian(form, cols, theta)
            return sqrt_w * (value - y), sqrt_w[:, None] * (jac * dtheta)

    return fun


def fit_arrays(
    form,
    inputs,
    observed,
    config: Optional[FitConfig] = None,
    *,
    weights=None,
    starts: Optional[Iterable[Sequence[float]]] = None,
    scale: str = "n_params",
) -> FitResult:
    """Fit ``form`` to raw arrays. See :func:`fit` for the record-based entry point.

    ``inputs`` follows :func:`graphscale.models.evaluate` conventions; a tuple of
    column arrays is also accepted.
    """
    form = ScalingForm.parse(form)
    config = config or FitConfig()
    if isinstance(inputs, tuple) and len(inputs) == form.n_inputs and all(np.ndim(c) == 1 for c in inputs):
        cols = tuple(np.asarray(c, dtype=float) for c in inputs)
        if form.is_combined:
            split_inputs(form, np.column_stack(cols))
        else:
            split_inputs(form, cols[0])
    else:
        cols, _ = split_inputs(form, inputs)
    y = np.asarray(observed, dtype=float)
    n = y.size
    if y.ndim != 1 or any(c.size != n for c in cols):
        raise ValidationError("inputs and observed values must have the same length")
    if n < form.n_params + 1:
        raise TooFewRecords(f"{form.value} has {form.n_params} free parameters; need at least {form.n_params + 1} records, got {n}")
    if not np.all(np.isfinite(y)):
        raise ValidationError("observed values must be finite")
    if float(np.ptp(y)) == 0.0:
        raise ZeroVariance("observed values are all identical; nothing to fit")
    if config.residual_space == "log" and np.any(y <= 0):
        raise ValidationError("log-space residuals need strictly positive observations")
    if weights is None:
        sqrt_w = np.ones(n)
    else:
        w = np.asarray(weights, dtype=float)
        if w.shape != (n,) or np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValidationError("weights must be finite, non-negative and one per record")
        sqrt_w = np.sqrt(w)

    if starts is not None:
        start_list = [np.asarray(s, dtype=float) for s in starts]
    elif config.multistart_grid is not None:
        start_list = [np.asarray(s, dtype=float) for s in config.multistart_grid]
    else:
        start_list = default_starts(form, cols, y, config)
    for s in start_list:
        if s.shape != (form.n_params,):
            raise ValidationError(f"start vectors for {form.value} need {form.n_params} entries")

    fun = _objective(form, cols, y, sqrt_w, config.residual_space)
    best = None
    best_any = None
    for index, start in enumerate(start_list):
        res = levenberg_marquardt(
            fun,
            to_unconstrained(form, start),
            max_iterations=config.max_iterations,
            sse_rel_tol=config.sse_rel_tol,
            step_tol=config.step_tol,
            initial_damping=config.initial_damping,
            damping_up=config.damping_up,
            damping_down=config.damping_down,
        )
        if not np.isfinite(res.sse):
            continue
        if best_any is None or res.sse < best_any[1].sse:
            best_any = (index, res)
        if res.status == CONVERGED and (best is None or res.sse < best[1].sse):
            best = (index, res)
    if best is None:
        best = best_any
    if best is None:
        raise AllStartsDiverged(f"none of {len(start_list)} starts produced a finite SSE for {form.value}")

    index, res = best
    theta, _ = from_unconstrained(form, res.x)
    status = FitStatus.CONVERGED if res.status == CONVERGED else FitStatus.MAX_ITERATIONS
    pinned = _at_boundary(form, res.x)
    if pinned:
        log.info("%s fit pinned %s at a transform boundary", form.value, pinned)
        status = FitStatus.DEGENERATE
    params = ParamSet(form, tuple(theta))
    pred = model_value(form, cols, params.values)
    resid = y - pred
    return FitResult(
        form=form,
        params=params,
        r_squared=r_squared(y, pred),
        sse=float(np.sum(resid**2)),
        residuals=tuple(float(v) for v in resid),
        converged=status,
        iterations=res.iterations,
        start_index=index,
        scale=scale,
        n_starts=len(start_list),
    )


def fit(
    form,
    records: Sequence[ExperimentRecord],
    config: Optional[FitConfig] = None,
    *,
    scale: str = "n_params",
    weights=None,
) -> FitResult:
    """Least-squares fit of ``form`` to experiment records.

    Every multistart seed is run to completion and the lowest-SSE converged
    result wins; exact ties go to the lower start index.

    Raises:
        TooFewRecords: fewer records than free parameters + 1.
        MetricFormMismatch: metric kind of the records does not suit ``form``.
        AllStartsDiverged: no start reached a finite SSE.
    """
    form = ScalingForm.parse(form)
    if len(records) < form.n_params + 1:
        raise TooFewRecords(
            f"{form.value} has {form.n_params} free parameters; need at least "
            f"{form.n_params + 1} records, got {len(records)}"
        )
    cols, y = records_to_arrays(form, records, scale)
    return fit_arrays(form, cols, y, config, weights=weights, scale=scale)


# ---------------------------------------------------------------------------
# bootstrap
# ---------------------------------------------------------------------------


def bootstrap_arrays(
    base: FitResult,
    cols,
    y,
    config: Optional[FitConfig] = None,
    n_resamples: int = 1000,
    confidence: float = 0.95,
    *,
    seed: Optional[int] = None,
) -> BootstrapResult:
    """Case-resampling percentile bootstrap around an existing fit.

    Each resample is warm-started from ``base``; the full multistart grid is
    the fallback when that start fails. Resamples with fewer distinct inputs
    than parameters are counted as failures.
    """
    config = config or FitConfig()
    if n_resamples < 100:
        raise ValidationError("n_resamples must be >= 100")
    if not 0 < confidence < 1:
        raise ValidationError("confidence must lie in (0, 1)")
    form = base.form
    seed = config.seed if seed is None else seed
    y = np.asarray(y, dtype=float)
    n = y.size
    rng = np.random.default_rng(seed)
    index_matrix = rng.integers(0, n, size=(n_resamples, n))
    keys = np.column_stack(cols)
    warm = [base.params.values]
    samples = []
    failed = 0
    for idx in index_matrix:
        if len(np.unique(keys[idx], axis=0)) < form.n_params:
            failed += 1
            continue
        sub_cols = tuple(c[idx] for c in cols)
        result = None
        for starts in (warm, None):
            try:
                result = fit_arrays(form, sub_cols, y[idx], config, starts=starts, scale=base.scale)
            except (NumericError, ValidationError):
                result = None
            if result is not None and result.converged is not FitStatus.MAX_ITERATIONS:
                break
            result = None
        if result is None:
            failed += 1
            continue
        samples.append(result.params.values)
    if failed > 0.2 * n_resamples:
        raise InsufficientBootstrapSuccess(
            f"{failed} of {n_resamples} bootstrap refits failed (more than 20%)"
        )
    samples = np.array(samples)
    alpha = 1.0 - confidence
    lo, hi = np.percentile(samples, [100 * alpha / 2, 100 * (1 - alpha / 2)], axis=0)
    intervals = {name: (float(l), float(h)) for name, l, h in zip(form.param_names, lo, hi)}
    return BootstrapResult(
        names=form.param_names,
        confidence=confidence,
        intervals=intervals,
        samples=samples,
        n_resamples=n_resamples,
        n_failed=failed,
        seed=int(seed),
    )


def bootstrap_ci(
    form,
    records: Sequence[ExperimentRecord],
    config: Optional[FitConfig] = None,
    n_resamples: int = 1000,
    confidence: float = 0.95,
    *,
    scale: str = "n_params",
    base: Optional[FitResult] = None,
) -> BootstrapResult:
    """Per-parameter percentile intervals from ``n_resamples`` case resamples.

    Deterministic for a fixed ``config.seed``. Raises
    :class:`InsufficientBootstrapSuccess` when more than 20% of refits fail.
    """
    form = ScalingForm.parse(form)
    config = config or FitConfig()
    if base is None:
        base = fit(form, records, config, scale=scale)
    cols, y = records_to_arrays(form, records, scale)
    return bootstrap_arrays(base, cols, y, config, n_resamples, confidence)


def with_bootstrap(result: FitResult, boot: BootstrapResult) -> FitResult:
    return replace(result, bootstrap_ci=boot)


# ---------------------------------------------------------------------------
# synthetic data
# ---------------------------------------------------------------------------


class SyntheticRecords(list):
    """List of records with the number of clamped outputs attached."""

    clamped: int = 0


def generate_synthetic(
    form,
    params: ParamSet,
    inputs,
    noise_sigma: float = 0.0,
    seed: int = 0,
    *,
    scale: str = "n_params",
    fixed_n_params: float = 1.0e6,
    fixed_data_size: float = 1.0,
    data_unit: Optional[str] = None,
    task: str = "synthetic",
    depth: Optional[int] = None,
) -> SyntheticRecords:
    """Evaluate ``form`` at ``inputs`` and add seeded Gaussian noise.

    Outputs are clamped to the metric's domain ([0, 1] for scores, >= 0 for
    errors); the number of clamped values is stored on ``.clamped``.

    For single-variable forms X goes to ``scale`` and the other size field is
    held at ``fixed_n_params`` / ``fixed_data_size``.
    """
    form = ScalingForm.parse(form)
    if noise_sigma < 0:
        raise ValidationError("noise_sigma must be >= 0")
    if scale not in SCALES:
        raise ValidationError(f"scale must be one of {SCALES}")
    cols, single = split_inputs(form, inputs)
    if not isinstance(params, ParamSet):
        params = ParamSet(form, tuple(params), strict=False)
    values = model_value(form, cols, params.values)
    if noise_sigma > 0:
        rng = np.random.default_rng(seed)
        values = values + rng.normal(0.0, noise_sigma, size=values.size)
    upper = 1.0 if form.metric_kind == "score" else np.inf
    clamped_values = np.clip(values, 0.0, upper)
    n_clamped = int(np.count_nonzero(clamped_values != values))
    if n_clamped:
        log.warning("clamped %d synthetic %s value(s) into the metric domain", n_clamped, form.metric_kind)

    if data_unit is None:
        data_unit = "fraction" if (not form.is_combined and scale == "n_params") else "edges"
    out = SyntheticRecords()
    out.clamped = n_clamped
    for i, value in enumerate(clamped_values):
        if form.is_combined:
            d, n_p = float(cols[0][i]), float(cols[1][i])
        elif scale == "n_params":
            d, n_p = fixed_data_size, float(cols[0][i])
        else:
            d, n_p = float(cols[0][i]), fixed_n_params
        out.append(
            ExperimentRecord(
                n_params=n_p,
                data_size=d,
                data_unit=data_unit,
                metric_kind=form.metric_kind,
                metric_value=float(value),
                depth=depth,
                task=task,
                seed=seed,
            )
        )
    return out
