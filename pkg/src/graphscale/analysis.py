"""Diagnostics built on top of fitted scaling laws."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Mapping, Optional, Sequence, Union

import numpy as np

from .errors import (
    GraphScaleError,
    MetricFormMismatch,
    RefusesUnconverged,
    TooFewCurves,
    TooFewEpochs,
    TooFewRecords,
    ValidationError,
)
from .fitting import BootstrapResult, FitConfig, FitResult, FitStatus, bootstrap_ci, fit, with_bootstrap
from .models import ScalingForm, evaluate, model_value, split_inputs
from .records import ExperimentRecord


def shifted_form_for(metric_kind: str) -> ScalingForm:
    return ScalingForm.SHIFTED_SCORE if metric_kind == "score" else ScalingForm.SHIFTED_ERROR


def _single_kind(records: Sequence[ExperimentRecord]) -> str:
    kinds = {r.metric_kind for r in records}
    if len(kinds) != 1:
        raise MetricFormMismatch(f"expected a single metric kind, got {sorted(kinds)}")
    return kinds.pop()


# ---------------------------------------------------------------------------
# extrapolation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Prediction:
    target: Union[float, tuple[float, float]]
    value: float
    interval: Optional[tuple[float, float]] = None


def extrapolate(fit_result: FitResult, targets, bootstrap: Optional[BootstrapResult] = None) -> list[Prediction]:
    """Evaluate a converged fit at new scale points.

    When bootstrap samples are available (passed in or attached to the fit),
    every resampled parameter vector is evaluated too and the percentile
    interval at the bootstrap's confidence level is reported.
    """
    if fit_result.converged is not FitStatus.CONVERGED:
        raise RefusesUnconverged(f"fit status is {fit_result.converged.value}; refusing to extrapolate")
    form = fit_result.form
    cols, single = split_inputs(form, targets)
    values = model_value(form, cols, fit_result.params.values)
    boot = bootstrap if bootstrap is not None else fit_result.bootstrap_ci
    bands = None
    if boot is not None and len(boot.samples):
        curves = np.array([model_value(form, cols, theta) for theta in boot.samples])
        alpha = 1.0 - boot.confidence
        bands = np.percentile(curves, [100 * alpha / 2, 100 * (1 - alpha / 2)], axis=0)
    out = []
    for i, value in enumerate(values):
        target = (float(cols[0][i]), float(cols[1][i])) if form.is_combined else float(cols[0][i])
        interval = (float(bands[0][i]), float(bands[1][i])) if bands is not None else None
        out.append(Prediction(target, float(value), interval))
    return out


# ---------------------------------------------------------------------------
# model scaling collapse
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FlaggedRecord:
    record: ExperimentRecord
    predicted: float
    deviation: float


@dataclass(frozen=True)
class CollapseReport:
    fitted: FitResult
    calibration_size: float
    threshold: float
    flagged: tuple[FlaggedRecord, ...]
    collapse_onset: Optional[float]

    @property
    def collapsed(self) -> bool:
        return self.collapse_onset is not None


def detect_collapse(
    records: Sequence[ExperimentRecord],
    *,
    calibration: Union[str, int] = "best",
    rel_tol: float = 0.02,
    min_consecutive: int = 2,
    config: Optional[FitConfig] = None,
) -> CollapseReport:
    """Flag model sizes whose metric falls short of the law fitted on smaller models.

    The matching shifted law is fitted on a calibration prefix of the
    size-sorted records: by default everything up to and including the
    best-performing size, or the ``calibration`` smallest sizes when an int is
    given. Larger models whose metric is worse than predicted by more than
    ``rel_tol`` times the observed metric range are flagged (bad direction
    only). The onset is the first size of the first run of at least
    ``min_consecutive`` consecutive flagged sizes.
    """
    if len(records) < 6:
        raise TooFewRecords(f"collapse detection needs at least 6 records, got {len(records)}")
    if rel_tol <= 0 or min_consecutive < 1:
        raise ValidationError("rel_tol must be > 0 and min_consecutive >= 1")
    kind = _single_kind(records)
    ordered = sorted(records, key=lambda r: r.n_params)
    sizes = [r.n_params for r in ordered]
    if len(set(sizes)) != len(sizes):
        raise ValidationError("collapse detection needs distinct model sizes")
    values = np.array([r.metric_value for r in ordered])
    form = shifted_form_for(kind)

    if calibration == "best":
        # ties go to the largest size so the calibration prefix is as long as possible
        signed = values if kind == "score" else -values
        cut = int(np.flatnonzero(signed == signed.max())[-1]) + 1
    elif isinstance(calibration, int) and not isinstance(calibration, bool):
        cut = calibration
    else:
        raise ValidationError(f"calibration must be 'best' or a record count, got {calibration!r}")
    if cut < form.n_params + 1:
        raise TooFewRecords(
            f"calibration prefix holds {cut} record(s); fitting {form.value} needs {form.n_params + 1}"
        )
    cut = min(cut, len(ordered))
    fitted = fit(form, ordered[:cut], config, scale="n_params")

    threshold = rel_tol * float(values.max() - values.min())
    flagged = []
    run_start = None
    run_length = 0
    onset = None
    for rec in ordered[cut:]:
        predicted = float(evaluate(form, rec.n_params, fitted.params))
        deviation = predicted - rec.metric_value if kind == "score" else rec.metric_value - predicted
        if deviation > threshold:
            flagged.append(FlaggedRecord(rec, predicted, deviation))
            if run_length == 0:
                run_start = rec.n_params
            run_length += 1
            if onset is None and run_length >= min_consecutive:
                onset = run_start
        else:
            run_length = 0
    return CollapseReport(
        fitted=fitted,
        calibration_size=sizes[cut - 1],
        threshold=threshold,
        flagged=tuple(flagged),
        collapse_onset=onset,
    )


# ---------------------------------------------------------------------------
# overfitting
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LossCurve:
    model_id: str
    n_params: float
    data_fraction: float
    epochs: tuple[float, ...]
    train_loss: tuple[float, ...]
    val_loss: tuple[float, ...]

    def __post_init__(self):
        for name in ("epochs", "train_loss", "val_loss"):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))
        if not len(self.epochs) == len(self.train_loss) == len(self.val_loss):
            raise ValidationError(f"curve {self.model_id!r}: epochs and loss lists differ in length")
        if any(b <= a for a, b in zip(self.epochs, self.epochs[1:])):
            raise ValidationError(f"curve {self.model_id!r}: epochs must be strictly increasing")
        if not 0 < self.data_fraction <= 1:
            raise ValidationError(f"curve {self.model_id!r}: data_fraction must lie in (0, 1]")


@dataclass(frozen=True)
class OverfitReport:
    model_id: str
    overfit: bool
    epoch_min_val: int
    min_val_loss: float
    final_val_loss: float
    severity: float
    train_monotone: bool


def detect_overfitting(curve: LossCurve, severity_threshold: float = 0.05) -> OverfitReport:
    """Relative rise of validation loss from its minimum to the final epoch.

    ``epoch_min_val`` is a position in ``curve.epochs`` (first minimum on ties).
    """
    if len(curve.epochs) < 3:
        raise TooFewEpochs(f"curve {curve.model_id!r} has {len(curve.epochs)} epoch(s); need at least 3")
    val = np.asarray(curve.val_loss)
    idx = int(np.argmin(val))
    lowest = float(val[idx])
    final = float(val[-1])
    rise = final - lowest
    if rise <= 0:
        severity = 0.0
    elif lowest > 0:
        severity = rise / lowest
    else:
        severity = float("inf")
    train = curve.train_loss
    monotone = all(b <= a + 1e-9 for a, b in zip(train, train[1:]))
    return OverfitReport(
        model_id=curve.model_id,
        overfit=severity > severity_threshold,
        epoch_min_val=idx,
        min_val_loss=lowest,
        final_val_loss=final,
        severity=severity,
        train_monotone=monotone,
    )


_EXPECTED_TREND = {"data_fraction": "decreasing", "n_params": "increasing"}


@dataclass(frozen=True)
class OverfitComparison:
    group_by: str
    entries: tuple[tuple[float, OverfitReport], ...]
    trend: str
    statement: str


def _trend(values: Sequence[float]) -> str:
    diffs = np.diff(values)
    if np.all(diffs == 0):
        return "tied"
    if np.all(diffs <= 0):
        return "decreasing"
    if np.all(diffs >= 0):
        return "increasing"
    return "mixed"


def compare_overfitting(
    curves: Sequence[LossCurve], group_by: str = "data_fraction", severity_threshold: float = 0.05
) -> OverfitComparison:
    """Per-curve reports sorted by ``group_by`` plus the observed severity trend.

    The statement checks the direction one expects when more data mitigates
    overfitting (severity decreasing in data_fraction) or larger models overfit
    more (increasing in n_params). It is descriptive only.
    """
    if group_by not in _EXPECTED_TREND:
        raise ValidationError(f"group_by must be one of {sorted(_EXPECTED_TREND)}")
    if len(curves) < 2:
        raise TooFewCurves(f"need at least 2 curves to compare, got {len(curves)}")
    reports = [(getattr(c, group_by), detect_overfitting(c, severity_threshold)) for c in curves]
    reports.sort(key=lambda kv: kv[0])
    trend = _trend([rep.severity for _, rep in reports])
    expected = _EXPECTED_TREND[group_by]
    if trend == "tied":
        verdict = "tied"
    elif trend == expected:
        verdict = "observed"
    else:
        verdict = "violated"
    return OverfitComparison(group_by, tuple(reports), trend, f"{expected} in {group_by}: {verdict}")


# ---------------------------------------------------------------------------
# depth comparison
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DepthEntry:
    depth: int
    fit: Optional[FitResult]
    error: Optional[str]
    best_empirical: Optional[float]


@dataclass(frozen=True)
class DepthComparison:
    metric_kind: str
    entries: tuple[DepthEntry, ...]
    best_asymptote_depth: Optional[int]
    best_empirical_depth: Optional[int]
    distinct_pairs: tuple[tuple[int, int, tuple[str, ...]], ...]
    verdict: str
    confidence: float


def _depth_seed(seed: int, depth: int) -> int:
    return int(np.random.SeedSequence([int(seed), int(depth)]).generate_state(1, dtype=np.uint64)[0])


def _disjoint(a: tuple[float, float], b: tuple[float, float]) -> bool:
    return a[1] < b[0] or b[1] < a[0]


def compare_depth_curves(
    grouped_records: Mapping[int, Sequence[ExperimentRecord]],
    config: Optional[FitConfig] = None,
    *,
    n_resamples: int = 200,
    confidence: float = 0.95,
    scale: str = "n_params",
) -> DepthComparison:
    """Fit the matching shifted law per depth and compare the curves.

    Curves are called distinct when, for some pair of depths, some parameter's
    bootstrap intervals do not overlap. A depth whose fit fails is reported
    with its error and excluded from the comparison. Depths are processed in
    ascending order and each bootstrap seed is derived from ``(config.seed,
    depth)``, so the report does not depend on mapping order.
    """
    if len(grouped_records) < 2:
        raise ValidationError("need at least two depths to compare")
    config = config or FitConfig()
    kind = _single_kind([r for recs in grouped_records.values() for r in recs])
    form = shifted_form_for(kind)
    entries = []
    for depth in sorted(grouped_records):
        recs = list(grouped_records[depth])
        best_obs = None
        if recs:
            vals = [r.metric_value for r in recs]
            best_obs = max(vals) if kind == "score" else min(vals)
        try:
            base = fit(form, recs, config, scale=scale)
            depth_config = replace(config, seed=_depth_seed(config.seed, depth))
            boot = bootstrap_ci(form, recs, depth_config, n_resamples, confidence, scale=scale, base=base)
            entries.append(DepthEntry(int(depth), with_bootstrap(base, boot), None, best_obs))
        except GraphScaleError as exc:
            entries.append(DepthEntry(int(depth), None, f"{type(exc).__name__}: {exc}", best_obs))

    fitted = [e for e in entries if e.fit is not None]
    asym = form.param_names[-1]
    sign = 1.0 if kind == "score" else -1.0
    # ties go to the shallower depth
    best_asym = None
    if fitted:
        best_asym = max(fitted, key=lambda e: (sign * e.fit.params[asym], -e.depth)).depth
    with_obs = [e for e in entries if e.best_empirical is not None]
    best_emp = None
    if with_obs:
        best_emp = max(with_obs, key=lambda e: (sign * e.best_empirical, -e.depth)).depth

    pairs = []
    for i, e1 in enumerate(fitted):
        for e2 in fitted[i + 1 :]:
            ci1, ci2 = e1.fit.bootstrap_ci.intervals, e2.fit.bootstrap_ci.intervals
            names = tuple(n for n in form.param_names if _disjoint(ci1[n], ci2[n]))
            if names:
                pairs.append((e1.depth, e2.depth, names))
    verdict = "distinct" if pairs else "not distinguishable at this confidence"
    return DepthComparison(
        metric_kind=kind,
        entries=tuple(entries),
        best_asymptote_depth=best_asym,
        best_empirical_depth=best_emp,
        distinct_pairs=tuple(pairs),
        verdict=verdict,
        confidence=confidence,
    )
