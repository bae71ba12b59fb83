"""CSV schemas and JSON documents.

Three CSV schemas are read and written, each with an exact header::

    experiments  n_params,data_size,data_unit,metric_kind,metric_value,depth,task,seed
    manifest     graph_id,class_label,num_nodes,num_edges
    loss curves  model_id,n_params,data_fraction,epoch,train_loss,val_loss

Columns may appear in any order on input; output always uses the order above.
Parse errors carry the 1-based file line and the column name. Floats are
written with ``repr`` so that reading them back gives identical values.

Documents are JSON with sorted keys, so identical inputs give identical bytes.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from .analysis import (
    CollapseReport,
    DepthComparison,
    LossCurve,
    OverfitComparison,
    OverfitReport,
    Prediction,
)
from .errors import (
    BadEnum,
    DomainError,
    DomainViolation,
    MissingColumn,
    NonIncreasingEpochs,
    RefusesUnconverged,
    UnknownColumn,
    ValidationError,
)
from .fitting import BootstrapResult, FitConfig, FitResult, FitStatus
from .graphs import GraphManifest, GraphRecord, SplitResult
from .models import ParamSet, ScalingForm, model_value
from .records import DATA_UNITS, METRIC_KINDS, ExperimentRecord

EXPERIMENT_COLUMNS = ("n_params", "data_size", "data_unit", "metric_kind", "metric_value", "depth", "task", "seed")
MANIFEST_COLUMNS = ("graph_id", "class_label", "num_nodes", "num_edges")
LOSS_COLUMNS = ("model_id", "n_params", "data_fraction", "epoch", "train_loss", "val_loss")

PathLike = Union[str, os.PathLike]


# ---------------------------------------------------------------------------
# number formatting
# ---------------------------------------------------------------------------


def fmt_float(value: float) -> str:
    """Shortest string that round-trips to the same double."""
    return repr(float(value))


def fmt_console(value: float) -> str:
    """4 significant digits for human-facing summaries."""
    return f"{value:.4g}"


# ---------------------------------------------------------------------------
# CSV plumbing
# ---------------------------------------------------------------------------


def _rows(path: PathLike, columns: Sequence[str]):
    """Yield (line_number, row_dict) after checking the header."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        header = [h.strip() for h in header]
        reader.fieldnames = header
        for col in columns:
            if col not in header:
                raise MissingColumn(f"required column missing from {os.fspath(path)}", row=1, column=col)
        for col in header:
            if col not in columns:
                raise UnknownColumn(f"unexpected column in {os.fspath(path)}", row=1, column=col)
        for row in reader:
            if None in row:
                raise DomainViolation("row has more fields than the header", row=reader.line_num)
            yield reader.line_num, {k: (v or "").strip() for k, v in row.items()}


def _number(row, line, col, *, allow_empty=False):
    text = row[col]
    if text == "":
        if allow_empty:
            return None
        raise DomainViolation("value is required", row=line, column=col)
    try:
        value = float(text)
    except ValueError:
        raise DomainViolation(f"{text!r} is not a number", row=line, column=col) from None
    if not math.isfinite(value):
        raise DomainViolation(f"{text!r} is not finite", row=line, column=col)
    return value


def _integer(row, line, col, *, allow_empty=False):
    text = row[col]
    if text == "" and allow_empty:
        return None
    try:
        return int(text)
    except ValueError:
        value = _number(row, line, col)
        if value != int(value):
            raise DomainViolation(f"{text!r} is not an integer", row=line, column=col) from None
        return int(value)


def _enum(row, line, col, allowed):
    text = row[col]
    if text not in allowed:
        raise BadEnum(f"{text!r} is not one of {list(allowed)}", row=line, column=col)
    return text


def _write_csv(path: Optional[PathLike], columns: Sequence[str], rows: Iterable[Sequence[str]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    writer.writerows(rows)
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text


def _opt(value) -> str:
    return "" if value is None else str(value)


# ---------------------------------------------------------------------------
# experiments
# ---------------------------------------------------------------------------


def read_experiments(path: PathLike) -> list[ExperimentRecord]:
    records = []
    for line, row in _rows(path, EXPERIMENT_COLUMNS):
        n_params = _number(row, line, "n_params")
        if n_params <= 0:
            raise DomainViolation("n_params must be > 0", row=line, column="n_params")
        data_size = _number(row, line, "data_size")
        if data_size <= 0:
            raise DomainViolation("data_size must be > 0", row=line, column="data_size")
        unit = _enum(row, line, "data_unit", DATA_UNITS)
        if unit == "fraction" and data_size > 1:
            raise DomainViolation("fraction data_size must lie in (0, 1]", row=line, column="data_size")
        kind = _enum(row, line, "metric_kind", METRIC_KINDS)
        value = _number(row, line, "metric_value")
        if value < 0 or (kind == "score" and value > 1):
            bound = "[0, 1]" if kind == "score" else ">= 0"
            raise DomainViolation(f"{kind} metric_value {value!r} must be {bound}", row=line, column="metric_value")
        depth = _integer(row, line, "depth", allow_empty=True)
        if depth is not None and depth < 1:
            raise DomainViolation("depth must be >= 1", row=line, column="depth")
        seed = _integer(row, line, "seed", allow_empty=True)
        try:
            records.append(ExperimentRecord(n_params, data_size, unit, kind, value, depth, row["task"], seed))
        except DomainError as exc:
            raise DomainViolation(str(exc), row=line) from None
    return records


def write_experiments(records: Iterable[ExperimentRecord], path: Optional[PathLike] = None) -> str:
    rows = (
        (
            fmt_float(r.n_params),
            fmt_float(r.data_size),
            r.data_unit,
            r.metric_kind,
            fmt_float(r.metric_value),
            _opt(r.depth),
            r.task,
            _opt(r.seed),
        )
        for r in records
    )
    return _write_csv(path, EXPERIMENT_COLUMNS, rows)


# ---------------------------------------------------------------------------
# manifests
# ---------------------------------------------------------------------------


def read_manifest(path: PathLike, source_name: Optional[str] = None) -> GraphManifest:
    records = []
    seen = {}
    for line, row in _rows(path, MANIFEST_COLUMNS):
        gid = row["graph_id"]
        if gid == "":
            raise DomainViolation("graph_id is required", row=line, column="graph_id")
        if gid in seen:
            raise DomainViolation(f"graph_id {gid!r} already used on row {seen[gid]}", row=line, column="graph_id")
        seen[gid] = line
        nodes = _integer(row, line, "num_nodes")
        if nodes < 1:
            raise DomainViolation("num_nodes must be >= 1", row=line, column="num_nodes")
        edges = _integer(row, line, "num_edges")
        if edges < 0:
            raise DomainViolation("num_edges must be >= 0", row=line, column="num_edges")
        records.append(GraphRecord(gid, row["class_label"], nodes, edges))
    name = source_name if source_name is not None else Path(path).stem
    return GraphManifest(tuple(records), name)


def write_manifest(manifest: GraphManifest, path: Optional[PathLike] = None) -> str:
    rows = ((r.graph_id, r.class_label, str(r.num_nodes), str(r.num_edges)) for r in manifest.records)
    return _write_csv(path, MANIFEST_COLUMNS, rows)


# ---------------------------------------------------------------------------
# loss curves
# ---------------------------------------------------------------------------


def read_losscurves(path: PathLike) -> list[LossCurve]:
    """Loss rows grouped by model_id (first-appearance order); rows may interleave."""
    groups: dict[str, dict] = {}
    for line, row in _rows(path, LOSS_COLUMNS):
        mid = row["model_id"]
        if mid == "":
            raise DomainViolation("model_id is required", row=line, column="model_id")
        n_params = _number(row, line, "n_params")
        if n_params <= 0:
            raise DomainViolation("n_params must be > 0", row=line, column="n_params")
        frac = _number(row, line, "data_fraction")
        if not 0 < frac <= 1:
            raise DomainViolation("data_fraction must lie in (0, 1]", row=line, column="data_fraction")
        epoch = _number(row, line, "epoch")
        train = _number(row, line, "train_loss")
        val = _number(row, line, "val_loss")
        g = groups.get(mid)
        if g is None:
            g = groups[mid] = {"n_params": n_params, "data_fraction": frac, "epochs": [], "train": [], "val": []}
        else:
            if n_params != g["n_params"]:
                raise DomainViolation(f"model {mid!r} changes n_params", row=line, column="n_params")
            if frac != g["data_fraction"]:
                raise DomainViolation(f"model {mid!r} changes data_fraction", row=line, column="data_fraction")
            if epoch <= g["epochs"][-1]:
                raise NonIncreasingEpochs(
                    f"model {mid!r}: epoch {epoch!r} does not follow {g['epochs'][-1]!r}", row=line, column="epoch"
                )
        g["epochs"].append(epoch)
        g["train"].append(train)
        g["val"].append(val)
    return [
        LossCurve(mid, g["n_params"], g["data_fraction"], g["epochs"], g["train"], g["val"])
        for mid, g in groups.items()
    ]


def write_losscurves(curves: Iterable[LossCurve], path: Optional[PathLike] = None) -> str:
    rows = []
    for c in curves:
        for e, t, v in zip(c.epochs, c.train_loss, c.val_loss):
            rows.append((c.model_id, fmt_float(c.n_params), fmt_float(c.data_fraction), fmt_float(e), fmt_float(t), fmt_float(v)))
    return _write_csv(path, LOSS_COLUMNS, rows)


# ---------------------------------------------------------------------------
# JSON documents
# ---------------------------------------------------------------------------


def _clean(obj):
    """Make ``obj`` JSON-safe: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_clean(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        value = float(obj)
        if math.isfinite(value):
            return value
        return "nan" if math.isnan(value) else ("inf" if value > 0 else "-inf")
    return obj


def dumps_document(doc) -> str:
    return json.dumps(_clean(doc), sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def write_document(doc, path: Optional[PathLike] = None) -> str:
    text = dumps_document(doc)
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text


def read_document(path: PathLike):
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{os.fspath(path)} is not valid JSON: {exc}") from None


def file_digest(path: PathLike) -> str:
    return "sha256:" + hashlib.sha256(Path(path).read_bytes()).hexdigest()


def bootstrap_to_dict(boot: BootstrapResult) -> dict:
    return {
        "confidence": boot.confidence,
        "intervals": {k: list(v) for k, v in boot.intervals.items()},
        "n_resamples": boot.n_resamples,
        "n_failed": boot.n_failed,
        "seed": boot.seed,
        "samples": boot.samples,
    }


def bootstrap_from_dict(form: ScalingForm, doc: dict) -> BootstrapResult:
    samples = np.array(doc.get("samples", []), dtype=float).reshape(-1, form.n_params)
    return BootstrapResult(
        names=form.param_names,
        confidence=float(doc["confidence"]),
        intervals={k: (float(v[0]), float(v[1])) for k, v in doc["intervals"].items()},
        samples=samples,
        n_resamples=int(doc.get("n_resamples", len(samples))),
        n_failed=int(doc.get("n_failed", 0)),
        seed=int(doc.get("seed", 0)),
    )


def fit_result_to_dict(result: FitResult) -> dict:
    return {
        "form": result.form.value,
        "param_names": list(result.params.names),
        "params": result.params.as_dict(),
        "r_squared": result.r_squared,
        "sse": result.sse,
        "residuals": list(result.residuals),
        "status": result.converged.value,
        "iterations": result.iterations,
        "start_index": result.start_index,
        "n_starts": result.n_starts,
        "scale": result.scale,
        "bootstrap": bootstrap_to_dict(result.bootstrap_ci) if result.bootstrap_ci is not None else None,
    }


def fit_result_from_dict(doc: dict) -> FitResult:
    try:
        form = ScalingForm.parse(doc["form"])
        params = ParamSet.from_mapping(form, doc["params"])
        boot = doc.get("bootstrap")
        return FitResult(
            form=form,
            params=params,
            r_squared=float(doc["r_squared"]),
            sse=float(doc["sse"]),
            residuals=tuple(float(v) for v in doc["residuals"]),
            converged=FitStatus(doc["status"]),
            iterations=int(doc["iterations"]),
            start_index=int(doc["start_index"]),
            scale=doc.get("scale", "n_params"),
            n_starts=int(doc.get("n_starts", 1)),
            bootstrap_ci=bootstrap_from_dict(form, boot) if boot else None,
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"not a fit report: {exc}") from None


def fit_report(
    result: FitResult,
    *,
    records: Sequence[ExperimentRecord],
    config: FitConfig,
    input_digest: str,
    tool_version: str,
) -> dict:
    """Serialised fit plus provenance. Timestamps are kept out on purpose."""
    return {
        "kind": "fit_report",
        "tool_version": tool_version,
        "input_digest": input_digest,
        "n_records": len(records),
        "metric_kind": records[0].metric_kind if records else None,
        "data_unit": records[0].data_unit if records else None,
        "config": config.to_dict(),
        "fit": fit_result_to_dict(result),
    }


def predictions_to_dict(preds: Sequence[Prediction]) -> list[dict]:
    return [
        {
            "target": list(p.target) if isinstance(p.target, tuple) else p.target,
            "value": p.value,
            "interval": list(p.interval) if p.interval is not None else None,
        }
        for p in preds
    ]


def split_to_dict(split: SplitResult, manifest: Optional[GraphManifest] = None) -> dict:
    doc = {
        "kind": "split",
        "mode": split.mode,
        "simple": list(split.simple),
        "complex": list(split.complex),
        "simple_edges": split.simple_edges,
        "complex_edges": split.complex_edges,
        "simple_graphs": split.simple_graphs,
        "complex_graphs": split.complex_graphs,
        "per_class_cuts": split.per_class_cuts,
    }
    if manifest is not None:
        doc["source_name"] = manifest.source_name
    return doc


def record_to_dict(r: ExperimentRecord) -> dict:
    return {
        "n_params": r.n_params,
        "data_size": r.data_size,
        "data_unit": r.data_unit,
        "metric_kind": r.metric_kind,
        "metric_value": r.metric_value,
        "depth": r.depth,
        "task": r.task,
        "seed": r.seed,
    }


def collapse_to_dict(report: CollapseReport) -> dict:
    return {
        "kind": "collapse_report",
        "fit": fit_result_to_dict(report.fitted),
        "calibration_size": report.calibration_size,
        "threshold": report.threshold,
        "flagged": [
            {"record": record_to_dict(f.record), "predicted": f.predicted, "deviation": f.deviation}
            for f in report.flagged
        ],
        "collapse_onset": report.collapse_onset,
    }


def overfit_to_dict(rep: OverfitReport) -> dict:
    return {
        "model_id": rep.model_id,
        "overfit": rep.overfit,
        "epoch_min_val": rep.epoch_min_val,
        "min_val_loss": rep.min_val_loss,
        "final_val_loss": rep.final_val_loss,
        "severity": rep.severity,
        "train_monotone": rep.train_monotone,
    }


def comparison_to_dict(cmp: OverfitComparison) -> dict:
    return {
        "group_by": cmp.group_by,
        "entries": [{"key": key, "report": overfit_to_dict(rep)} for key, rep in cmp.entries],
        "trend": cmp.trend,
        "statement": cmp.statement,
    }


def depth_to_dict(cmp: DepthComparison) -> dict:
    entries = []
    for e in cmp.entries:
        entries.append(
            {
                "depth": e.depth,
                "fit": fit_result_to_dict(e.fit) if e.fit is not None else None,
                "error": e.error,
                "best_empirical": e.best_empirical,
            }
        )
    return {
        "kind": "depth_comparison",
        "metric_kind": cmp.metric_kind,
        "confidence": cmp.confidence,
        "entries": entries,
        "best_asymptote_depth": cmp.best_asymptote_depth,
        "best_empirical_depth": cmp.best_empirical_depth,
        "distinct_pairs": [{"depths": [a, b], "params": list(names)} for a, b, names in cmp.distinct_pairs],
        "verdict": cmp.verdict,
    }


# ---------------------------------------------------------------------------
# plot data
# ---------------------------------------------------------------------------


def _sample_range(values: np.ndarray) -> tuple[float, float]:
    positive = values[values > 0]
    lo = float(positive.min()) if positive.size else 1.0
    hi = float(values.max()) if values.size else lo
    if hi <= 0:
        hi = lo
    return lo / 2.0, hi * 10.0


def emit_plot_data(
    fit_result: FitResult,
    records: Sequence[ExperimentRecord],
    n_curve_samples: int = 200,
    grid_size: int = 50,
) -> dict:
    """Observed points, a fitted curve (or surface) and the fit summary.

    Curve samples are log-spaced over ``[min input / 2, max input * 10]`` so the
    decade beyond the data is covered. Combined forms get a ``grid_size`` x
    ``grid_size`` surface over the same kind of range in D and N.
    """
    if fit_result.converged is not FitStatus.CONVERGED:
        raise RefusesUnconverged(f"fit status is {fit_result.converged.value}; no plot data emitted")
    if n_curve_samples < 2 or grid_size < 2:
        raise ValidationError("need at least 2 curve samples / grid points")
    form = fit_result.form
    theta = fit_result.params.values
    doc = {
        "kind": "plot_data",
        "form": form.value,
        "scale": fit_result.scale,
        "params": fit_result.params.as_dict(),
        "r_squared": fit_result.r_squared,
    }
    y = [r.metric_value for r in records]
    if form.is_combined:
        d = np.array([r.data_size for r in records], dtype=float)
        n = np.array([r.n_params for r in records], dtype=float)
        doc["points"] = [{"D": a, "N": b, "y": v} for a, b, v in zip(d, n, y)]
        d_axis = np.geomspace(*_sample_range(d), grid_size)
        n_axis = np.geomspace(*_sample_range(n), grid_size)
        dd, nn = np.meshgrid(d_axis, n_axis, indexing="ij")
        values = model_value(form, (dd.ravel(), nn.ravel()), theta).reshape(dd.shape)
        doc["surface"] = {"D": d_axis, "N": n_axis, "values": values}
    else:
        x = np.array([getattr(r, fit_result.scale) for r in records], dtype=float)
        doc["points"] = [{"x": a, "y": v} for a, v in zip(x, y)]
        axis = np.geomspace(*_sample_range(x), n_curve_samples)
        doc["curve"] = {"x": axis, "y": model_value(form, (axis,), theta)}
    return doc
