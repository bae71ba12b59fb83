"""Command-line entry point.

Every subcommand writes one JSON document (a CSV for ``synth``) to ``--out`` or
standard output. When ``--out`` names a file, a ``<out>.meta.json`` sidecar
records the creation time, keeping the primary document byte-reproducible.

Exit status: 0 success, 1 invalid input or usage, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import json
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .analysis import (
    compare_depth_curves,
    compare_overfitting,
    detect_collapse,
    detect_overfitting,
    extrapolate,
)
from .errors import NumericError, ValidationError
from .fitting import FitConfig, bootstrap_ci, fit, generate_synthetic, with_bootstrap
from .graphs import MessagePassingCost, flops_forward, split_equal_edges, split_equal_graphs, subsample_fraction
from .io import (
    collapse_to_dict,
    comparison_to_dict,
    depth_to_dict,
    emit_plot_data,
    file_digest,
    fit_report,
    fit_result_from_dict,
    fmt_console,
    overfit_to_dict,
    predictions_to_dict,
    read_document,
    read_experiments,
    read_losscurves,
    read_manifest,
    split_to_dict,
    write_document,
    write_experiments,
    write_manifest,
)
from .models import ParamSet, ScalingForm

FORMS = [f.value for f in ScalingForm]


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------


def _load_config(args) -> FitConfig:
    mapping = {}
    if getattr(args, "config", None):
        try:
            mapping = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ValidationError(f"config file {args.config} is not valid JSON: {exc}") from None
        if not isinstance(mapping, dict):
            raise ValidationError("config file must hold a JSON object")
    if getattr(args, "residual_space", None):
        mapping["residual_space"] = args.residual_space
    if args.seed is not None:
        mapping["seed"] = args.seed
    try:
        return FitConfig.from_mapping(mapping)
    except TypeError as exc:
        raise ValidationError(f"bad config: {exc}") from None


def _emit(doc, args, out_stream) -> None:
    text = write_document(doc, args.out)
    if args.out is None:
        out_stream.write(text)
    else:
        _write_meta(args.out)


def _write_meta(out_path) -> None:
    meta = {
        "created_at": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
        "tool_version": __version__,
        "primary_output": Path(out_path).name,
    }
    write_document(meta, f"{out_path}.meta.json")


def _parse_target(text: str, form: ScalingForm):
    parts = [p for p in text.replace(";", ",").split(",") if p.strip()]
    try:
        values = [float(p) for p in parts]
    except ValueError:
        raise ValidationError(f"target {text!r} is not numeric") from None
    if len(values) != form.n_inputs:
        what = "a D,N pair" if form.is_combined else "a single X value"
        raise ValidationError(f"{form.value} targets must be {what}, got {text!r}")
    return values if form.is_combined else values[0]


def _parse_params(items: Sequence[str], form: ScalingForm) -> ParamSet:
    mapping = {}
    for item in items:
        name, sep, value = item.partition("=")
        if not sep:
            raise ValidationError(f"--param expects name=value, got {item!r}")
        try:
            mapping[name.strip()] = float(value)
        except ValueError:
            raise ValidationError(f"--param {name}: {value!r} is not numeric") from None
    return ParamSet.from_mapping(form, mapping)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_fit(args, out, err):
    form = ScalingForm.parse(args.form)
    config = _load_config(args)
    records = read_experiments(args.inp)
    result = fit(form, records, config, scale=args.scale)
    if args.bootstrap:
        boot = bootstrap_ci(form, records, config, args.bootstrap, args.confidence, scale=args.scale, base=result)
        result = with_bootstrap(result, boot)
    doc = fit_report(
        result, records=records, config=config, input_digest=file_digest(args.inp), tool_version=__version__
    )
    _emit(doc, args, out)
    summary = " ".join(f"{k}={fmt_console(v)}" for k, v in result.params.as_dict().items())
    err.write(f"{form.value}: {result.converged.value}, R^2={fmt_console(result.r_squared)}, {summary}\n")
    return 0


def _load_fit(path):
    doc = read_document(path)
    if isinstance(doc, dict) and doc.get("kind") == "fit_report":
        doc = doc["fit"]
    return fit_result_from_dict(doc)


def cmd_predict(args, out, err):
    result = _load_fit(args.fit)
    targets = [_parse_target(t, result.form) for t in args.at]
    preds = extrapolate(result, targets)
    doc = {"kind": "predictions", "form": result.form.value, "scale": result.scale, "predictions": predictions_to_dict(preds)}
    _emit(doc, args, out)
    return 0


def cmd_report(args, out, err):
    result = _load_fit(args.fit)
    records = read_experiments(args.inp)
    doc = emit_plot_data(result, records, args.samples, args.grid)
    doc["input_digest"] = file_digest(args.inp)
    _emit(doc, args, out)
    return 0


def cmd_split(args, out, err):
    manifest = read_manifest(args.manifest)
    split = split_equal_edges(manifest) if args.mode == "equal-edges" else split_equal_graphs(manifest)
    _emit(split_to_dict(split, manifest), args, out)
    err.write(
        f"{args.mode}: simple {split.simple_graphs} graphs / {split.simple_edges} edges, "
        f"complex {split.complex_graphs} graphs / {split.complex_edges} edges\n"
    )
    return 0


def cmd_subsample(args, out, err):
    manifest = read_manifest(args.manifest)
    seed = 0 if args.seed is None else args.seed
    sub = subsample_fraction(manifest, args.ratio, seed)
    doc = {
        "kind": "subsample",
        "source_name": manifest.source_name,
        "ratio": args.ratio,
        "seed": seed,
        "selected": [r.graph_id for r in sub.records],
        "num_graphs": sub.total_graphs,
        "total_edges": sub.total_edges,
        "total_nodes": sub.total_nodes,
    }
    if args.manifest_out:
        write_manifest(sub, args.manifest_out)
    _emit(doc, args, out)
    return 0


def cmd_flops(args, out, err):
    if args.manifest:
        manifest = read_manifest(args.manifest)
        edges, nodes = manifest.total_edges, manifest.total_nodes
    else:
        if args.edges is None or args.nodes is None:
            raise ValidationError("flops needs --edges and --nodes, or --manifest")
        edges, nodes = args.edges, args.nodes
    cost = MessagePassingCost(ops_per_message=args.y, ops_per_update=args.x, layers=args.layers)
    value = flops_forward(edges, nodes, cost, args.mode, args.edge_convention)
    out.write(f"{value}\n")
    if args.out:
        doc = {
            "kind": "flops",
            "mode": args.mode.replace("-", "_"),
            "edge_convention": args.edge_convention,
            "total_edges": edges,
            "total_nodes": nodes,
            "ops_per_message": args.y,
            "ops_per_update": args.x,
            "layers": args.layers,
            "add_multiply_ops": value,
        }
        write_document(doc, args.out)
        _write_meta(args.out)
    return 0


def cmd_collapse(args, out, err):
    records = read_experiments(args.inp)
    calibration = args.calibration if args.calibration == "best" else int(args.calibration)
    report = detect_collapse(
        records,
        calibration=calibration,
        rel_tol=args.rel_tol,
        min_consecutive=args.min_consecutive,
        config=_load_config(args),
    )
    _emit(collapse_to_dict(report), args, out)
    onset = fmt_console(report.collapse_onset) if report.collapse_onset is not None else "none"
    err.write(f"flagged {len(report.flagged)} model size(s); collapse onset: {onset}\n")
    return 0


def cmd_overfit(args, out, err):
    curves = read_losscurves(args.inp)
    doc = {
        "kind": "overfit_report",
        "threshold": args.threshold,
        "reports": [overfit_to_dict(detect_overfitting(c, args.threshold)) for c in curves],
        "comparison": None,
    }
    if len(curves) >= 2:
        doc["comparison"] = comparison_to_dict(compare_overfitting(curves, args.group_by, args.threshold))
    _emit(doc, args, out)
    return 0


def cmd_depth_compare(args, out, err):
    records = read_experiments(args.inp)
    groups: dict[int, list] = {}
    for r in records:
        if r.depth is None:
            raise ValidationError("depth-compare needs a depth on every record")
        groups.setdefault(r.depth, []).append(r)
    cmp = compare_depth_curves(
        groups, _load_config(args), n_resamples=args.resamples, confidence=args.confidence, scale=args.scale
    )
    _emit(depth_to_dict(cmp), args, out)
    err.write(f"{cmp.verdict}; best asymptote at depth {cmp.best_asymptote_depth}\n")
    return 0


def cmd_synth(args, out, err):
    form = ScalingForm.parse(args.form)
    params = _parse_params(args.param, form)
    if form.is_combined:
        d = np.geomspace(args.d_min, args.d_max, args.grid)
        n = np.geomspace(args.n_min, args.n_max, args.grid)
        dd, nn = np.meshgrid(d, n, indexing="ij")
        inputs = np.column_stack([dd.ravel(), nn.ravel()])
    else:
        inputs = np.geomspace(args.x_min, args.x_max, args.points)
    seed = 0 if args.seed is None else args.seed
    records = generate_synthetic(
        form,
        params,
        inputs,
        args.noise,
        seed,
        scale=args.scale,
        fixed_n_params=args.fixed_n_params,
        fixed_data_size=args.fixed_data_size,
        data_unit=args.data_unit,
        task=args.task,
        depth=args.depth,
    )
    text = write_experiments(records, args.out)
    if args.out is None:
        out.write(text)
    else:
        _write_meta(args.out)
    err.write(f"wrote {len(records)} record(s); {records.clamped} clamped\n")
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def _common(p, *, config=False):
    p.add_argument("--out", help="output path (default: standard output)")
    p.add_argument("--seed", type=int, default=None, help="seed for every random draw")
    if config:
        p.add_argument("--config", help="JSON file overriding FitConfig fields")
        p.add_argument("--residual-space", choices=["linear", "log"], default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="graphscale", description="Scaling-law fitting and graph data accounting.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser, required=True)

    p = sub.add_parser("fit", help="fit a scaling form to an experiments CSV")
    p.add_argument("--form", required=True, choices=FORMS)
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--scale", choices=["n_params", "data_size"], default="n_params")
    p.add_argument("--bootstrap", type=int, default=0, metavar="N", help="bootstrap resamples (0 = none)")
    p.add_argument("--confidence", type=float, default=0.95)
    _common(p, config=True)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("predict", help="extrapolate a fit report to new scale points")
    p.add_argument("--fit", required=True)
    p.add_argument("--at", action="append", required=True, help="X, or D,N for combined forms; repeatable")
    _common(p)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("report", help="emit plot data for a fit")
    p.add_argument("--fit", required=True)
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--samples", type=int, default=200)
    p.add_argument("--grid", type=int, default=50)
    _common(p)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("split", help="simple/complex split of a graph manifest")
    p.add_argument("--mode", required=True, choices=["equal-graphs", "equal-edges"])
    p.add_argument("--manifest", required=True)
    _common(p)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("subsample", help="seeded uniform subsample of a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--ratio", type=float, required=True)
    p.add_argument("--manifest-out", help="also write the subsampled manifest CSV here")
    _common(p)
    p.set_defaults(func=cmd_subsample)

    p = sub.add_parser("flops", help="forward-pass add-multiply count from edge totals")
    p.add_argument("--edges", type=int)
    p.add_argument("--nodes", type=int)
    p.add_argument("--manifest", help="take edge and node totals from a manifest")
    p.add_argument("--layers", type=int, required=True)
    p.add_argument("--y", type=int, required=True, help="add-multiply ops per message")
    p.add_argument("--x", type=int, default=0, help="add-multiply ops per node update")
    p.add_argument("--mode", choices=["exact", "paper-approx"], default="exact")
    p.add_argument("--edge-convention", choices=["undirected", "directed"], default="undirected")
    _common(p)
    p.set_defaults(func=cmd_flops)

    p = sub.add_parser("collapse", help="detect model scaling collapse")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--rel-tol", type=float, default=0.02)
    p.add_argument("--min-consecutive", type=int, default=2)
    p.add_argument("--calibration", default="best", help="'best' or a number of smallest sizes")
    _common(p, config=True)
    p.set_defaults(func=cmd_collapse)

    p = sub.add_parser("overfit", help="overfitting diagnosis from loss curves")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--threshold", type=float, default=0.05)
    p.add_argument("--group-by", choices=["data_fraction", "n_params"], default="data_fraction")
    _common(p)
    p.set_defaults(func=cmd_overfit)

    p = sub.add_parser("depth-compare", help="compare scaling curves across model depths")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--resamples", type=int, default=200)
    p.add_argument("--confidence", type=float, default=0.95)
    p.add_argument("--scale", choices=["n_params", "data_size"], default="n_params")
    _common(p, config=True)
    p.set_defaults(func=cmd_depth_compare)

    p = sub.add_parser("synth", help="generate a synthetic experiments CSV")
    p.add_argument("--form", required=True, choices=FORMS)
    p.add_argument("--param", action="append", default=[], help="name=value; repeat for every parameter")
    p.add_argument("--x-min", type=float, default=1e2)
    p.add_argument("--x-max", type=float, default=1e7)
    p.add_argument("--points", type=int, default=20)
    p.add_argument("--d-min", type=float, default=1.0)
    p.add_argument("--d-max", type=float, default=1e4)
    p.add_argument("--n-min", type=float, default=1.0)
    p.add_argument("--n-max", type=float, default=1e4)
    p.add_argument("--grid", type=int, default=7)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--scale", choices=["n_params", "data_size"], default="n_params")
    p.add_argument("--fixed-n-params", type=float, default=1e6)
    p.add_argument("--fixed-data-size", type=float, default=1.0)
    p.add_argument("--data-unit", choices=["graphs", "edges", "fraction"], default=None)
    p.add_argument("--task", default="synthetic")
    p.add_argument("--depth", type=int, default=None)
    _common(p)
    p.set_defaults(func=cmd_synth)

    return parser


def run_cli(argv: Optional[Sequence[str]] = None, stdout=None, stderr=None) -> int:
    out = stdout if stdout is not None else sys.stdout
    err = stderr if stderr is not None else sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(list(sys.argv[1:] if argv is None else argv))
    except UsageError as exc:
        err.write(f"{exc}\n")
        return 1
    except SystemExit as exc:
        # --help / --version
        return int(exc.code or 0)
    try:
        return args.func(args, out, err)
    except NumericError as exc:
        err.write(f"error: {type(exc).__name__}: {exc}\n")
        return 2
    except (ValidationError, OSError) as exc:
        err.write(f"error: {type(exc).__name__}: {exc}\n")
        return 1


def main() -> None:
    sys.exit(run_cli())
