import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from graphscale.analysis import LossCurve
from graphscale.errors import (
    BadEnum,
    DomainViolation,
    MissingColumn,
    NonIncreasingEpochs,
    RefusesUnconverged,
    UnknownColumn,
)
from graphscale.fitting import FitConfig, bootstrap_ci, fit, fit_arrays, generate_synthetic, with_bootstrap
from graphscale.io import (
    EXPERIMENT_COLUMNS,
    dumps_document,
    emit_plot_data,
    fit_result_from_dict,
    fit_result_to_dict,
    fmt_console,
    fmt_float,
    read_experiments,
    read_losscurves,
    read_manifest,
    write_experiments,
    write_losscurves,
    write_manifest,
)
from graphscale.models import ParamSet, ScalingForm, evaluate
from graphscale.records import ExperimentRecord

HEADER = ",".join(EXPERIMENT_COLUMNS)


def write(tmp_path, text, name="in.csv"):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_read_experiments_happy_path(tmp_path):
    path = write(
        tmp_path,
        HEADER + "\n"
        "1000,0.5,fraction,score,0.7,3,ppa,1\n"
        "2000,1.0,fraction,score,0.75,,ppa,\n"
        "4000,12345,edges,error,0.2,,,\n",
    )
    recs = read_experiments(path)
    assert len(recs) == 3
    assert recs[0] == ExperimentRecord(1000.0, 0.5, "fraction", "score", 0.7, 3, "ppa", 1)
    assert recs[1].depth is None and recs[1].seed is None
    assert recs[2].data_unit == "edges" and recs[2].task == ""


@pytest.mark.parametrize(
    "row,exc,column",
    [
        ("1000,1.0,fraction,score,1.3,,,", DomainViolation, "metric_value"),
        ("1000,1.0,fraction,error,-0.1,,,", DomainViolation, "metric_value"),
        ("1000,1.5,fraction,score,0.5,,,", DomainViolation, "data_size"),
        ("0,1.0,fraction,score,0.5,,,", DomainViolation, "n_params"),
        ("1000,1.0,nodes,score,0.5,,,", BadEnum, "data_unit"),
        ("1000,1.0,fraction,accuracy,0.5,,,", BadEnum, "metric_kind"),
        ("1000,1.0,fraction,score,abc,,,", DomainViolation, "metric_value"),
        ("1000,1.0,fraction,score,0.5,0,,", DomainViolation, "depth"),
    ],
)
def test_read_experiments_errors_cite_row_and_column(tmp_path, row, exc, column):
    path = write(tmp_path, HEADER + "\n1000,1.0,fraction,score,0.5,,,\n" + row + "\n")
    with pytest.raises(exc) as info:
        read_experiments(path)
    assert info.value.row == 3
    assert info.value.column == column
    assert "row 3" in str(info.value)


def test_missing_and_unknown_columns(tmp_path):
    path = write(tmp_path, "n_params,data_size,data_unit,metric_kind,depth,task,seed\n")
    with pytest.raises(MissingColumn) as info:
        read_experiments(path)
    assert info.value.column == "metric_value" and info.value.row == 1
    path = write(tmp_path, HEADER + ",extra\n")
    with pytest.raises(UnknownColumn):
        read_experiments(path)


def test_columns_may_come_in_any_order(tmp_path):
    cols = list(reversed(EXPERIMENT_COLUMNS))
    path = write(tmp_path, ",".join(cols) + "\n1,ppa,,0.5,score,fraction,1.0,1000\n")
    (rec,) = read_experiments(path)
    assert rec == ExperimentRecord(1000.0, 1.0, "fraction", "score", 0.5, None, "ppa", 1)


records_strategy = st.lists(
    st.builds(
        ExperimentRecord,
        n_params=st.floats(1e-3, 1e12),
        data_size=st.floats(1e-3, 1.0),
        data_unit=st.sampled_from(["graphs", "edges", "fraction"]),
        metric_kind=st.sampled_from(["error", "score"]),
        metric_value=st.floats(0.0, 1.0),
        depth=st.one_of(st.none(), st.integers(1, 64)),
        task=st.text(st.characters(codec="utf-8", exclude_categories=["Cs", "Cc", "Zs", "Zl", "Zp"]), max_size=8),
        seed=st.one_of(st.none(), st.integers(0, 2**63)),
    ),
    max_size=20,
)


@settings(max_examples=100, deadline=None)
@given(records_strategy)
def test_experiments_round_trip(tmp_path_factory, recs):
    path = tmp_path_factory.mktemp("rt") / "e.csv"
    write_experiments(recs, path)
    assert read_experiments(path) == recs


def test_manifest_round_trip_and_errors(tmp_path, fixtures_dir):
    m = read_manifest(fixtures_dir / "m.csv")
    assert [r.num_edges for r in m] == [1, 2, 3, 6]
    assert m.source_name == "m"
    out = tmp_path / "copy.csv"
    write_manifest(m, out)
    assert read_manifest(out, "m") == m

    path = write(tmp_path, "graph_id,class_label,num_nodes,num_edges\ng0,a,3,2\ng1,a,0,1\n")
    with pytest.raises(DomainViolation) as info:
        read_manifest(path)
    assert (info.value.row, info.value.column) == (3, "num_nodes")
    path = write(tmp_path, "graph_id,class_label,num_nodes,num_edges\ng0,a,3,2\ng0,a,4,1\n")
    with pytest.raises(DomainViolation):
        read_manifest(path)


LOSS_HEADER = "model_id,n_params,data_fraction,epoch,train_loss,val_loss\n"


def test_loss_curves_interleaved(tmp_path):
    path = write(
        tmp_path,
        LOSS_HEADER + "a,100,0.5,0,1.0,1.1\n"
        "b,200,1.0,0,0.9,1.0\n"
        "a,100,0.5,1,0.8,0.9\n"
        "b,200,1.0,1,0.7,0.8\n"
        "a,100,0.5,2,0.6,0.95\n",
    )
    curves = read_losscurves(path)
    assert [c.model_id for c in curves] == ["a", "b"]
    assert curves[0].epochs == (0.0, 1.0, 2.0)
    assert curves[0].val_loss == (1.1, 0.9, 0.95)
    assert curves[1].train_loss == (0.9, 0.7)


def test_loss_curves_non_increasing_epochs(tmp_path):
    path = write(tmp_path, LOSS_HEADER + "a,100,0.5,0,1,1\na,100,0.5,1,1,1\na,100,0.5,1,1,1\n")
    with pytest.raises(NonIncreasingEpochs) as info:
        read_losscurves(path)
    assert info.value.row == 4


def test_loss_curves_round_trip(tmp_path, fixtures_dir):
    curves = read_losscurves(fixtures_dir / "losses.csv")
    assert curves[0].val_loss == (1.0, 0.8, 0.7, 0.75, 0.9)
    out = tmp_path / "l.csv"
    write_losscurves(curves, out)
    assert read_losscurves(out) == curves


def test_number_formats():
    for v in (0.1, 1 / 3, 1e-300, 123456789.123456789, 2.0**-1074):
        assert float(fmt_float(v)) == v
    assert fmt_console(0.123456) == "0.1235"
    assert fmt_console(1234567.0) == "1.235e+06"


def test_documents_are_stable_and_json():
    doc = {"b": np.float64(1.5), "a": [np.int64(2), float("inf")], "c": np.arange(2.0)}
    text = dumps_document(doc)
    assert text == dumps_document(doc)
    parsed = json.loads(text)
    assert list(parsed) == ["a", "b", "c"]
    assert parsed["a"] == [2, "inf"]


def test_fit_result_round_trip():
    p = ParamSet(ScalingForm.BASIC_ERROR, (1.0, 0.5, 0.1))
    recs = generate_synthetic(ScalingForm.BASIC_ERROR, p, np.logspace(0, 4, 40), noise_sigma=0.005, seed=1)
    res = fit(ScalingForm.BASIC_ERROR, recs)
    res = with_bootstrap(res, bootstrap_ci(ScalingForm.BASIC_ERROR, recs, n_resamples=100, base=res))
    back = fit_result_from_dict(json.loads(dumps_document(fit_result_to_dict(res))))
    assert back == res
    np.testing.assert_array_equal(back.bootstrap_ci.samples, res.bootstrap_ci.samples)


# -- plot data ---------------------------------------------------------------


def test_plot_data_curve():
    p = ParamSet(ScalingForm.SHIFTED_SCORE, (0.5, 0.7, 0.5, 0.9))
    x = np.logspace(-2, 3, 20)
    recs = generate_synthetic(ScalingForm.SHIFTED_SCORE, p, x, scale="data_size")
    res = fit(ScalingForm.SHIFTED_SCORE, recs, scale="data_size")
    doc = emit_plot_data(res, recs, n_curve_samples=137)
    cx, cy = np.asarray(doc["curve"]["x"]), np.asarray(doc["curve"]["y"])
    assert cx.size == cy.size == 137
    np.testing.assert_array_equal(cy, evaluate(ScalingForm.SHIFTED_SCORE, cx, res.params))
    assert cx[0] == pytest.approx(x.min() / 2) and cx[-1] == pytest.approx(x.max() * 10)
    assert math.log10(cx[-1]) - math.log10(x.max()) >= 1 - 1e-12
    assert len(doc["points"]) == 20 and doc["r_squared"] == res.r_squared


def test_plot_data_surface():
    theta = (1.0, 0.5, 0.8, 0.4, 0.1)
    g = np.logspace(0, 4, 7)
    d, n = np.meshgrid(g, g)
    pts = np.column_stack([d.ravel(), n.ravel()])
    recs = generate_synthetic(ScalingForm.COMBINED_ERROR, ParamSet(ScalingForm.COMBINED_ERROR, theta), pts)
    res = fit(ScalingForm.COMBINED_ERROR, recs)
    doc = emit_plot_data(res, recs, grid_size=9)
    surf = doc["surface"]
    assert np.shape(surf["values"]) == (9, 9)
    i, j = 3, 5
    want = evaluate(ScalingForm.COMBINED_ERROR, (surf["D"][i], surf["N"][j]), res.params)
    assert surf["values"][i][j] == want


def test_plot_data_refuses_unconverged():
    x = np.logspace(0, 4, 12)
    y = 0.3 + np.where(np.arange(12) % 2 == 0, 1e-3, -1e-3)
    res = fit_arrays(ScalingForm.BASIC_ERROR, x, y, starts=[(1e-20, 0.5, 0.3)])
    with pytest.raises(RefusesUnconverged):
        emit_plot_data(res, [])
