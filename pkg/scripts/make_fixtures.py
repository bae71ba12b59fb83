"""Regenerate everything under fixtures/. Deterministic; run from the repository root."""

from dataclasses import replace
from pathlib import Path

import numpy as np

from graphscale.analysis import LossCurve
from graphscale.cli import run_cli
from graphscale.fitting import generate_synthetic
from graphscale.graphs import GraphManifest, GraphRecord
from graphscale.io import write_experiments, write_losscurves, write_manifest
from graphscale.models import ParamSet, ScalingForm

OUT = Path("fixtures")


def synth(name, *args):
    path = OUT / name
    assert run_cli(["synth", *args, "--out", str(path)]) == 0
    Path(f"{path}.meta.json").unlink()


def main():
    OUT.mkdir(exist_ok=True)

    # basic-error law, 16 model sizes over three decades
    synth(
        "pcqm_like.csv",
        "--form", "basic-error",
        "--param", "a=3.0", "--param", "b=0.3", "--param", "eps_inf=0.09",
        "--x-min", "1e4", "--x-max", "1e7", "--points", "16",
        "--noise", "0.0005", "--seed", "20240601", "--task", "pcqm-like",
    )
    # shifted-score law, 24 model sizes
    synth(
        "runs.csv",
        "--form", "shifted-score",
        "--param", "a=4.0", "--param", "b=0.3", "--param", "c=5000", "--param", "s_inf=0.78",
        "--x-min", "1e4", "--x-max", "1e7", "--points", "24",
        "--noise", "0.003", "--seed", "7", "--task", "ppa-like",
    )
    # combined-error surface on a 7x7 grid
    synth(
        "surface.csv",
        "--form", "combined-error",
        "--param", "a1=1.0", "--param", "b1=0.5", "--param", "a2=0.8", "--param", "b2=0.4", "--param", "eps_inf=0.1",
        "--d-min", "1", "--d-max", "1e4", "--n-min", "1", "--n-max", "1e4", "--grid", "7",
        "--seed", "3",
    )

    # saturating score curve whose three largest models fall 10% of the range short
    sizes = np.logspace(4, 8, 12)
    law = ParamSet(ScalingForm.SHIFTED_SCORE, (0.4 * (1e4 + 1e5) ** 0.8, 0.8, 1e5, 0.85))
    recs = generate_synthetic(ScalingForm.SHIFTED_SCORE, law, sizes, noise_sigma=0.0005, seed=11, task="collapse-demo")
    values = np.array([r.metric_value for r in recs])
    drop = 0.1 * (values.max() - values.min())
    recs = [
        r if i < 9 else replace(r, metric_value=r.metric_value - drop)
        for i, r in enumerate(recs)
    ]
    write_experiments(recs, OUT / "collapse.csv")

    # three depths; depth 4 has the highest asymptote
    depth_sizes = np.logspace(4, 8, 16)
    rows = []
    for depth, s_inf, seed in ((2, 0.72, 1), (4, 0.80, 2), (6, 0.76, 3)):
        p = ParamSet(ScalingForm.SHIFTED_SCORE, (0.4 * (1e4 + 1e5) ** 0.4, 0.4, 1e5, s_inf))
        rows += generate_synthetic(
            ScalingForm.SHIFTED_SCORE, p, depth_sizes, noise_sigma=0.002, seed=seed, depth=depth, task="depth-demo"
        )
    write_experiments(rows, OUT / "depths.csv")

    write_manifest(
        GraphManifest(tuple(GraphRecord(f"g{i}", "class0", e + 1, e) for i, e in enumerate([1, 2, 3, 6])), "m"),
        OUT / "m.csv",
    )
    rng = np.random.default_rng(5)
    graphs = []
    for i in range(40):
        nodes = int(rng.integers(5, 60))
        graphs.append(GraphRecord(f"mol{i:03d}", f"class{i % 3}", nodes, int(rng.integers(nodes - 1, 2 * nodes))))
    write_manifest(GraphManifest(tuple(graphs), "molecules"), OUT / "molecules.csv")

    epochs = tuple(range(5))
    write_losscurves(
        [
            LossCurve("small-data", 1e6, 0.1, epochs, (1.2, 0.9, 0.7, 0.55, 0.45), (1.0, 0.8, 0.7, 0.75, 0.9)),
            LossCurve("half-data", 1e6, 0.5, epochs, (1.2, 0.95, 0.8, 0.7, 0.62), (1.0, 0.82, 0.72, 0.72, 0.76)),
            LossCurve("full-data", 1e6, 1.0, epochs, (1.2, 1.0, 0.85, 0.76, 0.7), (1.0, 0.85, 0.76, 0.71, 0.69)),
        ],
        OUT / "losses.csv",
    )


if __name__ == "__main__":
    main()
