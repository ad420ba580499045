"""Smoke test for the plotsieve Python module.

Install first:  pip install --no-build-isolation -e crates/py
"""

import json
import os
import tempfile

import plotsieve


def main():
    edge = plotsieve.synth_wafer_plots("edge_ring", 3, seed=1)
    sparse = plotsieve.synth_wafer_plots("sparse_random", 3, seed=2)
    assert len(edge) == 3 and edge[0].side == 48
    assert set(edge[0].pixels) <= {-1, 0, 1}
    assert plotsieve.PlotImage.from_tern(edge[0].to_tern()) == edge[0]
    assert edge[0].png(2)[:8] == b"\x89PNG\r\n\x1a\n"
    assert len(plotsieve.rotate_augment(edge, 12)) == 36

    stats = plotsieve.boxplot_stats([1.0, 2.0, 3.0, 4.0, 100.0])
    assert stats["median"] == 3.0 and stats["outliers"] == [100.0]

    rec, report = plotsieve.train_recognizer(edge[:2], edge[2:], "edge_ring", max_iterations=10, seed=3)
    report = json.loads(report)
    assert report["iterations"] <= 10
    assert len(rec.scores(edge + sparse)) == 6

    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "edge.psck")
        rec.save(path)
        loaded = plotsieve.Recognizer.load(path)
        assert loaded.scores(sparse) == rec.scores(sparse)

    cascade = plotsieve.Cascade()
    cascade.push(rec)
    plots = {f"p{i}": im for i, im in enumerate(edge + sparse)}
    ids, buckets, residual = cascade.scan(plots)
    assert ids and sorted(buckets[0] + residual) == sorted(plots)

    try:
        plotsieve.PlotImage(2, [0, 0, 0, 5])
    except ValueError:
        pass
    else:
        raise AssertionError("out-of-alphabet pixel accepted")
    print("python smoke test ok")


if __name__ == "__main__":
    main()
