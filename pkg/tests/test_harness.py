import json
import math
import xml.etree.ElementTree as ET

import numpy as np
import pytest
from scipy.spatial import cKDTree

from wvq import sampling
from wvq.errors import ConfigError, ReportWriteError
from wvq.harness import (Experiment, PlotKind, ResultRow, Series, build_config, emit_csv, emit_svg,
                         run_disks, run_experiment, run_gaussian_sweep, run_uniform_sweep,
                         run_variance_table, summarize)
from wvq.harness.cli import main
from wvq.harness.config import load_config
from wvq.harness.experiments import FEATURES, CODES, disk_specs, stream_seed
from wvq.harness.report import COLUMNS, csv_text, point_stats, read_csv

SVG_NS = "{http://www.w3.org/2000/svg}"


def row(**kw):
    base = dict(experiment="X", strategy="", sweep_value=0.0, repeat=0, seed=1, quant_error=1.0,
                utilization=0.5, perplexity=2.0, w2=0.1, wall_ms=0.0)
    base.update(kw)
    return ResultRow(**base)


# ---------------------------------------------------------------- config

def test_defaults_per_experiment():
    g = build_config(Experiment.GAUSSIAN_SWEEP)
    assert (g.K, g.N, g.d, g.repeats) == (1024, 200000, 32, 5)
    assert g.mean_values == [0.0, 0.5, 1.0, 1.5, 2.0, 2.5]
    assert g.scale_values == [1.0, 2.0, 3.0, 4.0, 5.0, 6.0]
    v = build_config("VarianceTable")
    assert (v.K, v.N, v.d) == (8192, 100000, 8)
    assert v.scale_values == [1e-4, 1e-3, 1e-2, 0.1, 1.0]
    d = build_config("Disks")
    assert (d.K, d.N, d.d) == (400, 10000, 2)
    a = build_config("Atomic")
    assert (a.trainer.codebook_size, a.trainer.steps, a.trainer.batch_size) == (2048, 200, 5000)
    full = build_config("Atomic", full_scale=True)
    assert (full.trainer.codebook_size, full.trainer.steps, full.trainer.batch_size) == (16384, 2000, 50000)


@pytest.mark.parametrize("raw", [
    {"repeats": 0}, {"K": 0}, {"mean_values": []}, {"scale_values": [0.0]}, {"bogus": 1},
    {"experiment": "Atomic"}, {"trainer": {"steps": 3}}, {"base_seed": -1}, {"d": 3},
    {"disks": [{"offset": 1, "radius": 2}]}, {"strategies": ["Nope"]},
])
def test_config_errors(raw):
    with pytest.raises(ConfigError):
        build_config("Disks", raw)


def test_atomic_trainer_overrides():
    cfg = build_config("Atomic", {"K": 64, "N": 300, "trainer": {"steps": 4, "gamma": 0.2}})
    assert cfg.trainer.codebook_size == 64 and cfg.trainer.batch_size == 300
    assert cfg.trainer.steps == 4 and cfg.trainer.gamma == 0.2
    with pytest.raises(ConfigError):
        build_config("Atomic", {"trainer": {"learning_rate": -1}})
    with pytest.raises(ConfigError):
        build_config("Atomic", {"trainer": {"nope": 1}})


def test_load_config_errors(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.json", "Disks")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(bad, "Disks")
    bad.write_text("[1, 2]")
    with pytest.raises(ConfigError):
        load_config(bad, "Disks")
    ok = tmp_path / "ok.json"
    ok.write_text(json.dumps({"experiment": "disks", "N": 500}))
    assert load_config(ok, "Disks", seed=9).base_seed == 9


# ---------------------------------------------------------------- reports

def test_empty_csv_is_header_only(tmp_path):
    emit_csv([], tmp_path / "r.csv")
    assert (tmp_path / "r.csv").read_text() == ",".join(COLUMNS) + "\n"


def test_csv_round_trip_and_determinism(tmp_path):
    rows = [row(quant_error=0.1 + 0.2, perplexity=1 / 3, sweep_value=2.5, repeat=r) for r in range(3)]
    emit_csv(rows, tmp_path / "a.csv")
    emit_csv(rows, tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert read_csv(tmp_path / "a.csv") == rows
    assert "0.30000000000000004" in csv_text(rows)


def test_report_write_error(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(ReportWriteError):
        emit_csv([], blocker / "sub" / "r.csv")
    with pytest.raises(ReportWriteError):
        emit_svg([Series("a", [0], [0])], "lines", blocker / "p.svg")


def test_point_stats():
    s = point_stats([1.0, 2.0, 3.0, float("nan")])
    assert s["n"] == 3 and s["mean"] == 2.0 and s["std"] == 1.0
    assert s["ci95"] == pytest.approx(1.96 / math.sqrt(3))
    assert point_stats([4.0])["std"] == 0.0
    assert point_stats([float("nan")])["mean"] is None


def _marker_groups(path):
    """Per scatter series, the number of drawn markers (legend swatches excluded)."""
    root = ET.parse(path).getroot()
    legend = set()
    for g in root.iter(SVG_NS + "g"):
        if g.get("id", "").startswith("legend"):
            legend.update(id(x) for x in g.iter())
    return [len(list(g.iter(SVG_NS + "use"))) for g in root.iter(SVG_NS + "g")
            if g.get("id", "").startswith("PathCollection") and id(g) not in legend]


def _markers(path):
    return sum(_marker_groups(path))


def test_single_point_svg(tmp_path):
    emit_svg([Series("one", [1.0], [2.0])], PlotKind.SCATTER, tmp_path / "s.svg", title="t")
    assert _markers(tmp_path / "s.svg") == 1
    emit_svg([Series("one", [1.0], [2.0], [1.5], [2.5])], "lines", tmp_path / "l.svg")
    ET.parse(tmp_path / "l.svg")


def test_svg_deterministic(tmp_path):
    series = [Series("a", [0, 1, 2], [1, 3, 2], [0.5, 2.5, 1.5], [1.5, 3.5, 2.5]),
              Series("b", [0, 1, 2], [2, 2, 2])]
    emit_svg(series, "lines", tmp_path / "a.svg", xlabel="x", ylabel="y")
    emit_svg(series, "lines", tmp_path / "b.svg", xlabel="x", ylabel="y")
    assert (tmp_path / "a.svg").read_bytes() == (tmp_path / "b.svg").read_bytes()
    assert b"<svg" in (tmp_path / "a.svg").read_bytes()


def test_summarize_groups():
    rows = [row(sweep_value=v, repeat=r, quant_error=v + r) for v in (0.0, 1.0) for r in range(2)]
    s = summarize(rows)
    assert [p["sweep_value"] for p in s] == [0.0, 1.0]
    assert s[1]["quant_error"]["mean"] == 1.5 and s[1]["repeats"] == 2


# ---------------------------------------------------------------- disks

def disk_cfg(tmp_path, cases, **kw):
    return build_config("Disks", {"disks": cases, **kw}, output_dir=tmp_path)


def kdtree_triple(z, e):
    """Independent route: k-d tree nearest neighbours."""
    dist, idx = cKDTree(e).query(z)
    counts = np.bincount(idx, minlength=len(e))
    p = counts[counts > 0] / len(z)
    return float(np.mean(dist**2)), np.count_nonzero(counts) / len(e), math.exp(-np.sum(p * np.log(p)))


def test_disks_against_kdtree_oracle(tmp_path):
    cases = [{"offset": 0.0}, {"offset": 1.0, "code_radius": 0.7}, {"offset": 3.0}]
    cfg = disk_cfg(tmp_path, cases)
    out = run_disks(cfg, plots=False)
    for i, case in enumerate(cases):
        fspec, cspec = disk_specs(case)
        z = sampling.sample(fspec, cfg.N, stream_seed(cfg.base_seed, 0, FEATURES))
        e = sampling.sample(cspec, cfg.K, stream_seed(cfg.base_seed, 0, CODES))
        qe, ut, px = kdtree_triple(z, e)
        r = out.rows[i]
        assert r.quant_error == pytest.approx(qe, rel=1e-9)
        assert r.utilization == ut
        assert r.perplexity == pytest.approx(px, rel=1e-9)


def test_disks_examples(tmp_path):
    cases = [{"offset": 0.0}, {"offset": 4.0}, {"offset": 0.0, "code_radius": 0.0}]
    out = run_disks(disk_cfg(tmp_path, cases), plots=True)
    matched, separated, point = out.rows
    assert matched.utilization == 1.0
    # Poisson approximation of the nearest-code distance: R^2 / K, plus boundary effects
    assert 1.0 < matched.quant_error / (1.0 / 400) < 1.3
    assert separated.quant_error > matched.quant_error
    assert separated.utilization < matched.utilization
    assert separated.perplexity < matched.perplexity
    assert point.utilization == 1 / 400 and point.perplexity == 1.0
    assert sorted(out.plots) == ["disks-case0.svg", "disks-case1.svg", "disks-case2.svg"]
    # 10% of features and 90% of codes are drawn
    assert _marker_groups(tmp_path / "disks-case0.svg") == [1000, 360]


def test_default_disk_cases_order(tmp_path):
    out = run_disks(build_config("Disks", output_dir=tmp_path), plots=False)
    group1 = out.rows[:4]  # equal radii, centres approaching
    for a, b in zip(group1, group1[1:]):
        assert a.quant_error > b.quant_error
        assert a.utilization < b.utilization and a.perplexity < b.perplexity


# ---------------------------------------------------------------- sweeps

SMALL = {"N": 4000, "K": 128, "d": 8, "repeats": 2}


def test_gaussian_sweep_rows_and_monotonicity(tmp_path):
    cfg = build_config("GaussianSweep", SMALL, output_dir=tmp_path)
    out = run_gaussian_sweep(cfg, plots=True)
    assert len(out.rows) == (6 + 6) * 2
    assert out.extras["mean_sweep"]["monotone_every_repeat"]
    assert out.extras["scale_sweep"]["monotone_every_repeat"]
    assert len(out.plots) == 8 and all((tmp_path / p).exists() for p in out.plots)
    assert all(math.isfinite(v) for r in out.rows for v in (r.quant_error, r.w2))


def test_uniform_sweep(tmp_path):
    # far shifts plateau at a handful of used codes when K is this small
    raw = {**SMALL, "mean_values": [0.0, 0.5, 1.0]}
    out = run_uniform_sweep(build_config("UniformSweep", raw, output_dir=tmp_path), plots=False)
    mean_rows = [r for r in out.rows if r.experiment == "UniformSweep:mean"]
    assert len(mean_rows) == 6
    assert out.extras["mean_sweep"]["monotone_every_repeat"]
    assert out.extras["scale_sweep"]["monotone_every_repeat"]


def test_sweep_matches_variance_table(tmp_path):
    g = run_gaussian_sweep(build_config("GaussianSweep", SMALL, output_dir=tmp_path), plots=False)
    v = run_variance_table(build_config("VarianceTable", {**SMALL, "scale_values": [1.0]},
                                        output_dir=tmp_path), plots=False)
    sweep0 = [r for r in g.rows if r.experiment == "GaussianSweep:mean" and r.sweep_value == 0.0]
    table1 = [r for r in v.rows if r.experiment == "VarianceTable:gaussian"]
    for a, b in zip(sweep0, table1):
        assert (a.quant_error, a.utilization, a.perplexity) == (b.quant_error, b.utilization, b.perplexity)


def test_variance_table_text(tmp_path):
    out = run_variance_table(build_config("VarianceTable", {**SMALL, "repeats": 1},
                                          output_dir=tmp_path), plots=True)
    assert "gaussian sigma" in out.extras["table"] and "uniform zeta" in out.extras["table"]
    assert (tmp_path / "table.txt").exists()
    assert len(out.rows) == 2 * 5


def test_worker_pool_is_order_independent(tmp_path):
    raw = {"N": 2000, "K": 64, "d": 4, "repeats": 2, "mean_values": [0.0, 1.0], "scale_values": [1.0, 2.0]}
    a = run_experiment(build_config("GaussianSweep", raw, output_dir=tmp_path / "a"), plots=False)
    b = run_experiment(build_config("GaussianSweep", {**raw, "workers": 2}, output_dir=tmp_path / "b"),
                       plots=False)
    assert a.rows == b.rows
    assert (tmp_path / "a/results.csv").read_bytes() == (tmp_path / "b/results.csv").read_bytes()


def test_summary_json(tmp_path):
    raw = {"N": 2000, "K": 64, "d": 4, "repeats": 3, "mean_values": [0.0], "scale_values": [1.0]}
    run_experiment(build_config("UniformSweep", raw, output_dir=tmp_path), plots=False)
    s = json.loads((tmp_path / "summary.json").read_text())
    assert s["experiment"] == "UniformSweep" and len(s["points"]) == 2
    p = s["points"][0]
    assert p["repeats"] == 3 and set(p["quant_error"]) == {"n", "mean", "std", "ci95"}


def test_record_timing(tmp_path):
    raw = {"N": 500, "K": 16, "d": 2, "repeats": 1, "mean_values": [0.0], "scale_values": [1.0],
           "record_timing": True}
    out = run_experiment(build_config("GaussianSweep", raw, output_dir=tmp_path), plots=False)
    assert all(r.wall_ms > 0 for r in out.rows)
    assert (tmp_path / "timings.json").exists()


# ---------------------------------------------------------------- atomic and CLI

ATOMIC_SMALL = {"K": 64, "N": 300, "mean_values": [0.0, 2.0],
                "trainer": {"steps": 5, "eval_size": 1000}}


def test_atomic_small(tmp_path):
    out = run_experiment(build_config("Atomic", ATOMIC_SMALL, output_dir=tmp_path))
    assert len(out.rows) == 5 * 2
    assert {r.strategy for r in out.rows} == {"Vanilla", "EMA", "Online", "Linear", "Wasserstein"}
    assert not out.diverged
    assert (tmp_path / "atomic-gaussian-w2.svg").exists()


def test_cli_exit_codes(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"N": 500, "K": 16, "disks": [{"offset": 0.0}]}))
    assert main(["disks", "--config", str(cfg), "--out", str(tmp_path / "o"), "--seed", "3"]) == 0
    assert (tmp_path / "o/results.csv").exists()

    cfg.write_text(json.dumps({"repeats": 0}))
    assert main(["disks", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2

    cfg.write_text(json.dumps({**ATOMIC_SMALL, "strategies": ["Vanilla", "Wasserstein"],
                               "trainer": {"steps": 40, "learning_rate": 1e30, "eval_size": 500}}))
    with np.errstate(all="ignore"):
        assert main(["atomic", "--config", str(cfg), "--out", str(tmp_path / "d"), "-q"]) == 3
    rows = read_csv(tmp_path / "d/results.csv")
    assert len(rows) == 4  # flagged runs do not stop the sweep
    assert [r.flagged for r in rows if r.strategy == "Wasserstein"] == [True, True]

    blocker = tmp_path / "blocker"
    blocker.write_text("x")
    assert main(["lloyd-check", "--out", str(blocker / "x"), "-q"]) == 4
    with pytest.raises(SystemExit) as exc:
        main(["nope", "--out", str(tmp_path)])
    assert exc.value.code == 2
