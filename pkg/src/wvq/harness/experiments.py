"""Experiment drivers.

Each driver turns an :class:`ExperimentConfig` into result rows and writes its
plots into ``cfg.output_dir``. Sampling uses common random numbers: the
feature and code streams depend only on (base_seed, repeat, role), never on
the sweep value, so every sweep point of a repeat sees the same underlying
draws and the sweep curves are smooth in the swept parameter.
"""

from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np

from .. import lloyd as lloyd_mod
from .. import sampling
from ..distmatch import GaussianMoments, w2_empirical, w2_gaussian
from ..errors import DivergedTraining
from ..metrics import criterion_triple, perplexity
from ..sampling import SourceSpec
from ..trainers import Strategy, train, with_strategy
from .config import Experiment, ExperimentConfig
from .report import (METRICS, PlotKind, ResultRow, Series, emit_csv, emit_json, emit_svg,
                     format_table, mean_band, sort_rows, summarize, write_text)

FEATURES, CODES, PLOT = 0, 1, 2
NAN = float("nan")

METRIC_LABELS = {
    "quant_error": "quantization error",
    "utilization": "codebook utilization",
    "perplexity": "codebook perplexity",
    "w2": "Gaussian W2 distance",
}


@dataclass
class Outcome:
    rows: list[ResultRow]
    extras: dict[str, Any] = field(default_factory=dict)
    plots: list[str] = field(default_factory=list)

    @property
    def diverged(self) -> list[ResultRow]:
        return [r for r in self.rows if r.flagged]


def repeat_seed(base: int, repeat: int) -> int:
    return sampling.derive_seed(base, repeat)


def stream_seed(base: int, repeat: int, role: int) -> int:
    return sampling.derive_seed(base, repeat, role)


def _fan_out(fn: Callable, tasks: Sequence, workers: int) -> list:
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, tasks))
    return [fn(t) for t in tasks]


@dataclass(frozen=True)
class QuantTask:
    experiment: str
    sweep_value: float
    repeat: int
    base_seed: int
    feature_spec: SourceSpec
    code_spec: SourceSpec
    n: int
    k: int
    timing: bool = False


def run_quant_task(t: QuantTask) -> ResultRow:
    """Sample both sets, quantize and score one sweep point."""
    t0 = time.perf_counter()
    z = sampling.sample(t.feature_spec, t.n, stream_seed(t.base_seed, t.repeat, FEATURES))
    e = sampling.sample(t.code_spec, t.k, stream_seed(t.base_seed, t.repeat, CODES))
    tri = criterion_triple(z, e)
    w2 = w2_empirical(z, e) if t.k > 1 else NAN
    wall = (time.perf_counter() - t0) * 1e3 if t.timing else 0.0
    return ResultRow(t.experiment, "", t.sweep_value, t.repeat, repeat_seed(t.base_seed, t.repeat),
                     tri.quant_error, tri.utilization, tri.perplexity, w2, wall)


def _out(cfg: ExperimentConfig, name: str) -> Path:
    return Path(cfg.output_dir) / name


# ---------------------------------------------------------------- disks

def disk_specs(case: dict[str, float]) -> tuple[SourceSpec, SourceSpec]:
    rf = float(case.get("feature_radius", 1.0))
    rc = float(case.get("code_radius", 1.0))
    off = float(case.get("offset", 0.0))
    return sampling.disk(rf), sampling.disk(rc, (off, 0.0))


def _disk_plot(cfg: ExperimentConfig, index: int, case: dict[str, float], row: ResultRow) -> str:
    fspec, cspec = disk_specs(case)
    z = sampling.sample(fspec, cfg.N, stream_seed(cfg.base_seed, 0, FEATURES))
    e = sampling.sample(cspec, cfg.K, stream_seed(cfg.base_seed, 0, CODES))
    rng = sampling.make_rng(stream_seed(cfg.base_seed, 0, PLOT))
    zs = z[np.sort(rng.choice(len(z), max(1, round(0.1 * len(z))), replace=False))]
    es = e[np.sort(rng.choice(len(e), max(1, round(0.9 * len(e))), replace=False))]
    name = f"disks-case{index}.svg"
    title = (f"offset {case.get('offset', 0.0):g}, radii {case.get('feature_radius', 1.0):g}/"
             f"{case.get('code_radius', 1.0):g}: ({row.quant_error:.3g}, "
             f"{100 * row.utilization:.1f}%, {row.perplexity:.1f})")
    emit_svg([Series("features", zs[:, 0], zs[:, 1], color="tab:red", size=3),
              Series("codes", es[:, 0], es[:, 1], color="tab:green", size=6)],
             PlotKind.SCATTER, _out(cfg, name), title=title, xlabel="x", ylabel="y",
             equal_aspect=True)
    return name


def run_disks(cfg: ExperimentConfig, plots: bool = True) -> Outcome:
    """Criterion triple for pairs of uniform disks (features at the origin)."""
    assert cfg.experiment is Experiment.DISKS
    tasks = []
    for i, case in enumerate(cfg.disks):
        fspec, cspec = disk_specs(case)
        for r in range(cfg.repeats):
            tasks.append(QuantTask("Disks", float(i), r, cfg.base_seed, fspec, cspec,
                                   cfg.N, cfg.K, cfg.record_timing))
    rows = sort_rows(_fan_out(run_quant_task, tasks, cfg.workers))
    out = Outcome(rows, {"cases": [dict(c, index=i) for i, c in enumerate(cfg.disks)]})
    if plots:
        first = {int(r.sweep_value): r for r in rows if r.repeat == 0}
        out.plots = [_disk_plot(cfg, i, c, first[i]) for i, c in enumerate(cfg.disks)]
    return out


# ---------------------------------------------------------------- sweeps

def _sweep_tasks(cfg: ExperimentConfig, family: str) -> list[QuantTask]:
    make = sampling.gaussian if family == "gaussian" else sampling.cube
    prefix = "GaussianSweep" if family == "gaussian" else "UniformSweep"
    base = make(cfg.d, 0.0, 1.0)
    tasks = []
    for axis, values in (("mean", cfg.mean_values), ("scale", cfg.scale_values)):
        for v in values:
            code = make(cfg.d, v, 1.0) if axis == "mean" else make(cfg.d, 0.0, v)
            for r in range(cfg.repeats):
                tasks.append(QuantTask(f"{prefix}:{axis}", v, r, cfg.base_seed, base, code,
                                       cfg.N, cfg.K, cfg.record_timing))
    return tasks


def _sweep_plots(cfg: ExperimentConfig, rows: list[ResultRow], prefix: str,
                 symbols: tuple[str, str]) -> list[str]:
    names = []
    for axis, sym in zip(("mean", "scale"), symbols):
        exp = f"{prefix}:{axis}"
        for m in METRICS:
            name = f"{prefix.lower()}-{axis}-{m}.svg"
            emit_svg([mean_band(rows, m, experiment=exp, label=f"mean +- 95% CI ({cfg.repeats} repeats)")],
                     PlotKind.LINES, _out(cfg, name), title=f"{METRIC_LABELS[m]} vs {sym}",
                     xlabel=sym, ylabel=METRIC_LABELS[m])
            names.append(name)
    return names


def _monotone_report(rows: list[ResultRow], experiment: str, optimum: float) -> dict[str, Any]:
    """Per-repeat check that the triple degrades moving away from ``optimum``."""
    reps = sorted({r.repeat for r in rows if r.experiment == experiment})
    ok = True
    for rep in reps:
        pts = sorted((r for r in rows if r.experiment == experiment and r.repeat == rep),
                     key=lambda r: abs(r.sweep_value - optimum))
        qe = [r.quant_error for r in pts]
        ut = [r.utilization for r in pts]
        px = [r.perplexity for r in pts]
        ok &= all(np.diff(qe) > 0) and all(np.diff(ut) < 0) and all(np.diff(px) < 0)
    return {"optimum": optimum, "monotone_every_repeat": bool(ok)}


def _run_sweep(cfg: ExperimentConfig, family: str, plots: bool) -> Outcome:
    rows = sort_rows(_fan_out(run_quant_task, _sweep_tasks(cfg, family), cfg.workers))
    prefix = "GaussianSweep" if family == "gaussian" else "UniformSweep"
    symbols = ("mu", "sigma") if family == "gaussian" else ("nu", "zeta")
    extras = {
        "mean_sweep": _monotone_report(rows, f"{prefix}:mean", 0.0),
        "scale_sweep": _monotone_report(rows, f"{prefix}:scale", 1.0),
    }
    out = Outcome(rows, extras)
    if plots:
        out.plots = _sweep_plots(cfg, rows, prefix, symbols)
    return out


def run_gaussian_sweep(cfg: ExperimentConfig, plots: bool = True) -> Outcome:
    """Features N(0, I); codes N(mu 1, I) over the mean sweep and N(0, sigma^2 I) over the scale sweep."""
    assert cfg.experiment is Experiment.GAUSSIAN_SWEEP
    return _run_sweep(cfg, "gaussian", plots)


def run_uniform_sweep(cfg: ExperimentConfig, plots: bool = True) -> Outcome:
    """Features Unif(-1, 1)^d; codes Unif(nu-1, nu+1)^d and Unif(-zeta, zeta)^d."""
    assert cfg.experiment is Experiment.UNIFORM_SWEEP
    return _run_sweep(cfg, "uniform", plots)


# ---------------------------------------------------------------- variance table

def variance_table_text(rows: list[ResultRow], values: Sequence[float]) -> str:
    stats = {(s["experiment"], s["sweep_value"]): s for s in summarize(rows)}
    parts = []
    for family, sym in (("gaussian", "sigma"), ("uniform", "zeta")):
        exp = f"VarianceTable:{family}"
        header = [f"{family} {sym}"] + [f"{v:g}" for v in values]
        body = []
        for m, label in (("quant_error", "E"), ("utilization", "U"), ("perplexity", "C")):
            body.append([label] + [stats[(exp, float(v))][m]["mean"] for v in values])
        parts.append(format_table(header, body))
    return "\n".join(parts)


def run_variance_table(cfg: ExperimentConfig, plots: bool = True) -> Outcome:
    """Both sets drawn from the same distribution at each scale in the grid."""
    assert cfg.experiment is Experiment.VARIANCE_TABLE
    tasks = []
    for family, make in (("gaussian", sampling.gaussian), ("uniform", sampling.cube)):
        for v in cfg.scale_values:
            spec = make(cfg.d, 0.0, v)
            for r in range(cfg.repeats):
                tasks.append(QuantTask(f"VarianceTable:{family}", v, r, cfg.base_seed, spec, spec,
                                       cfg.N, cfg.K, cfg.record_timing))
    rows = sort_rows(_fan_out(run_quant_task, tasks, cfg.workers))
    table = variance_table_text(rows, cfg.scale_values)
    ratios = {}
    for family in ("gaussian", "uniform"):
        stats = [s for s in summarize(rows) if s["experiment"] == f"VarianceTable:{family}"]
        ratios[family] = {repr(s["sweep_value"]): s["quant_error"]["mean"] / s["sweep_value"] ** 2
                          for s in stats}
    out = Outcome(rows, {"error_over_scale_squared": ratios, "table": table})
    if plots:
        write_text(_out(cfg, "table.txt"), table)
        out.plots = ["table.txt"]
    return out


# ---------------------------------------------------------------- atomic

@dataclass(frozen=True)
class AtomicTask:
    strategy: Strategy
    shift: float
    repeat: int
    cfg: ExperimentConfig


def atomic_specs(source: str, d: int, shift: float) -> tuple[SourceSpec, SourceSpec]:
    make = sampling.gaussian if source == "gaussian" else sampling.cube
    return make(d, shift, 1.0), make(d, 0.0, 1.0)


def run_atomic_task(t: AtomicTask) -> ResultRow:
    cfg = t.cfg
    tcfg = with_strategy(cfg.trainer, t.strategy)
    fspec, cspec = atomic_specs(cfg.source, cfg.d, t.shift)
    seed = repeat_seed(cfg.base_seed, t.repeat)
    exp = f"Atomic:{cfg.source}"
    t0 = time.perf_counter()
    try:
        _, reports = train(tcfg, fspec, cspec, seed)
    except DivergedTraining:
        wall = (time.perf_counter() - t0) * 1e3 if cfg.record_timing else 0.0
        return ResultRow(exp, t.strategy.value, t.shift, t.repeat, seed, NAN, NAN, NAN, NAN, wall)
    final = reports[-1]
    wall = (time.perf_counter() - t0) * 1e3 if cfg.record_timing else 0.0
    tri = final.triple
    return ResultRow(exp, t.strategy.value, t.shift, t.repeat, seed,
                     tri.quant_error, tri.utilization, tri.perplexity, final.w2, wall)


def run_atomic(cfg: ExperimentConfig, plots: bool = True) -> Outcome:
    """Train every strategy from a centred codebook against shifted features."""
    assert cfg.experiment is Experiment.ATOMIC
    tasks = [AtomicTask(s, v, r, cfg) for s in cfg.strategies for v in cfg.mean_values
             for r in range(cfg.repeats)]
    rows = sort_rows(_fan_out(run_atomic_task, tasks, cfg.workers))
    extras = {"trainer": {k: getattr(cfg.trainer, k) for k in cfg.trainer.__dataclass_fields__},
              "source": cfg.source,
              "diverged": [{"strategy": r.strategy, "shift": r.sweep_value, "repeat": r.repeat}
                           for r in rows if r.flagged]}
    out = Outcome(rows, extras)
    if plots:
        sym = "mu" if cfg.source == "gaussian" else "nu"
        for m in METRICS:
            name = f"atomic-{cfg.source}-{m}.svg"
            series = [mean_band(rows, m, strategy=s.value, label=s.value) for s in cfg.strategies]
            emit_svg(series, PlotKind.LINES, _out(cfg, name),
                     title=f"final {METRIC_LABELS[m]} vs {sym}", xlabel=sym, ylabel=METRIC_LABELS[m])
            out.plots.append(name)
    return out


# ---------------------------------------------------------------- lloyd

LLOYD_DEFAULTS = {"k": 256, "bins": 16, "grid": 100000, "exponent": 3.0}


def _lloyd_densities(grid: int) -> dict[str, lloyd_mod.Density1D]:
    return {
        "gaussian": lloyd_mod.gaussian_density(0.0, 1.0, grid=grid),
        "uniform": lloyd_mod.uniform_density(0.0, 1.0, grid=grid),
    }


def _density_moments(f: lloyd_mod.Density1D) -> GaussianMoments:
    x = np.linspace(f.lo, f.hi, f.grid + 1)
    w = f.pdf(x)
    w = w / w.sum()
    m = float(w @ x)
    return GaussianMoments([m], [[float(w @ (x - m) ** 2)]])


def run_lloyd_check(cfg: ExperimentConfig, plots: bool = True) -> Outcome:
    """Optimal 1-D quantizers of a Gaussian and a uniform density.

    Rows carry the final distortion, the fraction of centres with a non-empty
    cell, the perplexity of the cell masses and the W2 distance between the
    Gaussian fits of the centres and of the density. The extras hold the
    binned centre-density correlations.
    """
    assert cfg.experiment is Experiment.LLOYD_CHECK
    opts = {**LLOYD_DEFAULTS, **cfg.lloyd}
    k, bins, grid = int(opts["k"]), int(opts["bins"]), int(opts["grid"])
    exponent = float(opts["exponent"])
    classical = lloyd_mod.optimal_point_density_exponent(1)
    rows, extras, series_by = [], {}, {}
    for name, f in _lloyd_densities(grid).items():
        t0 = time.perf_counter()
        res = lloyd_mod.lloyd(f, k)
        masses = lloyd_mod.cell_masses(f, res.centers)
        cm = res.centers.mean()
        w2 = w2_gaussian(GaussianMoments([cm], [[float(np.mean((res.centers - cm) ** 2))]]),
                         _density_moments(f))
        wall = (time.perf_counter() - t0) * 1e3 if cfg.record_timing else 0.0
        rows.append(ResultRow(f"LloydCheck:{name}", "Lloyd", float(k), 0, 0, res.distortions[-1],
                              float(np.count_nonzero(masses > 0)) / k,
                              perplexity(masses / masses.sum()), w2, wall))
        info = {"iterations": res.iterations, "converged": res.converged,
                "distortion": res.distortions[-1],
                "distortion_nonincreasing": bool(np.all(np.diff(res.distortions) <= 1e-12 * res.distortions[0]))}
        if name == "gaussian":
            info["exponent"] = exponent
            info["correlation"] = lloyd_mod.center_density_check(res.centers, f, bins, exponent)
            info["classical_exponent"] = classical
            info["classical_correlation"] = lloyd_mod.center_density_check(res.centers, f, bins, classical)
            edges = np.linspace(f.lo, f.hi, bins + 1)
            mids = 0.5 * (edges[1:] + edges[:-1])
            freq = np.histogram(res.centers, edges)[0] / k
            series_by[name] = [Series("centre frequency", mids, freq)]
            for p in (exponent, classical):
                t = f.pdf(mids) ** p
                series_by[name].append(Series(f"f^{p:.3g} (normalised)", mids, t / t.sum()))
        else:
            lattice = lloyd_mod.uniform_lattice(f.lo, f.hi, k)
            info["lattice_max_deviation"] = float(np.abs(res.centers - lattice).max())
        extras[name] = info
    out = Outcome(rows, extras)
    if plots and "gaussian" in series_by:
        name = "lloyd-center-density.svg"
        emit_svg(series_by["gaussian"], PlotKind.LINES, _out(cfg, name),
                 title=f"binned density of {k} optimal centres, N(0, 1)", xlabel="x",
                 ylabel="fraction per bin")
        out.plots.append(name)
    return out


RUNNERS = {
    Experiment.DISKS: run_disks,
    Experiment.GAUSSIAN_SWEEP: run_gaussian_sweep,
    Experiment.UNIFORM_SWEEP: run_uniform_sweep,
    Experiment.VARIANCE_TABLE: run_variance_table,
    Experiment.ATOMIC: run_atomic,
    Experiment.LLOYD_CHECK: run_lloyd_check,
}


def run_experiment(cfg: ExperimentConfig, plots: bool = True) -> Outcome:
    """Run ``cfg`` and write results.csv, summary.json and the plots to ``cfg.output_dir``."""
    out = RUNNERS[cfg.experiment](cfg, plots)
    emit_csv(out.rows, _out(cfg, "results.csv"))
    timings = [r.wall_ms for r in out.rows]
    rows_no_time = [replace(r, wall_ms=0.0) for r in out.rows]
    payload = {
        "experiment": cfg.experiment.value,
        "base_seed": cfg.base_seed,
        "sizes": {"K": cfg.K, "N": cfg.N, "d": cfg.d, "repeats": cfg.repeats},
        "points": [{k: v for k, v in p.items() if k != "wall_ms"} for p in summarize(rows_no_time)],
        "extras": {k: v for k, v in out.extras.items() if k != "table"},
        "plots": out.plots,
        "diverged_rows": len(out.diverged),
    }
    emit_json(payload, _out(cfg, "summary.json"))
    if cfg.record_timing:
        emit_json({"total_wall_ms": float(sum(timings))}, _out(cfg, "timings.json"))
    return out
