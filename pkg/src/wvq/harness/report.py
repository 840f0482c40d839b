"""Result rows and their CSV / JSON / SVG renderings.

Every writer is deterministic for fixed inputs: floats are written with
``repr`` (shortest round-trip form), JSON keys are sorted, and SVG output
carries a fixed id salt and no timestamp.
"""

from __future__ import annotations

import csv
import enum
import io
import json
import math
from dataclasses import astuple, dataclass, fields
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from ..errors import ReportWriteError

COLUMNS = ("experiment", "strategy", "sweep_value", "repeat", "seed",
           "quant_error", "utilization", "perplexity", "w2", "wall_ms")
METRICS = ("quant_error", "utilization", "perplexity", "w2")
CI_Z = 1.96


@dataclass(frozen=True)
class ResultRow:
    experiment: str
    strategy: str
    sweep_value: float
    repeat: int
    seed: int
    quant_error: float
    utilization: float
    perplexity: float
    w2: float
    wall_ms: float = 0.0

    @property
    def flagged(self) -> bool:
        """True for a run that produced no metrics (diverged training)."""
        return not math.isfinite(self.quant_error)


assert tuple(f.name for f in fields(ResultRow)) == COLUMNS


def sort_rows(rows: Iterable[ResultRow]) -> list[ResultRow]:
    return sorted(rows, key=lambda r: (r.experiment, r.strategy, r.sweep_value, r.repeat))


def _cell(v) -> str:
    if isinstance(v, enum.Enum):
        return str(v.value)
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def csv_text(rows: Sequence[ResultRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for r in rows:
        w.writerow([_cell(v) for v in astuple(r)])
    return buf.getvalue()


def write_text(path: str | Path, text: str) -> None:
    try:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise ReportWriteError(f"cannot write {path}: {exc}") from exc


def emit_csv(rows: Sequence[ResultRow], path: str | Path) -> None:
    """Write rows under the fixed header; an empty list gives a header-only file."""
    write_text(path, csv_text(rows))


def read_csv(path: str | Path) -> list[ResultRow]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        out = []
        for rec in reader:
            out.append(ResultRow(
                rec["experiment"], rec["strategy"], float(rec["sweep_value"]),
                int(rec["repeat"]), int(rec["seed"]),
                *(float(rec[m]) for m in METRICS), float(rec["wall_ms"])))
    return out


def _finite_or_none(x: float):
    return x if math.isfinite(x) else None


def point_stats(values: Sequence[float]) -> dict[str, float | int | None]:
    """Mean, sample std and 95% CI half-width over the finite entries."""
    v = np.asarray([x for x in values if math.isfinite(x)], dtype=np.float64)
    n = len(v)
    if n == 0:
        return {"n": 0, "mean": None, "std": None, "ci95": None}
    mean = float(v.sum() / n)
    std = float(np.sqrt(np.sum((v - mean) ** 2) / (n - 1))) if n > 1 else 0.0
    return {"n": n, "mean": mean, "std": std, "ci95": CI_Z * std / math.sqrt(n)}


def summarize(rows: Sequence[ResultRow]) -> list[dict]:
    """Per (experiment, strategy, sweep value) statistics of every metric."""
    groups: dict[tuple, list[ResultRow]] = {}
    for r in sort_rows(rows):
        groups.setdefault((r.experiment, r.strategy, r.sweep_value), []).append(r)
    out = []
    for (exp, strat, value), grp in groups.items():
        entry = {"experiment": exp, "strategy": strat, "sweep_value": value,
                 "repeats": len(grp), "flagged": sum(r.flagged for r in grp)}
        for m in METRICS:
            entry[m] = point_stats([getattr(r, m) for r in grp])
        out.append(entry)
    return out


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, enum.Enum):
        return obj.value
    if isinstance(obj, Path):
        return str(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return _finite_or_none(float(obj))
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    return obj


def emit_json(payload, path: str | Path) -> None:
    write_text(path, json.dumps(_clean(payload), indent=2, sort_keys=True) + "\n")


class PlotKind(str, enum.Enum):
    SCATTER = "scatter"
    LINES = "lines"


@dataclass
class Series:
    label: str
    x: Sequence[float]
    y: Sequence[float]
    lo: Sequence[float] | None = None  # CI band (lines only)
    hi: Sequence[float] | None = None
    color: str | None = None
    size: float = 4.0


def _pyplot():
    import matplotlib

    matplotlib.use("Agg", force=True)
    import matplotlib.pyplot as plt

    matplotlib.rcParams["svg.hashsalt"] = "wvq"
    matplotlib.rcParams["svg.fonttype"] = "none"
    return plt


def emit_svg(series: Sequence[Series], kind: PlotKind | str, path: str | Path, *,
             title: str = "", xlabel: str = "", ylabel: str = "", logx: bool = False,
             equal_aspect: bool = False) -> None:
    """Scatter or line chart with axes and a legend; line series draw their CI band."""
    kind = PlotKind(kind)
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6.0, 4.5))
    try:
        for s in series:
            x = np.asarray(s.x, dtype=np.float64)
            y = np.asarray(s.y, dtype=np.float64)
            if kind is PlotKind.SCATTER:
                ax.scatter(x, y, s=s.size, color=s.color, label=s.label, linewidths=0)
                continue
            (line,) = ax.plot(x, y, marker="o", markersize=3, color=s.color, label=s.label)
            if s.lo is not None and s.hi is not None:
                ax.fill_between(x, np.asarray(s.lo, float), np.asarray(s.hi, float),
                                color=line.get_color(), alpha=0.2, linewidth=0)
        if logx:
            ax.set_xscale("log")
        if equal_aspect:
            ax.set_aspect("equal", adjustable="datalim")
        ax.set_title(title)
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        if any(s.label for s in series):
            ax.legend(loc="best", fontsize="small")
        ax.grid(True, alpha=0.3)
        buf = io.StringIO()
        fig.savefig(buf, format="svg", metadata={"Date": None})
    finally:
        plt.close(fig)
    write_text(path, buf.getvalue())


def mean_band(rows: Sequence[ResultRow], metric: str, strategy: str | None = None,
              experiment: str | None = None, label: str = "") -> Series:
    """Line series of the per-sweep-point mean with a +-95% CI band."""
    pts = [s for s in summarize(rows)
           if (strategy is None or s["strategy"] == strategy)
           and (experiment is None or s["experiment"] == experiment)
           and s[metric]["n"]]
    x = [p["sweep_value"] for p in pts]
    y = [p[metric]["mean"] for p in pts]
    ci = [p[metric]["ci95"] for p in pts]
    return Series(label, x, y, [a - c for a, c in zip(y, ci)], [a + c for a, c in zip(y, ci)])


def format_table(header: Sequence[str], body: Sequence[Sequence]) -> str:
    cells = [[str(h) for h in header]] + [[_fmt(v) for v in row] for row in body]
    widths = [max(len(r[i]) for r in cells) for i in range(len(header))]
    lines = ["  ".join(c.rjust(w) for c, w in zip(r, widths)) for r in cells]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.6g}"
    return str(v)
