"""Render figures from experiment CSV/JSON artifacts.

Each figure kind reads one CSV (plus an optional JSON summary for fit
overlays), validates the expected columns, and writes a single PNG.
Rendering is deterministic: identical inputs and the same style version
produce byte-identical images.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

STYLE_VERSION = "1"

_RC = {
    "figure.figsize": (6.4, 4.0),
    "figure.dpi": 100,
    "savefig.dpi": 100,
    "font.size": 10,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "lines.linewidth": 1.5,
    "svg.hashsalt": STYLE_VERSION,
}


class PlotError(ValueError):
    """Malformed figure spec or input artifact."""


@dataclass
class FigureSpec:
    """One figure: input artifacts, kind, output path, axis options."""

    kind: str
    csv: Path
    output: Path
    summary: Path | None = None
    axes: dict = field(default_factory=dict)

    @classmethod
    def from_file(cls, path) -> "FigureSpec":
        path = Path(path)
        try:
            raw = json.loads(path.read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise PlotError(f"figure spec not found: {path}")
        except json.JSONDecodeError as exc:
            raise PlotError(f"figure spec {path} is not valid JSON: {exc}")
        if not isinstance(raw, dict):
            raise PlotError(f"figure spec {path} must be a JSON object")
        for key in ("kind", "csv", "output"):
            if key not in raw:
                raise PlotError(f"figure spec {path} is missing key '{key}'")
        kind = raw["kind"]
        if kind not in FIGURE_KINDS:
            raise PlotError(
                f"unknown figure kind '{kind}'; expected one of "
                + ", ".join(sorted(FIGURE_KINDS)))
        base = path.parent
        summary = raw.get("summary")
        axes = raw.get("axes", {})
        if not isinstance(axes, dict):
            raise PlotError(f"figure spec {path}: 'axes' must be an object")
        return cls(kind=kind,
                   csv=base / raw["csv"],
                   output=base / raw["output"],
                   summary=base / summary if summary else None,
                   axes=axes)


def _read_csv(path: Path) -> dict[str, list[float]]:
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if not header:
                raise PlotError(f"{path} is empty")
            rows = [row for row in reader if row]
    except FileNotFoundError:
        raise PlotError(f"input file not found: {path}")
    cols = {name: [] for name in header}
    for row in rows:
        if len(row) != len(header):
            raise PlotError(f"{path}: row has {len(row)} fields, "
                            f"header has {len(header)}")
        for name, value in zip(header, row):
            try:
                cols[name].append(float(value))
            except ValueError:
                raise PlotError(f"{path}: non-numeric value {value!r} "
                                f"in column '{name}'")
    return cols


def _require(cols: dict, names: tuple[str, ...], path: Path) -> None:
    for name in names:
        if name not in cols:
            raise PlotError(f"{path} is missing column '{name}'")


def _read_summary(spec: FigureSpec) -> dict | None:
    if spec.summary is None:
        return None
    try:
        raw = json.loads(Path(spec.summary).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise PlotError(f"summary file not found: {spec.summary}")
    except json.JSONDecodeError as exc:
        raise PlotError(f"summary {spec.summary} is not valid JSON: {exc}")
    if not isinstance(raw, dict):
        raise PlotError(f"summary {spec.summary} must be a JSON object")
    return raw


def _summary_value(summary: dict, key: str, spec: FigureSpec):
    if key not in summary:
        raise PlotError(f"summary {spec.summary} is missing key '{key}'")
    return summary[key]


def _annotate(ax, lines: list[str]) -> None:
    if lines:
        ax.text(0.02, 0.02, "\n".join(lines), transform=ax.transAxes,
                va="bottom", ha="left", fontsize=9,
                bbox={"boxstyle": "round", "facecolor": "white",
                      "alpha": 0.8})


def _apply_axes(ax, spec: FigureSpec, title: str, xlabel: str,
                ylabel: str) -> None:
    ax.set_title(spec.axes.get("title", title))
    ax.set_xlabel(spec.axes.get("xlabel", xlabel))
    ax.set_ylabel(spec.axes.get("ylabel", ylabel))


def _fig_energy(spec: FigureSpec):
    cols = _read_csv(spec.csv)
    _require(cols, ("t", "l2_norm"), spec.csv)
    fig, ax = plt.subplots()
    ax.semilogy(cols["t"], cols["l2_norm"], label="L2 norm")
    if "h1_norm" in cols:
        ax.semilogy(cols["t"], cols["h1_norm"], label="H1 norm",
                    linestyle="--")
    ax.legend(loc="upper right")
    _apply_axes(ax, spec, "Energy decay", "t", "norm")
    return fig, []


def _exponential_fit(summary: dict, spec: FigureSpec) -> dict:
    fit = _summary_value(summary, "fit", spec)
    if isinstance(fit, dict) and "exponential" in fit:
        fit = fit["exponential"]
    if not isinstance(fit, dict):
        raise PlotError(f"summary {spec.summary}: 'fit' must be an object")
    for key in ("rate", "intercept", "r2"):
        if key not in fit:
            raise PlotError(f"summary {spec.summary} fit is missing "
                            f"key '{key}'")
    return fit


def _fig_sync(spec: FigureSpec):
    cols = _read_csv(spec.csv)
    _require(cols, ("t", "mean_sq_error", "mean_gamma"), spec.csv)
    fig, ax = plt.subplots()
    t = cols["t"]
    msq = cols["mean_sq_error"]
    ax.semilogy(t, msq, label="mean squared error")
    if msq and msq[0] > 0:
        bound = [msq[0] * math.exp(-g) for g in cols["mean_gamma"]]
        ax.semilogy(t, bound, linestyle=":", label="Gamma bound")
    notes = []
    summary = _read_summary(spec)
    if summary is not None:
        fit = _exponential_fit(summary, spec)
        rate, icpt = fit["rate"], fit["intercept"]
        if all(isinstance(v, (int, float)) and math.isfinite(v)
               for v in (rate, icpt)):
            line = [math.exp(icpt - rate * ti) for ti in t]
            ax.semilogy(t, line, linestyle="--", label="fitted decay")
        notes = [f"rate = {fit['rate']!r}", f"r2 = {fit['r2']!r}"]
    ax.legend(loc="upper right")
    _annotate(ax, notes)
    _apply_axes(ax, spec, "Synchronization", "t", "mean squared error")
    return fig, notes


def _fig_mixing(spec: FigureSpec):
    cols = _read_csv(spec.csv)
    _require(cols, ("k", "distance"), spec.csv)
    fig, ax = plt.subplots()
    k = cols["k"]
    ax.semilogy(k, cols["distance"], marker="o",
                label="dual-Lipschitz distance")
    notes = []
    summary = _read_summary(spec)
    if summary is not None:
        sigma = _summary_value(summary, "sigma", spec)
        amp = _summary_value(summary, "C", spec)
        if all(isinstance(v, (int, float)) and math.isfinite(v)
               for v in (sigma, amp)):
            line = [amp * math.exp(-sigma * ki) for ki in k]
            ax.semilogy(k, line, linestyle="--", label="fitted exp(-sigma k)")
        notes = [f"sigma = {sigma!r}"]
        if "r2" in summary:
            notes.append(f"r2 = {summary['r2']!r}")
    ax.legend(loc="upper right")
    _annotate(ax, notes)
    _apply_axes(ax, spec, "Mixing distance", "step k", "distance")
    return fig, notes


def _fig_carleman(spec: FigureSpec):
    cols = _read_csv(spec.csv)
    _require(cols, ("s", "log_ratio"), spec.csv)
    fig, ax = plt.subplots()
    ax.semilogx(cols["s"], cols["log_ratio"], marker="o",
                label="log(lhs/rhs)")
    notes = []
    summary = _read_summary(spec)
    if summary is not None:
        worst = _summary_value(summary, "max_log_ratio", spec)
        notes = [f"max_log_ratio = {worst!r}"]
    ax.legend(loc="upper right")
    _annotate(ax, notes)
    _apply_axes(ax, spec, "Weighted-inequality ratio", "s",
                "log(lhs / rhs)")
    return fig, notes


def _fig_observability(spec: FigureSpec):
    cols = _read_csv(spec.csv)
    _require(cols, ("M", "constant"), spec.csv)
    fig, ax = plt.subplots()
    pts = [(m, c) for m, c in zip(cols["M"], cols["constant"])
           if math.isfinite(c)]
    if pts:
        ax.semilogy([p[0] for p in pts], [p[1] for p in pts], marker="o",
                    label="constant")
    bad = [m for m, c in zip(cols["M"], cols["constant"])
           if not math.isfinite(c)]
    if bad:
        for m in bad:
            ax.axvline(m, color="red", alpha=0.3, linestyle=":")
        ax.plot([], [], color="red", alpha=0.3, linestyle=":",
                label="rank deficient")
    notes = []
    summary = _read_summary(spec)
    if summary is not None:
        stable_m = _summary_value(summary, "M", spec)
        notes = [f"M = {stable_m!r}"]
        if isinstance(stable_m, (int, float)):
            ax.axvline(stable_m, color="green", alpha=0.5, linestyle="--",
                       label="stable M")
        if "C" in summary:
            notes.append(f"C = {summary['C']!r}")
    ax.legend(loc="upper right")
    _annotate(ax, notes)
    _apply_axes(ax, spec, "Observability constant", "truncation rank M",
                "constant")
    return fig, notes


FIGURE_KINDS = {
    "energy": _fig_energy,
    "sync": _fig_sync,
    "mixing": _fig_mixing,
    "carleman": _fig_carleman,
    "observability": _fig_observability,
}


def build_figure(spec: FigureSpec):
    """Build (figure, annotation lines) for a validated spec."""
    with matplotlib.rc_context(_RC):
        return FIGURE_KINDS[spec.kind](spec)


def plot(spec) -> Path:
    """Render one figure spec (path or FigureSpec) to its PNG output."""
    if not isinstance(spec, FigureSpec):
        spec = FigureSpec.from_file(spec)
    fig, _ = build_figure(spec)
    try:
        out = Path(spec.output)
        out.parent.mkdir(parents=True, exist_ok=True)
        with matplotlib.rc_context(_RC):
            fig.savefig(out, format="png",
                        metadata={"Software": f"kdvb-plots/{STYLE_VERSION}"})
    finally:
        plt.close(fig)
    return out
