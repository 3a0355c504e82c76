"""
SVG plots of trace and stability CSV files.

Charts are drawn with matplotlib and saved as SVG with a fixed hash salt and
no date, so the output is byte-deterministic. Every series is also embedded
as an XML comment (``<!-- data series="..." points="x,y ..." -->``) that
``read_plot_data`` parses back.
"""

from __future__ import annotations

import html
import io
import re
from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402
from matplotlib.figure import Figure  # noqa: E402

from vrsim.errors import PlotError  # noqa: E402
from vrsim.models import PlotKind  # noqa: E402
from vrsim.services.engine import TRACE_COLUMNS  # noqa: E402
from vrsim.services.stability import SERIES_COLUMNS  # noqa: E402

FIGSIZE = (7.2, 4.4)
SVG_RC = {"svg.hashsalt": "vrsim", "svg.fonttype": "none"}

AXES = {
    PlotKind.LOSS_VS_ITER: ("k", "loss", "iteration k", "f(x_k)"),
    PlotKind.LOSS_VS_SFO: ("sfo_paper", "loss", "SFO calls", "f(x_k)"),
    PlotKind.GRADNORM: ("k", "grad_norm_sq", "iteration k", "|grad f(x_k)|^2"),
    PlotKind.STABILITY: ("k", "delta_norm", "iteration k", "|x_k - x'_k|"),
}

_DATA_COMMENT = re.compile(r'<!-- data series="([^"]*)" points="([^"]*)" -->')
_SVG_ROOT = re.compile(r"<svg\b[^>]*>")


@dataclass
class Series:
    label: str
    x: np.ndarray
    y: np.ndarray


def load_trace(path: str | Path) -> tuple[pd.DataFrame, dict[str, str]]:
    """Trace rows plus the ``# key=value`` footer fields."""
    path = Path(path)
    if not path.exists():
        raise PlotError(f"{path}: file not found")
    footer = {}
    for line in path.read_text(encoding="utf-8").splitlines():
        if line.startswith("#"):
            footer.update(item.split("=", 1) for item in line[1:].split() if "=" in item)
    return pd.read_csv(path, comment="#"), footer


def _required(kind: PlotKind) -> list[str]:
    return SERIES_COLUMNS if kind == PlotKind.STABILITY else TRACE_COLUMNS


def load_series(paths: list[Path], kind: PlotKind) -> list[Series]:
    if not paths:
        raise PlotError("no trace files given")
    x_col, y_col, _, _ = AXES[kind]
    required = _required(kind)
    frames, offending = [], []
    for path in paths:
        frame, _ = load_trace(path)
        missing = [c for c in required if c not in frame.columns]
        if missing:
            offending.append(f"{path} (missing {', '.join(missing)})")
        frames.append(frame)
    if offending:
        raise PlotError(f"traces do not share the {kind.value} schema: {'; '.join(offending)}")
    return [
        Series(Path(path).stem, frame[x_col].to_numpy(dtype=float), frame[y_col].to_numpy(dtype=float))
        for path, frame in zip(paths, frames)
    ]


def _check_log_scale(series: list[Series]) -> None:
    if not any((s.y > 0).any() for s in series):
        raise PlotError("log scale needs positive values")


def draw(series: list[Series], kind: PlotKind, log_y: bool = False, title: str | None = None) -> Figure:
    """Line chart, one line per series; the x axis spans the longest series."""
    if not series:
        raise PlotError("nothing to plot")
    if log_y:
        _check_log_scale(series)
    x_label, y_label = AXES[kind][2:]
    fig, ax = plt.subplots(figsize=FIGSIZE)
    for i, s in enumerate(series):
        (line,) = ax.plot(s.x, s.y, label=s.label, linewidth=1.5)
        line.set_gid(f"series-{i}")
    if log_y:
        ax.set_yscale("log")
    x_max = max((float(s.x.max()) for s in series if len(s.x)), default=0.0) or 1.0
    ax.set_xlim(0.0, x_max)
    ax.set_title(title or kind.value)
    ax.set_xlabel(x_label)
    ax.set_ylabel(y_label)
    ax.grid(True, alpha=0.3)
    ax.legend(loc="upper right")
    fig.tight_layout()
    return fig


def _data_comments(series: list[Series], kind: PlotKind, log_y: bool) -> str:
    lines = [f"<!-- vrsim plot kind={kind.value} log_y={str(log_y).lower()} -->"]
    for s in series:
        points = " ".join(f"{a!r},{b!r}" for a, b in zip(s.x.tolist(), s.y.tolist()))
        lines.append(f'<!-- data series="{html.escape(s.label)}" points="{points}" -->')
    return "\n".join(lines) + "\n"


def render_svg(series: list[Series], kind: PlotKind, log_y: bool = False, title: str | None = None) -> str:
    """SVG text of :func:`draw`, byte-stable for equal inputs, with every series embedded as a comment."""
    buffer = io.BytesIO()
    with plt.rc_context(SVG_RC):
        fig = draw(series, kind, log_y=log_y, title=title)
        try:
            fig.savefig(buffer, format="svg", metadata={"Date": None})
        finally:
            plt.close(fig)
    svg = buffer.getvalue().decode("utf-8")
    root = _SVG_ROOT.search(svg)
    return svg[: root.end()] + "\n" + _data_comments(series, kind, log_y) + svg[root.end() :]


def plot(paths: list[str | Path], kind: PlotKind, out: str | Path, log_y: bool = False, title: str | None = None) -> Path:
    kind = PlotKind(kind)
    svg = render_svg(load_series([Path(p) for p in paths], kind), kind, log_y=log_y, title=title)
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(svg, encoding="utf-8")
    return out


def read_plot_data(svg: str) -> dict[str, list[tuple[float, float]]]:
    """Series embedded in an SVG written by :func:`render_svg`."""
    data = {}
    for label, points in _DATA_COMMENT.findall(svg):
        data[html.unescape(label)] = [tuple(float(v) for v in pair.split(",")) for pair in points.split()]
    return data
