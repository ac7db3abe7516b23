"""SVG convergence plots: ``dist_to_P`` and ``adjoint_dist`` against the step.

Output is byte-stable: the SVG id salt is fixed, the date stamp is dropped and
text is kept as text rather than glyph paths.
"""

import io
import threading

import matplotlib
from matplotlib.backends.backend_svg import FigureCanvasSVG
from matplotlib.figure import Figure
import numpy as np

from .errors import ParseError
from .io import atomic_write_text, read_trace_csv

FLOOR = 1e-16
SERIES = ("dist_to_P", "adjoint_dist")
_RC = {"svg.hashsalt": "contraction-lab", "svg.fonttype": "none", "path.simplify": False}
# rcParams are process-global; renders are serialized so threads see the same settings
_LOCK = threading.Lock()


def render_svg(steps, dist, adjoint, out):
    """Write the two series on a log y axis; values below ``FLOOR`` are drawn at ``FLOOR``.

    Series that are entirely NaN (adjoint not tracked) are omitted. Each line
    carries its column name as SVG ``id``.
    """
    steps = np.asarray(steps, dtype=float)
    with _LOCK, matplotlib.rc_context(_RC):
        fig = Figure(figsize=(6.0, 4.0))
        FigureCanvasSVG(fig)
        ax = fig.add_subplot()
        for name, values in zip(SERIES, (dist, adjoint)):
            values = np.asarray(values, dtype=float)
            if np.all(np.isnan(values)):
                continue
            (line,) = ax.plot(steps, np.maximum(values, FLOOR), label=name, linewidth=1.2)
            line.set_gid(name)
        ax.set_yscale("log")
        ax.set_xlabel("step n")
        ax.set_ylabel("distance to P xi")
        ax.grid(True, which="major", linewidth=0.4, alpha=0.5)
        if ax.lines:
            ax.legend(loc="upper right")
        buf = io.StringIO()
        fig.savefig(buf, format="svg", metadata={"Date": None})
    atomic_write_text(out, buf.getvalue())


def plot_trace(trace_path, out):
    """Render a trace CSV to an SVG file.

    Raises
    ------
    ParseError
        If the CSV does not have the trace header or has malformed rows.
    """
    cols = read_trace_csv(trace_path)
    if np.any(np.isnan(cols["step"])):
        raise ParseError(f"{trace_path}: step column has missing values")
    render_svg(cols["step"], cols["dist_to_P"], cols["adjoint_dist"], out)
