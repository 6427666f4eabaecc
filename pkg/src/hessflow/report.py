"""Line charts from a monitor CSV, one SVG per tracked column.

SVG output keeps the artifacts text-diffable and dependency-free on the
viewing side.  Each data row becomes one marker on the curve, so a chart
built from an N row log carries exactly N marker uses per series.
"""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .errors import InvalidConfigurationError
from .monitors import read_monitor_csv

# (CSV column, MonitorRow attribute) for every chartable series
SERIES = (("supU", "sup_u"), ("supGradU", "sup_grad_u"),
          ("supHessU", "sup_hess_u"), ("supUt", "sup_ut"),
          ("W", "w_value"), ("slack", "slack"))


def render_monitor_charts(csv_path, out_dir):
    """Render one monitor_<column>.svg per populated column; returns paths."""
    rows = read_monitor_csv(csv_path)
    if not rows:
        raise InvalidConfigurationError(f"{csv_path}: no monitor rows to chart")
    os.makedirs(out_dir, exist_ok=True)
    written = []
    for column, attr in SERIES:
        points = [(row.t, getattr(row, attr)) for row in rows
                  if getattr(row, attr) is not None]
        if not points:
            continue
        times = [p[0] for p in points]
        values = [p[1] for p in points]
        fig, ax = plt.subplots(figsize=(6.0, 4.0))
        ax.plot(times, values, marker="o")
        ax.set_xlabel("t")
        ax.set_ylabel(column)
        ax.set_title(column)
        ax.grid(True, alpha=0.3)
        path = os.path.join(out_dir, f"monitor_{column}.svg")
        # strip the creation date so identical runs emit identical charts
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
        written.append(path)
    return written
