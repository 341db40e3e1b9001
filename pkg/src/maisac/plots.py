"""Figure rendering for experiment outputs (written next to the CSVs)."""

from __future__ import annotations

from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

_AXIS_LABEL = {
    "sensing_floor": "sensing SNR floor (linear)",
    "power": "transmit power budget (W)",
    "n_antennas": "number of antennas",
    "iterations": "number of antennas",
}

_SCHEME_LABEL = {
    "isac-ma": "movable antennas",
    "fpa": "fixed array",
    "zf": "zero forcing",
    "gradient": "gradient positions",
}


def render_experiment(table, out_dir) -> list[Path]:
    """Render the figures matching the sweep axis; returns written paths."""
    out_dir = Path(out_dir)
    written = []
    if table.spec.axis == "iterations":
        written.append(convergence_figure(table, out_dir / "convergence.png"))
    written.append(
        capacity_figure(table, out_dir / f"capacity_vs_{table.spec.axis}.png")
    )
    return written


def convergence_figure(table, path) -> Path:
    """Capacity versus outer iteration, one curve per (scheme, axis value)."""
    series = defaultdict(lambda: defaultdict(list))  # key -> iter -> capacities
    for row in table.rows:
        for iteration, gamma_t, _ in row.trace:
            series[(row.scheme, row.axis_value)][iteration].append(
                np.log2(1.0 + gamma_t)
            )
    fig, ax = plt.subplots(figsize=(6, 4))
    for (scheme, value), caps in sorted(series.items()):
        iters = sorted(caps)
        mean_caps = [float(np.mean(caps[i])) for i in iters]
        label = f"{_SCHEME_LABEL.get(scheme, scheme)}, N={int(value)}"
        ax.plot(iters, mean_caps, marker="o", markersize=3, label=label)
    ax.set_xlabel("outer iteration")
    ax.set_ylabel("capacity (bits/s/Hz)")
    ax.grid(True, alpha=0.4)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return Path(path)


def capacity_figure(table, path) -> Path:
    """Median final capacity versus the sweep axis, one curve per scheme."""
    series = defaultdict(lambda: defaultdict(list))  # scheme -> value -> capacity
    for row in table.rows:
        if np.isfinite(row.capacity):
            series[row.scheme][row.axis_value].append(row.capacity)
    fig, ax = plt.subplots(figsize=(6, 4))
    for scheme in sorted(series):
        values = sorted(series[scheme])
        medians = [float(np.median(series[scheme][v])) for v in values]
        ax.plot(values, medians, marker="s", markersize=4,
                label=_SCHEME_LABEL.get(scheme, scheme))
    ax.set_xlabel(_AXIS_LABEL.get(table.spec.axis, table.spec.axis))
    ax.set_ylabel("capacity (bits/s/Hz)")
    ax.grid(True, alpha=0.4)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return Path(path)
