"""Scenario sweeps, result tables, and the feasibility audit.

An :class:`ExperimentSpec` names a scene template, a sweep axis, the schemes
to run, and the seeds.  ``run_experiment`` executes every (scheme, seed,
axis value) cell deterministically, writes one summary CSV plus a
per-iteration convergence CSV, a JSON run manifest (solver versions,
tolerances, timings), and per-cell solution snapshots that allow every row
to be re-evaluated exactly.  Timestamps and wall times live only in the
manifest so the CSVs are byte-stable across reruns.
"""

from __future__ import annotations

import csv
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .baselines import (
    ALL_SCHEMES,
    SCHEME_FPA,
    SCHEME_GRADIENT,
    SCHEME_PROPOSED,
    SCHEME_ZF,
    solve_fpa,
    solve_gradient_positions,
    solve_zf,
)
from .bcd import BcdOptions, init_layout, run_bcd
from .errors import InvalidParameterError, MaisacError
from .scene import ArrayLayout, SceneConfig, comm_snr, sensing_snr

AXES = ("iterations", "sensing_floor", "power", "n_antennas")
_OK_STATUSES = ("converged", "max-iter")


@dataclass(frozen=True)
class ExperimentSpec:
    """One sweep: scene template, axis, schemes, seeds."""

    name: str
    scene: SceneConfig
    axis: str
    axis_values: tuple
    schemes: tuple
    seeds: tuple
    tol: float = 1e-3
    max_outer: int = 30

    def __post_init__(self):
        if self.axis not in AXES:
            raise InvalidParameterError(f"axis must be one of {AXES}")
        if not self.axis_values:
            raise InvalidParameterError("axis_values must be non-empty")
        if not all(math.isfinite(float(v)) for v in self.axis_values):
            raise InvalidParameterError("axis_values must be finite")
        if not self.schemes:
            raise InvalidParameterError("schemes must be non-empty")
        for s in self.schemes:
            if s not in ALL_SCHEMES:
                raise InvalidParameterError(
                    f"unknown scheme {s!r}; choose from {ALL_SCHEMES}"
                )
        if not self.seeds:
            raise InvalidParameterError("at least one seed is required")

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentSpec":
        known = {"name", "scene", "axis", "axis_values", "schemes", "seeds",
                 "tol", "max_outer"}
        unknown = set(data) - known
        if unknown:
            raise InvalidParameterError(f"unknown spec fields: {sorted(unknown)}")
        try:
            scene = SceneConfig.from_dict(data.get("scene", {}))
            return cls(
                name=str(data.get("name", "experiment")),
                scene=scene,
                axis=data["axis"],
                axis_values=tuple(data["axis_values"]),
                schemes=tuple(data.get("schemes", [SCHEME_PROPOSED])),
                seeds=tuple(int(s) for s in data.get("seeds", [0])),
                tol=float(data.get("tol", 1e-3)),
                max_outer=int(data.get("max_outer", 30)),
            )
        except KeyError as exc:
            raise InvalidParameterError(f"spec missing field {exc.args[0]!r}") from exc

    @classmethod
    def from_json(cls, path) -> "ExperimentSpec":
        with open(path) as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise InvalidParameterError(
                    f"spec file {path}: invalid JSON at line {exc.lineno}, "
                    f"column {exc.colno}: {exc.msg}"
                ) from exc
        return cls.from_dict(data)

    def scene_for(self, value) -> SceneConfig:
        if self.axis == "sensing_floor":
            return self.scene.with_updates(sensing_floor=float(value))
        if self.axis == "power":
            return self.scene.with_updates(power_budget=float(value))
        # Both "n_antennas" and "iterations" sweep the array size; the
        # iterations axis reads its x-coordinate from the convergence trace.
        return self.scene.with_updates(n_tx=int(value), n_rx=int(value))


@dataclass
class CellRow:
    scheme: str
    seed: int
    axis_value: float
    gamma_t: float
    gamma_r: float
    capacity: float
    iterations: int
    rank_ratio: float
    status: str
    trace: list = field(default_factory=list)  # (iteration, gamma_t, gamma_r)
    snapshot: dict | None = None
    wall_time: float = 0.0

    def key(self):
        return (self.scheme, self.seed, float(self.axis_value))


@dataclass
class ResultTable:
    spec: ExperimentSpec
    rows: list[CellRow] = field(default_factory=list)

    def all_ok(self) -> bool:
        return all(row.status in _OK_STATUSES for row in self.rows)


def _snapshot(w, u, layout: ArrayLayout) -> dict:
    as_pairs = lambda z: [[float(v.real), float(v.imag)] for v in np.asarray(z)]
    return {
        "w": as_pairs(w),
        "u": as_pairs(u),
        "x": [float(v) for v in layout.x],
        "y": [float(v) for v in layout.y],
    }


def snapshot_arrays(snapshot: dict):
    w = np.array([complex(re, im) for re, im in snapshot["w"]])
    u = np.array([complex(re, im) for re, im in snapshot["u"]])
    layout = ArrayLayout(x=np.array(snapshot["x"]), y=np.array(snapshot["y"]))
    return w, u, layout


def run_cell(spec: ExperimentSpec, scheme: str, seed: int, value) -> CellRow:
    """Execute one (scheme, seed, axis value) cell; failures become rows."""
    scene = spec.scene_for(value)
    opts = BcdOptions(tol=spec.tol, max_outer=spec.max_outer, seed=seed)
    start = time.perf_counter()
    try:
        if scheme == SCHEME_ZF:
            layout = init_layout(scene, "uniform")
            w, report = solve_zf(layout, scene)
            from .combiner import mvdr_combiner

            u = mvdr_combiner(w, layout, scene).u
            row = CellRow(
                scheme=scheme, seed=seed, axis_value=float(value),
                gamma_t=report["gamma_t"], gamma_r=report["gamma_r"],
                capacity=math.log2(1.0 + report["gamma_t"]),
                iterations=1, rank_ratio=0.0, status="converged",
                trace=[(1, report["gamma_t"], report["gamma_r"])],
                snapshot=_snapshot(w, u, layout),
            )
        else:
            if scheme == SCHEME_PROPOSED:
                res = run_bcd(scene, opts)
            elif scheme == SCHEME_FPA:
                res = solve_fpa(scene, opts)
            elif scheme == SCHEME_GRADIENT:
                res = solve_gradient_positions(scene, opts)
            else:  # pragma: no cover
                raise InvalidParameterError(f"unknown scheme {scheme!r}")
            status = res.status
            if res.failed_stage:
                status = f"error:{res.failed_stage}"
            rank_ratio = res.trace[-1].rank_ratio if res.trace else 0.0
            row = CellRow(
                scheme=scheme, seed=seed, axis_value=float(value),
                gamma_t=res.gamma_t, gamma_r=res.gamma_r,
                capacity=res.capacity, iterations=res.outer_iterations,
                rank_ratio=rank_ratio, status=status,
                trace=[(r.iteration, r.gamma_t, r.gamma_r) for r in res.trace],
                snapshot=_snapshot(res.w, res.u, res.layout),
            )
    except MaisacError as exc:
        row = CellRow(
            scheme=scheme, seed=seed, axis_value=float(value),
            gamma_t=float("nan"), gamma_r=float("nan"), capacity=float("nan"),
            iterations=0, rank_ratio=0.0, status=f"error:{exc}",
        )
    row.wall_time = time.perf_counter() - start
    return row


def _run_cell_tuple(args):
    return run_cell(*args)


def run_experiment(
    spec: ExperimentSpec,
    out_dir=None,
    jobs: int = 1,
    figures: bool = True,
) -> ResultTable:
    """Run every cell of the sweep and (optionally) write the output files.

    Outputs under ``out_dir``: ``results.csv`` (one row per cell),
    ``convergence.csv`` (per-iteration rows), ``manifest.json`` (versions,
    tolerances, wall times, timestamp), ``snapshots/*.json`` and, unless
    disabled, rendered figures next to the CSVs.
    """
    cells = [
        (spec, scheme, seed, value)
        for scheme in spec.schemes
        for seed in spec.seeds
        for value in spec.axis_values
    ]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_run_cell_tuple, cells))
    else:
        rows = [run_cell(*cell) for cell in cells]
    rows.sort(key=CellRow.key)
    table = ResultTable(spec=spec, rows=rows)
    if out_dir is not None:
        write_outputs(table, Path(out_dir), figures=figures)
    return table


def _fmt(value) -> str:
    if isinstance(value, float):
        return f"{value:.12g}"
    return str(value)


def write_outputs(table: ResultTable, out_dir: Path, figures: bool = True) -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    spec = table.spec

    with open(out_dir / "results.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([
            "scheme", "seed", spec.axis, "gamma_t", "gamma_r", "capacity",
            "iterations", "rank_ratio", "status",
        ])
        for row in table.rows:
            writer.writerow([
                row.scheme, row.seed, _fmt(row.axis_value), _fmt(row.gamma_t),
                _fmt(row.gamma_r), _fmt(row.capacity), row.iterations,
                _fmt(row.rank_ratio), row.status,
            ])

    with open(out_dir / "convergence.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([
            "scheme", "seed", spec.axis, "iteration", "gamma_t", "gamma_r",
            "capacity",
        ])
        for row in table.rows:
            for iteration, g_t, g_r in row.trace:
                writer.writerow([
                    row.scheme, row.seed, _fmt(row.axis_value), iteration,
                    _fmt(g_t), _fmt(g_r), _fmt(math.log2(1.0 + g_t)),
                ])

    snap_dir = out_dir / "snapshots"
    snap_dir.mkdir(exist_ok=True)
    for row in table.rows:
        if row.snapshot is None:
            continue
        name = f"{row.scheme}-seed{row.seed}-{_fmt(row.axis_value)}.json"
        with open(snap_dir / name, "w") as fh:
            json.dump(row.snapshot, fh, indent=1, sort_keys=True)

    import cvxpy

    try:
        from importlib.metadata import version as _dist_version

        pkg_version = _dist_version("maisac")
    except Exception:
        pkg_version = "unknown"
    manifest = {
        "spec_name": spec.name,
        "axis": spec.axis,
        "axis_values": [float(v) for v in spec.axis_values],
        "schemes": list(spec.schemes),
        "seeds": list(spec.seeds),
        "tol": spec.tol,
        "max_outer": spec.max_outer,
        "versions": {
            "maisac": pkg_version,
            "numpy": np.__version__,
            "cvxpy": cvxpy.__version__,
        },
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S"),
        "wall_times": {
            f"{r.scheme}-seed{r.seed}-{_fmt(r.axis_value)}": r.wall_time
            for r in table.rows
        },
    }
    with open(out_dir / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)

    if figures:
        from . import plots

        plots.render_experiment(table, out_dir)


def verify_row(row: CellRow, spec: ExperimentSpec, tol: float = 1e-9) -> bool:
    """Re-evaluate a row's SNRs from its stored (w, u, x, y) snapshot."""
    if row.snapshot is None:
        return False
    scene = spec.scene_for(row.axis_value)
    w, u, layout = snapshot_arrays(row.snapshot)
    g_t = comm_snr(w, layout, scene)
    if abs(g_t - row.gamma_t) > tol * max(1.0, abs(row.gamma_t)):
        return False
    from .combiner import mvdr_snr_closedform

    g_r = mvdr_snr_closedform(w, layout, scene)
    return abs(g_r - row.gamma_r) <= tol * max(1.0, abs(row.gamma_r))


# --------------------------------------------------------------------- audit
@dataclass(frozen=True)
class AuditItem:
    name: str
    ok: bool
    detail: str


def audit_constraints(w, u, layout: ArrayLayout, scene: SceneConfig,
                      sensing_slack: float = 1e-6) -> list[AuditItem]:
    """Machine audit of the full constraint set at a returned solution.

    Covers apertures, pairwise spacing on both sides, the power budget, the
    unit-norm combiner, and the sensing floor under exact evaluation.
    """
    w = np.asarray(w, dtype=complex)
    u = np.asarray(u, dtype=complex)
    items = []

    def add(name, ok, detail):
        items.append(AuditItem(name=name, ok=bool(ok), detail=detail))

    for label, pos, hi in (("x", layout.x, scene.tx_aperture),
                           ("y", layout.y, scene.rx_aperture)):
        inside = pos.size == 0 or (pos[0] >= -1e-12 and pos[-1] <= hi * (1 + 1e-12))
        add(f"{label} within aperture", inside,
            f"range [{pos[0]:.6g}, {pos[-1]:.6g}] in [0, {hi:.6g}]")
        gap = float(np.min(np.diff(pos))) if pos.size > 1 else float("inf")
        add(f"{label} pairwise spacing", gap >= scene.min_spacing * (1 - 1e-9),
            f"min gap {gap:.9g} >= {scene.min_spacing:.9g}")

    power = float(np.vdot(w, w).real)
    add("transmit power budget", power <= scene.power_budget * (1 + 1e-9),
        f"||w||^2 = {power:.12g} <= {scene.power_budget:.12g}")

    norm2 = float(np.vdot(u, u).real)
    add("combiner unit norm", abs(norm2 - 1.0) <= 1e-9,
        f"||u||^2 = {norm2:.12g}")

    gamma_r = sensing_snr(w, u, layout, scene)
    if scene.sensing_floor > 0:
        add("sensing floor", gamma_r >= scene.sensing_floor * (1 - sensing_slack),
            f"gamma_r = {gamma_r:.9g} >= {scene.sensing_floor:.9g}")
    else:
        add("sensing floor", True, f"gamma_r = {gamma_r:.9g} (no floor)")
    return items


def inspect_scene(
    scene_path,
    seed: int = 0,
    tol: float = 1e-3,
    max_outer: int = 30,
    scheme: str = SCHEME_PROPOSED,
) -> tuple[str, int]:
    """Single-run report: per-iteration table plus the feasibility audit.

    Returns ``(text, exit_code)``.
    """
    try:
        scene = SceneConfig.from_json(scene_path)
    except InvalidParameterError as exc:
        return f"error: {exc}", 1

    opts = BcdOptions(tol=tol, max_outer=max_outer, seed=seed)
    if scheme == SCHEME_PROPOSED:
        res = run_bcd(scene, opts)
    elif scheme == SCHEME_FPA:
        res = solve_fpa(scene, opts)
    elif scheme == SCHEME_GRADIENT:
        res = solve_gradient_positions(scene, opts)
    else:
        return f"error: inspect does not support scheme {scheme!r}", 1

    lines = [f"scheme: {scheme}   seed: {seed}   status: {res.status}"]
    lines.append(f"{'iter':>4} {'gamma_t':>16} {'gamma_r':>16} {'capacity':>12}")
    for row in res.trace:
        lines.append(
            f"{row.iteration:>4} {row.gamma_t:>16.8f} {row.gamma_r:>16.8f} "
            f"{row.capacity:>12.8f}"
        )
    lines.append(
        f"final: gamma_t={res.gamma_t:.8f} gamma_r={res.gamma_r:.8f} "
        f"capacity={res.capacity:.8f}"
    )
    lines.append("feasibility audit:")
    ok_all = res.status in _OK_STATUSES
    if res.status == "infeasible":
        lines.append(
            "  sensing floor infeasible: max achievable gamma_r = "
            f"{res.gamma_r_max if res.gamma_r_max is not None else float('nan'):.6g}"
        )
        return "\n".join(lines), 2
    for item in audit_constraints(res.w, res.u, res.layout, scene):
        flag = "PASS" if item.ok else "FAIL"
        ok_all = ok_all and item.ok
        lines.append(f"  [{flag}] {item.name}: {item.detail}")
    return "\n".join(lines), 0 if ok_all else 2
