"""Block coordinate descent over combiner, transmit covariance, and positions.

One outer pass updates, in order: the MVDR combiner for the current beam,
the transmit covariance (followed by rank-one extraction), and the transmit
and receive positions.  Each block is safeguarded so the communication SNR
trace is non-decreasing at accepted iterates; the loop stops when successive
values differ by at most ``tol`` or after ``max_outer`` passes.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .beamformer import (
    Rank1Extraction,
    build_psi_operators,
    extract_rank1,
    gamma_r_of_w,
    max_sensing_snr,
    solve_W_sca,
    SENSING_SLACK,
)
from .combiner import mvdr_combiner, mvdr_snr_closedform
from .errors import (
    DegenerateDirectionError,
    ExtractionFailureError,
    InvalidParameterError,
)
from .positions import TrustRegion, optimize_positions
from .scene import ArrayLayout, SceneConfig, comm_snr, mrt_beamformer, steering

STATUS_CONVERGED = "converged"
STATUS_MAX_ITER = "max-iter"
STATUS_INFEASIBLE = "infeasible"


@dataclass(frozen=True)
class BcdOptions:
    """Driver options; defaults follow the standard simulation setup."""

    tol: float = 1e-3  # absolute stop rule on |gamma_t(t+1) - gamma_t(t)|
    max_outer: int = 50
    seed: int = 0
    init: str = "uniform"  # uniform | random | provided
    optimize_tx_positions: bool = True
    optimize_rx_positions: bool = True
    sca_max_iter: int = 40
    sca_tol: float = 1e-8
    position_max_iter: int = 15
    position_tol: float = 1e-6
    trust: TrustRegion | None = None
    rank1_tol: float = 1e-6

    def __post_init__(self):
        if not self.tol > 0:
            raise InvalidParameterError("tol must be > 0")
        if self.max_outer < 1:
            raise InvalidParameterError("max_outer must be >= 1")
        if self.init not in ("uniform", "random", "provided"):
            raise InvalidParameterError(f"unknown init strategy {self.init!r}")


@dataclass
class BcdTraceRow:
    iteration: int
    gamma_t: float
    gamma_r: float
    capacity: float
    rank_ratio: float
    tx_step_accepted: bool
    rx_step_accepted: bool
    w_time: float = 0.0
    position_time: float = 0.0


@dataclass
class BcdResult:
    status: str
    w: np.ndarray
    u: np.ndarray
    layout: ArrayLayout
    trace: list[BcdTraceRow] = field(default_factory=list)
    gamma_t: float = 0.0
    gamma_r: float = 0.0
    outer_iterations: int = 0
    failed_stage: str | None = None
    gamma_r_max: float | None = None  # feasibility certificate

    @property
    def capacity(self) -> float:
        return math.log2(1.0 + self.gamma_t)

    @property
    def converged(self) -> bool:
        return self.status == STATUS_CONVERGED


def init_layout(
    scene: SceneConfig,
    strategy: str = "uniform",
    rng: np.random.Generator | None = None,
    provided: ArrayLayout | None = None,
) -> ArrayLayout:
    """Initial antenna placement.

    ``uniform`` places element n at n * lambda/2 from the aperture origin;
    ``random`` rejection-samples sorted positions with the minimum spacing;
    ``provided`` validates and echoes the given layout.
    """
    if strategy == "provided":
        if provided is None:
            raise InvalidParameterError("init strategy 'provided' needs a layout")
        provided.validate(scene)
        return provided
    if strategy == "uniform":
        half = 0.5 * scene.wavelength
        x = np.arange(scene.n_tx) * half
        y = np.arange(scene.n_rx) * half
        if x.size and x[-1] > scene.tx_aperture or y.size and y[-1] > scene.rx_aperture:
            raise InvalidParameterError("aperture too small for uniform lambda/2 grid")
        layout = ArrayLayout(x=x, y=y)
        layout.validate(scene)
        return layout
    if strategy == "random":
        rng = rng if rng is not None else np.random.default_rng(0)
        x = _random_positions(scene.n_tx, scene.tx_aperture, scene.min_spacing, rng)
        y = _random_positions(scene.n_rx, scene.rx_aperture, scene.min_spacing, rng)
        layout = ArrayLayout(x=x, y=y)
        layout.validate(scene)
        return layout
    raise InvalidParameterError(f"unknown init strategy {strategy!r}")


def _random_positions(n: int, aperture: float, min_dist: float, rng) -> np.ndarray:
    # Shift sorted uniforms by i*min_dist; feasible by construction.
    slack = aperture - (n - 1) * min_dist
    if slack < 0:
        raise InvalidParameterError("aperture cannot hold the requested antennas")
    z = np.sort(rng.uniform(0.0, slack, size=n))
    return z + np.arange(n) * min_dist


def initial_beam(layout: ArrayLayout, scene: SceneConfig) -> np.ndarray:
    """MRT blended toward the target-matched beam until the floor holds.

    Bisects the blend weight; if even the fully matched beam misses the
    floor the caller falls back to the max-sensing covariance.
    """
    w_mrt = mrt_beamformer(layout, scene)
    gamma = scene.sensing_floor
    if gamma <= 0:
        return w_mrt
    if mvdr_snr_closedform(w_mrt, layout, scene) >= gamma * (1.0 - SENSING_SLACK):
        return w_mrt
    a_p = steering(layout.x, scene.theta_target, scene.wavelength)
    w_sense = math.sqrt(scene.power_budget) * a_p / np.linalg.norm(a_p)

    def blend(beta):
        mix = (1.0 - beta) * w_mrt + beta * w_sense
        norm = np.linalg.norm(mix)
        if norm < 1e-12:
            return w_sense
        return math.sqrt(scene.power_budget) * mix / norm

    if mvdr_snr_closedform(w_sense, layout, scene) < gamma * (1.0 - SENSING_SLACK):
        return w_sense  # best effort; caller re-checks feasibility
    lo, hi = 0.0, 1.0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if mvdr_snr_closedform(blend(mid), layout, scene) >= gamma * (1.0 - SENSING_SLACK):
            hi = mid
        else:
            lo = mid
    return blend(hi)


def _sca_position_stepper(opts: BcdOptions, trust: TrustRegion):
    def step(side, layout, w, scene):
        pres = optimize_positions(
            side, layout, w, scene, trust=trust,
            max_iter=opts.position_max_iter, tol=opts.position_tol,
        )
        return pres.layout, pres.progressed

    return step


def run_bcd(
    scene: SceneConfig,
    opts: BcdOptions | None = None,
    layout: ArrayLayout | None = None,
    position_stepper=None,
) -> BcdResult:
    """Alternating optimization of combiner, beam, and positions.

    Runs until the communication SNR stabilizes (|delta| <= opts.tol) or
    ``max_outer`` passes; the returned trace is non-decreasing in gamma_t at
    accepted iterates and the final iterate satisfies the sensing floor.
    ``position_stepper(side, layout, w, scene) -> (layout, moved)`` replaces
    the conic position block when given (used by the gradient baseline).
    """
    opts = opts or BcdOptions()
    rng = np.random.default_rng(opts.seed)
    layout = init_layout(scene, opts.init, rng=rng, provided=layout)
    trust = opts.trust or TrustRegion.for_scene(scene)
    stepper = position_stepper or _sca_position_stepper(opts, trust)

    ops = build_psi_operators(layout, scene)
    gamma = scene.sensing_floor
    gamma_max = None
    if gamma > 0:
        gamma_max, W_max = max_sensing_snr(ops, scene)
        if gamma_max is None or gamma_max < gamma * (1.0 - SENSING_SLACK):
            u0 = np.zeros(scene.n_rx, dtype=complex)
            u0[0] = 1.0
            return BcdResult(
                status=STATUS_INFEASIBLE,
                w=np.zeros(scene.n_tx, dtype=complex),
                u=u0,
                layout=layout,
                gamma_r_max=gamma_max,
                failed_stage="feasibility",
            )

    w = initial_beam(layout, scene)
    if gamma > 0 and mvdr_snr_closedform(w, layout, scene) < gamma * (1.0 - SENSING_SLACK):
        try:
            w = extract_rank1(W_max, ops, scene, tol=opts.rank1_tol,
                              rng=np.random.default_rng(opts.seed + 1)).w
        except ExtractionFailureError:
            pass  # keep the blended beam; the first W-solve restores feasibility

    gamma_t_prev = comm_snr(w, layout, scene)
    result = BcdResult(
        status=STATUS_MAX_ITER,
        w=w,
        u=_combiner_or_matched(w, layout, scene),
        layout=layout,
        gamma_r_max=gamma_max,
    )

    for t in range(1, opts.max_outer + 1):
        # (i) combiner for the current beam
        result.u = _combiner_or_matched(w, layout, scene)

        # (ii) transmit covariance and rank-one beam
        t0 = time.perf_counter()
        ops = build_psi_operators(layout, scene)
        warm = np.outer(w, w.conj()) if t > 1 else None
        wres = solve_W_sca(ops, scene, max_iter=opts.sca_max_iter,
                           tol=opts.sca_tol, anchor=warm)
        if not wres.optimal:
            result.failed_stage = f"w-solve:{wres.status}"
            break
        extraction = _safe_extract(wres.W, ops, scene, opts, t)
        if extraction is None:
            result.failed_stage = "rank1-extraction"
            break
        w_cand = extraction.w
        # Accept the new beam only if it does not hurt the exact objective.
        ok_comm = comm_snr(w_cand, layout, scene) >= gamma_t_prev * (1.0 - 1e-9)
        ok_sense = gamma <= 0 or gamma_r_of_w(ops, w_cand, scene) >= gamma * (1.0 - SENSING_SLACK)
        if ok_comm and ok_sense:
            w = w_cand
        w_time = time.perf_counter() - t0

        # (iii) positions: transmit then receive
        t0 = time.perf_counter()
        tx_accepted = rx_accepted = False
        if opts.optimize_tx_positions:
            layout, tx_accepted = stepper("transmit", layout, w, scene)
        if opts.optimize_rx_positions:
            layout, rx_accepted = stepper("receive", layout, w, scene)
        position_time = time.perf_counter() - t0

        gamma_t_now = comm_snr(w, layout, scene)
        gamma_r_now = mvdr_snr_closedform(w, layout, scene)
        result.trace.append(
            BcdTraceRow(
                iteration=t,
                gamma_t=gamma_t_now,
                gamma_r=gamma_r_now,
                capacity=math.log2(1.0 + gamma_t_now),
                rank_ratio=extraction.rank_ratio,
                tx_step_accepted=tx_accepted,
                rx_step_accepted=rx_accepted,
                w_time=w_time,
                position_time=position_time,
            )
        )
        result.outer_iterations = t
        converged = abs(gamma_t_now - gamma_t_prev) <= opts.tol
        gamma_t_prev = gamma_t_now
        if converged:
            result.status = STATUS_CONVERGED
            break

    result.w = w
    result.u = _combiner_or_matched(w, layout, scene)
    result.layout = layout
    result.gamma_t = comm_snr(w, layout, scene)
    result.gamma_r = mvdr_snr_closedform(w, layout, scene)
    return result


def _combiner_or_matched(w, layout: ArrayLayout, scene: SceneConfig) -> np.ndarray:
    """MVDR combiner, falling back to the matched filter when degenerate."""
    try:
        return mvdr_combiner(w, layout, scene).u
    except DegenerateDirectionError:
        a_r = steering(layout.y, scene.theta_target, scene.wavelength)
        return a_r / np.linalg.norm(a_r)


def _safe_extract(W, ops, scene, opts: BcdOptions, outer_iter: int) -> Rank1Extraction | None:
    try:
        return extract_rank1(
            W, ops, scene, tol=opts.rank1_tol,
            rng=np.random.default_rng(opts.seed * 1000 + outer_iter),
        )
    except ExtractionFailureError:
        return None


def fpa_options(opts: BcdOptions | None = None) -> BcdOptions:
    """Options for the fixed-position (no movable antenna) restriction."""
    opts = opts or BcdOptions()
    return replace(opts, optimize_tx_positions=False, optimize_rx_positions=False)
