"""Transmit covariance design under the MVDR-substituted sensing floor.

With the receive combiner eliminated in closed form, the sensing SNR of a
covariance ``W`` depends only on the three quadratic forms

    psi1 = tr(A1 W)  (complex),   psi2 = tr(A2 W),   psi3 = tr(A3 W),

and the floor ``gamma_r >= Gamma`` becomes the rotated-cone constraint

    delta^2 |psi1|^2 <= (psi2 - Gamma*N0/sigma^2) * (N0 + delta^2 psi3),

which is convex as it stands.  ``solve_W_direct`` imposes it exactly and is
the ground-truth oracle.  ``solve_W_sca`` instead multiplies the floor
through by its denominator, substitutes an auxiliary product variable for
``psi2 * delta^2 psi3``, and couples it back through a first-order expansion
of the reciprocal around the previous iterate; each subproblem inner-bounds
the exact feasible set and is tight at its anchor, so the iteration ascends
to the same optimum.  Both run on the semidefinite relaxation of
``W = w w^H``; rank-one beams are recovered by eigendecomposition or, when
the relaxation is loose, Gaussian randomization.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .conic import ConicProgram, STATUS_INFEASIBLE, STATUS_OPTIMAL
from .errors import ExtractionFailureError, InvalidParameterError
from .scene import ArrayLayout, SceneConfig, channel, steering

# Implements the strict positivity required of psi2/psi3 as closed bounds.
_PSI_FLOOR = 1e-9
# Relative slack allowed on the sensing floor by feasibility audits.
SENSING_SLACK = 1e-6


@dataclass(frozen=True)
class PsiOperators:
    """Quadratic-form matrices of the sensing constraint and the comm channel.

    ``a1 = A_P^H A_C``, ``a2 = A_P^H A_P``, ``a3 = A_C^H A_C`` are the pure
    geometry factors (reflection gains excluded); ``big_h = h h^H``.
    ``n_tilde`` is the receive-side inner product a_R(theta_P)^H a_R(theta_C).
    """

    a1: np.ndarray
    a2: np.ndarray
    a3: np.ndarray
    big_h: np.ndarray
    n_tilde: complex


@dataclass
class WSolveResult:
    """Outcome of a covariance solve."""

    status: str
    W: np.ndarray | None = None
    objective: float | None = None
    objective_trace: list = field(default_factory=list)
    psi: tuple | None = None  # (psi1 complex, psi2, psi3)
    iterations: int = 0
    stall: bool = False
    amgm_branch_residual: float | None = None

    @property
    def optimal(self) -> bool:
        return self.status == STATUS_OPTIMAL


@dataclass
class Rank1Extraction:
    w: np.ndarray
    rank_ratio: float
    randomized: bool = False
    gap_warning: bool = False


def build_psi_operators(layout: ArrayLayout, scene: SceneConfig) -> PsiOperators:
    """Assemble A1, A2, A3 and H for the given geometry."""
    layout.validate(scene)
    a_t_p = steering(layout.x, scene.theta_target, scene.wavelength)
    a_t_c = steering(layout.x, scene.theta_clutter, scene.wavelength)
    a_r_p = steering(layout.y, scene.theta_target, scene.wavelength)
    a_r_c = steering(layout.y, scene.theta_clutter, scene.wavelength)
    n_tilde = complex(np.vdot(a_r_p, a_r_c))
    h = channel(layout, scene)
    return PsiOperators(
        a1=n_tilde * np.outer(a_t_p, a_t_c.conj()),
        a2=scene.n_rx * np.outer(a_t_p, a_t_p.conj()),
        a3=scene.n_rx * np.outer(a_t_c, a_t_c.conj()),
        big_h=np.outer(h, h.conj()),
        n_tilde=n_tilde,
    )


def psi_values(ops: PsiOperators, W: np.ndarray) -> tuple[complex, float, float]:
    """Evaluate (psi1, psi2, psi3) = (tr(A1 W), tr(A2 W), tr(A3 W))."""
    W = np.asarray(W, dtype=complex)
    psi1 = complex(np.trace(ops.a1 @ W))
    psi2 = float(np.trace(ops.a2 @ W).real)
    psi3 = float(np.trace(ops.a3 @ W).real)
    return psi1, psi2, psi3


def gamma_r_from_psi(psi1: complex, psi2: float, psi3: float, scene: SceneConfig) -> float:
    """MVDR sensing SNR as a function of the psi quadratic forms."""
    n0 = scene.radar_noise
    d2 = scene.clutter_gain**2
    return scene.target_gain**2 / n0 * (psi2 - d2 * abs(psi1) ** 2 / (n0 + d2 * psi3))


def gamma_r_of_w(ops: PsiOperators, w: np.ndarray, scene: SceneConfig) -> float:
    w = np.asarray(w, dtype=complex)
    psi1 = complex(np.vdot(w, ops.a1 @ w))
    psi2 = float(np.vdot(w, ops.a2 @ w).real)
    psi3 = float(np.vdot(w, ops.a3 @ w).real)
    return gamma_r_from_psi(psi1, psi2, psi3, scene)


def comm_snr_of_W(ops: PsiOperators, W: np.ndarray, scene: SceneConfig) -> float:
    return float(np.trace(ops.big_h @ W).real) / scene.comm_noise


def _base_program(ops: PsiOperators, scene: SceneConfig):
    """Shared SDR skeleton: PSD W, trace budget, psi variables tied to W."""
    n = ops.a2.shape[0]
    prog = ConicProgram()
    prog.hermitian("W", n, psd=True)
    trace_w = prog.trace_real(np.eye(n), "W")
    prog.le(trace_w, scene.power_budget)
    p1re = prog.scalar("psi1_re")
    p1im = prog.scalar("psi1_im")
    p2 = prog.scalar("psi2")
    p3 = prog.scalar("psi3")
    prog.eq(p1re, prog.trace_real(ops.a1, "W"))
    prog.eq(p1im, prog.trace_imag(ops.a1, "W"))
    prog.eq(p2, prog.trace_real(ops.a2, "W"))
    prog.eq(p3, prog.trace_real(ops.a3, "W"))
    prog.ge(p2, _PSI_FLOOR)
    prog.ge(p3, _PSI_FLOOR)
    objective = prog.trace_real(ops.big_h, "W") / scene.comm_noise
    return prog, (p1re, p1im, p2, p3), objective


def _solution_result(prog, sol, ops, scene) -> WSolveResult:
    if not sol.optimal:
        return WSolveResult(status=sol.status)
    W = sol.values["W"]
    psi = psi_values(ops, W)
    return WSolveResult(
        status=STATUS_OPTIMAL,
        W=W,
        objective=sol.objective,
        objective_trace=[sol.objective],
        psi=psi,
        iterations=1,
    )


def solve_W_direct(ops: PsiOperators, scene: SceneConfig, tol: float = 1e-9) -> WSolveResult:
    """Globally optimal SDR covariance with the exact sensing cone.

    Serves as the oracle for :func:`solve_W_sca`; both optimize over the same
    relaxed set.
    """
    prog, (p1re, p1im, p2, p3), objective = _base_program(ops, scene)
    gamma = scene.sensing_floor
    if gamma > 0:
        n0 = scene.radar_noise
        delta = scene.clutter_gain
        margin = p2 - gamma * n0 / scene.target_gain**2
        prog.rsoc(margin * 0.5, n0 + delta**2 * p3, [delta * p1re, delta * p1im])
    prog.maximize(objective)
    return _solution_result(prog, prog.solve(tol=tol), ops, scene)


def max_sensing_snr(ops: PsiOperators, scene: SceneConfig, tol: float = 1e-9):
    """Maximum achievable MVDR sensing SNR over the relaxed covariance set.

    Returns ``(value, W)``; used as the feasibility certificate for the
    sensing floor before any communication solve.
    """
    prog, (p1re, p1im, p2, p3), _ = _base_program(ops, scene)
    n0 = scene.radar_noise
    delta = scene.clutter_gain
    t = prog.scalar("leak", nonneg=True)
    prog.rsoc(t * 0.5, n0 + delta**2 * p3, [delta * p1re, delta * p1im])
    prog.maximize((p2 - t) * (scene.target_gain**2 / n0))
    sol = prog.solve(tol=tol)
    if not sol.optimal:
        return None, None
    return sol.objective, sol.values["W"]


def solve_W_sca(
    ops: PsiOperators,
    scene: SceneConfig,
    omega_init: float | None = None,
    max_iter: int = 40,
    tol: float = 1e-8,
    solver_tol: float = 1e-9,
    anchor: np.ndarray | None = None,
) -> WSolveResult:
    """Covariance design by successive convex approximation.

    The product ``omega = psi2 * delta^2 * psi3`` is coupled through the
    first-order bound ``1/(psi2 * delta^2 psi3) <= 1/omega0 -
    (omega - omega0)/omega0^2`` refreshed at each accepted iterate, which
    keeps every subproblem inside the exact feasible set and tight at its
    anchor.  The companion mean-square restriction on ``(psi2, psi3)``
    (which together with the bound above would pin psi2 = psi3 and admit
    only the anchor) is not imposed; its residual at the solution is
    reported in ``amgm_branch_residual``.

    Returns the best iterate with ``objective_trace`` non-decreasing; a
    ``stall`` flag marks three consecutive solves without progress.  A
    floor-feasible ``anchor`` covariance warm-starts the expansion point
    (defaults to the MRT covariance projected to feasibility).
    """
    gamma = scene.sensing_floor
    if gamma <= 0:
        return solve_W_direct(ops, scene, tol=solver_tol)

    delta = scene.clutter_gain

    if anchor is not None and gamma_r_from_psi(*psi_values(ops, anchor), scene) < gamma:
        anchor = None
    if anchor is None:
        gamma_max, W_feas = max_sensing_snr(ops, scene, tol=solver_tol)
        if gamma_max is None:
            return WSolveResult(status="numerical-limit")
        if gamma_max < gamma * (1.0 - SENSING_SLACK):
            return WSolveResult(status=STATUS_INFEASIBLE)
        anchor = _feasible_anchor(ops, scene, W_feas)

    if omega_init is not None:
        if omega_init <= 0:
            raise InvalidParameterError("omega_init must be > 0")
        omega0 = omega_init
    else:
        _, psi2_a, psi3_a = psi_values(ops, anchor)
        omega0 = psi2_a * delta**2 * psi3_a

    best_obj = comm_snr_of_W(ops, anchor, scene)
    best_W = anchor
    trace = [best_obj]
    stall = 0
    no_gain = 0
    iterations = 0

    def floor_ok(W) -> bool:
        return gamma_r_from_psi(*psi_values(ops, W), scene) >= gamma * (1.0 - SENSING_SLACK)

    # Zero-credit candidate: dropping the product term is itself a sound
    # restriction and captures optima that null the clutter response, where
    # the reciprocal expansion degenerates.  It contributes a candidate
    # value only; the anchor keeps tracking positive-product iterates.
    zero_sol = _solve_sca_subproblem(ops, scene, 0.0, solver_tol)
    if zero_sol.optimal and zero_sol.objective > best_obj and floor_ok(zero_sol.values["W"]):
        best_obj = zero_sol.objective
        best_W = zero_sol.values["W"]
        trace.append(best_obj)

    # The anchor that reproduces its own product (s(omega0) = omega0) makes
    # the expansion tight at the subproblem optimum, which is then optimal
    # for the exact set.  The residual g = s - omega0 is decreasing in the
    # anchor, so the walk is a safeguarded bracketed root search instead of
    # the plain (slowly contracting) refresh iteration.  The walk's own
    # progress drives termination; the returned iterate is the incumbent.
    lo = hi = None  # anchors bracketing the fixed point from below/above
    good_anchor = None  # last anchor that solved cleanly
    prev_pair = None  # (omega0, g) of the previous clean solve
    omega_scale = max(omega0, 1e-12)
    walk_best = -math.inf
    stagnant = 0
    for _ in range(max_iter):
        iterations += 1
        sol = _solve_sca_subproblem(ops, scene, omega0, solver_tol)
        if not sol.optimal:
            if iterations == 1 and sol.status == STATUS_INFEASIBLE and not zero_sol.optimal:
                return WSolveResult(status=STATUS_INFEASIBLE)
            stall += 1
            if stall >= 5:
                break
            # Treat the failed anchor as a bracket endpoint on its side of
            # the last clean one and bisect geometrically toward it.
            if good_anchor is not None:
                if omega0 > good_anchor:
                    hi = omega0 if hi is None else min(hi, omega0)
                else:
                    lo = omega0 if lo is None else max(lo, omega0)
                omega0 = math.sqrt(omega0 * good_anchor)
            else:
                omega0 = max(_refresh_omega(ops, best_W, delta), 0.01 * omega_scale)
            continue
        stall = 0
        obj = sol.objective
        # Incumbent updates require exact floor feasibility, so loosely
        # solved subproblems can steer the walk but never the answer.
        if obj > best_obj and floor_ok(sol.values["W"]):
            best_obj = obj
            best_W = sol.values["W"]
            trace.append(best_obj)
        if obj > walk_best + tol * max(1.0, abs(obj)):
            no_gain = 0
        else:
            no_gain += 1
        walk_best = max(walk_best, obj)
        s_new = _refresh_omega(ops, sol.values["W"], delta)
        g = s_new - omega0
        tol_g = 1e-6 * max(1.0, omega0)
        if g > tol_g:
            lo = omega0 if lo is None else max(lo, omega0)
        elif g < -tol_g:
            hi = omega0 if hi is None else min(hi, omega0)
        good_anchor = omega0
        residual = abs(g) / max(omega0, 1e-6 * omega_scale)
        if residual <= 1e-5 or no_gain >= 6:
            break
        if lo is not None and hi is not None and hi - lo <= 1e-9 * hi:
            break

        # Next anchor: secant on g when the slope is resolvable above the
        # measurement noise, otherwise bisect the bracket, otherwise follow
        # the plain refresh.
        omega_next = None
        noise = 1e-4 * omega0
        if prev_pair is not None and abs(g) > noise:
            om_p, g_p = prev_pair
            denom = g - g_p
            if abs(om_p - omega0) > 1e-9 * omega0 and abs(denom) > 1e-12:
                step = omega0 - g * (omega0 - om_p) / denom
                if step > 0:
                    omega_next = min(max(step, omega0 / 20.0), omega0 * 20.0)
        prev_pair = (omega0, g)
        if omega_next is None and lo is not None and hi is not None and lo < hi:
            omega_next = math.sqrt(lo * hi)
        if omega_next is None:
            # Plain refresh; a vanishing product decays the anchor instead of
            # collapsing it (a zero product means the clutter-nulled corner,
            # already covered by the zero-credit candidate).
            omega_next = s_new if s_new > 1e-9 * omega_scale else 0.25 * omega0
        if lo is not None:
            omega_next = max(omega_next, lo * 1.0000001)
        if hi is not None:
            omega_next = min(omega_next, hi * 0.9999999)
        if abs(omega_next - omega0) <= 1e-4 * omega0:
            stagnant += 1
            if stagnant >= 2:
                break  # near-flat residual; the probe phase takes over
        else:
            stagnant = 0
        omega0 = max(omega_next, 1e-12)

    # Corner probe: near clutter-nulling optima the product residual goes
    # flat while the objective still grows as the anchor shrinks, so walk
    # the anchor down (and once up) geometrically on the objective itself.
    probe_budget = max_iter - iterations
    if probe_budget > 0:
        omega_p = max(min(omega0, good_anchor or omega0), 1e-12)
        direction_checked = False
        for _ in range(min(probe_budget, 20)):
            omega_try = omega_p / 4.0
            if omega_try < 1e-10 * omega_scale:
                break
            iterations += 1
            sol = _solve_sca_subproblem(ops, scene, omega_try, solver_tol)
            gain = (
                sol.optimal
                and sol.objective > best_obj + tol * max(1.0, abs(best_obj))
                and floor_ok(sol.values["W"])
            )
            if gain:
                best_obj = sol.objective
                best_W = sol.values["W"]
                trace.append(best_obj)
                omega_p = omega_try
            elif not direction_checked:
                # One probe upward, then stop if neither direction helps.
                direction_checked = True
                omega_try = omega_p * 4.0
                iterations += 1
                sol = _solve_sca_subproblem(ops, scene, omega_try, solver_tol)
                if (sol.optimal and sol.objective > best_obj + tol * max(1.0, abs(best_obj))
                        and floor_ok(sol.values["W"])):
                    best_obj = sol.objective
                    best_W = sol.values["W"]
                    trace.append(best_obj)
                    omega_p = omega_try
                else:
                    break
            else:
                break

    psi1, psi2, psi3 = psi_values(ops, best_W)
    omega_star = psi2 * delta**2 * psi3
    amgm = 0.5 * (psi2**2 + (delta**2 * psi3) ** 2) - omega_star
    return WSolveResult(
        status=STATUS_OPTIMAL,
        W=best_W,
        objective=best_obj,
        objective_trace=trace,
        psi=(psi1, psi2, psi3),
        iterations=iterations,
        stall=stall >= 5,
        amgm_branch_residual=amgm,
    )


def _refresh_omega(ops, W, delta):
    _, psi2, psi3 = psi_values(ops, W)
    return max(psi2 * delta**2 * psi3, 1e-12)


def _solve_sca_subproblem(ops, scene, omega0, solver_tol):
    prog, (p1re, p1im, p2, p3), objective = _base_program(ops, scene)
    n0 = scene.radar_noise
    sigma2 = scene.target_gain**2
    delta = scene.clutter_gain
    gamma = scene.sensing_floor
    p3e = delta**2 * p3  # effective clutter quadratic form

    omega = prog.scalar("omega", nonneg=True)
    # Sensing floor multiplied through by its denominator, with omega in
    # place of psi2 * delta^2 * psi3:
    #   sigma2*(n0*psi2 + omega - delta^2 |psi1|^2) >= Gamma*n0*(n0 + p3e)
    rhs = (n0 * p2 + omega) * sigma2 - gamma * n0 * n0 - gamma * n0 * p3e
    prog.rsoc(rhs * 0.5, 1.0, [math.sqrt(sigma2) * delta * p1re,
                               math.sqrt(sigma2) * delta * p1im])

    if omega0 > 1e-10:
        # omega <= psi2 * p3e enforced via the linearized reciprocal:
        # 1/(psi2*p3e) <= 1/omega0 - (omega - omega0)/omega0^2 = phi(omega).
        phi = 2.0 / omega0 - omega * (1.0 / omega0**2)
        prog.product_lower_bound(p2, p3e, phi, 1.0)
    else:
        # Degenerate anchor product; drop the cross credit this round.
        prog.eq(omega, 0.0)

    prog.maximize(objective)
    return prog.solve(tol=solver_tol, scs_fallback=False)


def _feasible_anchor(ops: PsiOperators, scene: SceneConfig, W_fallback) -> np.ndarray:
    """MRT covariance if it meets the floor, else the max-sensing covariance."""
    h_power = float(np.trace(ops.big_h).real)
    W_mrt = scene.power_budget * ops.big_h / h_power
    psi = psi_values(ops, W_mrt)
    if gamma_r_from_psi(*psi, scene) >= scene.sensing_floor * (1.0 - SENSING_SLACK):
        return W_mrt
    return np.asarray(W_fallback, dtype=complex)


def extract_rank1(
    W: np.ndarray,
    ops: PsiOperators,
    scene: SceneConfig,
    tol: float = 1e-6,
    rng: np.random.Generator | None = None,
    draws: int = 200,
) -> Rank1Extraction:
    """Recover a transmit beam from a covariance.

    If the second eigenvalue ratio is below ``tol`` the dominant eigenpair is
    returned directly.  Otherwise Gaussian randomization draws ``draws``
    candidates from ``CN(0, W)``, rescales each into the power budget, and
    keeps the feasible one with the best communication SNR; a
    ``gap_warning`` is set when that best falls more than 1% short of the
    relaxed objective ``tr(H W)``.
    """
    W = np.asarray(W, dtype=complex)
    W = 0.5 * (W + W.conj().T)
    eigvals, eigvecs = np.linalg.eigh(W)
    lead = float(eigvals[-1])
    if lead <= 0:
        raise InvalidParameterError("covariance has no positive eigenvalue")
    ratio = float(max(eigvals[-2], 0.0) / lead) if eigvals.size > 1 else 0.0

    if ratio <= tol:
        w = math.sqrt(lead) * eigvecs[:, -1]
        w = _normalize_phase(w)
        power = float(np.vdot(w, w).real)
        if power > scene.power_budget:
            w = w * math.sqrt(scene.power_budget / power)
        return Rank1Extraction(w=w, rank_ratio=ratio)

    rng = rng if rng is not None else np.random.default_rng(0)
    sqrt_W = eigvecs @ np.diag(np.sqrt(np.clip(eigvals, 0.0, None))) @ eigvecs.conj().T
    gamma = scene.sensing_floor

    def comm_of(w):
        return float(np.vdot(w, ops.big_h @ w).real) / scene.comm_noise

    def feasible(w):
        return gamma <= 0 or gamma_r_of_w(ops, w, scene) >= gamma * (1.0 - SENSING_SLACK)

    candidates = [math.sqrt(lead) * eigvecs[:, -1]]
    for _ in range(draws):
        g = (rng.standard_normal(W.shape[0]) + 1j * rng.standard_normal(W.shape[0]))
        candidates.append(sqrt_W @ (g / math.sqrt(2.0)))

    best_w = None
    best_val = -np.inf
    best_infeasible = None
    best_infeasible_val = -np.inf
    for w in candidates:
        power = float(np.vdot(w, w).real)
        if power > scene.power_budget:
            w = w * math.sqrt(scene.power_budget / power)
        val = comm_of(w)
        if feasible(w) and val > best_val:
            best_val, best_w = val, w
        elif not feasible(w) and val > best_infeasible_val:
            best_infeasible_val, best_infeasible = val, w

    if best_w is None and gamma > 0 and best_infeasible is not None:
        # Deterministic fallback: blend the best draw toward the
        # target-matched beam until the floor holds.
        blended = _blend_to_floor(best_infeasible, ops, scene)
        if blended is not None:
            best_w = blended
            best_val = comm_of(blended)
    if best_w is None:
        raise ExtractionFailureError(
            "no feasible randomized rank-one candidate", best_candidate=best_infeasible
        )
    relaxed = comm_snr_of_W(ops, W, scene)
    gap_warning = best_val < relaxed * (1.0 - 0.01)
    return Rank1Extraction(
        w=_normalize_phase(best_w), rank_ratio=ratio, randomized=True,
        gap_warning=gap_warning,
    )


def _blend_to_floor(w, ops: PsiOperators, scene: SceneConfig):
    """Bisect a blend of ``w`` with the target-matched beam onto the floor."""
    n = ops.a2.shape[0]
    # a2 = n_rx * a_T(theta_P) a_T(theta_P)^H: its first column is the
    # matched direction up to a global phase.
    a_p = ops.a2[:, 0]
    a_p = a_p / np.abs(a_p)
    budget = math.sqrt(scene.power_budget)
    matched = budget * a_p / math.sqrt(n)
    gamma = scene.sensing_floor

    def blend(beta):
        mix = (1.0 - beta) * w + beta * matched
        norm = np.linalg.norm(mix)
        if norm < 1e-12:
            return matched
        return budget * mix / norm

    def ok(beta):
        return gamma_r_of_w(ops, blend(beta), scene) >= gamma * (1.0 - SENSING_SLACK)

    if not ok(1.0):
        return None
    lo, hi = 0.0, 1.0
    for _ in range(50):
        mid = 0.5 * (lo + hi)
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return blend(hi)


def _normalize_phase(w: np.ndarray) -> np.ndarray:
    """Rotate the global phase so the largest entry is real positive."""
    idx = int(np.argmax(np.abs(w)))
    pivot = w[idx]
    if abs(pivot) == 0:
        return w
    return w * (pivot.conj() / abs(pivot))


def zero_forcing_beam(layout: ArrayLayout, scene: SceneConfig) -> np.ndarray:
    """Clutter-nulling MRT: project h off the clutter steering vector.

    Ignores the sensing floor by construction.
    """
    if scene.n_tx < 2:
        raise InvalidParameterError("zero-forcing needs at least two antennas")
    h = channel(layout, scene)
    a_c = steering(layout.x, scene.theta_clutter, scene.wavelength)
    proj = h - a_c * (np.vdot(a_c, h) / float(np.vdot(a_c, a_c).real))
    norm = np.linalg.norm(proj)
    if norm < 1e-9 * np.linalg.norm(h):
        raise InvalidParameterError(
            "channel is parallel to the clutter steering vector"
        )
    return math.sqrt(scene.power_budget) * proj / norm
