"""Antenna-position optimization by a safeguarded surrogate cascade.

For fixed beams, the communication SNR and every sensing quantity depend on
positions only through per-antenna phases ``rho_i = (2*pi/lam) * p_i *
cos(theta)``.  Around an anchor layout each cosine is replaced by its
recentred quadratic minorant

    cos(z0 + D) >= cos(z0) - sin(z0)*D - D^2/2,

which is a global lower bound that is tight at the anchor, and each
sine/cosine pair in the rank-one cross term by the matching second/third
order expansion with auxiliary square and cube variables.  The sensing floor
enters through slack variables bounded on their conservative sides, so the
conic subproblem inner-approximates the true constraint near the anchor.

Every candidate step is re-evaluated exactly (scene-model SNRs) and accepted
only if it does not decrease the objective and keeps the sensing floor; a
trust region shrinks on rejection.  Acceptance therefore never relies on
surrogate validity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .combiner import mvdr_snr_closedform
from .conic import ConicProgram
from .errors import InvalidAnchorError, InvalidParameterError
from .scene import TWO_PI, ArrayLayout, SceneConfig, comm_snr, steering

SENSING_SLACK = 1e-6


def phase_rate(theta: float, wavelength: float) -> float:
    """d(rho)/d(position) for the given angle."""
    return TWO_PI / wavelength * math.cos(theta)


@dataclass(frozen=True)
class TrustRegion:
    """Per-iteration cap on position movement (meters)."""

    radius: float
    shrink: float = 0.5
    grow: float = 1.5

    def __post_init__(self):
        if not (self.radius > 0):
            raise InvalidParameterError("trust radius must be > 0")
        if not (0 < self.shrink < 1 and self.grow >= 1):
            raise InvalidParameterError("bad trust-region factors")

    @classmethod
    def for_scene(cls, scene: SceneConfig) -> "TrustRegion":
        return cls(radius=0.25 * scene.wavelength)


@dataclass(frozen=True)
class SlackTriple:
    """Slack decomposition of the sensing floor at a subproblem solution.

    ``phi`` under-estimates the target return power, ``phi_bar``
    under-estimates the effective clutter power, ``phi_tilde``
    over-estimates the squared cross leakage, so the recombined margin
    implies the true sensing constraint.
    """

    phi: float
    phi_bar: float
    phi_tilde: float

    def margin(self, scene: SceneConfig) -> float:
        n0 = scene.radar_noise
        return scene.target_gain**2 / n0 * (
            self.phi - self.phi_tilde / (n0 + self.phi_bar)
        )


@dataclass(frozen=True)
class SurrogateCoefficients:
    """Anchor-dependent data of the position surrogate (one array side).

    ``b_user/b_target/b_clutter`` are the covariance-weighted steering
    vectors at the anchor; ``omega_*``/``xi_*`` are the complex weights of
    the cosine/sine expansion of the rank-one cross term; ``n_tilde`` is the
    receive-side inner product between target and clutter steering vectors.
    """

    anchor: np.ndarray
    W: np.ndarray
    n_tilde: complex
    wavelength: float
    theta_user: float
    theta_target: float
    theta_clutter: float
    b_user: np.ndarray
    b_target: np.ndarray
    b_clutter: np.ndarray
    omega_p: np.ndarray
    xi_p: np.ndarray
    omega_c_bar: np.ndarray
    xi_c_bar: np.ndarray
    cross_const: complex
    q0_user: float
    q0_target: float
    q0_clutter: float

    # -- definitional evaluators (also used as test oracles) ---------------
    def _family(self, theta, b):
        rate = phase_rate(theta, self.wavelength)
        rho0 = rate * self.anchor
        z0 = rho0 - np.angle(b)
        return rate, rho0, z0

    def quad_minorant_sum(self, positions, theta, b) -> float:
        """sum_i |b_i| * [cos(z0) - sin(z0) dz - dz^2/2] at the given positions."""
        rate, _, z0 = self._family(theta, b)
        dz = rate * (np.asarray(positions) - self.anchor)
        vals = np.cos(z0) - np.sin(z0) * dz - 0.5 * dz**2
        return float(np.sum(np.abs(b) * vals))

    def objective_surrogate(self, positions, scene: SceneConfig) -> float:
        """Quadratic minorant of gamma_t, exact at the anchor."""
        scale = abs(scene.path_gain) ** 2 / scene.comm_noise
        lin = 2.0 * self.quad_minorant_sum(positions, self.theta_user, self.b_user)
        return scale * (lin - self.q0_user)

    def psi2_minorant(self, positions, n_rx: int) -> float:
        lin = 2.0 * self.quad_minorant_sum(positions, self.theta_target, self.b_target)
        return n_rx * (lin - self.q0_target)

    def psi3_minorant(self, positions, n_rx: int) -> float:
        lin = 2.0 * self.quad_minorant_sum(positions, self.theta_clutter, self.b_clutter)
        return n_rx * (lin - self.q0_clutter)

    def cross_surrogate(self, positions) -> complex:
        """Second/third-order expansion of the cross term at given positions."""
        positions = np.asarray(positions, dtype=float)
        rate_c = phase_rate(self.theta_clutter, self.wavelength)
        rate_p = phase_rate(self.theta_target, self.wavelength)
        out = self.cross_const
        for rate, omega, xi in (
            (rate_c, self.omega_p, self.xi_p),
            (rate_p, self.omega_c_bar, self.xi_c_bar),
        ):
            rho0 = rate * self.anchor
            dz = rate * (positions - self.anchor)
            cos_term = np.cos(rho0) * (1 - dz**2 / 2) - np.sin(rho0) * (dz - dz**3 / 6)
            sin_term = np.sin(rho0) * (1 - dz**2 / 2) + np.cos(rho0) * (dz - dz**3 / 6)
            out += complex(np.sum(omega * cos_term + xi * sin_term))
        return out

    def cross_exact(self, positions) -> complex:
        a_p = steering(positions, self.theta_target, self.wavelength)
        a_c = steering(positions, self.theta_clutter, self.wavelength)
        return self.n_tilde * complex(a_c.conj() @ self.W @ a_p)


@dataclass(frozen=True)
class AuxiliaryVariables:
    """Definitional values of the surrogate's auxiliary variables.

    ``kappa``/``kappa_bar``/``lam_hat`` are the per-antenna phases at the
    clutter, target, and user angles; ``u`` and ``zeta`` their squares and
    cubes; ``tau_*`` the squared offsets to the b-vector phase anchors;
    ``eta`` the cross-term surrogate value.  Constructed from a position
    vector, the defining equalities hold exactly.
    """

    kappa: np.ndarray
    kappa_bar: np.ndarray
    lam_hat: np.ndarray
    u: np.ndarray
    u_bar: np.ndarray
    zeta: np.ndarray
    zeta_bar: np.ndarray
    tau_user: np.ndarray
    tau_target: np.ndarray
    tau_clutter: np.ndarray
    eta: complex

    @classmethod
    def at(cls, positions, coeffs: SurrogateCoefficients) -> "AuxiliaryVariables":
        positions = np.asarray(positions, dtype=float)
        lam = coeffs.wavelength
        kappa = phase_rate(coeffs.theta_clutter, lam) * positions
        kappa_bar = phase_rate(coeffs.theta_target, lam) * positions
        lam_hat = phase_rate(coeffs.theta_user, lam) * positions
        return cls(
            kappa=kappa,
            kappa_bar=kappa_bar,
            lam_hat=lam_hat,
            u=kappa**2,
            u_bar=kappa_bar**2,
            zeta=kappa**3,
            zeta_bar=kappa_bar**3,
            tau_user=(lam_hat - np.angle(coeffs.b_user)) ** 2,
            tau_target=(kappa_bar - np.angle(coeffs.b_target)) ** 2,
            tau_clutter=(kappa - np.angle(coeffs.b_clutter)) ** 2,
            eta=coeffs.cross_surrogate(positions),
        )


@dataclass
class PositionTraceRow:
    iteration: int
    anchor: np.ndarray
    surrogate_objective: float | None
    exact_objective: float
    accepted: bool
    radius: float
    slack: SlackTriple | None = None
    relaxations_ok: bool = True


@dataclass
class PositionResult:
    layout: ArrayLayout
    objective: float
    trace: list[PositionTraceRow] = field(default_factory=list)
    progressed: bool = False
    converged: bool = False


def _as_covariance(w_or_W) -> np.ndarray:
    arr = np.asarray(w_or_W, dtype=complex)
    if arr.ndim == 1:
        return np.outer(arr, arr.conj())
    return 0.5 * (arr + arr.conj().T)


def build_surrogate(
    x_anchor, W, layout: ArrayLayout, scene: SceneConfig
) -> tuple[SurrogateCoefficients, AuxiliaryVariables]:
    """Surrogate coefficients for the transmit side at the given anchor.

    ``W`` may be a covariance or a beam vector (outer product taken).  The
    receive positions of ``layout`` fix the cross-term factor ``n_tilde``.
    """
    x_anchor = np.asarray(x_anchor, dtype=float)
    W = _as_covariance(W)
    lam = scene.wavelength
    a0_user = steering(x_anchor, scene.theta_user, lam)
    a0_target = steering(x_anchor, scene.theta_target, lam)
    a0_clutter = steering(x_anchor, scene.theta_clutter, lam)
    a_r_p = steering(layout.y, scene.theta_target, lam)
    a_r_c = steering(layout.y, scene.theta_clutter, lam)
    n_tilde = complex(np.vdot(a_r_p, a_r_c))

    b_user = W @ a0_user
    b_target = W @ a0_target
    b_clutter = W @ a0_clutter
    coeffs = SurrogateCoefficients(
        anchor=x_anchor,
        W=W,
        n_tilde=n_tilde,
        wavelength=lam,
        theta_user=scene.theta_user,
        theta_target=scene.theta_target,
        theta_clutter=scene.theta_clutter,
        b_user=b_user,
        b_target=b_target,
        b_clutter=b_clutter,
        omega_p=n_tilde * b_target,
        xi_p=-1j * n_tilde * b_target,
        omega_c_bar=n_tilde * b_clutter.conj(),
        xi_c_bar=1j * n_tilde * b_clutter.conj(),
        cross_const=-n_tilde * complex(a0_clutter.conj() @ W @ a0_target),
        q0_user=float((a0_user.conj() @ W @ a0_user).real),
        q0_target=float((a0_target.conj() @ W @ a0_target).real),
        q0_clutter=float((a0_clutter.conj() @ W @ a0_clutter).real),
    )
    return coeffs, AuxiliaryVariables.at(x_anchor, coeffs)


def linearize_min_distance(x_ref, min_dist: float) -> list[tuple[int, int, float]]:
    """Linear spacing constraints sign*(x_k - x_l) >= D around ``x_ref``.

    Returns one ``(k, l, sign)`` triple per unordered pair; in one dimension
    the normalized gradient is the sign of the reference gap, so any point
    satisfying the linear system also satisfies the true pairwise-distance
    constraints.  The reference itself must be spacing-feasible.
    """
    x_ref = np.asarray(x_ref, dtype=float)
    n = x_ref.size
    cons = []
    for k in range(n):
        for l in range(k + 1, n):
            gap = x_ref[k] - x_ref[l]
            if abs(gap) < min_dist * (1.0 - 1e-9):
                raise InvalidAnchorError(
                    f"reference positions {k},{l} closer than min distance"
                )
            cons.append((k, l, 1.0 if gap > 0 else -1.0))
    return cons


def spacing_satisfied(x, constraints, min_dist: float, tol: float = 0.0) -> bool:
    x = np.asarray(x, dtype=float)
    return all(
        sign * (x[k] - x[l]) >= min_dist - tol for k, l, sign in constraints
    )


def _add_offset_aux(prog, tag, diffs, rate, radius, cubes=True):
    """Register u >= (rate*d)^2 (and cube trust bounds) for one phase family."""
    n = len(diffs)
    cap = abs(rate) * radius
    u = prog.scalars(f"u_{tag}", n, nonneg=True)
    zeta = prog.scalars(f"zeta_{tag}", n) if cubes else None
    for i in range(n):
        offset = rate * diffs[i]
        prog.rsoc(u[i] * 0.5, 1.0, [offset])  # (rate*d)^2 <= u
        prog.le(u[i], cap**2 + 1e-15)
        if cubes:
            prog.le(zeta[i], cap * u[i])
            prog.ge(zeta[i], -cap * u[i])
    return u, zeta


def _trig_exprs(rho0_i, offset_expr, u_i, zeta_i):
    """Recentred cos/sin surrogates: affine in (offset, u, zeta)."""
    c0, s0 = math.cos(rho0_i), math.sin(rho0_i)
    small = offset_expr - zeta_i / 6.0
    cos_e = c0 - c0 * 0.5 * u_i - s0 * small
    sin_e = s0 - s0 * 0.5 * u_i + c0 * small
    return cos_e, sin_e


def _tx_subproblem(coeffs: SurrogateCoefficients, scene: SceneConfig,
                   radius: float, bounds: tuple[float, float]):
    """Conic surrogate for the transmit positions around the anchor."""
    x0 = coeffs.anchor
    n = x0.size
    lam = coeffs.wavelength
    lo, hi = bounds
    prog = ConicProgram()
    x = prog.scalars("x", n)
    diffs = [x[i] - x0[i] for i in range(n)]
    for i in range(n):
        prog.ge(x[i], max(lo, x0[i] - radius))
        prog.le(x[i], min(hi, x0[i] + radius))
    for k, l, sign in linearize_min_distance(x0, scene.min_spacing):
        prog.ge((x[k] - x[l]) * sign, scene.min_spacing)

    scale = abs(scene.path_gain) ** 2 / scene.comm_noise
    rate_user = phase_rate(scene.theta_user, lam)
    amp_user = np.abs(coeffs.b_user)
    z0_user = rate_user * x0 - np.angle(coeffs.b_user)
    tau = prog.scalars("tau_user", n, nonneg=True)
    objective = -scale * coeffs.q0_user
    for i in range(n):
        prog.rsoc(tau[i] * 0.5, 1.0, [rate_user * diffs[i]])
        objective = objective + 2.0 * scale * amp_user[i] * (
            math.cos(z0_user[i])
            - math.sin(z0_user[i]) * (rate_user * diffs[i])
            - tau[i] * 0.5
        )

    gamma = scene.sensing_floor
    delta = scene.clutter_gain
    handles = {"x": x, "n": n}
    if gamma > 0:
        n0 = scene.radar_noise
        rate_p = phase_rate(scene.theta_target, lam)
        rate_c = phase_rate(scene.theta_clutter, lam)
        u_p, zeta_p = _add_offset_aux(prog, "p", diffs, rate_p, radius)
        phi = prog.scalar("phi", nonneg=True)
        amp_t = np.abs(coeffs.b_target)
        z0_t = rate_p * x0 - np.angle(coeffs.b_target)
        psi2_min = -coeffs.q0_target
        for i in range(n):
            psi2_min = psi2_min + 2.0 * amp_t[i] * (
                math.cos(z0_t[i])
                - math.sin(z0_t[i]) * (rate_p * diffs[i])
                - u_p[i] * 0.5
            )
        prog.le(phi, psi2_min * scene.n_rx)

        if delta > 0:
            u_c, zeta_c = _add_offset_aux(prog, "c", diffs, rate_c, radius)
            phi_bar = prog.scalar("phi_bar", nonneg=True)
            amp_c = np.abs(coeffs.b_clutter)
            z0_c = rate_c * x0 - np.angle(coeffs.b_clutter)
            psi3_min = -coeffs.q0_clutter
            for i in range(n):
                psi3_min = psi3_min + 2.0 * amp_c[i] * (
                    math.cos(z0_c[i])
                    - math.sin(z0_c[i]) * (rate_c * diffs[i])
                    - u_c[i] * 0.5
                )
            prog.le(phi_bar, psi3_min * scene.n_rx * delta**2)

            eta_re = coeffs.cross_const.real + 0.0
            eta_im = coeffs.cross_const.imag + 0.0
            rho0_c = rate_c * x0
            rho0_p = rate_p * x0
            for i in range(n):
                cos_c, sin_c = _trig_exprs(rho0_c[i], rate_c * diffs[i], u_c[i], zeta_c[i])
                cos_p, sin_p = _trig_exprs(rho0_p[i], rate_p * diffs[i], u_p[i], zeta_p[i])
                op, xp = coeffs.omega_p[i], coeffs.xi_p[i]
                oc, xc = coeffs.omega_c_bar[i], coeffs.xi_c_bar[i]
                eta_re = eta_re + op.real * cos_c + xp.real * sin_c \
                    + oc.real * cos_p + xc.real * sin_p
                eta_im = eta_im + op.imag * cos_c + xp.imag * sin_c \
                    + oc.imag * cos_p + xc.imag * sin_p
            margin = phi - gamma * n0 / scene.target_gain**2
            prog.rsoc(margin * 0.5, n0 + phi_bar, [delta * eta_re, delta * eta_im])
            handles.update(eta=(eta_re, eta_im), phi=phi, phi_bar=phi_bar)
        else:
            prog.ge(phi, gamma * n0 / scene.target_gain**2)
            handles.update(phi=phi)

    prog.maximize(objective)
    handles["objective"] = objective
    return prog, handles


def _rx_subproblem(y0, scene: SceneConfig, radius: float, bounds: tuple[float, float]):
    """Conic surrogate minimizing |a_R(theta_P)^H a_R(theta_C)|^2 over y."""
    y0 = np.asarray(y0, dtype=float)
    n = y0.size
    lo, hi = bounds
    rate = phase_rate(scene.theta_clutter, scene.wavelength) - phase_rate(
        scene.theta_target, scene.wavelength
    )
    prog = ConicProgram()
    y = prog.scalars("x", n)
    diffs = [y[i] - y0[i] for i in range(n)]
    for i in range(n):
        prog.ge(y[i], max(lo, y0[i] - radius))
        prog.le(y[i], min(hi, y0[i] + radius))
    for k, l, sign in linearize_min_distance(y0, scene.min_spacing):
        prog.ge((y[k] - y[l]) * sign, scene.min_spacing)

    u, zeta = _add_offset_aux(prog, "r", diffs, rate, radius)
    rho0 = rate * y0
    re = 0.0
    im = 0.0
    for i in range(n):
        cos_e, sin_e = _trig_exprs(rho0[i], rate * diffs[i], u[i], zeta[i])
        re = re + cos_e
        im = im + sin_e
    t = prog.scalar("t", nonneg=True)
    prog.rsoc(t * 0.5, 1.0, [re, im])
    prog.minimize(t)
    return prog, {"n": n}


def _respace(positions, lo, hi, min_dist):
    """Project sorted positions onto the box with pairwise spacing kept."""
    z = np.sort(np.asarray(positions, dtype=float)) - min_dist * np.arange(len(positions))
    z = _pava(z)
    z = np.clip(z, lo, hi - min_dist * (len(positions) - 1))
    return z + min_dist * np.arange(len(positions))


def _pava(values: np.ndarray) -> np.ndarray:
    """Pool-adjacent-violators isotonic regression (non-decreasing)."""
    vals = list(map(float, values))
    weights = [1.0] * len(vals)
    means = []
    counts = []
    for v, w in zip(vals, weights):
        means.append(v)
        counts.append(w)
        while len(means) > 1 and means[-2] > means[-1]:
            total = counts[-2] + counts[-1]
            merged = (means[-2] * counts[-2] + means[-1] * counts[-1]) / total
            means = means[:-2] + [merged]
            counts = counts[:-2] + [total]
    out = []
    for m, c in zip(means, counts):
        out.extend([m] * int(c))
    return np.array(out)


def optimize_positions(
    side: str,
    layout: ArrayLayout,
    w,
    scene: SceneConfig,
    trust: TrustRegion | None = None,
    max_iter: int = 25,
    tol: float = 1e-6,
    bounds: tuple[float, float] | None = None,
) -> PositionResult:
    """Safeguarded SCA over one side's antenna positions with the beam fixed.

    Transmit side maximizes the exact communication SNR subject to the exact
    sensing floor; receive side maximizes the sensing SNR (communication SNR
    does not depend on receive positions).  A candidate from the conic
    surrogate is accepted only if the exact objective does not decrease and
    the exact floor holds; otherwise the trust radius halves.  Terminates on
    small improvement or on radius below 1e-4 wavelengths.
    """
    if side not in ("transmit", "receive"):
        raise InvalidParameterError("side must be 'transmit' or 'receive'")
    layout.validate(scene)
    w = np.asarray(w, dtype=complex)
    trust = trust or TrustRegion.for_scene(scene)
    lam = scene.wavelength
    min_radius = 1e-4 * lam

    transmit = side == "transmit"
    positions = layout.x if transmit else layout.y
    aperture = scene.tx_aperture if transmit else scene.rx_aperture
    if bounds is None:
        bounds = (0.0, aperture)
    gamma = scene.sensing_floor

    def exact_gamma_r(cand_layout):
        return mvdr_snr_closedform(w, cand_layout, scene)

    def exact_objective(cand_layout):
        if transmit:
            return comm_snr(w, cand_layout, scene)
        return exact_gamma_r(cand_layout)

    def candidate_layout(pos):
        return layout.with_x(pos) if transmit else layout.with_y(pos)

    current = positions.copy()
    obj_cur = exact_objective(layout)
    result = PositionResult(layout=layout, objective=obj_cur)

    # Degenerate cases: nothing the optimizer can move usefully.
    if positions.size == 1:
        result.converged = True
        return result
    if not transmit:
        rate = phase_rate(scene.theta_clutter, lam) - phase_rate(scene.theta_target, lam)
        if scene.clutter_gain == 0 or abs(rate) < 1e-15:
            result.converged = True
            return result
    if gamma > 0 and exact_gamma_r(layout) < gamma * (1.0 - SENSING_SLACK) * (1.0 - 1e-9):
        # Infeasible anchor: the accept test could never pass.
        return result

    radius = trust.radius
    W_cov = np.outer(w, w.conj())
    for it in range(1, max_iter + 1):
        anchor_used = current.copy()
        if transmit:
            coeffs, _ = build_surrogate(current, W_cov, candidate_layout(current), scene)
            prog, handles = _tx_subproblem(coeffs, scene, radius, bounds)
        else:
            prog, handles = _rx_subproblem(current, scene, radius, bounds)
        sol = prog.solve(tol=1e-9)

        cand = None
        surrogate_val = None
        slack = None
        if sol.optimal:
            cand = np.sort(sol.vector("x", positions.size))
            cand = np.clip(cand, bounds[0], bounds[1])
            gaps = np.diff(cand)
            if cand.size > 1 and gaps.size and np.min(gaps) < scene.min_spacing * (1 - 1e-9):
                cand = _respace(cand, bounds[0], bounds[1], scene.min_spacing)
            # For the receive side this is the minimized squared cross leakage.
            surrogate_val = sol.objective
            if transmit and gamma > 0 and scene.clutter_gain > 0:
                eta_re, eta_im = handles["eta"]
                phi_tilde = scene.clutter_gain**2 * (
                    eta_re.evaluate(sol.values) ** 2 + eta_im.evaluate(sol.values) ** 2
                )
                slack = SlackTriple(
                    phi=sol.values["phi"],
                    phi_bar=sol.values.get("phi_bar", 0.0),
                    phi_tilde=phi_tilde,
                )

        accepted = False
        converged_now = False
        if cand is not None:
            cand_layout = candidate_layout(cand)
            obj_new = exact_objective(cand_layout)
            sensing_ok = True
            if transmit and gamma > 0:
                sensing_ok = exact_gamma_r(cand_layout) >= gamma * (1.0 - SENSING_SLACK)
            moved = float(np.max(np.abs(cand - current)))
            if sensing_ok and obj_new >= obj_cur:
                accepted = True
                improvement = obj_new - obj_cur
                current = cand
                obj_cur = obj_new
                result.progressed = result.progressed or moved > 1e-12
                radius = min(radius * trust.grow, trust.radius)
                if improvement <= tol * max(1.0, abs(obj_cur)) or moved < 1e-12:
                    converged_now = True

        result.trace.append(
            PositionTraceRow(
                iteration=it,
                anchor=anchor_used,
                surrogate_objective=surrogate_val,
                exact_objective=obj_cur,
                accepted=accepted,
                radius=radius,
                slack=slack,
            )
        )
        if converged_now:
            result.converged = True
            break
        if not accepted:
            radius *= trust.shrink
            if radius < min_radius:
                break

    result.layout = candidate_layout(current)
    result.objective = obj_cur
    return result
