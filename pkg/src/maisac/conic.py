"""Solver-agnostic conic programs over linear, second-order, and PSD cones.

Programs are built against a named-variable registry and lowered to a real
conic solver at solve time.  Hermitian matrix variables are represented
internally as real symmetric matrices of doubled dimension through the
standard realification ``[[Re, -Im], [Im, Re]]``, which is bijective and
PSD-preserving; traces double under the map, so linear functionals carry a
factor 1/2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import cvxpy as cp
import numpy as np

from .errors import ProgramBuildError

DEFAULT_TOL = 1e-8
FEASIBILITY_SLACK = 1e-7

STATUS_OPTIMAL = "optimal"
STATUS_INFEASIBLE = "infeasible"
STATUS_UNBOUNDED = "unbounded"
STATUS_NUMERICAL = "numerical-limit"


def realify(herm: np.ndarray) -> np.ndarray:
    """Map a Hermitian matrix to its 2n x 2n real symmetric realification.

    Eigenvalues are preserved with multiplicity doubled, hence the trace
    doubles.  Raises for inputs that are not Hermitian to 1e-10.
    """
    herm = np.asarray(herm, dtype=complex)
    if herm.ndim != 2 or herm.shape[0] != herm.shape[1]:
        raise ProgramBuildError("realify expects a square matrix")
    if not np.allclose(herm, herm.conj().T, atol=1e-10):
        raise ProgramBuildError("realify expects a Hermitian matrix (tol 1e-10)")
    re, im = herm.real, herm.imag
    return np.block([[re, -im], [im, re]])


def derealify(mat: np.ndarray) -> np.ndarray:
    """Inverse of :func:`realify` (averages the redundant blocks)."""
    mat = np.asarray(mat, dtype=float)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1] or mat.shape[0] % 2:
        raise ProgramBuildError("derealify expects an even-dimension square matrix")
    n = mat.shape[0] // 2
    re = 0.5 * (mat[:n, :n] + mat[n:, n:])
    im = 0.5 * (mat[n:, :n] - mat[:n, n:])
    herm = re + 1j * im
    return 0.5 * (herm + herm.conj().T)


class LinExpr:
    """Real-valued affine expression over registered variables.

    Coefficients are floats for scalar variables and Hermitian matrices for
    Hermitian-matrix variables (meaning ``tr(A @ W)``).
    """

    __slots__ = ("terms", "const")

    def __init__(self, terms=None, const=0.0):
        self.terms = dict(terms or {})
        self.const = float(const)

    def _combine(self, other, sign):
        out = LinExpr(self.terms, self.const)
        if isinstance(other, LinExpr):
            for name, coeff in other.terms.items():
                if name in out.terms:
                    out.terms[name] = out.terms[name] + sign * coeff
                else:
                    out.terms[name] = sign * coeff
            out.const += sign * other.const
        else:
            out.const += sign * float(other)
        return out

    def __add__(self, other):
        return self._combine(other, 1.0)

    __radd__ = __add__

    def __sub__(self, other):
        return self._combine(other, -1.0)

    def __rsub__(self, other):
        return LinExpr({k: -v for k, v in self.terms.items()}, float(other) - self.const)

    def __neg__(self):
        return LinExpr({k: -v for k, v in self.terms.items()}, -self.const)

    def __mul__(self, scale):
        scale = float(scale)
        return LinExpr({k: v * scale for k, v in self.terms.items()}, self.const * scale)

    __rmul__ = __mul__

    def __truediv__(self, scale):
        return self * (1.0 / float(scale))

    def evaluate(self, values: dict) -> float:
        total = self.const
        for name, coeff in self.terms.items():
            val = values[name]
            if np.ndim(coeff) == 2:
                total += float(np.trace(np.asarray(coeff) @ np.asarray(val)).real)
            else:
                total += float(coeff) * float(val)
        return total


@dataclass
class ConicSolution:
    """Solver output: termination status, variable values, objective."""

    status: str
    values: dict = field(default_factory=dict)
    objective: float | None = None
    iterations: int | None = None

    @property
    def optimal(self) -> bool:
        return self.status == STATUS_OPTIMAL

    def vector(self, name: str, n: int) -> np.ndarray:
        return np.array([self.values[f"{name}[{i}]"] for i in range(n)])


class ConicProgram:
    """Convex program over scalars and Hermitian matrix variables.

    Constraint kinds: linear equality/inequality, second-order cone, rotated
    second-order cone, and PSD membership of Hermitian variables.
    """

    def __init__(self):
        self._scalars: dict[str, bool] = {}  # name -> nonneg flag
        self._hermitians: dict[str, int] = {}  # name -> dimension
        self._psd: set[str] = set()
        self._constraints: list[tuple] = []
        self._objective: tuple[str, LinExpr] | None = None

    # ------------------------------------------------------------------ vars
    def scalar(self, name: str, nonneg: bool = False) -> LinExpr:
        if name in self._scalars or name in self._hermitians:
            raise ProgramBuildError(f"variable {name!r} already registered")
        self._scalars[name] = nonneg
        return LinExpr({name: 1.0})

    def scalars(self, name: str, n: int, nonneg: bool = False) -> list[LinExpr]:
        return [self.scalar(f"{name}[{i}]", nonneg=nonneg) for i in range(n)]

    def hermitian(self, name: str, dim: int, psd: bool = True) -> str:
        if name in self._scalars or name in self._hermitians:
            raise ProgramBuildError(f"variable {name!r} already registered")
        if dim < 1:
            raise ProgramBuildError("hermitian dimension must be >= 1")
        self._hermitians[name] = int(dim)
        if psd:
            self._psd.add(name)
        return name

    def _check_herm(self, name: str) -> int:
        if name not in self._hermitians:
            raise ProgramBuildError(f"unknown Hermitian variable {name!r}")
        return self._hermitians[name]

    def trace_real(self, coeff: np.ndarray, name: str) -> LinExpr:
        """Affine functional Re tr(coeff @ W) of Hermitian variable ``name``."""
        dim = self._check_herm(name)
        coeff = np.asarray(coeff, dtype=complex)
        if coeff.shape != (dim, dim):
            raise ProgramBuildError(
                f"coefficient shape {coeff.shape} mismatches variable "
                f"{name!r} of dimension {dim}"
            )
        herm_part = 0.5 * (coeff + coeff.conj().T)
        return LinExpr({name: herm_part})

    def trace_imag(self, coeff: np.ndarray, name: str) -> LinExpr:
        """Affine functional Im tr(coeff @ W) of Hermitian variable ``name``."""
        dim = self._check_herm(name)
        coeff = np.asarray(coeff, dtype=complex)
        if coeff.shape != (dim, dim):
            raise ProgramBuildError("coefficient shape mismatch")
        skew_part = (coeff - coeff.conj().T) / 2j
        return LinExpr({name: skew_part})

    # ----------------------------------------------------------- constraints
    def _as_expr(self, value) -> LinExpr:
        if isinstance(value, LinExpr):
            self._check_expr(value)
            return value
        return LinExpr(const=float(value))

    def _check_expr(self, expr: LinExpr):
        for name in expr.terms:
            if name not in self._scalars and name not in self._hermitians:
                raise ProgramBuildError(f"expression references unknown variable {name!r}")

    def eq(self, lhs, rhs):
        self._constraints.append(("eq", self._as_expr(lhs) - self._as_expr(rhs)))

    def ge(self, lhs, rhs):
        """lhs >= rhs"""
        self._constraints.append(("ineq", self._as_expr(lhs) - self._as_expr(rhs)))

    def le(self, lhs, rhs):
        self.ge(rhs, lhs)

    def soc(self, bound, elements):
        """||elements||_2 <= bound."""
        bound = self._as_expr(bound)
        elements = [self._as_expr(e) for e in elements]
        self._constraints.append(("soc", bound, elements))

    def rsoc(self, u, v, elements):
        """||elements||_2^2 <= 2*u*v with u, v >= 0."""
        u = self._as_expr(u)
        v = self._as_expr(v)
        elements = [self._as_expr(e) for e in elements]
        self._constraints.append(("rsoc", u, v, elements))

    def product_lower_bound(self, a, b, c, bound: float = 1.0):
        """Constrain a*b*c >= bound for nonnegative affine a, b, c.

        Encoded with the rotated-cone tower  u^2 <= a*b,  w^2 <= c*g,
        g^2 <= u*w,  g >= bound^(1/3), which is exact for the geometric mean.
        """
        if bound <= 0:
            raise ProgramBuildError("product bound must be positive")
        tag = f"_gm{len(self._constraints)}"
        u = self.scalar(tag + "_u", nonneg=True)
        w = self.scalar(tag + "_w", nonneg=True)
        g = self.scalar(tag + "_g", nonneg=True)
        a, b, c = self._as_expr(a), self._as_expr(b), self._as_expr(c)
        self.rsoc(a * 0.5, b, [u])
        self.rsoc(c * 0.5, g, [w])
        self.rsoc(u * 0.5, w, [g])
        self.ge(g, bound ** (1.0 / 3.0))

    def psd(self, name: str):
        self._check_herm(name)
        self._psd.add(name)

    def maximize(self, expr):
        self._objective = ("max", self._as_expr(expr))

    def minimize(self, expr):
        self._objective = ("min", self._as_expr(expr))

    # ----------------------------------------------------------------- solve
    def _split(self, expr: LinExpr, index: dict):
        """LinExpr -> (dense row over scalar vars, {herm name: coeff}, const)."""
        row = np.zeros(len(index))
        herm = {}
        for name, coeff in expr.terms.items():
            if name in self._hermitians:
                herm[name] = coeff
            else:
                row[index[name]] = float(coeff)
        return row, herm, expr.const

    def _cvx_of(self, expr: LinExpr, index, svec, herm_vars):
        row, herm, const = self._split(expr, index)
        out = const
        if np.any(row):
            out = out + row @ svec
        for name, coeff in herm.items():
            # tr(A W) = tr(realify(A) M) / 2 on the realified variable.
            out = out + cp.sum(cp.multiply(realify(coeff), herm_vars[name])) / 2
        return out

    def _row_of(self, expr: LinExpr, index):
        row, herm, const = self._split(expr, index)
        if herm:
            raise ProgramBuildError(
                "cone elements must not reference matrix variables directly; "
                "tie them to scalars with an equality first"
            )
        return row, const

    def solve(self, tol: float = DEFAULT_TOL, solver: str | None = None,
              scs_fallback: bool = True) -> ConicSolution:
        """Solve the program; never raises on solver failure.

        Tries CLARABEL first, falling back to SCS unless ``scs_fallback`` is
        off (iterative callers that treat failures as probes skip it).
        ``tol`` is passed to the solver's gap/feasibility tolerances.  All
        scalar variables are packed into one solver vector and linear
        constraints are stacked into single matrix rows, which keeps
        model-building overhead flat.
        """
        if self._objective is None:
            raise ProgramBuildError("objective not set")
        index = {name: i for i, name in enumerate(self._scalars)}
        k = len(index)
        svec = cp.Variable(k) if k else None
        herm_vars = {}
        constraints = []
        for name, dim in self._hermitians.items():
            mat = cp.Variable((2 * dim, 2 * dim), symmetric=True)
            herm_vars[name] = mat
            # Realified block structure [[X, -Y], [Y, X]] with Y antisymmetric.
            constraints.append(mat[dim:, dim:] == mat[:dim, :dim])
            constraints.append(mat[:dim, dim:] + mat[:dim, dim:].T == 0)
            if name in self._psd:
                constraints.append(mat >> 0)

        # Linear rows are stacked: plain rows in bulk, matrix-coupled rows solo.
        eq_rows, eq_consts = [], []
        ineq_rows, ineq_consts = [], []
        for name, nonneg in self._scalars.items():
            if nonneg:
                row = np.zeros(k)
                row[index[name]] = 1.0
                ineq_rows.append(row)
                ineq_consts.append(0.0)
        for con in self._constraints:
            kind = con[0]
            if kind in ("eq", "ineq"):
                row, herm, const = self._split(con[1], index)
                if herm:
                    expr = self._cvx_of(con[1], index, svec, herm_vars)
                    constraints.append(expr == 0 if kind == "eq" else expr >= 0)
                elif kind == "eq":
                    eq_rows.append(row)
                    eq_consts.append(const)
                else:
                    ineq_rows.append(row)
                    ineq_consts.append(const)
            elif kind == "soc":
                brow, bconst = self._row_of(con[1], index)
                elem_rows = [self._row_of(e, index) for e in con[2]]
                mat = np.vstack([r for r, _ in elem_rows])
                cvec = np.array([c for _, c in elem_rows])
                bound = bconst + (brow @ svec if svec is not None else 0.0)
                constraints.append(cp.SOC(bound, mat @ svec + cvec))
            elif kind == "rsoc":
                urow, uconst = self._row_of(con[1], index)
                vrow, vconst = self._row_of(con[2], index)
                elem_rows = [self._row_of(e, index) for e in con[3]]
                # ||z||^2 <= 2uv  <=>  ||(u - v, sqrt(2) z)|| <= u + v, u,v >= 0
                mat = np.vstack([urow - vrow] + [math.sqrt(2.0) * r for r, _ in elem_rows])
                cvec = np.array([uconst - vconst] + [math.sqrt(2.0) * c for _, c in elem_rows])
                bound = (uconst + vconst) + ((urow + vrow) @ svec if svec is not None else 0.0)
                constraints.append(cp.SOC(bound, mat @ svec + cvec))
                ineq_rows.extend([urow, vrow])
                ineq_consts.extend([uconst, vconst])
            else:  # pragma: no cover
                raise ProgramBuildError(f"unknown constraint kind {kind!r}")
        if eq_rows:
            constraints.append(np.vstack(eq_rows) @ svec + np.array(eq_consts) == 0)
        if ineq_rows:
            constraints.append(np.vstack(ineq_rows) @ svec + np.array(ineq_consts) >= 0)

        sense, expr = self._objective
        objective = self._cvx_of(expr, index, svec, herm_vars)
        problem = cp.Problem(
            cp.Maximize(objective) if sense == "max" else cp.Minimize(objective),
            constraints,
        )

        if solver:
            attempts = [(solver, {})]
        else:
            relaxed = max(tol * 10, 1e-8)
            attempts = [
                ("CLARABEL", dict(tol_gap_abs=tol, tol_gap_rel=tol,
                                  tol_feas=tol, max_iter=200)),
                ("CLARABEL", dict(tol_gap_abs=relaxed, tol_gap_rel=relaxed,
                                  tol_feas=relaxed, max_iter=400)),
            ]
            if scs_fallback:
                attempts.append(("SCS", dict(eps=max(tol, 1e-8), max_iters=25000)))
        status = STATUS_NUMERICAL
        for name, options in attempts:
            try:
                problem.solve(solver=name, **options)
            except (cp.error.SolverError, cp.error.DCPError, ValueError):
                continue
            status = self._map_status(problem.status)
            if status != STATUS_NUMERICAL:
                break

        solution = ConicSolution(status=status)
        if problem.solver_stats is not None:
            solution.iterations = problem.solver_stats.num_iters
        if status == STATUS_OPTIMAL:
            solution.objective = float(problem.value)
            if svec is not None and svec.value is not None:
                for name, i in index.items():
                    solution.values[name] = float(svec.value[i])
            for name in self._hermitians:
                solution.values[name] = derealify(herm_vars[name].value)
        return solution

    @staticmethod
    def _map_status(status: str) -> str:
        if status == cp.OPTIMAL:
            return STATUS_OPTIMAL
        if status in (cp.INFEASIBLE, cp.INFEASIBLE_INACCURATE):
            return STATUS_INFEASIBLE
        if status in (cp.UNBOUNDED, cp.UNBOUNDED_INACCURATE):
            return STATUS_UNBOUNDED
        return STATUS_NUMERICAL

    # ------------------------------------------------------------ diagnostics
    def feasibility_residual(self, values: dict) -> float:
        """Largest constraint violation at the given variable values."""
        worst = 0.0
        for con in self._constraints:
            kind = con[0]
            if kind == "eq":
                worst = max(worst, abs(con[1].evaluate(values)))
            elif kind == "ineq":
                worst = max(worst, -min(0.0, con[1].evaluate(values)))
            elif kind == "soc":
                norm = math.hypot(*[e.evaluate(values) for e in con[2]])
                worst = max(worst, norm - con[1].evaluate(values))
            elif kind == "rsoc":
                u = con[1].evaluate(values)
                v = con[2].evaluate(values)
                sq = sum(e.evaluate(values) ** 2 for e in con[3])
                worst = max(worst, sq - 2 * u * v, -u, -v)
        for name in self._psd:
            eigs = np.linalg.eigvalsh(values[name])
            worst = max(worst, -float(eigs[0]))
        return worst

    def dump(self) -> str:
        """Plain-text standard-form listing for external verification."""
        lines = ["# conic program"]
        for name, nonneg in self._scalars.items():
            lines.append(f"var {name} : scalar{' >= 0' if nonneg else ''}")
        for name, dim in self._hermitians.items():
            psd = " (psd)" if name in self._psd else ""
            lines.append(f"var {name} : hermitian {dim}x{dim}{psd}")
        if self._objective:
            sense, expr = self._objective
            lines.append(f"{sense} {_format_expr(expr)}")
        for con in self._constraints:
            kind = con[0]
            if kind == "eq":
                lines.append(f"  eq   : {_format_expr(con[1])} == 0")
            elif kind == "ineq":
                lines.append(f"  ineq : {_format_expr(con[1])} >= 0")
            elif kind == "soc":
                elems = ", ".join(_format_expr(e) for e in con[2])
                lines.append(f"  soc  : ||[{elems}]|| <= {_format_expr(con[1])}")
            elif kind == "rsoc":
                elems = ", ".join(_format_expr(e) for e in con[3])
                lines.append(
                    f"  rsoc : ||[{elems}]||^2 <= 2 * ({_format_expr(con[1])})"
                    f" * ({_format_expr(con[2])})"
                )
        return "\n".join(lines)


def _format_expr(expr: LinExpr) -> str:
    parts = []
    for name, coeff in expr.terms.items():
        if np.ndim(coeff) == 2:
            parts.append(f"tr(A@{name})")
        else:
            parts.append(f"{float(coeff):+.6g}*{name}")
    if expr.const or not parts:
        parts.append(f"{expr.const:+.6g}")
    return " ".join(parts)
