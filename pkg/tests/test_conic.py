import math

import numpy as np
import pytest

from maisac import ConicProgram, ProgramBuildError, derealify, realify
from maisac.conic import STATUS_INFEASIBLE, STATUS_OPTIMAL, STATUS_UNBOUNDED


class TestRealify:
    def test_identity(self):
        np.testing.assert_allclose(realify(np.eye(2)), np.eye(4), atol=1e-14)

    def test_pauli_y_eigenvalues(self):
        herm = np.array([[0.0, -1j], [1j, 0.0]])
        mat = realify(herm)
        eigs = np.sort(np.linalg.eigvalsh(mat))
        np.testing.assert_allclose(eigs, [-1.0, -1.0, 1.0, 1.0], atol=1e-12)

    def test_eigenvalues_doubled_and_trace(self):
        rng = np.random.default_rng(0)
        for _ in range(10):
            a = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
            herm = 0.5 * (a + a.conj().T)
            mat = realify(herm)
            herm_eigs = np.sort(np.linalg.eigvalsh(herm))
            real_eigs = np.sort(np.linalg.eigvalsh(mat))
            np.testing.assert_allclose(real_eigs, np.repeat(herm_eigs, 2), atol=1e-10)
            assert math.isclose(np.trace(mat), 2 * np.trace(herm).real, abs_tol=1e-12)

    def test_roundtrip(self):
        rng = np.random.default_rng(1)
        a = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
        herm = 0.5 * (a + a.conj().T)
        np.testing.assert_allclose(derealify(realify(herm)), herm, atol=1e-12)

    def test_rejects_non_hermitian(self):
        with pytest.raises(ProgramBuildError):
            realify(np.array([[0.0, 1.0], [0.0, 0.0]]))


class TestSolve:
    def test_scalar_lp(self):
        prog = ConicProgram()
        t = prog.scalar("t")
        prog.ge(t, 5.0)
        prog.minimize(t)
        sol = prog.solve()
        assert sol.status == STATUS_OPTIMAL
        assert math.isclose(sol.values["t"], 5.0, abs_tol=1e-7)

    def test_psd_trace(self):
        prog = ConicProgram()
        prog.hermitian("X", 3, psd=True)
        e11 = np.zeros((3, 3))
        e11[0, 0] = 1.0
        prog.eq(prog.trace_real(e11, "X"), 3.0)
        prog.minimize(prog.trace_real(np.eye(3), "X"))
        sol = prog.solve()
        assert sol.status == STATUS_OPTIMAL
        assert math.isclose(sol.objective, 3.0, abs_tol=1e-6)
        expected = np.diag([3.0, 0.0, 0.0]).astype(complex)
        np.testing.assert_allclose(sol.values["X"], expected, atol=1e-5)

    def test_rotated_cone(self):
        # maximize s subject to s^2 <= 2 u v at u = v = 2 -> s* = 2*sqrt(2)
        prog = ConicProgram()
        s = prog.scalar("s")
        u = prog.scalar("u")
        v = prog.scalar("v")
        prog.eq(u, 2.0)
        prog.eq(v, 2.0)
        prog.rsoc(u, v, [s])
        prog.maximize(s)
        sol = prog.solve()
        assert sol.status == STATUS_OPTIMAL
        assert math.isclose(sol.values["s"], 2.0 * math.sqrt(2.0), rel_tol=1e-6)

    def test_soc(self):
        prog = ConicProgram()
        x = prog.scalar("x")
        y = prog.scalar("y")
        prog.soc(2.0, [x - 1.0, y])
        prog.maximize(x + 0.0 * y)
        sol = prog.solve()
        assert math.isclose(sol.values["x"], 3.0, abs_tol=1e-6)

    def test_product_lower_bound(self):
        # minimize a + b + c subject to a*b*c >= 8 -> 2, 2, 2
        prog = ConicProgram()
        a = prog.scalar("a", nonneg=True)
        b = prog.scalar("b", nonneg=True)
        c = prog.scalar("c", nonneg=True)
        prog.product_lower_bound(a, b, c, 8.0)
        prog.minimize(a + b + c)
        sol = prog.solve()
        assert sol.status == STATUS_OPTIMAL
        assert math.isclose(sol.objective, 6.0, rel_tol=1e-5)

    def test_infeasible_detected(self):
        prog = ConicProgram()
        t = prog.scalar("t")
        prog.ge(t, 5.0)
        prog.le(t, 4.0)
        prog.minimize(t)
        assert prog.solve().status == STATUS_INFEASIBLE

    def test_unbounded_detected(self):
        prog = ConicProgram()
        t = prog.scalar("t")
        prog.ge(t, 0.0)
        prog.maximize(t)
        assert prog.solve().status == STATUS_UNBOUNDED

    def test_complex_objective_matches_hand_realified(self):
        # maximize Re tr(C W), tr(W) <= 1, W psd, with C Hermitian:
        # optimum is the largest eigenvalue of C.
        rng = np.random.default_rng(2)
        a = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
        herm = 0.5 * (a + a.conj().T)
        prog = ConicProgram()
        prog.hermitian("W", 3, psd=True)
        prog.le(prog.trace_real(np.eye(3), "W"), 1.0)
        prog.maximize(prog.trace_real(herm, "W"))
        sol = prog.solve()
        lam_max = float(np.linalg.eigvalsh(herm)[-1])
        assert math.isclose(sol.objective, lam_max, rel_tol=1e-6)
        # returned value is Hermitian PSD
        back = sol.values["W"]
        np.testing.assert_allclose(back, back.conj().T, atol=1e-9)
        assert np.linalg.eigvalsh(back)[0] >= -1e-7

    def test_trace_imag_functional(self):
        rng = np.random.default_rng(3)
        prog = ConicProgram()
        prog.hermitian("W", 2, psd=True)
        coeff = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
        prog.le(prog.trace_real(np.eye(2), "W"), 1.0)
        re = prog.scalar("re")
        im = prog.scalar("im")
        prog.eq(re, prog.trace_real(coeff, "W"))
        prog.eq(im, prog.trace_imag(coeff, "W"))
        prog.maximize(im)
        sol = prog.solve()
        val = complex(np.trace(coeff @ sol.values["W"]))
        assert math.isclose(sol.values["re"], val.real, abs_tol=1e-6)
        assert math.isclose(sol.values["im"], val.imag, abs_tol=1e-6)

    def test_feasibility_residual(self):
        prog = ConicProgram()
        t = prog.scalar("t")
        prog.ge(t, 5.0)
        prog.minimize(t)
        sol = prog.solve()
        assert prog.feasibility_residual(sol.values) <= 1e-7

    def test_unknown_variable_rejected(self):
        prog = ConicProgram()
        prog.scalar("t")
        other = ConicProgram()
        x = other.scalar("x")
        with pytest.raises(ProgramBuildError):
            prog.ge(x, 0.0)

    def test_duplicate_name_rejected(self):
        prog = ConicProgram()
        prog.scalar("t")
        with pytest.raises(ProgramBuildError):
            prog.scalar("t")

    def test_dump_lists_structure(self):
        prog = ConicProgram()
        t = prog.scalar("t", nonneg=True)
        prog.hermitian("W", 2, psd=True)
        prog.rsoc(t, 1.0, [t - 1.0])
        prog.maximize(t)
        text = prog.dump()
        assert "var t : scalar >= 0" in text
        assert "hermitian 2x2 (psd)" in text
        assert "rsoc" in text
