import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cosim.dae import SemiExplicitSystem
from cosim.errors import GridMismatch, NewtonDiverged
from cosim.integrate import IntegratorConfig, integrate_window, newton_solve, step

from oracles import bisect


def ode(rhs, y0):
    return SemiExplicitSystem("ode", len(y0), 0, lambda t, y, z, u: rhs(t, y), lambda t, y, z, u: np.zeros(0), y0, [])


def decay():
    return ode(lambda t, y: -y, [1.0])


class TestNewton:
    def test_square_root(self):
        x = newton_solve(lambda x: x**2 - 4.0, [3.0])
        assert x[0] == pytest.approx(2.0, abs=1e-10)

    def test_linear_in_one_iteration(self):
        A = np.array([[3.0, 1.0], [1.0, 2.0]])
        b = np.array([1.0, -1.0])
        stats = {}
        x = newton_solve(lambda x: A @ x - b, np.zeros(2), IntegratorConfig(newton_tol=1e-12), jacobian=lambda x: A, stats=stats)
        np.testing.assert_allclose(x, np.linalg.solve(A, b), atol=1e-14)
        assert stats["iterations"] == 1

    def test_damping_rescues_arctan(self):
        # undamped Newton on atan diverges from |x0| > 1.39
        x = newton_solve(lambda x: np.arctan(x), [3.0])
        assert abs(x[0]) <= 1e-10

    def test_raises_with_last_iterate(self):
        with pytest.raises(NewtonDiverged) as info:
            newton_solve(lambda x: x**2 + 1.0, [1.0], IntegratorConfig(newton_max=5))
        assert info.value.x is not None
        assert info.value.residual_norm >= 1.0


class TestStep:
    def test_implicit_euler_decay(self):
        y, _ = step(decay(), 0.0, [1.0], [], None, IntegratorConfig(h=0.1, newton_tol=1e-14))
        assert y[0] == pytest.approx(1.0 / 1.1, abs=1e-12)

    def test_trapezoidal_decay(self):
        y, _ = step(decay(), 0.0, [1.0], [], None, IntegratorConfig("trapezoidal", h=0.1, newton_tol=1e-14))
        assert y[0] == pytest.approx(0.95 / 1.05, abs=1e-12)

    def test_algebraic_follows_differential(self):
        sys = SemiExplicitSystem("s", 1, 1, lambda t, y, z, u: -z, lambda t, y, z, u: z - y, [1.0], [1.0])
        y, z = step(sys, 0.0, [1.0], [1.0], None, IntegratorConfig(h=0.1))
        assert z[0] == pytest.approx(y[0], abs=1e-12)

    def test_nonlinear_cubic_against_bisection(self):
        h = 0.5
        y, _ = step(ode(lambda t, y: -y**3, [1.0]), 0.0, [1.0], [], None, IntegratorConfig(h=h, newton_tol=1e-14))
        ref = bisect(lambda v: v - 1.0 + h * v**3, 0.0, 1.0)
        assert y[0] == pytest.approx(ref, abs=1e-12)


def test_decay_to_one_over_e():
    tr = integrate_window(decay(), (0.0, 1.0), None, IntegratorConfig("trapezoidal", h=1e-3, newton_tol=1e-14))
    assert tr.final_y[0] == pytest.approx(math.exp(-1.0), abs=1e-6)


@pytest.mark.parametrize("method, order", [("implicit-euler", 1.0), ("trapezoidal", 2.0)])
def test_convergence_order(method, order):
    hs = np.array([0.1, 0.05, 0.025, 0.0125])
    errs = []
    for h in hs:
        tr = integrate_window(decay(), (0.0, 1.0), None, IntegratorConfig(method, h=h, newton_tol=1e-14))
        errs.append(abs(tr.final_y[0] - math.exp(-1.0)))
    slope = np.polyfit(np.log(hs), np.log(errs), 1)[0]
    assert slope == pytest.approx(order, abs=0.1)


def test_trapezoidal_conserves_oscillator_energy():
    sys = ode(lambda t, y: np.array([y[1], -y[0]]), [1.0, 0.0])
    tr = integrate_window(sys, (0.0, 20.0), None, IntegratorConfig("trapezoidal", h=0.1, newton_tol=1e-14))
    energy = np.sum(tr.y**2, axis=1)
    np.testing.assert_allclose(energy, 1.0, atol=1e-10)


def test_implicit_euler_dissipates_oscillator_energy():
    sys = ode(lambda t, y: np.array([y[1], -y[0]]), [1.0, 0.0])
    tr = integrate_window(sys, (0.0, 5.0), None, IntegratorConfig(h=0.1))
    assert np.all(np.diff(np.sum(tr.y**2, axis=1)) < 0)


def test_grid_mismatch():
    with pytest.raises(GridMismatch):
        integrate_window(decay(), (0.0, 1.0), None, IntegratorConfig(h=0.3))


def test_bad_config():
    with pytest.raises(ValueError):
        IntegratorConfig(method="rk4")
    with pytest.raises(ValueError):
        IntegratorConfig(h=0.0)


def test_inputs_enter_at_new_time():
    sys = SemiExplicitSystem("u", 1, 0, lambda t, y, z, u: u["s"], lambda t, y, z, u: np.zeros(0), [0.0], [])
    y, _ = step(sys, 0.0, [0.0], [], {"s": lambda t: np.array([t])}, IntegratorConfig(h=0.5))
    assert y[0] == pytest.approx(0.25)


def test_deterministic():
    sys = ode(lambda t, y: np.array([y[1], -np.sin(y[0])]), [1.0, 0.0])
    cfg = IntegratorConfig("trapezoidal", h=0.05)
    a = integrate_window(sys, (0.0, 2.0), None, cfg)
    b = integrate_window(sys, (0.0, 2.0), None, cfg)
    assert np.array_equal(a.y, b.y)


@settings(max_examples=20, deadline=None)
@given(lam=st.floats(0.1, 50.0), h=st.sampled_from([0.01, 0.1, 0.5]))
def test_implicit_euler_is_stable_and_monotone(lam, h):
    tr = integrate_window(ode(lambda t, y: -lam * y, [1.0]), (0.0, 2.0), None, IntegratorConfig(h=h, newton_tol=1e-13))
    assert np.all(np.diff(tr.y[:, 0]) <= 0) and np.all(tr.y[:, 0] > 0)
    np.testing.assert_allclose(tr.final_y[0], (1.0 + lam * h) ** -round(2.0 / h), rtol=1e-9, atol=1e-12)
