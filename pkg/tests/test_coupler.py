import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cosim.coupler import (
    CoupledProblem,
    Connection,
    DynamicIteration,
    Monolithic,
    OneWay,
    WeakSync,
    estimate_contraction,
    run,
    stacked_algebraic_jacobian,
    sup_deviation,
    suggest_order,
)
from cosim.dae import PortKind, SemiExplicitSystem, in_port, out_port
from cosim.errors import CycleDetected, GridMismatch, IterationDiverged, WiringError
from cosim.integrate import IntegratorConfig
from cosim.testsystems import decoupled_pair, lin2, lin2_monolithic_z, triangular3
from cosim.waveform import Waveform

from oracles import gauss_seidel_error_map, power_spectral_norm

CFG = IntegratorConfig(h=0.01, newton_tol=1e-12)


def block(name, ins=(), outs=("y",), dim=1):
    return SemiExplicitSystem(
        name, 1, 0,
        f=lambda t, y, z, u: -y,
        g=lambda t, y, z, u: np.zeros(0),
        y0=[1.0], z0=[],
        input_ports=[in_port(p, PortKind.SOURCE_TERM, dim) for p in ins],
        output_ports=[out_port(p, PortKind.SOURCE_TERM) for p in outs],
        output=lambda t, y, z: {"y": y},
    )


class TestWiring:
    def test_parse(self):
        c = Connection.parse("A.y -> B.u")
        assert (c.source, c.output, c.target, c.input) == ("A", "y", "B", "u")

    @pytest.mark.parametrize("text", ["A.y B.u", "Ay -> B.u", "A.y -> Bu"])
    def test_parse_errors(self, text):
        with pytest.raises(WiringError):
            Connection.parse(text)

    def test_unknown_subsystem(self):
        with pytest.raises(WiringError, match="unknown subsystem"):
            CoupledProblem([block("A")], ["A.y -> B.u"])

    def test_unknown_port(self):
        with pytest.raises(WiringError, match="no output port"):
            CoupledProblem([block("A"), block("B", ["u"])], ["A.q -> B.u"])

    def test_unconnected_input(self):
        with pytest.raises(WiringError, match="not connected"):
            CoupledProblem([block("A"), block("B", ["u"])], [])

    def test_double_connection(self):
        with pytest.raises(WiringError, match="twice"):
            CoupledProblem([block("A"), block("C"), block("B", ["u"])], ["A.y -> B.u", "C.y -> B.u"])

    def test_dimension_mismatch(self):
        with pytest.raises(WiringError, match="dimension"):
            CoupledProblem([block("A"), block("B", ["u"], dim=2)], ["A.y -> B.u"])

    def test_duplicate_names(self):
        with pytest.raises(WiringError):
            CoupledProblem([block("A"), block("A")])

    def test_topological_order_and_cycle(self):
        p = CoupledProblem([block("B", ["u"]), block("A")], ["A.y -> B.u"])
        assert p.topological_order() == ["A", "B"]
        with pytest.raises(CycleDetected):
            lin2().topological_order()

    def test_bad_order(self):
        with pytest.raises(WiringError):
            lin2().check_order(["S1", "S3"])


class TestModes:
    def test_monolithic_matches_elimination(self):
        a, b = 0.5, 1.0
        res = run(lin2(a, b), Monolithic(), 1.0, CFG)
        z1, z2 = lin2_monolithic_z(res.trajectories["S1"].y[:, 0], res.trajectories["S2"].y[:, 0], a, b)
        np.testing.assert_allclose(res.trajectories["S1"].z[:, 0], z1, atol=1e-11)
        np.testing.assert_allclose(res.trajectories["S2"].z[:, 0], z2, atol=1e-11)

    def test_g_residual_on_every_node(self):
        p = lin2(0.5, 1.0, c1=0.3)
        res = run(p, DynamicIteration(0.1, tol=1e-11), 1.0, CFG)
        for name, tr in res.trajectories.items():
            other = "S2" if name == "S1" else "S1"
            o = res.trajectories[other]
            inputs = {"z_in": Waveform(o.t, o.z)}
            if name == "S1":
                inputs["y_in"] = Waveform(o.t, o.y)
            assert tr.g_residual(p.by_name[name], inputs) <= 1e-10

    @pytest.mark.parametrize("sweep", ["gauss-seidel", "jacobi"])
    def test_dynamic_iteration_reaches_monolithic(self, sweep):
        p = lin2(0.5, 0.6, c1=0.2, c2=-0.1)
        ref = run(p, Monolithic(), 1.0, CFG).trajectories
        res = run(p, DynamicIteration(0.1, sweep=sweep, k_max=80, tol=1e-10), 1.0, CFG)
        assert res.convergence.all_converged
        assert sup_deviation(ref, res.trajectories) <= 1e-9

    def test_jacobi_threads_identical(self):
        p = lin2(0.5, 0.6, c1=0.2)
        a = run(p, DynamicIteration(0.2, sweep="jacobi"), 1.0, CFG).trajectories
        b = run(p, DynamicIteration(0.2, sweep="jacobi"), 1.0, CFG, workers=2).trajectories
        for n in a:
            assert np.array_equal(a[n].z, b[n].z)

    def test_one_way_needs_acyclic_wiring(self):
        with pytest.raises(CycleDetected):
            run(lin2(), OneWay(), 1.0, CFG)
        run(lin2(), OneWay(freeze_feedback=True), 1.0, CFG)

    def test_one_way_exact_for_triangular(self):
        p = triangular3()
        ref = run(p, Monolithic(), 1.0, CFG).trajectories
        res = run(p, OneWay(), 1.0, CFG).trajectories
        assert sup_deviation(ref, res) <= 1e-10

    def test_weak_error_shrinks_with_sync_step(self):
        p = lin2(0.5, 0.5, c1=0.5, c2=0.5)
        ref = run(p, Monolithic(), 1.0, CFG).trajectories
        devs = [sup_deviation(ref, run(p, WeakSync(s), 1.0, CFG).trajectories) for s in (0.2, 0.1, 0.05)]
        assert devs[0] > devs[1] > devs[2] > 0

    def test_weak_reports_lag(self):
        res = run(lin2(0.5, 0.5), WeakSync(0.1), 1.0, CFG)
        assert len(res.weak.lags) == 10
        assert res.weak.lag_converging

    def test_window_must_tile(self):
        with pytest.raises(GridMismatch):
            run(lin2(), DynamicIteration(0.3), 1.0, CFG)

    def test_divergence_raises(self):
        with pytest.raises(IterationDiverged) as info:
            run(lin2(1.5, 1.0), DynamicIteration(0.05, k_max=50), 0.1, CFG)
        assert info.value.contraction_factor > 1.0

    def test_pure_ode_coupling_has_zero_contraction(self):
        p = lin2(0.0, 0.0, c1=0.5, c2=0.5)
        assert estimate_contraction(p, None) == 0.0
        res = run(p, DynamicIteration(0.1, tol=1e-10), 1.0, CFG)
        assert res.convergence.all_converged

    def test_decoupled_converges_in_two_sweeps(self):
        res = run(decoupled_pair(), DynamicIteration(0.5, tol=1e-12), 1.0, CFG)
        assert max(res.convergence.iterations) <= 2


class TestContraction:
    @settings(max_examples=30, deadline=None)
    @given(a=st.floats(-2, 2), b=st.floats(-2, 2))
    def test_gauss_seidel_matches_oracle(self, a, b):
        if abs(1 - a * b) < 0.1:
            return
        p = lin2(a, b)
        y, z = p.initial_state()
        J = stacked_algebraic_jacobian(p, 0.0, y, z)
        E = gauss_seidel_error_map(J, [slice(0, 1), slice(1, 2)])
        # only z2 is read as an old value
        assert estimate_contraction(p, ["S1", "S2"]) == pytest.approx(abs(E[1, 1]), abs=1e-6)
        assert abs(E[1, 1]) == pytest.approx(abs(a * b), abs=1e-6)

    def test_jacobi(self):
        p = lin2(0.5, 0.8)
        y, z = p.initial_state()
        J = stacked_algebraic_jacobian(p, 0.0, y, z)
        E = gauss_seidel_error_map(J, [slice(0, 1), slice(1, 2)], sweep="jacobi")
        alpha = estimate_contraction(p, None, sweep="jacobi")
        assert alpha == pytest.approx(power_spectral_norm(E), rel=1e-6)
        assert alpha == pytest.approx(0.8, rel=1e-6)

    def test_measured_ratio_matches_estimate(self):
        res = run(lin2(0.5, 1.0), DynamicIteration(0.02, k_max=30, tol=1e-10), 0.1, CFG)
        assert res.convergence.contraction_factor == pytest.approx(0.5, abs=0.05)
        assert res.convergence.jacobian_contraction == pytest.approx(0.5, abs=1e-6)

    def test_suggest_order_triangular(self):
        p = triangular3()
        order, alpha = suggest_order(p)
        assert order == ["S1", "S2", "S3"]
        assert alpha == pytest.approx(0.0, abs=1e-12)
        assert estimate_contraction(p, ["S3", "S2", "S1"]) > 0.2

    def test_suggest_order_tie_goes_to_declared(self):
        order, alpha = suggest_order(decoupled_pair())
        assert order == ["S1", "S2"] and alpha == 0.0

    def test_unknown_sweep(self):
        with pytest.raises(ValueError):
            estimate_contraction(lin2(), None, sweep="sor")
        with pytest.raises(ValueError):
            DynamicIteration(0.1, sweep="sor")
