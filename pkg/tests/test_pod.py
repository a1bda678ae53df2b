import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cosim.eqs import Arr2DConfig, arr2d, excitation, partition, solve_full
from cosim.errors import DimensionMismatch
from cosim.integrate import IntegratorConfig
from cosim.pod import (
    PODBasis,
    RankDeficient,
    ReducedTrajectory,
    build_basis,
    energy_rank,
    mor_report,
    reduce,
    reduction_factor,
    solve_reduced,
)

SMALL = Arr2DConfig(nx=14, ny=14, column_width=5, varistor_width=3, column_height=9)
CFG = IntegratorConfig(h=0.5, newton_tol=1e-11)
TIMES = np.linspace(0.0, 12.0, 25)


@pytest.fixture(scope="module")
def small_run():
    sys = arr2d(SMALL, excitation("ramp", t_rise=4.0))
    return sys, partition(sys), solve_full(sys, TIMES, CFG)


class TestBasis:
    def test_rank_one(self):
        u = np.array([3.0, 0.0, 4.0]) / 5.0
        S = np.outer(u, [1.0, 2.0, -1.0, 0.5])
        b = build_basis(S, p=1)
        np.testing.assert_allclose(b.P[:, 0], u, atol=1e-14)
        assert b.energy_captured == pytest.approx(1.0)

    def test_sign_convention(self):
        b = build_basis(-np.outer([0.6, 0.8], [1.0, 1.0]), p=1)
        assert b.P[1, 0] > 0

    def test_orthonormal(self):
        S = np.random.default_rng(2).standard_normal((30, 10))
        P = build_basis(S, p=6).P
        np.testing.assert_allclose(P.T @ P, np.eye(6), atol=1e-10)

    def test_more_snapshots_than_rows(self):
        S = np.random.default_rng(5).standard_normal((4, 12))
        b = build_basis(S, p=4)
        np.testing.assert_allclose(b.P.T @ b.P, np.eye(4), atol=1e-10)
        np.testing.assert_allclose(b.sigma, np.linalg.svd(S, compute_uv=False), rtol=1e-10)

    def test_energy_selects_rank(self):
        rng = np.random.default_rng(0)
        S = rng.standard_normal((40, 3)) @ rng.standard_normal((3, 15)) + 1e-8 * rng.standard_normal((40, 15))
        assert build_basis(S, energy=1 - 1e-6).p == 3

    def test_energy_rank_edges(self):
        assert energy_rank([1.0, 0.0], 0.0) == 1
        assert energy_rank([1.0, 1.0], 0.4) == 2
        assert energy_rank([0.0, 0.0], 1e-6) == 1

    def test_rank_deficient_warns(self):
        with pytest.warns(RankDeficient):
            b = build_basis(np.outer(np.ones(5), np.ones(3)), p=2)
        assert b.rank_deficient

    def test_complete_basis(self):
        S = np.random.default_rng(1).standard_normal((8, 3))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RankDeficient)
            b = build_basis(S, p=8, complete=True)
        np.testing.assert_allclose(b.P.T @ b.P, np.eye(8), atol=1e-12)
        with pytest.raises(ValueError):
            build_basis(S, p=8)

    def test_needs_one_selector(self):
        with pytest.raises(ValueError):
            build_basis(np.eye(3), p=1, energy=0.9)

    @settings(max_examples=10, deadline=None)
    @given(seed=st.integers(0, 10_000), p=st.integers(1, 5))
    def test_optimal_among_random_bases(self, seed, p):
        rng = np.random.default_rng(seed)
        S = rng.standard_normal((20, 8)) * np.logspace(0, -3, 8)
        P = build_basis(S, p=p).P
        best = np.linalg.norm(S - P @ (P.T @ S))
        for _ in range(20):
            Q, _ = np.linalg.qr(rng.standard_normal((20, p)))
            assert best <= np.linalg.norm(S - Q @ (Q.T @ S)) + 1e-12


def test_reduction_factor():
    assert reduction_factor(3028, 5) == pytest.approx(605.6)


class TestReduction:
    def test_dimension_mismatch(self, small_run):
        _, part, _ = small_run
        with pytest.raises(DimensionMismatch):
            reduce(part, PODBasis.identity(part.exterior.size + 1))

    def test_identity_basis_reproduces_full(self, small_run):
        sys, part, full = small_run
        red = solve_reduced(reduce(part, PODBasis.identity(sys.n_exterior)), TIMES, CFG)
        rep = mor_report(full, red, sys.unknowns, sys.n_exterior, sys.n_exterior)
        assert rep.relative_l2 <= 1e-12

    def test_complete_pod_basis_reproduces_full(self, small_run):
        sys, part, full = small_run
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RankDeficient)
            basis = build_basis(full.snapshots, p=sys.n_exterior, complete=True)
        red = solve_reduced(reduce(part, basis), TIMES, CFG)
        assert mor_report(full, red, sys.unknowns, sys.n_exterior, basis.p).relative_l2 <= 1e-8

    def test_reduced_mass_symmetric(self, small_run):
        _, part, full = small_run
        red = reduce(part, build_basis(full.snapshots, p=3))
        M = red.mass.toarray()
        np.testing.assert_allclose(M, M.T, atol=1e-12)
        assert np.linalg.eigvalsh(M).min() > 0

    def test_zero_excitation(self, small_run):
        sys, part, full = small_run
        zero = arr2d(SMALL, excitation("zero"))
        red = solve_reduced(reduce(partition(zero), build_basis(full.snapshots, p=2)), TIMES, CFG)
        assert not np.any(red.phi)

    def test_error_decreases_with_p(self, small_run):
        sys, part, full = small_run
        errs = []
        for p in (1, 2, 4, 8):
            red = solve_reduced(reduce(part, build_basis(full.snapshots, p=p)), TIMES, CFG)
            errs.append(mor_report(full, red, sys.unknowns, sys.n_exterior, p).relative_l2)
        assert all(b <= a for a, b in zip(errs, errs[1:]))

    def test_report_recomputed(self, small_run):
        sys, part, full = small_run
        red = solve_reduced(reduce(part, build_basis(full.snapshots, p=2)), TIMES, CFG)
        rep = mor_report(full, red, sys.unknowns, sys.n_exterior, 2)
        A, B = full.phi[:, sys.unknowns], red.phi[:, sys.unknowns]
        assert rep.relative_l2 == pytest.approx(np.linalg.norm(A - B) / np.linalg.norm(A), rel=1e-12)
        assert rep.max_node_error == pytest.approx(np.max(np.abs(A - B)))
        assert rep.reduction_factor == pytest.approx(sys.n_exterior / 2)

    def test_self_report_is_zero(self, small_run):
        sys, _, full = small_run
        same = ReducedTrajectory(full.t, None, None, None, full.phi)
        rep = mor_report(full, same, sys.unknowns, sys.n_exterior, 4)
        assert rep.relative_l2 == 0.0 and rep.max_node_error == 0.0
