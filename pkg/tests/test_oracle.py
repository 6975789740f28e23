"""Tests for the reference oracles and the KKT cache.

kkt_solve_qp is pinned on hand-solved saddle systems (including a
rank-deficient dual and an infeasible system); kkt_refine is asserted on
its own certificate for the non-quadratic families; the scalar brute
oracle's closed forms are frozen here before they pin the solver.
"""

import numpy as np
import pytest

from aalm import (
    brute_step_oracle,
    cached_reference,
    kkt_refine,
    kkt_solve_qp,
    make_lp_regression,
    make_qp,
    make_random_qp,
    make_ring_logistic,
)
from aalm.oracle import (
    InfeasibleConstraints,
    ReferenceNotConverged,
    instance_hash,
    load_kkt,
    save_kkt,
)


class TestKktSolveQp:
    """Direct saddle-system solves with frozen expected pairs."""

    def test_unit_quadratic(self):
        """Q = I, q = 0, x_1 = 1: x* = (1, 0), lam* = -1."""
        kkt = kkt_solve_qp(np.eye(2), np.zeros(2), np.array([[1.0, 0.0]]),
                           np.array([1.0]))
        np.testing.assert_allclose(kkt.x, [1.0, 0.0], rtol=0, atol=1e-12)
        np.testing.assert_allclose(kkt.lam, [-1.0], rtol=0, atol=1e-12)
        assert kkt.kkt_tol <= 1e-10

    def test_zero_objective_minimum_norm(self):
        """Q = 0, q = 0: the minimum-norm feasible point with lam* = 0."""
        A = np.array([[1.0, 1.0]])
        b = np.array([2.0])
        kkt = kkt_solve_qp(np.zeros((2, 2)), np.zeros(2), A, b)
        np.testing.assert_allclose(kkt.x, [1.0, 1.0], rtol=0, atol=1e-10)
        np.testing.assert_allclose(kkt.lam, [0.0], rtol=0, atol=1e-10)

    def test_three_by_three_system(self):
        """Q = diag(1,2), q = (1,1), x_1 + x_2 = 1: x* = (2/3, 1/3),
        lam* = -5/3 (eliminate x from the stationarity rows)."""
        Q = np.diag([1.0, 2.0])
        q = np.ones(2)
        A = np.array([[1.0, 1.0]])
        b = np.array([1.0])
        kkt = kkt_solve_qp(Q, q, A, b)
        np.testing.assert_allclose(kkt.x, [2.0 / 3.0, 1.0 / 3.0],
                                   rtol=1e-12)
        np.testing.assert_allclose(kkt.lam, [-5.0 / 3.0], rtol=1e-12)
        resid = np.linalg.norm(Q @ kkt.x + q + A.T @ kkt.lam)
        assert resid <= 1e-12
        assert abs(A @ kkt.x - b)[0] <= 1e-12

    def test_rank_deficient_dual_minimum_norm(self):
        """Duplicated constraint rows: lam* splits evenly, (-1/2, -1/2)."""
        A = np.array([[1.0, 0.0], [1.0, 0.0]])
        b = np.array([1.0, 1.0])
        kkt = kkt_solve_qp(np.eye(2), np.zeros(2), A, b)
        np.testing.assert_allclose(kkt.x, [1.0, 0.0], rtol=0, atol=1e-10)
        np.testing.assert_allclose(kkt.lam, [-0.5, -0.5], rtol=0, atol=1e-10)

    def test_infeasible_rejected(self):
        """b outside range(A) has no feasible point at all."""
        A = np.array([[1.0, 0.0], [1.0, 0.0]])
        with pytest.raises(InfeasibleConstraints):
            kkt_solve_qp(np.eye(2), np.zeros(2), A, np.array([1.0, 2.0]))

    def test_certificate_rechecks(self, qp_testbed, qp_reference):
        """The recorded kkt_tol holds under independent re-evaluation."""
        g = qp_testbed.objective.gradient(qp_reference.x)
        stat = np.linalg.norm(g + qp_testbed.A.T @ qp_reference.lam)
        feas = np.linalg.norm(qp_testbed.A @ qp_reference.x - qp_testbed.b)
        assert max(stat, feas) <= qp_reference.kkt_tol + 1e-14
        assert qp_reference.kkt_tol <= 1e-10


class TestKktRefine:
    """The iterative reference path for non-quadratic instances."""

    def test_qp_agrees_with_direct_solve(self, qp_testbed, qp_reference):
        """On quadratics the two reference paths coincide to 1e-8."""
        kkt = kkt_refine(qp_testbed)
        np.testing.assert_allclose(kkt.x, qp_reference.x, rtol=0, atol=1e-8)
        np.testing.assert_allclose(kkt.lam, qp_reference.lam, rtol=0,
                                   atol=1e-8)

    def test_small_ring_logistic(self):
        """p = 4, m = 5 ring: residuals certified and rechecked <= 1e-9."""
        inst = make_ring_logistic(p_agents=4, m_dim=5, rho_reg=0.5, seed=0)
        kkt = kkt_refine(inst)
        assert kkt.kkt_tol <= 1e-9
        g = inst.objective.gradient(kkt.x)
        assert np.linalg.norm(g + inst.A.T @ kkt.lam) <= 1e-9
        assert np.linalg.norm(inst.A @ kkt.x - inst.b) <= 1e-9

    def test_infeasible_reports_residuals(self):
        """No KKT point exists: the error carries the stuck feasibility
        (here dist(b, range A) = 1/sqrt(2))."""
        rng = np.random.default_rng(0)
        B = rng.normal(size=(8, 4))
        c = rng.normal(size=8)
        A = np.array([[1.0, 0.0, 0.0, 0.0], [1.0, 0.0, 0.0, 0.0]])
        bad = make_lp_regression(B, c, 1.5, A, np.array([0.0, 1.0]))
        with pytest.raises(ReferenceNotConverged) as exc:
            kkt_refine(bad, budget=300, polish_steps=10)
        np.testing.assert_allclose(exc.value.feas_res, np.sqrt(0.5),
                                   rtol=1e-6)


class TestBruteStepOracle:
    """Literal-substitution scalar steps with frozen outputs."""

    def test_zero_objective_step(self):
        """f = 0, a = 1, b = -1, gamma = delta = 1, eta = 1, t: 1 -> 2
        (so xbar = 1, c = 2, r = 0): x = 0.2, lam = 0.4."""
        x, lam = brute_step_oracle(0.0, 0.0, 1.0, -1.0, 1.0, 1.0, 0.0, 1.0,
                                   1.0, 2.0, 1.0, 1.0, 0.0, 0.0)
        np.testing.assert_allclose(x, 0.2, rtol=1e-14)
        np.testing.assert_allclose(lam, 0.4, rtol=1e-14)

    def test_quadratic_step(self):
        """Adding f = x^2/2 to the same data gives x = 1/6, lam = 1/3."""
        x, lam = brute_step_oracle(1.0, 0.0, 1.0, -1.0, 1.0, 1.0, 0.0, 1.0,
                                   1.0, 2.0, 1.0, 1.0, 0.0, 0.0)
        np.testing.assert_allclose(x, 1.0 / 6.0, rtol=1e-14)
        np.testing.assert_allclose(lam, 1.0 / 3.0, rtol=1e-14)

    def test_explicit_linearization(self):
        """Explicit handling of f = x^2/2 anchors the gradient at xbar = 1,
        cancelling the proximal pull entirely: x = 0, lam = 0."""
        x, lam = brute_step_oracle(1.0, 0.0, 1.0, -1.0, 1.0, 1.0, 0.0, 1.0,
                                   1.0, 2.0, 1.0, 1.0, 0.0, 0.0,
                                   case="explicit")
        np.testing.assert_allclose(x, 0.0, rtol=0, atol=1e-14)
        np.testing.assert_allclose(lam, 0.0, rtol=0, atol=1e-14)

    def test_kkt_start_is_fixed_point(self):
        """From (x*, lam*) = (1, -1) of min x^2/2 s.t. x = 1 the step
        returns the same pair."""
        x, lam = brute_step_oracle(1.0, 0.0, 1.0, 1.0, 0.5, 1.3, 0.7, 0.8,
                                   2.2, 2.9, 1.0, 1.0, -1.0, -1.0)
        np.testing.assert_allclose(x, 1.0, rtol=0, atol=1e-12)
        np.testing.assert_allclose(lam, -1.0, rtol=0, atol=1e-12)

    def test_composite_case_unsupported(self):
        with pytest.raises(ValueError, match="implicit/explicit"):
            brute_step_oracle(1.0, 0.0, 1.0, 0.0, 1.0, 1.0, 0.0, 1.0,
                              1.0, 2.0, 0.0, 0.0, 0.0, 0.0,
                              case="composite")


class TestReferenceCache:
    """Content-hashed KKT sidecar files."""

    def test_hash_keyed_to_data_and_name(self):
        a = make_random_qp(n=6, m=2, seed=0)
        b = make_random_qp(n=6, m=2, seed=0)
        c = make_random_qp(n=6, m=2, seed=1)
        assert instance_hash(a) == instance_hash(b)
        assert instance_hash(a) != instance_hash(c)
        renamed = make_random_qp(n=6, m=2, seed=0, name="other")
        assert instance_hash(a) != instance_hash(renamed)

    def test_save_load_round_trip_exact(self, tmp_path, qp_reference):
        """repr-based serialization round-trips every bit."""
        path = tmp_path / "ref.kkt.csv"
        save_kkt(path, qp_reference)
        back = load_kkt(path)
        np.testing.assert_allclose(back.x, qp_reference.x, rtol=0, atol=0)
        np.testing.assert_allclose(back.lam, qp_reference.lam, rtol=0,
                                   atol=0)
        assert back.kkt_tol == qp_reference.kkt_tol

    def test_cache_computes_once(self, tmp_path):
        inst = make_random_qp(n=6, m=2, seed=3)
        calls = []

        def compute(instance):
            calls.append(instance.name)
            return kkt_refine(instance)

        first = cached_reference(inst, tmp_path, compute=compute)
        second = cached_reference(inst, tmp_path, compute=compute)
        assert calls == [inst.name]
        np.testing.assert_allclose(second.x, first.x, rtol=0, atol=0)
        files = list(tmp_path.glob("*.kkt.csv"))
        assert len(files) == 1
        assert instance_hash(inst) in files[0].name

    def test_refresh_recomputes(self, tmp_path):
        inst = make_random_qp(n=6, m=2, seed=3)
        calls = []

        def compute(instance):
            calls.append(instance.name)
            return kkt_refine(instance)

        cached_reference(inst, tmp_path, compute=compute)
        cached_reference(inst, tmp_path, compute=compute, refresh=True)
        assert len(calls) == 2

    def test_changed_data_invalidates(self, tmp_path):
        """Same name, different b: the content hash forces a recompute."""
        base = make_random_qp(n=6, m=2, seed=3, name="shared")
        Q, q = base.objective.quadratic
        shifted = make_qp(Q, q, base.A, base.b + 1e-3, name="shared")
        calls = []

        def compute(instance):
            calls.append(instance.name)
            return kkt_refine(instance)

        cached_reference(base, tmp_path, compute=compute)
        cached_reference(shifted, tmp_path, compute=compute)
        assert len(calls) == 2
        assert len(list(tmp_path.glob("*.kkt.csv"))) == 2
