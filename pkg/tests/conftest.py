"""Shared fixtures: the seeded QP testbed and its closed-form reference."""

import pytest

from aalm import kkt_solve_qp, make_random_qp


@pytest.fixture(scope="session")
def qp_testbed():
    """The n=50, m=10 random strongly convex QP used across the suite."""
    return make_random_qp(n=50, m=10, seed=0)


@pytest.fixture(scope="session")
def qp_reference(qp_testbed):
    """Closed-form KKT pair of the testbed from the saddle-system solve."""
    Q, q = qp_testbed.objective.quadratic
    return kkt_solve_qp(Q, q, qp_testbed.A, qp_testbed.b)
