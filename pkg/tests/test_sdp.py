import cvxpy as cp
import numpy as np
import pytest

from anisosyn.errors import ModelError
from anisosyn.sdp import (
    FEASIBLE,
    INFEASIBLE,
    SdpProblem,
    SolverSettings,
    rootdet_epigraph,
)


def max_rootdet(M):
    prob = SdpProblem()
    t = prob.scalar("t")
    rootdet_epigraph(prob, M, t)
    prob.maximize(t)
    sol = prob.solve()
    assert sol.feasible
    return sol["t"]


def test_extremal_point():
    prob = SdpProblem()
    X = prob.sym("X", 2)
    prob.lmi(X - np.eye(2), ">>", strict=False)
    prob.lmi(X - 2 * np.eye(2), "<<", strict=False)
    prob.minimize(cp.trace(X))
    sol = prob.solve()
    assert sol.status == FEASIBLE
    np.testing.assert_allclose(sol["X"], np.eye(2), atol=1e-6)
    assert sol.objective_value == pytest.approx(2.0, abs=1e-6)


def test_contradictory_bounds():
    prob = SdpProblem()
    X = prob.sym("X", 2)
    prob.lmi(X - 2 * np.eye(2), ">>")
    prob.lmi(X - np.eye(2), "<<")
    assert prob.solve().status == INFEASIBLE


def test_two_by_two_determinant():
    prob = SdpProblem()
    t = prob.scalar("t")
    prob.lmi(cp.bmat([[np.ones((1, 1)), cp.reshape(t, (1, 1), order="F")],
                      [cp.reshape(t, (1, 1), order="F"), np.ones((1, 1))]]), ">>", strict=False)
    prob.maximize(t)
    assert prob.solve()["t"] == pytest.approx(1.0, abs=1e-6)


def test_undeclared_variable_rejected():
    prob = SdpProblem()
    prob.sym("X", 2)
    stray = cp.Variable((2, 2), symmetric=True)
    with pytest.raises(ModelError):
        prob.lmi(stray, ">>")


def test_asymmetric_block_rejected():
    prob = SdpProblem()
    Y = prob.matrix("Y", 2, 2)
    with pytest.raises(ModelError):
        prob.lmi(Y, ">>")
    with pytest.raises(ModelError):
        prob.lmi(np.array([[1.0, 2.0], [0.0, 1.0]]), ">>")


def test_duplicate_name_rejected():
    prob = SdpProblem()
    prob.scalar("s")
    with pytest.raises(ModelError):
        prob.sym("s", 2)


def test_rootdet_examples():
    assert max_rootdet(np.diag([1.0, 4.0])) == pytest.approx(2.0, rel=1e-6)
    for m in (1, 2, 3, 5):
        assert max_rootdet(np.eye(m)) == pytest.approx(1.0, rel=1e-6)
    assert max_rootdet(np.array([[3.7]])) == pytest.approx(3.7, rel=1e-8)


def test_rootdet_non_square():
    prob = SdpProblem()
    t = prob.scalar("t")
    with pytest.raises(ModelError):
        rootdet_epigraph(prob, np.ones((2, 3)), t)


def test_rootdet_random():
    rng = np.random.default_rng(31)
    for m in (1, 2, 3, 4):
        for _ in range(3):
            G = rng.standard_normal((m, m))
            M = G @ G.T + 0.1 * np.eye(m)
            want = np.linalg.det(M) ** (1.0 / m)
            assert max_rootdet(M) == pytest.approx(want, rel=1e-5)


def test_strictness_margin_honored():
    eps = 1e-3
    prob = SdpProblem(strictness_margin=eps)
    X = prob.sym("X", 3)
    prob.lmi(X, ">>", name="pos")
    prob.minimize(cp.trace(X))
    sol = prob.solve()
    assert sol.feasible
    assert prob.slacks()["pos"] >= eps / 2


def test_resolve_idempotent():
    prob = SdpProblem()
    X = prob.sym("X", 2)
    prob.lmi(X - np.array([[2.0, 0.5], [0.5, 1.0]]), ">>", strict=False)
    prob.minimize(cp.trace(X))
    first, second = prob.solve(), prob.solve()
    assert first.status == second.status
    assert first.objective_value == pytest.approx(second.objective_value, abs=1e-7)


def test_parameters_reused():
    prob = SdpProblem()
    x = prob.scalar("x")
    c = prob.param("c", (), 1.0)
    prob.add(x >= c)
    prob.minimize(x)
    assert prob.solve()["x"] == pytest.approx(1.0, abs=1e-7)
    c.value = 3.0
    assert prob.solve()["x"] == pytest.approx(3.0, abs=1e-7)


def test_alternate_primary_solver():
    settings = SolverSettings(solver="SCS", fallback=("CLARABEL",))
    prob = SdpProblem(settings=settings)
    X = prob.sym("X", 2)
    prob.lmi(X - np.eye(2), ">>", strict=False)
    prob.minimize(cp.trace(X))
    sol = prob.solve()
    assert sol.feasible
    assert sol.objective_value == pytest.approx(2.0, abs=1e-4)
