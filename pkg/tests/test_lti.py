import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from anisosyn.errors import DimensionMismatch, NonSymmetric, UnstableMatrix
from anisosyn.lti import (
    TOL_RIC,
    ContinuousPlant,
    ContinuousStateSpace,
    Plant,
    StateSpace,
    close_loop,
    dare_fixed_point,
    discretize_zoh,
    is_stable,
    riccati_gain,
    solve_dare_aniso,
    solve_dlyap,
    spectral_radius,
)

from _systems import random_plant, random_stable

SCALAR = StateSpace([[0.5]], [[1.0]], [[1.0]], [[0.0]])


def series_lyap(A, Q, rho_target=1e-12):
    rho = spectral_radius(A)
    N = int(math.ceil(math.log(rho_target) / math.log(rho))) + 1
    X = np.zeros_like(Q)
    M = Q.copy()
    for _ in range(N):
        X += M
        M = A.T @ M @ A
    return X


def riccati_residual(sys, q, X):
    A, B, C, D = sys.A, sys.B, sys.C, sys.D
    Psi = np.eye(sys.m) / q - B.T @ X @ B - D.T @ D
    L = A.T @ X @ B + C.T @ D
    R = A.T @ X @ A + L @ np.linalg.solve(Psi, L.T) + C.T @ C - X
    return np.linalg.norm(R) / (1.0 + np.linalg.norm(X))


# -- types -----------------------------------------------------------------

def test_statespace_dimensions():
    sys = StateSpace(np.zeros((2, 2)), np.ones((2, 3)), np.ones((1, 2)), np.zeros((1, 3)))
    assert (sys.n, sys.m, sys.p) == (2, 3, 1)
    with pytest.raises(DimensionMismatch):
        StateSpace(np.zeros((2, 2)), np.ones((3, 1)), np.ones((1, 2)), np.zeros((1, 1)))


def test_static_statespace_allowed():
    sys = StateSpace(np.zeros((0, 0)), np.zeros((0, 2)), np.zeros((2, 0)), np.eye(2))
    assert sys.n == 0 and is_stable(sys)


def test_plant_error_names_matrix():
    with pytest.raises(DimensionMismatch, match="D12"):
        Plant(A=[[1.0]], B1=[[1.0]], B2=[[1.0]], C1=[[1.0]], C2=[[1.0]],
              D11=[[0.0]], D12=[[0.0, 1.0]])


def test_arrays_read_only():
    with pytest.raises(ValueError):
        SCALAR.A[0, 0] = 3.0


# -- is_stable ---------------------------------------------------------------

@pytest.mark.parametrize("A, expected", [
    ([[0.5]], True),
    ([[1.0]], False),
    ([[0.0, 1.0], [-0.25, 0.0]], True),
])
def test_is_stable_examples(A, expected):
    n = len(A)
    sys = StateSpace(A, np.ones((n, 1)), np.ones((1, n)), [[0.0]])
    assert is_stable(sys) is expected


def test_rotation_radius():
    assert spectral_radius(np.array([[0.0, 1.0], [-0.25, 0.0]])) == pytest.approx(0.5)


# -- solve_dlyap -------------------------------------------------------------

def test_dlyap_zero_A():
    np.testing.assert_allclose(solve_dlyap(np.zeros((3, 3)), np.eye(3)), np.eye(3))


def test_dlyap_scalar():
    assert solve_dlyap(np.array([[0.5]]), np.array([[1.0]]))[0, 0] == pytest.approx(4.0 / 3.0, abs=1e-14)


def test_dlyap_matches_series():
    rng = np.random.default_rng(3)
    for _ in range(10):
        sys = random_stable(rng, 4, 1, 2, rho=0.85)
        Q = sys.C.T @ sys.C
        X = solve_dlyap(sys.A, Q)
        np.testing.assert_allclose(X, series_lyap(sys.A, Q), atol=1e-8 * (1 + np.abs(X).max()))


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 6), st.floats(0.05, 0.98), st.integers(0, 2**31 - 1))
def test_dlyap_residual_and_psd(n, rho, seed):
    rng = np.random.default_rng(seed)
    sys = random_stable(rng, n, 1, n, rho)
    Q = sys.C.T @ sys.C
    X = solve_dlyap(sys.A, Q)
    res = np.linalg.norm(X - sys.A.T @ X @ sys.A - Q)
    assert res <= 1e-10 * (1 + np.linalg.norm(Q)) * max(1.0, np.linalg.norm(X))
    np.testing.assert_allclose(X, X.T)
    assert np.min(np.linalg.eigvalsh(X)) >= -1e-9 * max(1.0, np.abs(X).max())


def test_dlyap_errors():
    with pytest.raises(UnstableMatrix):
        solve_dlyap(np.array([[1.0]]), np.array([[1.0]]))
    with pytest.raises(NonSymmetric):
        solve_dlyap(np.zeros((2, 2)), np.array([[1.0, 1.0], [0.0, 1.0]]))


# -- solve_dare_aniso --------------------------------------------------------

def test_dare_zero_cost():
    sys = StateSpace([[0.5, 0.1], [0.0, 0.3]], [[1.0], [1.0]], [[0.0, 0.0]], [[0.0]])
    sol = solve_dare_aniso(sys, 0.3)
    assert sol.stabilizing
    np.testing.assert_allclose(sol.X, 0.0, atol=1e-12)
    np.testing.assert_allclose(sol.Psi_q, [[1 / 0.3]])


def test_dare_matches_fixed_point():
    q = 0.1
    sol = solve_dare_aniso(SCALAR, q)
    X_fp, ok = dare_fixed_point(SCALAR.A, SCALAR.B, SCALAR.C.T @ SCALAR.C,
                                np.eye(1) / q - SCALAR.D.T @ SCALAR.D, SCALAR.C.T @ SCALAR.D)
    assert ok and sol.stabilizing
    assert sol.X[0, 0] == pytest.approx(X_fp[0, 0], abs=1e-9)


def test_dare_threshold_scalar():
    # ||F||_inf = 2, so q >= 0.25 has no stabilizing solution
    qs = np.linspace(0.01, 0.4, 80)
    flags = [solve_dare_aniso(SCALAR, q).stabilizing for q in qs]
    assert all(f == (q < 0.25) for f, q in zip(flags, qs))
    assert not solve_dare_aniso(SCALAR, 0.25).stabilizing


def test_stabilizing_solution_properties():
    rng = np.random.default_rng(11)
    for _ in range(15):
        sys = random_stable(rng, 3, 2, 2, rho=0.8)
        from anisosyn.norms import hinf_norm
        q = 0.7 / hinf_norm(sys) ** 2
        sol = solve_dare_aniso(sys, q)
        assert sol.stabilizing
        assert riccati_residual(sys, q, sol.X) <= TOL_RIC
        assert np.min(np.linalg.eigvalsh(sol.Psi_q)) > 0
        K = riccati_gain(sys, sol)
        assert spectral_radius(sys.A + sys.B @ K) < 1
        assert np.min(np.linalg.eigvalsh(sol.X)) >= -1e-9


def test_stabilizing_set_is_interval():
    rng = np.random.default_rng(12)
    for _ in range(5):
        sys = random_stable(rng, 3, 2, 2, rho=0.7)
        flags = [solve_dare_aniso(sys, q).stabilizing for q in np.geomspace(1e-4, 10, 60)]
        # once lost, never regained
        first_false = flags.index(False) if False in flags else len(flags)
        assert not any(flags[first_false:])


# -- close_loop --------------------------------------------------------------

def test_close_loop_zero_gain_exact():
    rng = np.random.default_rng(5)
    p = random_plant(rng)
    cl = close_loop(p, np.zeros((p.m_u, p.p_y)))
    for got, want in zip((cl.A, cl.B, cl.C, cl.D), (p.A, p.B1, p.C1, p.D11)):
        assert np.array_equal(got, want)


def test_close_loop_scalar():
    p = Plant([[2.0]], [[1.0]], [[1.0]], [[1.0]], [[1.0]], [[0.0]], [[0.0]])
    assert close_loop(p, [[-1.5]]).A[0, 0] == pytest.approx(0.5)


def test_close_loop_formula():
    rng = np.random.default_rng(6)
    p = random_plant(rng, n=4, m_w=2, m_u=2, p_z=3, p_y=2)
    K = rng.standard_normal((2, 2))
    cl = close_loop(p, K)
    np.testing.assert_allclose(cl.A, p.A + p.B2 @ K @ p.C2)
    np.testing.assert_allclose(cl.C, p.C1 + p.D12 @ K @ p.C2)
    np.testing.assert_array_equal(cl.B, p.B1)
    np.testing.assert_array_equal(cl.D, p.D11)


def test_close_loop_bad_gain():
    rng = np.random.default_rng(6)
    p = random_plant(rng)
    with pytest.raises(DimensionMismatch):
        close_loop(p, np.zeros((2, 2)))


# -- discretize_zoh ----------------------------------------------------------

def test_zoh_integrator():
    d = discretize_zoh(ContinuousStateSpace(np.zeros((2, 2)), np.eye(2), np.eye(2), np.zeros((2, 2))), 1.0)
    np.testing.assert_allclose(d.A, np.eye(2))
    np.testing.assert_allclose(d.B, np.eye(2))


def test_zoh_scalar():
    d = discretize_zoh(ContinuousStateSpace([[-1.0]], [[1.0]], [[1.0]], [[0.0]]), 0.1)
    assert d.A[0, 0] == pytest.approx(math.exp(-0.1), abs=1e-14)
    assert d.B[0, 0] == pytest.approx(1 - math.exp(-0.1), abs=1e-14)


def test_zoh_servo_pole():
    from anisosyn.casestudy import f4e_model
    d = discretize_zoh(f4e_model(1), 0.01)
    assert d.A[2, 2] == pytest.approx(math.exp(-0.3), abs=1e-12)
    assert isinstance(d, Plant) and not isinstance(d, ContinuousPlant)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 5), st.floats(1e-3, 0.5), st.integers(0, 2**31 - 1))
def test_zoh_eigenvalue_map(n, Ts, seed):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((n, n))
    d = discretize_zoh(ContinuousStateSpace(A, np.ones((n, 1)), np.ones((1, n)), [[0.0]]), Ts)
    want = np.sort_complex(np.exp(Ts * np.linalg.eigvals(A)))
    got = np.sort_complex(np.linalg.eigvals(d.A))
    # match as multisets: nearest-neighbour assignment
    for w in want:
        k = np.argmin(abs(got - w))
        assert abs(got[k] - w) <= 1e-9 * max(1.0, abs(w))
        got = np.delete(got, k)


def test_zoh_rejects_discrete_plant():
    rng = np.random.default_rng(1)
    with pytest.raises(TypeError):
        discretize_zoh(random_plant(rng), 0.1)


def test_zoh_plant_holds_both_inputs():
    cp_ = ContinuousPlant([[-2.0]], [[1.0]], [[3.0]], [[1.0]], [[1.0]], [[0.0]], [[0.0]])
    d = discretize_zoh(cp_, 0.2)
    g = (1 - math.exp(-0.4)) / 2.0
    assert d.B1[0, 0] == pytest.approx(g)
    assert d.B2[0, 0] == pytest.approx(3 * g)


def test_similarity_preserves_spectrum():
    rng = np.random.default_rng(2)
    sys = random_stable(rng, 4, 2, 2)
    T = rng.standard_normal((4, 4)) + 4 * np.eye(4)
    s2 = sys.similarity(T)
    theta = np.linspace(0, np.pi, 7)
    np.testing.assert_allclose(s2.sigma_max(theta), sys.sigma_max(theta), rtol=1e-9)
