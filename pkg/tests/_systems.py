"""Random systems and small plants shared by the test modules."""
import numpy as np

from anisosyn.lti import Plant, StateSpace


def random_stable(rng, n, m, p, rho=0.9, feedthrough=True):
    """Random realization with spectral radius exactly ``rho`` (``n = 0`` allowed)."""
    if n:
        A = rng.standard_normal((n, n))
        A *= rho / max(abs(np.linalg.eigvals(A)))
    else:
        A = np.zeros((0, 0))
    B = rng.standard_normal((n, m))
    C = rng.standard_normal((p, n))
    D = rng.standard_normal((p, m)) if feedthrough else np.zeros((p, m))
    return StateSpace(A, B, C, D)


def system_bank(seed=7, count=50, max_n=6, max_m=3):
    """The fixed set of random stable systems used by the norm checks."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        n = int(rng.integers(1, max_n + 1))
        m = int(rng.integers(1, max_m + 1))
        p = int(rng.integers(1, 4))
        rho = float(rng.uniform(0.3, 0.9))
        out.append(random_stable(rng, n, m, p, rho, feedthrough=bool(rng.integers(0, 2))))
    return out


def scalar_plant():
    """``x+ = 2x + w + u``, ``z = [x; 0.1u]``, ``y = x``."""
    return Plant(
        A=[[2.0]], B1=[[1.0]], B2=[[1.0]],
        C1=[[1.0], [0.0]], C2=[[1.0]],
        D11=[[0.0], [0.0]], D12=[[0.0], [0.1]],
    )


def random_plant(rng, n=3, m_w=2, m_u=1, p_z=2, p_y=2, rho=0.8):
    A = rng.standard_normal((n, n))
    A *= rho / max(abs(np.linalg.eigvals(A)))
    return Plant(
        A=A,
        B1=rng.standard_normal((n, m_w)),
        B2=rng.standard_normal((n, m_u)),
        C1=rng.standard_normal((p_z, n)),
        C2=rng.standard_normal((p_y, n)),
        D11=0.3 * rng.standard_normal((p_z, m_w)),
        D12=rng.standard_normal((p_z, m_u)),
    )


def impulse_h2(sys, tol=1e-14):
    """``sqrt(sum_k ||C A^k B||_F^2 + ||D||_F^2)``, summed until the terms vanish."""
    total = float(np.sum(sys.D**2))
    if sys.n == 0:
        return np.sqrt(total)
    M = sys.B.copy()
    for _ in range(100000):
        term = float(np.sum((sys.C @ M) ** 2))
        total += term
        M = sys.A @ M
        if np.sum(M**2) < tol * max(total, 1e-300):
            break
    return np.sqrt(total)


def grid_hinf(sys, points=4096):
    theta = np.linspace(0.0, np.pi, points)
    return float(np.max(sys.sigma_max(theta)))


def stabilized_instance(rng, n=3, m_w=2, m_u=1, p_z=2, p_y=2):
    """Random plant with a gain that leaves the closed loop Schur stable."""
    from anisosyn.lti import close_loop, spectral_radius

    while True:
        plant = random_plant(rng, n, m_w, m_u, p_z, p_y, rho=float(rng.uniform(0.5, 1.2)))
        for _ in range(50):
            K = 0.5 * rng.standard_normal((m_u, p_y))
            if spectral_radius(close_loop(plant, K).A) < 0.95:
                return plant, K
