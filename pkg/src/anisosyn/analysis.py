"""SDP certificate that a given static gain meets an anisotropic norm bound."""
from __future__ import annotations

import math
from dataclasses import dataclass

import cvxpy as cp
import numpy as np

from .errors import DimensionMismatch, SolverFailure
from .lti import Plant, close_loop
from .sdp import (
    DEFAULT_SETTINGS,
    NUMERICAL_FAILURE,
    SdpProblem,
    SolverSettings,
    rootdet_epigraph,
)

# below this the determinant term cannot move gamma^2 and is dropped
DET_WEIGHT_FLOOR = 1e-12
# largest strictness margin tried when the exact re-check rejects an SDP answer
MAX_MARGIN = 1e-4


def det_weight(a: float, m: int) -> float:
    """``exp(-2a/m)``, with ``a = inf`` giving the plain H-infinity case."""
    if math.isinf(a):
        return 0.0
    w = math.exp(-2.0 * a / m)
    return 0.0 if w < DET_WEIGHT_FLOOR else w


@dataclass(frozen=True)
class AnalysisCertificate:
    """Result of :func:`analysis_lmi_feasible`.

    ``s`` is ``1/q``; ``det_slack`` is ``gamma^2 - (s - w det(Phi_X)^(1/m))``
    evaluated exactly from the returned ``X`` (``w = exp(-2a/m)``).
    """

    feasible: bool
    X: np.ndarray | None
    s: float
    gamma: float
    a: float
    det_slack: float
    status: str = ""

    @property
    def q(self) -> float:
        return 1.0 / self.s if self.s else math.inf

    @property
    def bound(self) -> float:
        """Smallest gamma certified by this ``(X, s)``."""
        return math.sqrt(max(self.gamma**2 - self.det_slack, 0.0))


def phi_x(plant: Plant, X, s) -> np.ndarray:
    """``s I - B1' X B1 - D11' D11``."""
    return s * np.eye(plant.m_w) - plant.B1.T @ X @ plant.B1 - plant.D11.T @ plant.D11


def rootdet(M) -> float:
    """``det(M)^(1/m)`` from eigenvalues; zero for singular or indefinite ``M``."""
    eig = np.linalg.eigvalsh(0.5 * (M + M.T))
    if eig[0] <= 0:
        return 0.0
    return float(np.exp(np.mean(np.log(eig))))


def brl_block(plant: Plant, K, X, s):
    """The closed-loop matrix inequality in its 2x2 Riccati-type form.

    ``[[E1, E2], [E2', -s I + B1'XB1 + D11'D11]]`` where
    ``E1 = -X + Acl'XAcl + Ccl'Ccl`` and ``E2 = Acl'XB1 + Ccl'D11``.
    It is negative definite iff the 4x4 form built by :func:`closed_loop_lmi` is.
    """
    cl = close_loop(plant, K)
    Acl, Ccl = cl.A, cl.C
    B1, D11 = plant.B1, plant.D11
    E1 = -X + Acl.T @ X @ Acl + Ccl.T @ Ccl
    E2 = Acl.T @ X @ B1 + Ccl.T @ D11
    E3 = -s * np.eye(plant.m_w) + B1.T @ X @ B1 + D11.T @ D11
    return np.block([[E1, E2], [E2.T, E3]])


def closed_loop_lmi(plant: Plant, K, X, s):
    """4x4 block form, affine in ``(X, s)`` for fixed ``K``.

    Works for numpy arrays and cvxpy expressions alike.
    """
    cl = close_loop(plant, K)
    n, mw, pz = plant.n, plant.m_w, plant.p_z
    Acl, Ccl, B1, D11 = cl.A, cl.C, plant.B1, plant.D11
    if isinstance(X, cp.Expression) or isinstance(s, cp.Expression):
        XA = X @ Acl
        XB = X @ B1
        return cp.bmat([
            [-X, np.zeros((n, mw)), XA.T, Ccl.T],
            [np.zeros((mw, n)), -s * np.eye(mw), XB.T, D11.T],
            [XA, XB, -X, np.zeros((n, pz))],
            [Ccl, D11, np.zeros((pz, n)), -np.eye(pz)],
        ])
    XA = X @ Acl
    XB = X @ B1
    return np.block([
        [-X, np.zeros((n, mw)), XA.T, Ccl.T],
        [np.zeros((mw, n)), -s * np.eye(mw), XB.T, D11.T],
        [XA, XB, -X, np.zeros((n, pz))],
        [Ccl, D11, np.zeros((pz, n)), -np.eye(pz)],
    ])


def analysis_lmi_feasible(plant: Plant, K, a: float, gamma: float,
                          settings: SolverSettings = DEFAULT_SETTINGS,
                          margin: float = 1e-7) -> AnalysisCertificate:
    """Certify ``|||F_cl(K)|||_a < gamma`` with one SDP in ``(X, s)``.

    Minimizes ``s - w t`` subject to the 4x4 closed-loop LMI, ``X > 0``
    and ``t <= det(Phi_X)^(1/m)``, with ``s - w t < gamma^2`` imposed as a
    constraint. The SDP answer is then re-checked exactly: the LMI by its
    eigenvalues and the determinant condition by an eigenvalue product.
    If that re-check fails, the SDP is repeated with a tenfold larger
    strictness margin, up to ``MAX_MARGIN``.
    """
    K = np.atleast_2d(np.asarray(K, dtype=float))
    if K.shape != (plant.m_u, plant.p_y):
        raise DimensionMismatch(f"K has shape {K.shape}, expected {(plant.m_u, plant.p_y)}")
    if a < 0 or not gamma > 0:
        raise ValueError("need a >= 0 and gamma > 0")
    while True:
        cert = _analysis_once(plant, K, a, gamma, settings, margin)
        # an SDP "yes" that fails the exact check is usually solver inaccuracy at the
        # boundary of a badly scaled block; retry further inside the cone
        if cert.feasible or cert.X is None or margin >= MAX_MARGIN:
            return cert
        margin = min(10.0 * margin, MAX_MARGIN)


def _analysis_once(plant, K, a, gamma, settings, margin) -> AnalysisCertificate:
    n, m = plant.n, plant.m_w
    w = det_weight(a, m)
    g2 = gamma**2

    prob = SdpProblem(strictness_margin=margin, settings=settings)
    X = prob.sym("X", n)
    s = prob.scalar("s")
    prob.lmi(X, ">>", name="X_pos")
    prob.lmi(closed_loop_lmi(plant, K, X, s), "<<", name="brl")
    if w > 0:
        t = prob.scalar("t")
        phi = s * np.eye(m) - plant.B1.T @ X @ plant.B1 - plant.D11.T @ plant.D11
        rootdet_epigraph(prob, phi, t, name="phi")
        cost = s - w * t
    else:
        cost = s
    prob.add(cost <= g2 * (1.0 - margin))
    prob.minimize(cost)
    sol = prob.solve()
    if sol.status == NUMERICAL_FAILURE and sol.solver_status not in ("infeasible",):
        if sol.solver_status.startswith("solver_error"):
            raise SolverFailure("analysis SDP failed", status=sol.solver_status)
    if not sol.feasible:
        return AnalysisCertificate(False, None, math.nan, gamma, a, -math.inf, sol.status)

    Xv, sv = sol["X"], sol["s"]
    Xv = 0.5 * (Xv + Xv.T)
    exact = sv - w * rootdet(phi_x(plant, Xv, sv))
    det_slack = g2 - exact
    lmi_max = np.max(np.linalg.eigvalsh(closed_loop_lmi(plant, K, Xv, sv)))
    ok = bool(
        det_slack > 0
        and lmi_max < 0
        and np.min(np.linalg.eigvalsh(Xv)) > 0
        and np.min(np.linalg.eigvalsh(phi_x(plant, Xv, sv))) > 0
    )
    return AnalysisCertificate(ok, Xv, float(sv), gamma, a, float(det_slack), sol.status)
