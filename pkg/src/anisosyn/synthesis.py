"""Static output-feedback synthesis under an a-anisotropic norm bound.

The gain LMI ``Z + P'KQ + Q'K'P < 0`` is eliminated by the projection
lemma into a pair of dual LMIs, one in ``(X, eta2)`` (measurement side,
basis ``V``) and one in ``(Ytilde, q)`` (actuator side, basis ``W``).
They are coupled by ``X Ytilde = I`` and ``eta2 q = 1``, relaxed to

    [[X, I], [I, Ytilde]] >= 0,    [[eta2, 1], [1, q]] >= 0

and driven to equality by cone-complementarity linearization: each step
minimizes ``Tr(X_k Ytilde + X Ytilde_k) + eta2_k q + eta2 q_k``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import cvxpy as cp
import numpy as np
import scipy.linalg as la

from .analysis import AnalysisCertificate, analysis_lmi_feasible, det_weight
from .errors import (
    DimensionMismatch,
    GainInfeasible,
    InfeasibleInitial,
    MaxIterations,
)
from .lti import Plant, close_loop, spectral_radius
from .sdp import (
    DEFAULT_SETTINGS,
    NUMERICAL_FAILURE,
    SdpProblem,
    SolverSettings,
    rootdet_epigraph,
)

log = logging.getLogger(__name__)


def _bmat(blocks):
    if any(isinstance(b, cp.Expression) for row in blocks for b in row):
        return cp.bmat(blocks)
    return np.block(blocks)


def _null_basis(M, tol=1e-12):
    """Orthonormal null-space basis of ``M`` with a fixed column sign."""
    N = la.null_space(M, rcond=tol) if M.size else np.eye(M.shape[1])
    for j in range(N.shape[1]):
        col = N[:, j]
        nz = np.flatnonzero(np.abs(col) > 1e-12)
        if nz.size and col[nz[0]] < 0:
            N[:, j] = -col
    return N


def _sandwich(T, M):
    """``T' M T``, symmetrized so that rounding leaves no skew part."""
    S = T.T @ M @ T
    return (S + S.T) / 2


@dataclass(frozen=True)
class NullBases:
    """``W`` spans ker [B2' D12'] (actuator side), ``V`` spans ker [C2 0]."""

    W: np.ndarray
    V: np.ndarray


def null_bases(plant: Plant) -> NullBases:
    W = _null_basis(np.hstack([plant.B2.T, plant.D12.T]))
    V = _null_basis(np.hstack([plant.C2, np.zeros((plant.p_y, plant.m_w))]))
    return NullBases(W, V)


@dataclass(frozen=True)
class DualLmiBlocks:
    """Affine builders of the two projected LMIs for one plant.

    Each method accepts numpy arrays or cvxpy expressions and returns the
    sandwiched symmetric block, or ``None`` when the basis is empty (the
    projected condition is then vacuous).
    """

    plant: Plant
    bases: NullBases

    def inner_x(self, X, eta2):
        p = self.plant
        phi = eta2 * np.eye(p.m_w) - p.B1.T @ X @ p.B1 - p.D11.T @ p.D11
        off = p.A.T @ X @ p.B1 + p.C1.T @ p.D11
        return _bmat([[-X + p.A.T @ X @ p.A + p.C1.T @ p.C1, off], [off.T, -phi]])

    def inner_ytilde(self, Yt, q):
        p = self.plant
        phi = np.eye(p.p_z) - p.C1 @ Yt @ p.C1.T - q * (p.D11 @ p.D11.T)
        off = p.A @ Yt @ p.C1.T + q * (p.B1 @ p.D11.T)
        return _bmat([[-Yt + p.A @ Yt @ p.A.T + q * (p.B1 @ p.B1.T), off], [off.T, -phi]])

    def inner_y(self, Y, eta2):
        """Variant with ``Y = eta2 X^-1``; equals ``eta2 * inner_ytilde(Y/eta2, 1/eta2)``."""
        p = self.plant
        phi = eta2 * np.eye(p.p_z) - p.C1 @ Y @ p.C1.T - p.D11 @ p.D11.T
        off = p.A @ Y @ p.C1.T + p.B1 @ p.D11.T
        return _bmat([[-Y + p.A @ Y @ p.A.T + p.B1 @ p.B1.T, off], [off.T, -phi]])

    def L_X(self, X, eta2):
        V = self.bases.V
        if V.shape[1] == 0:
            return None
        return _sandwich(V, self.inner_x(X, eta2))

    def L_Ytilde(self, Yt, q):
        W = self.bases.W
        if W.shape[1] == 0:
            return None
        return _sandwich(W, self.inner_ytilde(Yt, q))

    def L_Y(self, Y, eta2):
        W = self.bases.W
        if W.shape[1] == 0:
            return None
        return _sandwich(W, self.inner_y(Y, eta2))


def assemble_dual_lmis(plant: Plant, bases: NullBases | None = None) -> DualLmiBlocks:
    if bases is None:
        bases = null_bases(plant)
    n = plant.n
    if bases.V.shape[0] != n + plant.m_w:
        raise DimensionMismatch(f"V has {bases.V.shape[0]} rows, expected {n + plant.m_w}")
    if bases.W.shape[0] != n + plant.p_z:
        raise DimensionMismatch(f"W has {bases.W.shape[0]} rows, expected {n + plant.p_z}")
    return DualLmiBlocks(plant, bases)


# -- gain recovery ---------------------------------------------------------

@dataclass(frozen=True)
class GainLmiData:
    Z_mat: np.ndarray
    P_mat: np.ndarray
    Q_mat: np.ndarray

    def lhs(self, K):
        PKQ = self.P_mat.T @ K @ self.Q_mat
        return self.Z_mat + PKQ + PKQ.T


def gain_lmi_data(plant: Plant, X, eta2) -> GainLmiData:
    """``Z``, ``P``, ``Q`` of the gain LMI at ``q = 1/eta2``."""
    p = plant
    n, mw, pz = p.n, p.m_w, p.p_z
    X = np.asarray(X, dtype=float)
    Z = np.block([
        [-X, np.zeros((n, mw)), p.A.T @ X, p.C1.T],
        [np.zeros((mw, n)), -eta2 * np.eye(mw), p.B1.T @ X, p.D11.T],
        [X @ p.A, X @ p.B1, -X, np.zeros((n, pz))],
        [p.C1, p.D11, np.zeros((pz, n)), -np.eye(pz)],
    ])
    Pt = np.vstack([np.zeros((n, p.m_u)), np.zeros((mw, p.m_u)), X @ p.B2, p.D12])
    Q = np.hstack([p.C2, np.zeros((p.p_y, mw + n + pz))])
    return GainLmiData(0.5 * (Z + Z.T), Pt.T, Q)


def recover_gain(plant: Plant, X, eta2: float,
                 settings: SolverSettings = DEFAULT_SETTINGS) -> np.ndarray:
    """Solve the gain LMI for ``K`` given ``(X, eta2)``.

    First minimizes ``lam`` with ``LHS(K) <= lam I``; if ``lam < 0`` a second
    SDP returns the smallest-Frobenius-norm ``K`` with ``LHS(K) <= (lam/2) I``.

    Raises
    ------
    GainInfeasible
        if the minimal ``lam`` is not negative.
    """
    data = gain_lmi_data(plant, X, eta2)
    N = data.Z_mat.shape[0]
    scale = max(1.0, float(np.abs(data.Z_mat).max()))

    prob = SdpProblem(settings=settings)
    K = prob.matrix("K", plant.m_u, plant.p_y)
    lam = prob.scalar("lam")
    prob.lmi(data.lhs(K) - lam * np.eye(N), "<<", strict=False, name="gain")
    # keeps the lam-minimizer bounded when some direction of K is free
    prob.add(cp.norm(K, "fro") <= 1e6)
    prob.minimize(lam)
    sol = prob.solve()
    if not sol.feasible:
        raise GainInfeasible(f"gain SDP status {sol.status}", lam=None)
    lam_star = sol["lam"]
    if not lam_star < -1e-9 * scale:
        raise GainInfeasible(f"minimal lambda {lam_star:.3g} is not negative", lam=lam_star)

    prob2 = SdpProblem(settings=settings)
    K2 = prob2.matrix("K", plant.m_u, plant.p_y)
    prob2.lmi(data.lhs(K2) - 0.5 * lam_star * np.eye(N), "<<", strict=False, name="gain")
    prob2.minimize(cp.norm(K2, "fro"))
    sol2 = prob2.solve()
    Kv = np.atleast_2d(sol2["K"]) if sol2.feasible else np.atleast_2d(sol["K"])
    if np.max(np.linalg.eigvalsh(data.lhs(Kv))) >= 0:
        Kv = np.atleast_2d(sol["K"])
    return Kv.reshape(plant.m_u, plant.p_y)


# -- CCL iteration ---------------------------------------------------------

# ceiling for the automatic strictness back-off in ccl_synthesize
MAX_MARGIN = 1e-5


@dataclass(frozen=True)
class CclOptions:
    max_iterations: int = 100
    tol_couple: float = 1e-6
    damping: bool = False
    margin: float = 1e-7
    settings: SolverSettings = DEFAULT_SETTINGS
    verify: bool = True


@dataclass(frozen=True)
class SynthesisIterate:
    X: np.ndarray
    Y_tilde: np.ndarray
    eta2: float
    q: float
    coupling_residual: float
    scalar_residual: float
    objective: float


@dataclass
class SynthesisResult:
    K: np.ndarray | None
    achieved_gamma: float
    iterations: list = field(default_factory=list)
    status: str = "max_iterations"
    certificate: AnalysisCertificate | None = None
    gamma: float = math.nan
    a: float = math.nan

    @property
    def success(self) -> bool:
        return self.status == "success"

    def raise_for_status(self):
        if self.status == "infeasible_initial":
            raise InfeasibleInitial("initial convex problem is infeasible")
        if self.status != "success":
            raise MaxIterations(f"no verified gain ({self.status})", self.iterations)
        return self


def _residuals(X, Yt, eta2, q):
    return float(np.trace(X @ Yt) - X.shape[0]), float(eta2 * q - 1.0)


class _CclProblem:
    """The per-iteration SDP, compiled once; the linearization point is a parameter."""

    def __init__(self, plant: Plant, a: float, gamma: float, opts: CclOptions):
        n, m = plant.n, plant.m_w
        blocks = assemble_dual_lmis(plant)
        prob = SdpProblem(strictness_margin=opts.margin, settings=opts.settings)
        X = prob.sym("X", n)
        Yt = prob.sym("Yt", n)
        e2 = prob.scalar("eta2")
        q = prob.scalar("q")
        Xk = prob.param("Xk", (n, n), np.zeros((n, n)))
        Yk = prob.param("Yk", (n, n), np.zeros((n, n)))
        e2k = prob.param("eta2k", (), 0.0)
        qk = prob.param("qk", (), 0.0)

        LX = blocks.L_X(X, e2)
        if LX is not None:
            prob.lmi(LX, "<<", name="L_X")
        LY = blocks.L_Ytilde(Yt, q)
        if LY is not None:
            prob.lmi(LY, "<<", name="L_Ytilde")
        prob.lmi(X, ">>", name="X_pos")
        # couplings relaxed non-strictly so that equality stays reachable
        prob.lmi(_bmat([[X, np.eye(n)], [np.eye(n), Yt]]), ">>", strict=False, name="relax_XY")
        prob.lmi(cp.bmat([[cp.reshape(e2, (1, 1), order="F"), np.ones((1, 1))],
                          [np.ones((1, 1)), cp.reshape(q, (1, 1), order="F")]]),
                 ">>", strict=False, name="relax_eq")
        w = det_weight(a, m)
        g2 = gamma**2
        if w > 0:
            t = prob.scalar("t")
            phi = e2 * np.eye(m) - plant.B1.T @ X @ plant.B1 - plant.D11.T @ plant.D11
            rootdet_epigraph(prob, phi, t, name="phi")
            prob.add(e2 - w * t <= g2 * (1.0 - opts.margin))
        else:
            prob.add(e2 <= g2 * (1.0 - opts.margin))
        prob.minimize(cp.trace(Xk @ Yt) + cp.trace(X @ Yk) + e2k * q + e2 * qk)
        self.prob = prob
        self.params = (Xk, Yk, e2k, qk)

    def solve(self, Xk, Yk, e2k, qk):
        for p, v in zip(self.params, (Xk, Yk, e2k, qk)):
            p.value = v
        return self.prob.solve()


def _damp(prev, new):
    """Step length in (0, 1] minimizing the summed coupling residual on the segment."""
    X0, Y0, e0, q0 = prev
    X1, Y1, e1, q1 = new
    dX, dY, de, dq = X1 - X0, Y1 - Y0, e1 - e0, q1 - q0
    lin = np.trace(dX @ Y0 + X0 @ dY) + de * q0 + e0 * dq
    quad = np.trace(dX @ dY) + de * dq
    if quad > 0:
        alpha = -lin / (2.0 * quad)
        return float(min(max(alpha, 1e-3), 1.0))
    return 1.0


def ccl_synthesize(plant: Plant, a: float, gamma: float,
                   opts: CclOptions = CclOptions(),
                   raise_on_failure: bool = True) -> SynthesisResult:
    """Cone-complementarity linearization for an SOF gain with ``|||F_cl|||_a < gamma``.

    ``a = math.inf`` drops the determinant condition (plain H-infinity SOF).
    On convergence the gain is recovered from ``(X, eta2)`` and, if
    ``opts.verify``, certified by :func:`analysis_lmi_feasible`.
    """
    if not gamma > 0 or a < 0:
        raise ValueError("need gamma > 0 and a >= 0")
    n = plant.n
    ccl = _CclProblem(plant, a, gamma, opts)
    margin = opts.margin
    result = SynthesisResult(None, math.nan, [], "max_iterations", None, gamma, a)

    def step(point):
        # badly scaled steps tend to fail near the strict-LMI boundary; back off from it
        nonlocal ccl, margin
        sol = ccl.solve(*point)
        while sol.status == NUMERICAL_FAILURE and margin < MAX_MARGIN:
            margin = min(10.0 * margin, MAX_MARGIN)
            log.info("retrying CCL step with strictness margin %g", margin)
            ccl = _CclProblem(plant, a, gamma, replace(opts, margin=margin))
            sol = ccl.solve(*point)
        return sol

    sol = step((np.zeros((n, n)), np.zeros((n, n)), 0.0, 0.0))
    if not sol.feasible:
        result.status = "infeasible_initial"
        log.info("initial CCL problem %s", sol.status)
        if raise_on_failure:
            raise InfeasibleInitial(f"initial convex problem: {sol.status}")
        return result
    cur = (sol["X"], sol["Yt"], sol["eta2"], sol["q"])
    result.iterations.append(SynthesisIterate(*cur, *_residuals(*cur), math.nan))

    for k in range(1, opts.max_iterations + 1):
        if _converged(result.iterations[-1], n, opts.tol_couple):
            if _finish(plant, a, gamma, cur, opts, result):
                return result
        sol = step(cur)
        if not sol.feasible:
            log.warning("CCL step %d: %s", k, sol.status)
            break
        new = (sol["X"], sol["Yt"], sol["eta2"], sol["q"])
        if opts.damping:
            alpha = _damp(cur, new)
            new = tuple(c + alpha * (v - c) for c, v in zip(cur, new))
        cur = new
        result.iterations.append(
            SynthesisIterate(*cur, *_residuals(*cur), float(sol.objective_value)))
    else:
        if _converged(result.iterations[-1], n, opts.tol_couple):
            if _finish(plant, a, gamma, cur, opts, result):
                return result
    result.status = "max_iterations"
    if raise_on_failure:
        raise MaxIterations("CCL did not reach a verified gain", result.iterations)
    return result


def _converged(it: SynthesisIterate, n: int, tol: float) -> bool:
    return it.coupling_residual < tol * n and it.scalar_residual < tol


def _finish(plant, a, gamma, cur, opts, result) -> bool:
    X, _, eta2, _ = cur
    try:
        K = recover_gain(plant, 0.5 * (X + X.T), eta2, opts.settings)
    except GainInfeasible as exc:
        log.info("gain recovery failed: %s", exc)
        return False
    if spectral_radius(close_loop(plant, K).A) >= 1.0:
        return False
    cert = None
    if opts.verify:
        cert = analysis_lmi_feasible(plant, K, a, gamma, opts.settings, opts.margin)
        if not cert.feasible:
            log.info("recovered gain failed analysis at gamma=%g", gamma)
            return False
    result.K = K
    result.certificate = cert
    result.achieved_gamma = cert.bound if cert is not None else math.sqrt(eta2)
    result.status = "success"
    return True


def minimize_gamma(plant: Plant, a: float, gamma_hi: float, gamma_lo: float = 0.0,
                   rel_tol: float = 0.01, opts: CclOptions = CclOptions(),
                   max_bisections: int = 30) -> SynthesisResult:
    """Bisect ``gamma`` over repeated CCL runs; returns the best successful result."""
    best = ccl_synthesize(plant, a, gamma_hi, opts, raise_on_failure=False)
    if not best.success:
        return best
    hi = min(gamma_hi, best.achieved_gamma)
    lo = gamma_lo
    for _ in range(max_bisections):
        if hi - lo <= rel_tol * hi:
            break
        mid = 0.5 * (lo + hi)
        res = ccl_synthesize(plant, a, mid, opts, raise_on_failure=False)
        if res.success:
            best = res
            hi = min(mid, res.achieved_gamma)
        elif res.status == "infeasible_initial":
            lo = mid
        else:
            lo = mid
    return best
