"""H2, H-infinity, mean anisotropy and a-anisotropic norms.

The anisotropic norm rests on the Riccati characterization

    |||F|||_a <= gamma  iff  for some q in (0, min(gamma^-2, ||F||_inf^-2))
    the equation solved by :func:`~anisosyn.lti.solve_dare_aniso` has a
    stabilizing solution with Psi_q > 0 and
    det((1/q - gamma^2) Psi_q^-1) <= exp(-2a).

Writing s = 1/q, the smallest admissible gamma at a given s is

    J(s) = s - exp(-2a/m) det(Psi_q)^(1/m)

so ``|||F|||_a**2 = inf_s J(s)``. Both the norm and the bound check search
over log s, where the admissible set spans many decades.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgs, NotSquare, SingularInnovation, UnstableSystem
from .lti import (
    RiccatiSolution,
    StateSpace,
    is_stable,
    solve_dare,
    solve_dare_aniso,
    solve_dlyap,
)

_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0
# decades of s = 1/q scanned above the H-infinity threshold
_S_DECADES = 12.0
_GRID_POINTS = 49


def _require_stable(sys: StateSpace):
    if not is_stable(sys):
        raise UnstableSystem("system is not Schur stable")


def h2_norm(sys: StateSpace) -> float:
    """``sqrt(Tr(B'XB + D'D))`` with ``X = A'XA + C'C``."""
    _require_stable(sys)
    val = np.trace(sys.D.T @ sys.D)
    if sys.n:
        X = solve_dlyap(sys.A, sys.C.T @ sys.C)
        val += np.trace(sys.B.T @ X @ sys.B)
    return float(math.sqrt(max(val, 0.0)))


def _grid_peak(sys: StateSpace, points: int) -> float:
    theta = np.linspace(0.0, math.pi, points)
    return float(np.max(sys.sigma_max(theta)))


def _brl_feasible(sys: StateSpace, gamma: float) -> bool:
    return solve_dare_aniso(sys, 1.0 / gamma**2).stabilizing


def hinf_norm(sys: StateSpace, tol: float = 1e-8) -> float:
    """H-infinity norm by bisection on the bounded-real Riccati test.

    The lower bracket is the peak over a 512-point frequency grid (always a
    valid lower bound); the upper bracket starts at twice that and doubles
    until the Riccati equation has a stabilizing solution.
    """
    _require_stable(sys)
    if tol <= 0:
        raise InvalidArgs("tol must be positive")
    lo = _grid_peak(sys, 512)
    if lo == 0.0:
        # F(e^{jw}) vanishes on a grid of 512 points: F is zero
        return 0.0
    if _brl_feasible(sys, lo * (1.0 + tol)):
        return lo * (1.0 + 0.5 * tol)
    hi = 2.0 * lo
    while not _brl_feasible(sys, hi):
        lo, hi = hi, 2.0 * hi
    while hi - lo > tol * hi:
        mid = 0.5 * (lo + hi)
        if _brl_feasible(sys, mid):
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class AnisotropyResult:
    mean_anisotropy: float
    output_covariance: np.ndarray
    prediction_error_covariance: np.ndarray


def mean_anisotropy(filt: StateSpace) -> AnisotropyResult:
    """Mean anisotropy (nats) of the output of ``filt`` driven by unit white noise.

    The prediction-error covariance is the innovation covariance of the
    steady-state one-step predictor for ``x+ = A x + B v``, ``w = C x + D v``.
    """
    if filt.p != filt.m:
        raise NotSquare(f"colouring filter must be square, got {filt.p}x{filt.m}")
    _require_stable(filt)
    A, B, C, D = filt.A, filt.B, filt.C, filt.D
    m = filt.m
    DDt = D @ D.T
    if filt.n:
        P = solve_dlyap(A.T, B @ B.T)
        out_cov = C @ P @ C.T + DDt
        # dual (estimation) form of the same Riccati solver
        Sigma, _, res = solve_dare(A.T, C.T, B @ B.T, -DDt, B @ D.T)
        if Sigma is None or not np.isfinite(res):
            raise SingularInnovation("prediction Riccati equation has no solution")
        err_cov = C @ Sigma @ C.T + DDt
    else:
        out_cov = DDt.copy()
        err_cov = DDt.copy()
    out_cov = 0.5 * (out_cov + out_cov.T)
    err_cov = 0.5 * (err_cov + err_cov.T)
    eig = np.linalg.eigvalsh(err_cov)
    if eig[0] <= 1e-14 * max(1.0, eig[-1]):
        raise SingularInnovation("prediction-error covariance is singular")
    tr = np.trace(out_cov)
    value = -0.5 * (m * math.log(m / tr) + float(np.sum(np.log(eig))))
    return AnisotropyResult(max(value, 0.0), out_cov, err_cov)


@dataclass(frozen=True)
class AnisoNormCertificate:
    """Outcome of :func:`aniso_bound_check`.

    ``det_margin`` is the log-slack ``-2a - ln det((1/q - gamma^2) Psi_q^-1)``;
    it is nonnegative exactly when the determinant condition holds.
    """

    feasible: bool
    q: float
    gamma: float
    X: RiccatiSolution | None
    det_margin: float


def _log_terms(sys: StateSpace, s: float):
    """Riccati solve at ``q = 1/s`` plus ``sum log1p(-mu_i/s)`` of ``Psi_q/s``."""
    sol = solve_dare_aniso(sys, 1.0 / s)
    if not sol.stabilizing:
        return sol, None
    # Psi_q = s I - M with M = B'XB + D'D; work with log(1 - mu/s) to avoid cancellation
    M = s * np.eye(sys.m) - sol.Psi_q
    mu = np.linalg.eigvalsh(0.5 * (M + M.T))
    ratio = mu / s
    if np.any(ratio >= 1.0):
        return sol, None
    return sol, float(np.sum(np.log1p(-ratio)))


def _golden_max(f, lo, hi, tol):
    """Maximize a unimodal ``f`` on ``[lo, hi]``; returns ``(x, f(x))``."""
    c = hi - _INVPHI * (hi - lo)
    d = lo + _INVPHI * (hi - lo)
    fc, fd = f(c), f(d)
    while hi - lo > tol:
        if fc >= fd:
            hi, d, fd = d, c, fc
            c = hi - _INVPHI * (hi - lo)
            fc = f(c)
        else:
            lo, c, fc = c, d, fd
            d = lo + _INVPHI * (hi - lo)
            fd = f(d)
    return (c, fc) if fc >= fd else (d, fd)


def _scan_then_refine(f, log_lo, log_hi, tol):
    """Grid scan of ``f`` over ``[log_lo, log_hi]`` followed by golden refinement."""
    grid = np.linspace(log_lo, log_hi, _GRID_POINTS)
    vals = np.array([f(x) for x in grid])
    k = int(np.argmax(vals))
    if not np.isfinite(vals[k]):
        return grid[k], vals[k]
    a = grid[max(k - 1, 0)]
    b = grid[min(k + 1, len(grid) - 1)]
    x, fx = _golden_max(f, a, b, tol)
    if fx >= vals[k]:
        return x, fx
    return grid[k], vals[k]


def aniso_bound_check(sys: StateSpace, a: float, gamma: float,
                      rel_tol: float = 1e-4,
                      hinf: float | None = None) -> AnisoNormCertificate:
    """Search ``q`` for a certificate of ``|||F|||_a <= gamma``.

    Maximizes the log-slack of the determinant condition over ``log q``
    in the open interval ``(0, min(gamma^-2, ||F||_inf^-2))``.
    """
    _require_stable(sys)
    if a < 0 or not gamma > 0:
        raise InvalidArgs("need a >= 0 and gamma > 0")
    m = sys.m
    if hinf is None:
        hinf = hinf_norm(sys)
    s_min = max(gamma**2, hinf**2)
    g2 = gamma**2

    def slack(log_s):
        s = math.exp(log_s)
        if s <= s_min:
            return -np.inf
        _, lsum = _log_terms(sys, s)
        if lsum is None:
            return -np.inf
        # ln det((s - g2) Psi^-1) = m ln(1 - g2/s) - sum ln(1 - mu/s)
        return -2.0 * a - (m * math.log1p(-g2 / s) - lsum)

    log_lo = math.log(s_min) + 1e-9
    log_hi = math.log(s_min) + _S_DECADES * math.log(10.0)
    log_s, best = _scan_then_refine(slack, log_lo, log_hi, rel_tol)
    s = math.exp(log_s)
    if not np.isfinite(best):
        return AnisoNormCertificate(False, 1.0 / s, gamma, None, float(best))
    sol = solve_dare_aniso(sys, 1.0 / s)
    return AnisoNormCertificate(bool(best >= 0.0), 1.0 / s, gamma, sol, float(best))


def aniso_norm(sys: StateSpace, a: float, tol: float = 1e-10,
               hinf: float | None = None, h2: float | None = None) -> float:
    """a-anisotropic norm, ``sqrt(min_s J(s))`` clamped to ``[||F||_2/sqrt(m), ||F||_inf]``.

    ``tol`` is the width of the final golden-section bracket in ``log s``.
    """
    _require_stable(sys)
    if a < 0:
        raise InvalidArgs("a must be nonnegative")
    m = sys.m
    if h2 is None:
        h2 = h2_norm(sys)
    lower = h2 / math.sqrt(m)
    if a == 0.0:
        return lower
    if hinf is None:
        hinf = hinf_norm(sys)
    if hinf == 0.0:
        return 0.0
    s_min = hinf**2
    c = -2.0 * a / m

    def neg_cost(log_s):
        s = math.exp(log_s)
        _, lsum = _log_terms(sys, s)
        if lsum is None:
            return -np.inf
        # J(s) = s (1 - exp(-2a/m) prod(1 - mu/s)^(1/m))
        return s * math.expm1(c + lsum / m)

    log_lo = math.log(s_min) + 1e-12
    log_hi = math.log(s_min) + _S_DECADES * math.log(10.0)
    _, best = _scan_then_refine(neg_cost, log_lo, log_hi, tol)
    if not np.isfinite(best):
        return hinf
    value = math.sqrt(max(-best, 0.0))
    return min(max(value, lower), hinf)


def interp_bound(eta: float, sigma: float, m: int, a: float) -> float:
    """Upper bound on the a-anisotropic norm interpolating H-inf and H2 bounds.

    ``sqrt(eta^2 (1 - e^{-2a/m}) + (sigma^2/m) e^{-2a/m})`` where ``eta``
    bounds the H-infinity norm and ``sigma`` the H2 norm.
    """
    if eta < 0 or sigma < 0 or a < 0 or m < 1:
        raise InvalidArgs("eta, sigma, a must be nonnegative and m >= 1")
    w = math.exp(-2.0 * a / m)
    return math.sqrt(eta**2 * (1.0 - w) + sigma**2 / m * w)
