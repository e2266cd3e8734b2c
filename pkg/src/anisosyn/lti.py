"""Discrete-time LTI realizations, Lyapunov and Riccati solvers, ZOH.

All routines are pure functions of their inputs.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la

from .errors import (
    DimensionMismatch,
    NonSymmetric,
    UnstableMatrix,
)

# spectral radius must stay below 1 - EPS_STAB to count as stable
EPS_STAB = 1e-9
TOL_LYAP = 1e-10
TOL_RIC = 1e-8
# invariant-subspace results with a worse residual are refined or rejected
_RIC_REFINE_STEPS = 4
# at the existence threshold the pencil has a double unit-circle eigenvalue
# which rounding splits by ~sqrt(machine eps); count that as not stabilizing
EPS_RIC_STAB = 1e-7


def _as_matrix(value, name, shape=None):
    arr = np.atleast_2d(np.asarray(value, dtype=float))
    if arr.ndim != 2:
        raise DimensionMismatch(f"{name} must be a 2-D array, got ndim={arr.ndim}")
    if shape is not None and arr.shape != shape:
        raise DimensionMismatch(f"{name} has shape {arr.shape}, expected {shape}")
    return arr


def _empty_aware(value, rows, cols, name):
    """Coerce ``value`` to a ``rows x cols`` float array, allowing zero sizes."""
    arr = np.asarray(value, dtype=float)
    if arr.size == 0:
        return np.zeros((rows, cols))
    arr = np.atleast_2d(arr)
    if arr.shape != (rows, cols):
        raise DimensionMismatch(f"{name} has shape {arr.shape}, expected {(rows, cols)}")
    return arr


@dataclass(frozen=True)
class StateSpace:
    """Discrete-time realization ``x+ = A x + B u``, ``y = C x + D u``.

    ``n = 0`` (a static gain ``D``) is allowed; ``A``, ``B`` and ``C`` are
    then empty arrays of the right shape.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray

    def __post_init__(self):
        D = _as_matrix(self.D, "D")
        p, m = D.shape
        A = np.asarray(self.A, dtype=float)
        n = 0 if A.size == 0 else np.atleast_2d(A).shape[0]
        A = _empty_aware(A, n, n, "A")
        B = _empty_aware(self.B, n, m, "B")
        C = _empty_aware(self.C, p, n, "C")
        if m < 1 or p < 1:
            raise DimensionMismatch("need at least one input and one output")
        for name, arr in (("A", A), ("B", B), ("C", C), ("D", D)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.D.shape[1]

    @property
    def p(self) -> int:
        return self.D.shape[0]

    def similarity(self, T) -> "StateSpace":
        """Realization in coordinates ``x = T x'``."""
        T = _as_matrix(T, "T", (self.n, self.n))
        Ti = np.linalg.inv(T)
        return StateSpace(Ti @ self.A @ T, Ti @ self.B, self.C @ T, self.D)

    def freqresp(self, theta) -> np.ndarray:
        """Transfer matrix ``C (e^{j theta} I - A)^-1 B + D`` at each angle."""
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        out = np.empty((theta.size, self.p, self.m), dtype=complex)
        eye = np.eye(self.n)
        for k, th in enumerate(theta):
            if self.n:
                out[k] = self.C @ np.linalg.solve(np.exp(1j * th) * eye - self.A, self.B) + self.D
            else:
                out[k] = self.D
        return out

    def sigma_max(self, theta) -> np.ndarray:
        resp = self.freqresp(theta)
        return np.array([np.linalg.norm(G, 2) for G in resp])


@dataclass(frozen=True)
class ContinuousStateSpace:
    """Continuous-time realization ``dx/dt = A x + B u``, ``y = C x + D u``."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray

    def __post_init__(self):
        # reuse the discrete validator, only the interpretation differs
        ss = StateSpace(self.A, self.B, self.C, self.D)
        for name in "ABCD":
            object.__setattr__(self, name, getattr(ss, name))

    @property
    def n(self) -> int:
        return self.A.shape[0]


@dataclass(frozen=True)
class Plant:
    """Generalized plant for static output feedback ``u = K y``.

    ::

        x+ = A x + B1 w + B2 u
        z  = C1 x + D11 w + D12 u
        y  = C2 x
    """

    A: np.ndarray
    B1: np.ndarray
    B2: np.ndarray
    C1: np.ndarray
    C2: np.ndarray
    D11: np.ndarray
    D12: np.ndarray

    def __post_init__(self):
        A = _as_matrix(self.A, "A")
        n = A.shape[0]
        if A.shape != (n, n):
            raise DimensionMismatch(f"A must be square, got {A.shape}")
        B1 = _as_matrix(self.B1, "B1")
        B2 = _as_matrix(self.B2, "B2")
        C1 = _as_matrix(self.C1, "C1")
        C2 = _as_matrix(self.C2, "C2")
        if B1.shape[0] != n:
            raise DimensionMismatch(f"B1 must have {n} rows, got {B1.shape}")
        if B2.shape[0] != n:
            raise DimensionMismatch(f"B2 must have {n} rows, got {B2.shape}")
        if C1.shape[1] != n:
            raise DimensionMismatch(f"C1 must have {n} columns, got {C1.shape}")
        if C2.shape[1] != n:
            raise DimensionMismatch(f"C2 must have {n} columns, got {C2.shape}")
        D11 = _as_matrix(self.D11, "D11", (C1.shape[0], B1.shape[1]))
        D12 = _as_matrix(self.D12, "D12", (C1.shape[0], B2.shape[1]))
        for name, arr in (("A", A), ("B1", B1), ("B2", B2), ("C1", C1),
                          ("C2", C2), ("D11", D11), ("D12", D12)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m_w(self) -> int:
        return self.B1.shape[1]

    @property
    def m_u(self) -> int:
        return self.B2.shape[1]

    @property
    def p_z(self) -> int:
        return self.C1.shape[0]

    @property
    def p_y(self) -> int:
        return self.C2.shape[0]

    def similarity(self, T) -> "Plant":
        T = _as_matrix(T, "T", (self.n, self.n))
        Ti = np.linalg.inv(T)
        return Plant(Ti @ self.A @ T, Ti @ self.B1, Ti @ self.B2,
                     self.C1 @ T, self.C2 @ T, self.D11, self.D12)

    def as_dict(self) -> dict:
        return {k: getattr(self, k).tolist()
                for k in ("A", "B1", "B2", "C1", "C2", "D11", "D12")}


class ContinuousPlant(Plant):
    """A :class:`Plant` whose matrices describe ``dx/dt`` rather than ``x+``."""


@dataclass(frozen=True)
class RiccatiSolution:
    X: np.ndarray
    Psi_q: np.ndarray
    stabilizing: bool
    closed_loop_spectral_radius: float
    residual: float = field(default=np.nan)


def spectral_radius(A) -> float:
    A = np.asarray(A, dtype=float)
    if A.size == 0:
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvals(A))))


def is_stable(sys, eps: float = EPS_STAB) -> bool:
    """True iff the spectral radius of ``sys.A`` is below ``1 - eps``."""
    A = sys.A if hasattr(sys, "A") else np.asarray(sys, dtype=float)
    return spectral_radius(A) < 1.0 - eps


def _check_symmetric(Q, name="Q", tol=1e-10):
    if np.linalg.norm(Q - Q.T) > tol * (1.0 + np.linalg.norm(Q)):
        raise NonSymmetric(f"{name} is not symmetric")


def solve_dlyap(A, Q) -> np.ndarray:
    """Solve ``X = A^T X A + Q`` for a Schur-stable ``A``.

    Raises
    ------
    UnstableMatrix
        if the spectral radius of ``A`` is not below one.
    NonSymmetric
        if ``Q`` is not symmetric.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    if A.size == 0:
        return np.zeros((0, 0))
    if A.shape[0] != A.shape[1] or Q.shape != A.shape:
        raise DimensionMismatch(f"A {A.shape} and Q {Q.shape} must be square and equal")
    _check_symmetric(Q)
    if not is_stable(A):
        raise UnstableMatrix(f"spectral radius {spectral_radius(A):.6g} >= 1")
    # scipy solves a X a^T - X + q = 0
    X = la.solve_discrete_lyapunov(A.T, Q)
    X = 0.5 * (X + X.T)
    res = np.linalg.norm(X - A.T @ X @ A - Q)
    if res > TOL_LYAP * (1.0 + np.linalg.norm(Q)) * max(1.0, np.linalg.norm(X)):
        # one refinement pass on the residual equation
        X = X + la.solve_discrete_lyapunov(A.T, Q - X + A.T @ X @ A)
        X = 0.5 * (X + X.T)
    return X


def _dare_map(X, A, B, Q, R, S):
    """Right-hand side ``A'XA + L'Psi^-1 L + Q`` with ``Psi = R - B'XB``."""
    Psi = R - B.T @ X @ B
    L = B.T @ X @ A + S.T
    return A.T @ X @ A + L.T @ np.linalg.solve(Psi, L) + Q, Psi


def _dare_gain(X, A, B, R, S):
    Psi = R - B.T @ X @ B
    return np.linalg.solve(Psi, B.T @ X @ A + S.T), Psi


def dare_fixed_point(A, B, Q, R, S, max_iter=20000, tol=1e-13):
    """Monotone iteration ``X <- f(X)`` from ``X = 0``.

    Returns ``(X, converged)``. Stops early (not converged) once ``Psi``
    loses positive definiteness.
    """
    n = A.shape[0]
    X = np.zeros((n, n))
    for _ in range(max_iter):
        try:
            Xn, Psi = _dare_map(X, A, B, Q, R, S)
        except np.linalg.LinAlgError:
            return X, False
        if np.min(np.linalg.eigvalsh(0.5 * (Psi + Psi.T))) <= 0 or not np.all(np.isfinite(Xn)):
            return X, False
        Xn = 0.5 * (Xn + Xn.T)
        if np.linalg.norm(Xn - X) <= tol * (1.0 + np.linalg.norm(Xn)):
            return Xn, True
        X = Xn
    return X, False


def _newton_refine(X, A, B, Q, R, S, steps=_RIC_REFINE_STEPS):
    """Kleinman-Hewer steps: each one solves a Lyapunov equation in ``A + B K``."""
    for _ in range(steps):
        K, Psi = _dare_gain(X, A, B, R, S)
        Acl = A + B @ K
        if spectral_radius(Acl) >= 1.0:
            break
        rhs = Q + S @ K + K.T @ S.T - K.T @ R @ K
        rhs = 0.5 * (rhs + rhs.T)
        with warnings.catch_warnings():
            # near-threshold steps are ill-conditioned; the caller keeps X only if the residual drops
            warnings.simplefilter("ignore", la.LinAlgWarning)
            X = la.solve_discrete_lyapunov(Acl.T, rhs)
        X = 0.5 * (X + X.T)
    return X


def solve_dare(A, B, Q, R, S=None):
    """Stabilizing solution of ``X = A'XA + (A'XB + S) Psi^-1 (A'XB + S)' + Q``.

    Here ``Psi = R - B'XB`` and ``R`` may be indefinite. The solution is
    taken from the stable deflating subspace of the extended symplectic
    pencil; if that extraction fails the monotone fixed-point iteration
    from ``X = 0`` is used instead.

    Returns
    -------
    X, K, residual
        ``K = Psi^-1 (A'XB + S)'`` is the associated feedback, so the
        closed-loop matrix is ``A + B K``. ``X`` is ``None`` if neither
        route produced a finite solution.
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    n, m = B.shape
    S = np.zeros((n, m)) if S is None else np.asarray(S, dtype=float)
    X = None
    try:
        # scipy's sign convention: A'XA - X - (A'XB + s)(r + B'XB)^-1(..)' + q = 0
        X = la.solve_discrete_are(A, B, Q, -R, s=S)
    except (np.linalg.LinAlgError, ValueError):
        X = None
    if X is not None and np.all(np.isfinite(X)):
        X = 0.5 * (X + X.T)
        X = _refine_if_needed(X, A, B, Q, R, S)
    else:
        Xfp, ok = dare_fixed_point(A, B, Q, R, S)
        X = Xfp if ok else None
    if X is None:
        return None, None, np.inf
    try:
        fX, _ = _dare_map(X, A, B, Q, R, S)
        K, _ = _dare_gain(X, A, B, R, S)
    except np.linalg.LinAlgError:
        return X, None, np.inf
    res = np.linalg.norm(X - fX) / (1.0 + np.linalg.norm(X) + np.linalg.norm(Q))
    return X, K, res


def _refine_if_needed(X, A, B, Q, R, S):
    try:
        fX, _ = _dare_map(X, A, B, Q, R, S)
    except np.linalg.LinAlgError:
        return X
    scale = 1.0 + np.linalg.norm(X) + np.linalg.norm(Q)
    if np.linalg.norm(X - fX) <= 0.1 * TOL_RIC * scale:
        return X
    try:
        Xr = _newton_refine(X, A, B, Q, R, S)
        fXr, _ = _dare_map(Xr, A, B, Q, R, S)
    except np.linalg.LinAlgError:
        return X
    if np.all(np.isfinite(Xr)) and np.linalg.norm(Xr - fXr) < np.linalg.norm(X - fX):
        return Xr
    return X


def solve_dare_aniso(sys: StateSpace, q: float) -> RiccatiSolution:
    """Stabilizing solution of the anisotropic Riccati equation at level ``q``.

    Solves ``X = A'XA + (A'XB + C'D) Psi_q^-1 (A'XB + C'D)' + C'C`` with
    ``Psi_q = I/q - B'XB - D'D``. ``stabilizing`` is set only when the
    solution exists, ``Psi_q > 0``, ``X >= 0``, the closed-loop matrix
    ``A + B K_ric`` is Schur stable and the residual meets ``TOL_RIC``.

    With ``q = 1/gamma**2`` this is the bounded-real-lemma equation.
    """
    if not q > 0:
        raise ValueError("q must be positive")
    A, B, C, D = sys.A, sys.B, sys.C, sys.D
    m = sys.m
    R = np.eye(m) / q - D.T @ D
    if sys.n == 0:
        Psi = R
        ok = bool(np.min(np.linalg.eigvalsh(Psi)) > 0)
        return RiccatiSolution(np.zeros((0, 0)), Psi, ok, 0.0, 0.0)
    Q = C.T @ C
    S = C.T @ D
    X, K, res = solve_dare(A, B, Q, R, S)
    if X is None or K is None:
        if X is None:
            X = np.full((sys.n, sys.n), np.nan)
        return RiccatiSolution(X, R - B.T @ X @ B, False, np.inf, np.inf)
    Psi = R - B.T @ X @ B
    Psi = 0.5 * (Psi + Psi.T)
    rho = spectral_radius(A + B @ K)
    psi_min = np.min(np.linalg.eigvalsh(Psi))
    x_min = np.min(np.linalg.eigvalsh(X))
    xscale = max(1.0, np.linalg.norm(X, 2))
    candidate = bool(
        psi_min > 1e-12 * (1.0 / q)
        and rho < 1.0 - EPS_RIC_STAB
        and x_min >= -1e-9 * xscale
    )
    # an inaccurate extraction cannot be told apart from a missing solution
    # near the threshold, so both count as "not stabilizing"
    stabilizing = candidate and bool(res <= TOL_RIC)
    return RiccatiSolution(X, Psi, stabilizing, rho, float(res))


def riccati_gain(sys: StateSpace, sol: RiccatiSolution) -> np.ndarray:
    """``K_ric = Psi_q^-1 (A'XB + C'D)'`` for a computed solution."""
    L = sys.B.T @ sol.X @ sys.A + sys.D.T @ sys.C
    return np.linalg.solve(sol.Psi_q, L)


def close_loop(plant: Plant, K) -> StateSpace:
    """Closed loop of ``plant`` with ``u = K y``; input ``w``, output ``z``."""
    K = np.atleast_2d(np.asarray(K, dtype=float))
    if K.shape != (plant.m_u, plant.p_y):
        raise DimensionMismatch(
            f"K has shape {K.shape}, expected {(plant.m_u, plant.p_y)}")
    return StateSpace(
        plant.A + plant.B2 @ K @ plant.C2,
        plant.B1,
        plant.C1 + plant.D12 @ K @ plant.C2,
        plant.D11,
    )


def discretize_zoh(sys, Ts: float):
    """Zero-order-hold discretization at sample time ``Ts`` seconds.

    Accepts a :class:`ContinuousStateSpace` (returns :class:`StateSpace`)
    or a :class:`ContinuousPlant` (returns a discrete :class:`Plant`; both
    input channels are held).
    """
    if not Ts > 0:
        raise ValueError("Ts must be positive")
    if isinstance(sys, Plant):
        if not isinstance(sys, ContinuousPlant):
            raise TypeError("plant is already discrete")
        Ad, Bd = _zoh(sys.A, np.hstack([sys.B1, sys.B2]), Ts)
        mw = sys.m_w
        return Plant(Ad, Bd[:, :mw], Bd[:, mw:], sys.C1, sys.C2, sys.D11, sys.D12)
    Ad, Bd = _zoh(sys.A, sys.B, Ts)
    return StateSpace(Ad, Bd, sys.C, sys.D)


def _zoh(A, B, Ts):
    n, m = B.shape
    M = np.zeros((n + m, n + m))
    M[:n, :n] = A * Ts
    M[:n, n:] = B * Ts
    # expm is scaling-and-squaring with Pade; the augmented block gives the integral term
    E = la.expm(M)
    return E[:n, :n], E[:n, n:]
