"""Small modeling layer for LMI feasibility and minimization problems.

Variables and affine expressions are cvxpy objects; this module adds the
things the control code needs on top: declared-variable bookkeeping,
strict LMIs with an explicit margin, a determinant-root epigraph built
from 2x2 PSD blocks, and a uniform status vocabulary.

Typical use::

    prob = SdpProblem()
    X = prob.sym("X", 2)
    prob.lmi(X - np.eye(2), ">>", strict=False)
    prob.lmi(X - 2 * np.eye(2), "<<", strict=False)
    prob.minimize(cp.trace(X))
    sol = prob.solve()
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import cvxpy as cp
import numpy as np

from .errors import ModelError

FEASIBLE = "feasible"
INFEASIBLE = "infeasible"
NUMERICAL_FAILURE = "numerical_failure"

# slack below -TOL_SDP on any constraint demotes a solve to numerical_failure
TOL_SDP = 1e-6


@dataclass(frozen=True)
class SolverSettings:
    """Conic solver configuration, passed unchanged into every solve."""

    solver: str = "CLARABEL"
    max_iter: int = 500
    tol: float = 1e-9
    fallback: tuple = ("SCS",)
    verbose: bool = False

    def options(self, solver: str) -> dict:
        if solver == "CLARABEL":
            return {"max_iter": self.max_iter, "tol_gap_abs": self.tol,
                    "tol_gap_rel": self.tol, "tol_feas": self.tol}
        if solver == "SCS":
            return {"max_iters": 100 * self.max_iter, "eps": max(self.tol, 1e-9)}
        if solver == "CVXOPT":
            return {"max_iters": self.max_iter, "abstol": self.tol,
                    "reltol": self.tol, "feastol": self.tol}
        return {}


DEFAULT_SETTINGS = SolverSettings()


@dataclass
class SdpSolution:
    status: str
    values: dict
    objective_value: float | None = None
    min_slack: float = math.nan
    solver_status: str = ""

    @property
    def feasible(self) -> bool:
        return self.status == FEASIBLE

    def __getitem__(self, name):
        return self.values[name]


@dataclass
class _Lmi:
    expr: object
    sense: str
    margin: float
    name: str


@dataclass
class SdpProblem:
    """A semidefinite program under construction.

    Parameters
    ----------
    strictness_margin
        ``eps`` used for strict LMIs: ``expr << 0`` becomes ``expr <= -eps*scale*I``.
    settings
        Solver configuration record.
    """

    strictness_margin: float = 1e-7
    settings: SolverSettings = field(default_factory=lambda: DEFAULT_SETTINGS)

    def __post_init__(self):
        self._vars: dict[str, cp.Variable] = {}
        self._params: dict[str, cp.Parameter] = {}
        self._lmis: list[_Lmi] = []
        self._linear: list = []
        self._objective = None
        self._sense = "min"
        self._compiled: cp.Problem | None = None
        self._aux = 0

    # declarations -----------------------------------------------------
    def _declare(self, name, obj, table):
        if name in self._vars or name in self._params:
            raise ModelError(f"name {name!r} declared twice")
        table[name] = obj
        self._compiled = None
        return obj

    def sym(self, name: str, n: int) -> cp.Variable:
        return self._declare(name, cp.Variable((n, n), symmetric=True, name=name), self._vars)

    def scalar(self, name: str) -> cp.Variable:
        return self._declare(name, cp.Variable(name=name), self._vars)

    def matrix(self, name: str, rows: int, cols: int) -> cp.Variable:
        return self._declare(name, cp.Variable((rows, cols), name=name), self._vars)

    def param(self, name: str, shape=(), value=None) -> cp.Parameter:
        p = cp.Parameter(shape, name=name)
        if value is not None:
            p.value = value
        return self._declare(name, p, self._params)

    def _aux_name(self, stem):
        self._aux += 1
        return f"_{stem}{self._aux}"

    @property
    def variables(self) -> dict:
        return dict(self._vars)

    # constraints ------------------------------------------------------
    def _check_refs(self, expr):
        known = {id(v) for v in self._vars.values()}
        for v in expr.variables():
            if id(v) not in known:
                raise ModelError(f"expression references undeclared variable {v.name()!r}")
        pknown = {id(p) for p in self._params.values()}
        for p in expr.parameters():
            if id(p) not in pknown:
                raise ModelError(f"expression references undeclared parameter {p.name()!r}")

    def _check_symmetric(self, expr, name):
        if expr.ndim != 2 or expr.shape[0] != expr.shape[1]:
            raise ModelError(f"LMI {name!r} is not square: shape {expr.shape}")
        if expr.is_constant():
            val = np.asarray(expr.value, dtype=float)
            if not np.allclose(val, val.T, atol=1e-10 * (1 + np.abs(val).max())):
                raise ModelError(f"LMI {name!r} is not symmetric")
            return
        # affine maps: symmetric at two random points means symmetric everywhere
        rng = np.random.default_rng(12345)
        leaves = list(expr.variables()) + list(expr.parameters())
        saved = [leaf.value if isinstance(leaf, cp.Parameter) else None for leaf in leaves]
        try:
            for _ in range(2):
                for leaf in leaves:
                    shape = leaf.shape
                    val = rng.standard_normal(shape) if shape else rng.standard_normal()
                    if len(shape) == 2 and shape[0] == shape[1] and leaf.attributes.get("symmetric"):
                        val = val + val.T
                    leaf.value = val
                val = np.atleast_2d(np.asarray(expr.value, dtype=float))
                if not np.allclose(val, val.T, atol=1e-9 * (1 + np.abs(val).max())):
                    raise ModelError(f"LMI {name!r} is not symmetric")
        finally:
            for leaf, old in zip(leaves, saved):
                if isinstance(leaf, cp.Parameter):
                    if old is not None:
                        leaf.value = old
                else:
                    leaf.value = None

    def lmi(self, expr, sense: str, strict: bool = True, scale: float = 1.0,
            name: str | None = None):
        """Add ``expr >> eps*I`` (sense ``">>"``) or ``expr << -eps*I`` (``"<<"``).

        ``eps`` is ``strictness_margin * scale`` for strict LMIs and zero
        otherwise.
        """
        if sense not in (">>", "<<"):
            raise ModelError(f"unknown LMI sense {sense!r}")
        expr = cp.Constant(expr) if not isinstance(expr, cp.Expression) else expr
        if expr.ndim == 0:
            expr = cp.reshape(expr, (1, 1), order="F")
        name = name or f"lmi{len(self._lmis)}"
        self._check_refs(expr)
        self._check_symmetric(expr, name)
        margin = self.strictness_margin * scale if strict else 0.0
        self._lmis.append(_Lmi(expr, sense, margin, name))
        self._compiled = None

    def add(self, constraint):
        """Add a scalar or elementwise affine constraint (a cvxpy constraint)."""
        for expr in constraint.args:
            self._check_refs(expr)
        self._linear.append(constraint)
        self._compiled = None

    def minimize(self, expr):
        self._set_objective(expr, "min")

    def maximize(self, expr):
        self._set_objective(expr, "max")

    def _set_objective(self, expr, sense):
        expr = cp.Constant(expr) if not isinstance(expr, cp.Expression) else expr
        if expr.size != 1:
            raise ModelError("objective must be scalar")
        self._check_refs(expr)
        self._objective = expr
        self._sense = sense
        self._compiled = None

    # solving ----------------------------------------------------------
    def _lmi_constraints(self):
        out = []
        for c in self._lmis:
            n = c.expr.shape[0]
            sym = 0.5 * (c.expr + c.expr.T)
            if c.sense == ">>":
                out.append(sym - c.margin * np.eye(n) >> 0)
            else:
                out.append(-sym - c.margin * np.eye(n) >> 0)
        return out

    def _compile(self):
        if not self._vars:
            raise ModelError("problem declares no variables")
        obj = self._objective if self._objective is not None else cp.Constant(0.0)
        objective = cp.Minimize(obj) if self._sense == "min" else cp.Maximize(obj)
        self._compiled = cp.Problem(objective, self._lmi_constraints() + self._linear)
        return self._compiled

    def slacks(self) -> dict:
        """Margin of each LMI at the current variable values (min eigenvalue)."""
        out = {}
        for c in self._lmis:
            val = np.atleast_2d(np.asarray(c.expr.value, dtype=float))
            val = 0.5 * (val + val.T)
            eig = np.linalg.eigvalsh(val)
            out[c.name] = float(eig[0]) if c.sense == ">>" else float(-eig[-1])
        return out

    def solve(self) -> SdpSolution:
        """Solve with the configured solver, falling back on solver errors."""
        prob = self._compiled or self._compile()
        for p in self._params.values():
            if p.value is None:
                raise ModelError(f"parameter {p.name()!r} has no value")
        status_raw = "not_run"
        for solver in (self.settings.solver,) + tuple(self.settings.fallback):
            try:
                prob.solve(solver=solver, verbose=self.settings.verbose,
                           **self.settings.options(solver))
                status_raw = prob.status
            except cp.error.SolverError as exc:
                status_raw = f"solver_error: {exc}"
                continue
            if status_raw in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE,
                              cp.INFEASIBLE, cp.INFEASIBLE_INACCURATE):
                break
        return self._collect(prob, status_raw)

    def _collect(self, prob, status_raw) -> SdpSolution:
        if status_raw in (cp.INFEASIBLE, cp.INFEASIBLE_INACCURATE):
            return SdpSolution(INFEASIBLE, {}, None, math.nan, status_raw)
        if status_raw not in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE):
            return SdpSolution(NUMERICAL_FAILURE, {}, None, math.nan, str(status_raw))
        values = {}
        for name, v in self._vars.items():
            if v.value is None:
                return SdpSolution(NUMERICAL_FAILURE, {}, None, math.nan, status_raw)
            val = np.asarray(v.value, dtype=float)
            values[name] = float(val) if val.ndim == 0 else val
        slack = self._min_slack()
        status = FEASIBLE if slack >= -TOL_SDP else NUMERICAL_FAILURE
        obj = None if self._objective is None else float(prob.value)
        return SdpSolution(status, values, obj, slack, status_raw)

    def _min_slack(self) -> float:
        worst = math.inf
        for name, margin in self.slacks().items():
            lmi = next(c for c in self._lmis if c.name == name)
            scale = max(1.0, float(np.abs(np.asarray(lmi.expr.value)).max()))
            worst = min(worst, (margin - lmi.margin) / scale)
        for c in self._linear:
            v = c.violation()
            v = float(np.max(v)) if np.size(v) else 0.0
            worst = min(worst, -v)
        return worst if worst != math.inf else 0.0


def rootdet_epigraph(problem: SdpProblem, block, t, name: str = "rootdet"):
    """Constrain ``0 <= t <= det(block)^(1/m)`` for an affine symmetric ``block``.

    Uses a lower-triangular ``Lam`` with ``[[block, Lam], [Lam', diag(Lam)]] >> 0``
    and ``t <= geomean(diag(Lam))``; the geometric mean is a binary tower of
    2x2 PSD blocks over ``diag(Lam)`` padded with copies of ``t`` to a power
    of two length. Maximizing ``t`` recovers ``det(block)^(1/m)``.
    """
    block = cp.Constant(block) if not isinstance(block, cp.Expression) else block
    if block.ndim != 2 or block.shape[0] != block.shape[1]:
        raise ModelError(f"rootdet block must be square, got shape {block.shape}")
    m = block.shape[0]
    if m == 1:
        problem.lmi(block, ">>", strict=False, name=f"{name}_psd")
        problem.add(t <= block[0, 0])
        problem.add(t >= 0)
        return
    lam = problem.matrix(problem._aux_name(f"{name}_L"), m, m)
    for i in range(m):
        for j in range(i + 1, m):
            problem.add(lam[i, j] == 0)
    d = cp.diag(lam)
    problem.lmi(cp.bmat([[block, lam], [lam.T, cp.diag(d)]]), ">>", strict=False,
                name=f"{name}_tri")
    size = 1 << (m - 1).bit_length()
    level = [d[i] for i in range(m)] + [t] * (size - m)
    while len(level) > 1:
        nxt = []
        for u, v in zip(level[0::2], level[1::2]):
            y = problem.scalar(problem._aux_name(f"{name}_g"))
            problem.lmi(cp.bmat([[_cell(u), _cell(y)], [_cell(y), _cell(v)]]), ">>", strict=False,
                        name=problem._aux_name(f"{name}_pair"))
            nxt.append(y)
        level = nxt
    problem.add(t <= level[0])
    problem.add(t >= 0)


def _cell(e):
    return cp.reshape(e, (1, 1), order="F")
