"""F4E pitch-loop case study, plant files, design runs and report emission."""
from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    AnisosynError,
    DimensionMismatch,
    InvalidPoint,
    ParseError,
    SolverFailure,
    UnstableSystem,
)
from .lti import (
    ContinuousPlant,
    Plant,
    StateSpace,
    close_loop,
    discretize_zoh,
    is_stable,
    spectral_radius,
)
from .norms import aniso_norm, hinf_norm
from .synthesis import CclOptions, ccl_synthesize

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
DEFAULT_TS = 0.01
A_DESIGN = 0.5
# stands in for a -> infinity: exp(-2a/m) underflows the determinant term
A_LARGE = 1e3
SIGMA_HEADER = "freq_rad_s,sigma_max"
GAIN_HEADER = "point,mode,K1,K2,gain_norm"
MODES = ("hinf", "aniso", "aniso_subopt")

# a11, a12, a13, a21, a22, a23, b1 per operating point
F4E_TABLE = {
    1: (-0.9896, 17.41, 96.15, 0.2648, -0.8512, -11.39, -97.78),
    2: (-0.6607, 18.11, 84.34, 0.08201, -0.6587, -10.81, -272.2),
    3: (-1.702, 50.72, 263.5, 0.2201, -1.418, -31.99, -85.09),
    4: (-0.5162, 29.96, 178.9, -0.6896, -1.225, -30.38, -175.6),
}
F4E_FLIGHT = {1: (0.5, 5000), 2: (0.9, 35000), 3: (0.85, 5000), 4: (1.5, 35000)}
GAMMA_INF = {1: 0.3, 2: 0.6, 3: 1.0, 4: 0.25}
ANISO_FACTOR = {1: 0.84, 2: 0.8, 3: 0.82, 4: 1.0}
SERVO_POLE = -30.0
U_WEIGHT = 0.001

_PLANT_KEYS = ("A", "B1", "B2", "C1", "C2", "D11", "D12")
_SYSTEM_KEYS = ("A", "B", "C", "D")


# -- F4E model -------------------------------------------------------------

def f4e_model(point: int) -> ContinuousPlant:
    """Continuous-time F4E pitch plant at operating point 1..4.

    States are load factor Nz, pitch rate q and elevon angle; the elevon
    follows the command through a first-order 30 rad/s servo. The
    disturbance enters every state, ``z = [Nz, q, 0.001 u]`` and
    ``y = [Nz, q]``.
    """
    if point not in F4E_TABLE:
        raise InvalidPoint(f"operating point must be 1..4, got {point!r}")
    a11, a12, a13, a21, a22, a23, b1 = F4E_TABLE[point]
    A = np.array([[a11, a12, a13], [a21, a22, a23], [0.0, 0.0, SERVO_POLE]])
    B2 = np.array([[b1], [0.0], [-SERVO_POLE]])
    C1 = np.array([[1.0, 0, 0], [0, 1.0, 0], [0, 0, 0]])
    D12 = np.array([[0.0], [0.0], [U_WEIGHT]])
    C2 = np.array([[1.0, 0, 0], [0, 1.0, 0]])
    return ContinuousPlant(A, np.eye(3), B2, C1, C2, np.zeros((3, 3)), D12)


def design_bounds(point: int, mode: str, gamma_inf: dict | None = None):
    """``(gamma, a)`` used by ``mode`` at ``point``."""
    if point not in F4E_TABLE:
        raise InvalidPoint(f"operating point must be 1..4, got {point!r}")
    g_inf = (gamma_inf or GAMMA_INF)[point]
    if mode == "hinf":
        return g_inf, A_LARGE
    if mode == "aniso":
        return ANISO_FACTOR[point] * g_inf, A_DESIGN
    if mode == "aniso_subopt":
        return g_inf, A_DESIGN
    raise ValueError(f"unknown mode {mode!r}")


# -- plant files -----------------------------------------------------------

def _matrix_field(doc, key, required=True):
    if key not in doc:
        if required:
            raise ParseError(f"missing field {key!r}")
        return None
    try:
        arr = np.array(doc[key], dtype=float)
    except (TypeError, ValueError) as exc:
        raise ParseError(f"field {key!r}: not a numeric matrix ({exc})") from None
    if arr.ndim == 1:
        arr = arr.reshape(1, -1) if arr.size else arr.reshape(0, 0)
    if arr.ndim != 2:
        raise ParseError(f"field {key!r}: expected nested rows, got ndim={arr.ndim}")
    return arr


def _read_json(path):
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise ParseError(f"{path}: top level must be a JSON object")
    return doc


def plant_from_dict(doc: dict) -> Plant:
    """Validate a plant document; continuous models are discretized (ZOH)."""
    mats = {k: _matrix_field(doc, k) for k in _PLANT_KEYS}
    continuous = doc.get("continuous", False)
    if not isinstance(continuous, bool):
        raise ParseError("field 'continuous' must be true or false")
    Ts = doc.get("sample_time")
    if continuous and Ts is None:
        raise ParseError("field 'sample_time' is required when continuous is true")
    if Ts is not None and (not isinstance(Ts, (int, float)) or not Ts > 0):
        raise ParseError("field 'sample_time' must be a positive number")
    cls = ContinuousPlant if continuous else Plant
    plant = cls(**mats)
    return discretize_zoh(plant, float(Ts)) if continuous else plant


def load_plant(path) -> Plant:
    return plant_from_dict(_read_json(path))


def load_plant_config(path):
    """``(plant, Ts)``; ``Ts`` is ``None`` when the file gives no sample time."""
    doc = _read_json(path)
    Ts = doc.get("sample_time")
    return plant_from_dict(doc), (float(Ts) if Ts is not None else None)


def plant_to_dict(plant: Plant, name: str = "plant", sample_time=None) -> dict:
    doc = {"name": name}
    doc.update(plant.as_dict())
    doc["continuous"] = isinstance(plant, ContinuousPlant)
    if sample_time is not None:
        doc["sample_time"] = sample_time
    return doc


def save_plant(path, plant: Plant, name: str = "plant", sample_time=None):
    Path(path).write_text(json.dumps(plant_to_dict(plant, name, sample_time), indent=2))


def load_system(path) -> StateSpace:
    doc = _read_json(path)
    mats = {k: _matrix_field(doc, k, required=(k == "D")) for k in _SYSTEM_KEYS}
    D = mats["D"]
    p, m = D.shape
    A = mats["A"] if mats["A"] is not None else np.zeros((0, 0))
    n = A.shape[0]
    B = mats["B"] if mats["B"] is not None else np.zeros((n, m))
    C = mats["C"] if mats["C"] is not None else np.zeros((p, n))
    return StateSpace(A, B, C, D)


def load_gain(path) -> np.ndarray:
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    if isinstance(doc, dict):
        if "K" not in doc:
            raise ParseError("missing field 'K'")
        doc = doc["K"]
    try:
        return np.atleast_2d(np.array(doc, dtype=float))
    except (TypeError, ValueError) as exc:
        raise ParseError(f"field 'K': not a numeric matrix ({exc})") from None


# -- frequency data --------------------------------------------------------

def default_grid(Ts: float, points: int = 400) -> np.ndarray:
    """Log-spaced rad/s grid from 0.01 rad/s to just below Nyquist."""
    return np.logspace(-2.0, math.log10(0.999 * math.pi / Ts), points)


def sigma_data(sys: StateSpace, grid, Ts: float) -> list:
    grid = np.asarray(grid, dtype=float)
    if np.any(grid >= math.pi / Ts) or np.any(grid < 0):
        raise ValueError("frequencies must lie in [0, pi/Ts)")
    if not is_stable(sys):
        raise UnstableSystem("closed loop is not stable")
    sig = sys.sigma_max(grid * Ts)
    return [(float(w), float(s)) for w, s in zip(grid, sig)]


def emit_sigma(sys: StateSpace, grid=None, Ts: float = DEFAULT_TS) -> str:
    """CSV text with header ``freq_rad_s,sigma_max``, one row per frequency."""
    if grid is None:
        grid = default_grid(Ts)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SIGMA_HEADER.split(","))
    for w, s in sigma_data(sys, grid, Ts):
        writer.writerow([repr(w), repr(s)])
    return buf.getvalue()


# -- design runs -----------------------------------------------------------

@dataclass
class DesignReport:
    mode: str
    operating_point: str
    gamma_bound: float
    a: float
    status: str
    K: list | None = None
    gain_norm: float | None = None
    achieved_hinf: float | None = None
    achieved_aniso: float | None = None
    closed_loop_spectral_radius: float | None = None
    iterations: int = 0
    sigma_data: list = field(default_factory=list)
    sample_time: float | None = None
    message: str = ""
    schema_version: int = SCHEMA_VERSION

    @property
    def success(self) -> bool:
        return self.status == "success"

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)


def run_design(plant: Plant, mode: str, point: int | None = None, *,
               gamma: float | None = None, a: float | None = None,
               gamma_inf: dict | None = None, Ts: float = DEFAULT_TS,
               opts: CclOptions = CclOptions(), grid=None) -> DesignReport:
    """Synthesize and evaluate one design; failures become a report status.

    ``gamma``/``a`` default to the F4E bounds for ``point`` and ``mode``.
    The anisotropic norm reported for the H-infinity mode is taken at
    ``a = 0.5`` so that all three modes are measured on the same scale.
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    if gamma is None or a is None:
        if point is None:
            raise ValueError("need gamma and a, or an operating point")
        g0, a0 = design_bounds(point, mode, gamma_inf)
        gamma = g0 if gamma is None else gamma
        a = a0 if a is None else a
    report = DesignReport(mode, str(point) if point is not None else "custom",
                          float(gamma), float(a), "failed", sample_time=Ts)
    try:
        res = ccl_synthesize(plant, a, gamma, opts, raise_on_failure=False)
    except AnisosynError as exc:
        report.status = "solver_failure" if isinstance(exc, SolverFailure) else "failed"
        report.message = str(exc)
        return report
    except Exception as exc:  # solver internals; a report must always come back
        log.exception("synthesis crashed")
        report.status = "solver_failure"
        report.message = f"{type(exc).__name__}: {exc}"
        return report
    report.status = res.status
    report.iterations = len(res.iterations)
    if not res.success:
        report.message = f"synthesis ended with status {res.status}"
        return report
    K = res.K
    cl = close_loop(plant, K)
    report.K = K.tolist()
    report.gain_norm = float(np.linalg.norm(K))
    report.closed_loop_spectral_radius = spectral_radius(cl.A)
    hinf = hinf_norm(cl)
    report.achieved_hinf = hinf
    report.achieved_aniso = aniso_norm(cl, A_DESIGN if mode == "hinf" else a, hinf=hinf)
    report.sigma_data = sigma_data(cl, default_grid(Ts) if grid is None else grid, Ts)
    return report


def gain_table(reports) -> str:
    """CSV ``point,mode,K1,K2,gain_norm`` for successful two-output designs."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(GAIN_HEADER.split(","))
    for r in reports:
        if r.K is None:
            writer.writerow([r.operating_point, r.mode, "", "", ""])
            continue
        k = np.ravel(r.K)
        if k.size != 2:
            raise DimensionMismatch(f"gain table expects 1x2 gains, got {k.size} entries")
        writer.writerow([r.operating_point, r.mode, repr(float(k[0])), repr(float(k[1])),
                         repr(r.gain_norm)])
    return buf.getvalue()
