"""Anisotropic-norm analysis and static output-feedback synthesis for discrete LTI systems."""
from .analysis import AnalysisCertificate, analysis_lmi_feasible
from .casestudy import DesignReport, emit_sigma, f4e_model, load_plant, run_design, save_plant
from .errors import AnisosynError
from .lti import (
    ContinuousPlant,
    ContinuousStateSpace,
    Plant,
    StateSpace,
    close_loop,
    discretize_zoh,
    solve_dare_aniso,
    solve_dlyap,
)
from .norms import aniso_bound_check, aniso_norm, h2_norm, hinf_norm, interp_bound, mean_anisotropy
from .synthesis import CclOptions, SynthesisResult, ccl_synthesize, minimize_gamma

__version__ = "0.1.0"

__all__ = [
    "AnalysisCertificate",
    "AnisosynError",
    "CclOptions",
    "ContinuousPlant",
    "ContinuousStateSpace",
    "DesignReport",
    "Plant",
    "StateSpace",
    "SynthesisResult",
    "aniso_bound_check",
    "aniso_norm",
    "analysis_lmi_feasible",
    "ccl_synthesize",
    "close_loop",
    "discretize_zoh",
    "emit_sigma",
    "f4e_model",
    "h2_norm",
    "hinf_norm",
    "interp_bound",
    "load_plant",
    "mean_anisotropy",
    "minimize_gamma",
    "run_design",
    "save_plant",
    "solve_dare_aniso",
    "solve_dlyap",
]
