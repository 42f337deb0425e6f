"""Birkhoff billiards in convex tables given by a Fourier support function."""
__version__ = "0.1.0"

from .curve import (
    ClassCError,
    ClassCSpec,
    CurveFile,
    InvalidCurveError,
    SupportCurve,
    build_classC,
    circle,
    classC_from_curve,
    ellipse,
    load_curve,
    parse_curve_text,
)
from .billiard import PhasePoint, check_geometric_assumption, gen_L, gen_S, map_phi, map_s
from .maxorbit import (
    classify,
    classify_batch,
    cross_check_ML_MS,
    is_negative_definite,
    limit_field_nu,
    max_periodic_orbit,
    omega,
)
from .measure import (
    ScanConfig,
    bound_report_thm13,
    bound_report_thm14,
    d2_h2_U,
    d2_h_W,
    estimate_delta_measure,
    thm14_functional,
    total_measure,
    verify_4periodic,
)

__all__ = [
    "ClassCError", "ClassCSpec", "CurveFile", "InvalidCurveError", "SupportCurve",
    "build_classC", "circle", "classC_from_curve", "ellipse", "load_curve", "parse_curve_text",
    "PhasePoint", "check_geometric_assumption", "gen_L", "gen_S", "map_phi", "map_s",
    "classify", "classify_batch", "cross_check_ML_MS", "is_negative_definite", "limit_field_nu",
    "max_periodic_orbit", "omega",
    "ScanConfig", "bound_report_thm13", "bound_report_thm14", "d2_h2_U", "d2_h_W",
    "estimate_delta_measure", "thm14_functional", "total_measure", "verify_4periodic",
]
