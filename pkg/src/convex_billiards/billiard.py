"""Birkhoff billiard map in the two symplectic charts.

Phase points are oriented lines meeting the table.

* ``phi`` chart: ``(phi, p)``, angle of the right unit normal of the line and
  its signed distance to the origin.  Generating function
  ``S(phi0, phi1) = 2 h(psi) sin(delta)`` with ``psi = (phi0 + phi1) / 2``
  and ``delta = (phi1 - phi0) / 2``.
* ``s`` chart: ``(s, cos delta)``, the arclength of the point where the line
  leaves the boundary and the angle it makes with the counterclockwise
  tangent.  Generating function is the chord length ``L(s0, s1)``.

Both generating functions have positive mixed derivative (negative twist), so
all definiteness tests downstream look for negative definite matrices.

Array arguments are broadcast; the scalar convenience wrappers work on
:class:`PhasePoint`.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Literal, NamedTuple

import numpy as np

from .curve import SupportCurve, TWO_PI, bracketed_newton

DELTA_MIN = 1e-4
ROOT_TOL = 1e-12

OK, NO_INTERSECTION, TANGENT = 0, 1, 2


class PropagationError(RuntimeError):
    pass


class NoIntersectionError(PropagationError):
    pass


class TangencyError(PropagationError):
    pass


class DegenerateChordError(ValueError):
    pass


@dataclass(frozen=True)
class PhasePoint:
    chart: Literal["phi", "s"]
    first: float
    second: float

    def __post_init__(self):
        if self.chart not in ("phi", "s"):
            raise ValueError(f"unknown chart {self.chart!r}")
        if self.chart == "s" and not -1.0 < self.second < 1.0:
            raise ValueError("cos(delta) must lie in (-1, 1)")


@dataclass(frozen=True)
class Chord:
    phi0: float
    phi1: float
    L: float

    @property
    def psi(self) -> float:
        return 0.5 * (self.phi0 + self.phi1)

    @property
    def delta(self) -> float:
        return 0.5 * (self.phi1 - self.phi0)


# -- generating function S --------------------------------------------------

class SDerivs(NamedTuple):
    S1: np.ndarray
    S2: np.ndarray
    S11: np.ndarray
    S12: np.ndarray
    S22: np.ndarray


def _psi_delta(phi0, phi1):
    phi0, phi1 = np.asarray(phi0, dtype=float), np.asarray(phi1, dtype=float)
    delta = 0.5 * (phi1 - phi0)
    if np.any((delta <= 0) | (delta >= np.pi)):
        raise DegenerateChordError("need 0 < phi1 - phi0 < 2 pi")
    return 0.5 * (phi0 + phi1), delta


def gen_S(curve: SupportCurve, phi0, phi1):
    psi, delta = _psi_delta(phi0, phi1)
    return 2.0 * curve.h(psi) * np.sin(delta)


def s_derivs_at(curve: SupportCurve, psi, delta) -> SDerivs:
    h, h1, h2 = curve.h_all(psi)
    sd, cd = np.sin(delta), np.cos(delta)
    half = 0.5 * (h2 - h) * sd
    return SDerivs(
        S1=-(h * cd - h1 * sd),
        S2=h * cd + h1 * sd,
        S11=half - h1 * cd,
        S12=0.5 * (h2 + h) * sd,
        S22=half + h1 * cd,
    )


def gen_S_derivs(curve: SupportCurve, phi0, phi1) -> SDerivs:
    return s_derivs_at(curve, *_psi_delta(phi0, phi1))


# -- generating function L --------------------------------------------------

class LDerivs(NamedTuple):
    L: np.ndarray
    L1: np.ndarray
    L2: np.ndarray
    L11: np.ndarray
    L12: np.ndarray
    L22: np.ndarray


def gen_L(curve: SupportCurve, s0, s1):
    g0 = curve.point(curve.psi_from_arclength(s0))
    g1 = curve.point(curve.psi_from_arclength(s1))
    return np.linalg.norm(g1 - g0, axis=-1)


def l_derivs_at(curve: SupportCurve, psi0, delta0, psi1, delta1, L) -> LDerivs:
    """Chord-length derivatives from the data at both chord endpoints.

    ``delta0`` is the angle at the endpoint the chord leaves, ``delta1`` the
    angle at the endpoint it arrives at; both are measured against the
    counterclockwise tangent and lie in ``(0, pi)``.
    """
    k0, k1 = 1.0 / curve.rho(psi0), 1.0 / curve.rho(psi1)
    s0, s1 = np.sin(delta0), np.sin(delta1)
    return LDerivs(
        L=L,
        L1=-np.cos(delta0),
        L2=np.cos(delta1),
        L11=-k0 * s0 + s0 * s0 / L,
        L12=s0 * s1 / L,
        L22=-k1 * s1 + s1 * s1 / L,
    )


def chord_geometry(curve: SupportCurve, psi0, psi1):
    """Length and endpoint angles of the chord ``point(psi0) -> point(psi1)``."""
    psi0, psi1 = np.asarray(psi0, dtype=float), np.asarray(psi1, dtype=float)
    v = curve.point(psi1) - curve.point(psi0)
    L = np.linalg.norm(v, axis=-1)
    if np.any(L == 0):
        raise DegenerateChordError("chord endpoints coincide")
    ux, uy = v[..., 0] / L, v[..., 1] / L
    t0x, t0y = -np.sin(psi0), np.cos(psi0)
    t1x, t1y = -np.sin(psi1), np.cos(psi1)
    delta0 = np.arctan2(t0x * uy - t0y * ux, t0x * ux + t0y * uy)
    delta1 = np.arctan2(ux * t1y - uy * t1x, ux * t1x + uy * t1y)
    return L, delta0, delta1


def gen_L_derivs(curve: SupportCurve, s0, s1) -> LDerivs:
    psi0 = curve.psi_from_arclength(s0)
    psi1 = curve.psi_from_arclength(s1)
    L, d0, d1 = chord_geometry(curve, psi0, psi1)
    if np.any((d0 <= 0) | (d1 <= 0)):
        raise DegenerateChordError("tangent chord")
    return l_derivs_at(curve, psi0, d0, psi1, d1, L)


# -- the map ------------------------------------------------------------------

def _solve_reflection(curve: SupportCurve, base, target, direction: int):
    """Solve ``h(psi) cos(d) - direction * h'(psi) sin(d) = target`` for ``d`` in ``(0, pi)``.

    ``psi = base + direction * d``.  The left side decreases strictly in
    ``d`` (its derivative is ``-rho sin d``), which gives uniqueness.
    Returns ``(d, status)``.
    """
    base, target = np.broadcast_arrays(np.asarray(base, dtype=float), np.asarray(target, dtype=float))
    g_hi = curve.h(base)                    # value at d -> 0
    g_lo = -curve.h(base + direction * np.pi)  # value at d -> pi
    feasible = (target < g_hi) & (target > g_lo)

    def fun(d):
        psi = base + direction * d
        h, h1, h2 = curve.h_all(psi)
        sd, cd = np.sin(d), np.cos(d)
        g = h * cd - direction * h1 * sd
        return target - g, (h + h2) * sd

    d = bracketed_newton(fun, np.zeros(base.shape), np.full(base.shape, np.pi), ftol=0.1 * ROOT_TOL)
    status = np.where(feasible, OK, NO_INTERSECTION)
    status = np.where(feasible & ((d <= DELTA_MIN) | (d >= np.pi - DELTA_MIN)), TANGENT, status)
    d = np.where(feasible, d, np.nan)
    return d, status


class Step(NamedTuple):
    phi: np.ndarray
    p: np.ndarray
    psi: np.ndarray      # normal angle at the reflection point
    delta: np.ndarray    # reflection angle
    status: np.ndarray


def step_phi(curve: SupportCurve, phi0, p0) -> Step:
    """Forward map in the ``phi`` chart: ``p0 = -S_1(phi0, phi1)``, ``p1 = S_2(phi0, phi1)``."""
    phi0 = np.asarray(phi0, dtype=float)
    d, status = _solve_reflection(curve, phi0, p0, +1)
    psi = phi0 + d
    h, h1 = curve.h(psi), curve.h(psi, 1)
    p1 = h * np.cos(d) + h1 * np.sin(d)
    return Step(phi0 + 2 * d, p1, psi, d, status)


def step_phi_inverse(curve: SupportCurve, phi1, p1) -> Step:
    """Inverse map: solve ``p1 = S_2(phi0, phi1)`` for ``phi0``.

    The returned ``psi``/``delta`` describe the reflection joining the two lines.
    """
    phi1 = np.asarray(phi1, dtype=float)
    d, status = _solve_reflection(curve, phi1, p1, -1)
    psi = phi1 - d
    h, h1 = curve.h(psi), curve.h(psi, 1)
    p0 = h * np.cos(d) - h1 * np.sin(d)
    return Step(phi1 - 2 * d, p0, psi, d, status)


def _raise_status(status):
    status = np.asarray(status)
    if np.any(status == NO_INTERSECTION):
        raise NoIntersectionError("line does not meet the table")
    if np.any(status == TANGENT):
        raise TangencyError("chord is (nearly) tangent to the boundary")


def map_phi(curve: SupportCurve, point: PhasePoint) -> PhasePoint:
    if point.chart != "phi":
        raise ValueError("map_phi expects a point in the phi chart")
    st = step_phi(curve, point.first, point.second)
    _raise_status(st.status)
    return PhasePoint("phi", float(st.phi), float(st.p))


def map_phi_inverse(curve: SupportCurve, point: PhasePoint) -> PhasePoint:
    st = step_phi_inverse(curve, point.first, point.second)
    _raise_status(st.status)
    return PhasePoint("phi", float(st.phi), float(st.p))


# -- chart change F: (s, cos delta) -> (phi, p) ----------------------------------

def s_to_phi(curve: SupportCurve, s, c):
    psi = curve.psi_from_arclength(s)
    delta = np.arccos(c)
    h, h1 = curve.h(psi), curve.h(psi, 1)
    return psi + delta, h * np.cos(delta) + h1 * np.sin(delta)


def phi_to_s(curve: SupportCurve, phi, p):
    """Inverse chart change; returns ``(s, cos delta, status)``."""
    phi = np.asarray(phi, dtype=float)
    d, status = _solve_reflection(curve, phi, p, -1)
    psi = np.mod(phi - d, TWO_PI)
    return curve.arclength_from_psi(psi), np.cos(d), status


def to_phiP(curve: SupportCurve, point: PhasePoint) -> PhasePoint:
    if point.chart == "phi":
        return point
    phi, p = s_to_phi(curve, point.first, point.second)
    return PhasePoint("phi", float(phi), float(p))


def to_sCos(curve: SupportCurve, point: PhasePoint) -> PhasePoint:
    if point.chart == "s":
        return point
    s, c, status = phi_to_s(curve, point.first, point.second)
    _raise_status(status)
    return PhasePoint("s", float(s), float(c))


def step_s(curve: SupportCurve, s0, c0):
    """Forward map in the ``s`` chart by intersecting the ray with the boundary.

    Works directly with boundary points: the exit point is the zero of the
    signed distance of ``point(psi1)`` to the line, on the arc of normals
    ``(phi, phi + pi)`` where that distance is monotone.
    Returns ``(s1, c1, status)``.
    """
    s0, c0 = np.broadcast_arrays(np.asarray(s0, dtype=float), np.asarray(c0, dtype=float))
    psi0 = curve.psi_from_arclength(s0)
    d0 = np.arccos(c0)
    phi = psi0 + d0
    n = np.stack([np.cos(phi), np.sin(phi)], axis=-1)
    start = curve.point(psi0)
    offset = (start * n).sum(axis=-1)

    def fun(psi1):
        g = curve.point(psi1)
        dist = offset - (g * n).sum(axis=-1)
        return dist, curve.rho(psi1) * np.sin(psi1 - phi)

    psi1 = bracketed_newton(fun, phi, phi + np.pi, ftol=0.1 * ROOT_TOL)
    _, _, d1 = chord_geometry(curve, psi0, psi1)
    status = np.where((d0 <= DELTA_MIN) | (d0 >= np.pi - DELTA_MIN), TANGENT, OK)
    return curve.arclength_from_psi(np.mod(psi1, TWO_PI)), np.cos(d1), status


def map_s(curve: SupportCurve, point: PhasePoint) -> PhasePoint:
    if point.chart != "s":
        raise ValueError("map_s expects a point in the s chart")
    s1, c1, status = step_s(curve, point.first, point.second)
    _raise_status(status)
    return PhasePoint("s", float(s1), float(c1))


def dF_matrix(curve: SupportCurve, point: PhasePoint) -> np.ndarray:
    """Differential of ``(s, cos delta) -> (phi, p)``."""
    if point.chart != "s":
        point = to_sCos(curve, point)
    psi = float(curve.psi_from_arclength(point.first))
    return dF_at(curve, psi, float(np.arccos(point.second)))


def dF_at(curve: SupportCurve, psi, delta) -> np.ndarray:
    h, h1, h2 = curve.h_all(psi)
    sd, cd = np.sin(delta), np.cos(delta)
    if np.any(sd == 0):
        raise DegenerateChordError("sin(delta) = 0")
    k = 1.0 / (h + h2)
    return np.stack([
        np.stack([k, -1.0 / sd * np.ones_like(k)], axis=-1),
        np.stack([k * (h1 * cd + h2 * sd), (h * sd - h1 * cd) / sd], axis=-1),
    ], axis=-2)


# -- cones ------------------------------------------------------------------------

@dataclass(frozen=True)
class ConeFrame:
    """Tangent-plane partition by the lines of slopes ``slope_low < slope_high``.

    N contains the vertical direction, E the positive horizontal one.
    """

    slope_low: float
    slope_high: float

    @property
    def valid(self) -> bool:
        return self.slope_low < self.slope_high

    def classify(self, vec) -> str:
        x, y = vec
        above_low, above_high = y > self.slope_low * x, y > self.slope_high * x
        if above_low and above_high:
            return "N"
        if not above_low and not above_high:
            return "S"
        return "E" if x > 0 else "W"

    def north_margin(self, vec) -> float:
        """Signed slope distance of ``vec`` into N (positive iff ``vec`` is in N)."""
        x, y = vec
        if x == 0:
            return np.inf if y > 0 else -np.inf
        slope = y / x
        return self.slope_low - slope if x < 0 else slope - self.slope_high


class ConeCollapseError(ValueError):
    """Cone inequality fails, so the point is certainly not on an m-orbit."""


def _neighbours_phi(curve: SupportCurve, point: PhasePoint):
    z = to_phiP(curve, point)
    back = step_phi_inverse(curve, z.first, z.second)
    fwd = step_phi(curve, z.first, z.second)
    _raise_status(np.array([back.status, fwd.status]))
    return z, back, fwd


def cone_frame(curve: SupportCurve, point: PhasePoint, genfun: str = "S") -> ConeFrame:
    """Cone frame at ``point`` for the generating function ``S`` or ``L``."""
    z, back, fwd = _neighbours_phi(curve, point)
    if genfun == "S":
        low = s_derivs_at(curve, back.psi, back.delta).S22
        high = -s_derivs_at(curve, fwd.psi, fwd.delta).S11
    elif genfun == "L":
        bb = step_phi_inverse(curve, back.phi, back.p)
        _raise_status(bb.status)
        L_prev, _, _ = chord_geometry(curve, bb.psi, back.psi)
        L_next, _, _ = chord_geometry(curve, back.psi, fwd.psi)
        low = l_derivs_at(curve, bb.psi, bb.delta, back.psi, back.delta, L_prev).L22
        high = -l_derivs_at(curve, back.psi, back.delta, fwd.psi, fwd.delta, L_next).L11
    else:
        raise ValueError(f"unknown generating function {genfun!r}")
    frame = ConeFrame(float(low), float(high))
    if not frame.valid:
        raise ConeCollapseError(
            f"cone inequality fails: {frame.slope_low:.6g} >= {frame.slope_high:.6g}")
    return frame


@dataclass(frozen=True)
class AssumptionReport:
    n_points: int
    n_violations: int
    min_margin_S: float
    min_margin_L: float
    worst_S: tuple[float, float] | None
    worst_L: tuple[float, float] | None

    @property
    def ok(self) -> bool:
        return self.n_violations == 0


def assumption_margins(curve: SupportCurve, lines_back2, lines_back, lines_0, lines_fwd):
    """Margins of ``dF(d/dcos delta)`` in N_S and ``dF^-1(d/dp)`` in N_L.

    Inputs are :class:`Step` records for the reflections preceding the line
    before ``z``, preceding ``z`` and following ``z``; only ``psi`` and
    ``delta`` are used.  Returns ``(margin_S, margin_L, cone_S_ok, cone_L_ok)``.
    """
    bb, b, f = lines_back2, lines_back, lines_fwd
    psi, delta = b.psi, b.delta
    h, h1, h2 = curve.h_all(psi)
    sd, cd = np.sin(delta), np.cos(delta)
    k = 1.0 / (h + h2)

    # N_S: vector (a, b) = dF(d/dcos) with a < 0; inside N iff b/a < slope_low
    a_s, b_s = -1.0 / sd, (h * sd - h1 * cd) / sd
    low_S = s_derivs_at(curve, b.psi, b.delta).S22
    high_S = -s_derivs_at(curve, f.psi, f.delta).S11
    margin_S = np.where(a_s < 0, low_S - b_s / a_s, -np.inf)

    # N_L: vector (a, b) = dF^-1(d/dp) = (1/sin, k) with a > 0; inside N iff b/a > slope_high
    a_l, b_l = 1.0 / sd, k
    L_prev, _, _ = chord_geometry(curve, bb.psi, b.psi)
    L_next, _, _ = chord_geometry(curve, b.psi, f.psi)
    low_L = l_derivs_at(curve, bb.psi, bb.delta, b.psi, b.delta, L_prev).L22
    high_L = -l_derivs_at(curve, b.psi, b.delta, f.psi, f.delta, L_next).L11
    margin_L = np.where(a_l > 0, b_l / a_l - high_L, -np.inf)
    return margin_S, margin_L, low_S < high_S, low_L < high_L


def check_geometric_assumption(curve: SupportCurve, points_phi, horizon: int = 24,
                               tol: float = 1e-9) -> AssumptionReport:
    """Check the cone memberships at every m-candidate among ``points_phi``.

    ``points_phi`` is an ``(m, 2)`` array of ``(phi, p)``.  Each cone is
    checked where the point is an m-candidate for its generating function at
    ``horizon``; points that are m-candidates for neither are skipped.
    """
    from .maxorbit import MCANDIDATE, classify_batch

    pts = np.atleast_2d(np.asarray(points_phi, dtype=float))
    phi, p = pts[:, 0], pts[:, 1]
    vS = classify_batch(curve, phi, p, "S", horizon, tol=tol).verdict
    vL = classify_batch(curve, phi, p, "L", horizon, tol=tol).verdict
    keep = (vS == MCANDIDATE) | (vL == MCANDIDATE)
    phi, p = phi[keep], p[keep]
    mS, mL = (vS == MCANDIDATE)[keep], (vL == MCANDIDATE)[keep]
    if phi.size == 0:
        return AssumptionReport(0, 0, np.inf, np.inf, None, None)
    b = step_phi_inverse(curve, phi, p)
    bb = step_phi_inverse(curve, b.phi, b.p)
    f = step_phi(curve, phi, p)
    margin_S, margin_L, cone_S, cone_L = assumption_margins(curve, bb, b, None, f)
    margin_S = np.where(mS, margin_S, np.inf)
    margin_L = np.where(mL, margin_L, np.inf)
    viol = (mS & ((margin_S <= 0) | ~cone_S)) | (mL & ((margin_L <= 0) | ~cone_L))
    iS, iL = int(np.argmin(margin_S)), int(np.argmin(margin_L))
    return AssumptionReport(
        n_points=int(phi.size),
        n_violations=int(viol.sum()),
        min_margin_S=float(margin_S[iS]),
        min_margin_L=float(margin_L[iL]),
        worst_S=(float(phi[iS]), float(p[iS])) if mS.any() else None,
        worst_L=(float(phi[iL]), float(p[iL])) if mL.any() else None,
    )
