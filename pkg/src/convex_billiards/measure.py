"""Invariant measure, phase-space scans and the rigidity bound reports.

The invariant measure in the ``(psi, delta)`` coordinates of a line leaving
the boundary point with normal angle ``psi`` at angle ``delta`` is
``dmu = rho(psi) sin(delta) dpsi ddelta / 4``; the whole cylinder has
measure ``length / 2``.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, asdict
from typing import IO, Literal

import numpy as np
from scipy import integrate

from .billiard import step_phi, step_phi_inverse
from .curve import TWO_PI, ClassCSpec, SupportCurve, fit_support
from .maxorbit import (
    BOUNDARY,
    MCANDIDATE,
    NOTM,
    PROPAGATION_FAILURE,
    TOL_DEF,
    UNDETERMINED,
    VERDICT_NAMES,
    classify_batch,
)

Region = Literal["full", "A"]
COLLAR = 1e-3
WORKERS_ENV = "CONVEX_BILLIARDS_WORKERS"

_GL8_X, _GL8_W = np.polynomial.legendre.leggauss(8)


# -- L2 distances ---------------------------------------------------------------

def _h_terms(curve: SupportCurve, degree: int = 512):
    if not curve.squared:
        return curve.terms
    # h = sqrt(h^2) is analytic; its spectrum decays geometrically
    return fit_support(curve.h, degree, check=False).terms


def d2_h_W(curve: SupportCurve) -> float:
    """Squared L2[0, 2pi] distance of ``h`` to ``span{1, cos, sin}`` (Parseval)."""
    return math.pi * math.fsum(a * a + b * b for n, a, b in _h_terms(curve) if n >= 2)


_QUAD = dict(limit=400, epsabs=1e-13, epsrel=1e-13)


def d2_h_W_quadrature(curve: SupportCurve) -> float:
    """Same distance by projecting with quadrature inner products."""
    opts = _QUAD
    h = lambda x: float(curve.h(x))
    c0 = integrate.quad(h, 0, TWO_PI, **opts)[0] / TWO_PI
    a1 = integrate.quad(lambda x: h(x) * math.cos(x), 0, TWO_PI, **opts)[0] / math.pi
    b1 = integrate.quad(lambda x: h(x) * math.sin(x), 0, TWO_PI, **opts)[0] / math.pi
    resid = lambda x: (h(x) - c0 - a1 * math.cos(x) - b1 * math.sin(x)) ** 2
    return integrate.quad(resid, 0, TWO_PI, **opts)[0]


def d2_h2_U(spec: ClassCSpec) -> float:
    """Squared L2[0, pi] distance of ``h**2`` to ``span{1, cos 2psi, sin 2psi}``."""
    return 0.5 * math.pi * math.fsum(a * a + b * b for n, a, b in spec.h2_terms if n not in (0, 2))


def d2_h2_U_quadrature(spec: ClassCSpec) -> float:
    opts = _QUAD
    H = lambda x: float(spec.curve.series(x))
    c0 = integrate.quad(H, 0, math.pi, **opts)[0] / math.pi
    a2 = integrate.quad(lambda x: H(x) * math.cos(2 * x), 0, math.pi, **opts)[0] * 2 / math.pi
    b2 = integrate.quad(lambda x: H(x) * math.sin(2 * x), 0, math.pi, **opts)[0] * 2 / math.pi
    resid = lambda x: (H(x) - c0 - a2 * math.cos(2 * x) - b2 * math.sin(2 * x)) ** 2
    return integrate.quad(resid, 0, math.pi, **opts)[0]


# -- the 4-periodic invariant curve ------------------------------------------------

@dataclass(frozen=True)
class AlphaCurve:
    """Invariant curve of 4-periodic orbits of a class-C table.

    Region A lies between this curve and the boundary component
    ``delta -> 0`` of the cylinder, i.e. ``0 < delta < d(psi)``.
    """

    spec: ClassCSpec

    def line(self, psi):
        """``(phi, p)`` of the line leaving ``point(psi)`` at angle ``d(psi)``."""
        psi = np.asarray(psi, dtype=float)
        d = self.spec.d(psi)
        h, h1 = self.spec.curve.h(psi), self.spec.curve.h(psi, 1)
        return psi + d, h * np.cos(d) + h1 * np.sin(d)

    def contains_s(self, psi, delta):
        return (np.asarray(delta) > 0) & (np.asarray(delta) < self.spec.d(psi))

    def contains_phi(self, phi, p):
        st = step_phi_inverse(self.spec.curve, phi, p)
        return self.contains_s(st.psi, st.delta)


def alpha_curve(spec: ClassCSpec) -> AlphaCurve:
    return AlphaCurve(spec)


@dataclass(frozen=True)
class FourPeriodicReport:
    max_defect: float         # phase-space distance after four reflections
    max_quarter_defect: float  # |psi_1 - psi - pi/2| at the first reflection
    max_d_defect: float       # |d(psi + pi/2) - (pi/2 - d(psi))|
    samples: int

    @property
    def ok(self) -> bool:
        return self.max_defect < 1e-9


def verify_4periodic(spec: ClassCSpec, samples: int = 256) -> FourPeriodicReport:
    psi = np.arange(samples) * (TWO_PI / samples)
    phi0, p0 = AlphaCurve(spec).line(psi)
    phi, p = phi0, p0
    first_psi = None
    for k in range(4):
        st = step_phi(spec.curve, phi, p)
        if first_psi is None:
            first_psi = st.psi
        phi, p = st.phi, st.p
    defect = np.maximum(np.abs(phi - phi0 - TWO_PI), np.abs(p - p0))
    quarter = np.abs(first_psi - psi - np.pi / 2)
    dd = np.abs(spec.d(psi + np.pi / 2) - (np.pi / 2 - spec.d(psi)))
    return FourPeriodicReport(float(defect.max()), float(quarter.max()), float(dd.max()), samples)


# -- measure ------------------------------------------------------------------------

def _delta_limits(curve: SupportCurve, region: Region, spec: ClassCSpec | None):
    if region == "full":
        return lambda psi: np.zeros_like(psi), lambda psi: np.full_like(psi, np.pi)
    if region == "A":
        if spec is None:
            raise ValueError("region A needs a class-C table")
        return lambda psi: np.zeros_like(psi), spec.d
    raise ValueError(f"unknown region {region!r}")


def total_measure(curve: SupportCurve, region: Region = "full", spec: ClassCSpec | None = None) -> float:
    """Invariant measure of the region, by adaptive quadrature in ``psi``."""
    lo, hi = _delta_limits(curve, region, spec)

    def density(psi):
        x = np.array([psi])
        return float(0.25 * curve.rho(x)[0] * (np.cos(lo(x)) - np.cos(hi(x)))[0])

    return integrate.quad(density, 0, TWO_PI, limit=500, epsabs=1e-13, epsrel=1e-13)[0]


@dataclass(frozen=True)
class ScanGrid:
    """Cells of a phase-space scan in ``(psi, t)``, ``delta = lo + t (hi - lo)``.

    For the full cylinder ``lo = collar`` and ``hi = pi - collar``; for region
    A the upper limit follows the invariant curve, ``hi = d(psi) - collar``.
    Cells are stored psi-major.
    """

    psi: np.ndarray
    delta: np.ndarray
    weight: np.ndarray
    collar_mass: float
    psi_res: int
    delta_res: int
    region: str
    collar: float

    @property
    def total(self) -> float:
        return math.fsum(self.weight) + self.collar_mass


def build_grid(curve: SupportCurve, psi_res: int = 64, delta_res: int = 64, region: Region = "full",
               spec: ClassCSpec | None = None, collar: float = COLLAR) -> ScanGrid:
    lo_true, hi_true = _delta_limits(curve, region, spec)
    lo = lambda x: lo_true(x) + collar
    hi = lambda x: hi_true(x) - collar

    edges = np.linspace(0, TWO_PI, psi_res + 1)
    half = 0.5 * (edges[1] - edges[0])
    mids = 0.5 * (edges[1:] + edges[:-1])
    nodes = mids[:, None] + half * _GL8_X[None, :]                 # (psi_res, 8)
    dens = 0.25 * curve.rho(nodes) * _GL8_W[None, :] * half        # quadrature weights x rho / 4
    lo_n, hi_n = lo(nodes), hi(nodes)
    if np.any(hi_n <= lo_n):
        raise ValueError("collar wider than the region")
    t = np.linspace(0, 1, delta_res + 1)
    cos_t = np.cos(lo_n[..., None] + t * (hi_n - lo_n)[..., None])   # (psi_res, 8, delta_res+1)
    weight = np.einsum("ik,ikj->ij", dens, cos_t[..., :-1] - cos_t[..., 1:])
    collar_mass = float(np.sum(dens * ((np.cos(lo_true(nodes)) - np.cos(lo_n))
                                       + (np.cos(hi_n) - np.cos(hi_true(nodes))))))
    tc = 0.5 * (t[1:] + t[:-1])
    psi_c = np.repeat(mids, delta_res)
    lo_c, hi_c = lo(mids), hi(mids)
    delta_c = (lo_c[:, None] + tc[None, :] * (hi_c - lo_c)[:, None]).ravel()
    return ScanGrid(psi_c, delta_c, weight.ravel(), collar_mass, psi_res, delta_res, region, collar)


def lines_from_psi_delta(curve: SupportCurve, psi, delta):
    """``(phi, p)`` of the line leaving ``point(psi)`` at angle ``delta``."""
    h, h1 = curve.h(psi), curve.h(psi, 1)
    return psi + delta, h * np.cos(delta) + h1 * np.sin(delta)


@dataclass(frozen=True)
class ScanConfig:
    psi_res: int = 64
    delta_res: int = 64
    horizon: int = 24
    collar: float = COLLAR
    tol: float = TOL_DEF
    genfun: str = "S"
    workers: int | None = None

    def __post_init__(self):
        if self.psi_res < 8 or self.delta_res < 8:
            raise ValueError("grid resolutions must be >= 8")
        if self.horizon < 2:
            raise ValueError("horizon must be >= 2")
        if not (self.collar > 0 and self.tol > 0):
            raise ValueError("tolerances must be positive")


@dataclass(frozen=True)
class ScanResult:
    grid: ScanGrid
    phi: np.ndarray
    p: np.ndarray
    verdict: np.ndarray
    witness_len: np.ndarray
    margin: np.ndarray
    horizon: int
    genfun: str

    def mass(self, code: int) -> float:
        return math.fsum(self.grid.weight[self.verdict == code])

    @property
    def estimate(self) -> float:
        """Measure of cells certified not to lie on m-orbits."""
        return self.mass(NOTM)

    @property
    def band(self) -> float:
        return (self.mass(UNDETERMINED) + self.mass(BOUNDARY) + self.mass(PROPAGATION_FAILURE)
                + self.grid.collar_mass)

    def counts(self) -> dict[str, int]:
        return {VERDICT_NAMES[c]: int((self.verdict == c).sum()) for c in VERDICT_NAMES}


def _classify_chunk(args):
    curve, phi, p, genfun, horizon, tol = args
    r = classify_batch(curve, phi, p, genfun, horizon, tol)
    return r.verdict, r.witness_len, r.margin


def _workers(requested: int | None) -> int:
    if requested is not None:
        return max(1, int(requested))
    return max(1, int(os.environ.get(WORKERS_ENV, "1")))


def classify_cells(curve, phi, p, genfun, horizon, tol, workers=None):
    """Classify in chunks; results are merged in cell order whatever the worker count."""
    n = _workers(workers)
    if n == 1 or phi.size < 2 * n:
        return _classify_chunk((curve, phi, p, genfun, horizon, tol))
    chunks = np.array_split(np.arange(phi.size), n)
    jobs = [(curve, phi[c], p[c], genfun, horizon, tol) for c in chunks]
    with ProcessPoolExecutor(max_workers=n) as ex:
        parts = list(ex.map(_classify_chunk, jobs))
    return tuple(np.concatenate([part[i] for part in parts]) for i in range(3))


def estimate_delta_measure(curve: SupportCurve, region: Region = "full", config: ScanConfig = ScanConfig(),
                           spec: ClassCSpec | None = None) -> ScanResult:
    grid = build_grid(curve, config.psi_res, config.delta_res, region, spec, config.collar)
    phi, p = lines_from_psi_delta(curve, grid.psi, grid.delta)
    verdict, witness, margin = classify_cells(
        curve, phi, p, config.genfun, config.horizon, config.tol, config.workers)
    return ScanResult(grid, phi, p, verdict, witness, margin, config.horizon, config.genfun)


# -- integral identity behind the class-C bound ----------------------------------------------

@dataclass(frozen=True)
class Functional14:
    lhs_integral: float      # integral over A of (A - B) dmu
    rhs_value: float         # pi R^4 / 1024 * int_0^pi mu''^2 - 4 mu'^2
    parseval_value: float    # rhs_value evaluated from the h^2 coefficients
    lower_bound: float       # 125 pi / 32 * d^2(h^2, U), the Parseval floor of the value
    lower_bound_stated: float  # 125 pi^2 / 32 * d^2(h^2, U), the same floor with an extra factor pi

    @property
    def rel_discrepancy(self) -> float:
        scale = max(abs(self.lhs_integral), abs(self.rhs_value))
        return abs(self.lhs_integral - self.rhs_value) / scale if scale > 0 else 0.0

    @property
    def lower_bound_ok(self) -> bool:
        return self.parseval_value >= self.lower_bound * (1 - 1e-12) - 1e-15


def thm14_functional(spec: ClassCSpec, n_psi: int = 4096, n_delta: int = 48) -> Functional14:
    curve, R = spec.curve, spec.R
    # left side: trapezoid in psi (periodic, analytic), Gauss-Legendre in delta on (0, d(psi))
    psi = np.arange(n_psi) * (TWO_PI / n_psi)
    h, h1, h2 = curve.h_all(psi)
    d = spec.d(psi)
    x, w = np.polynomial.legendre.leggauss(n_delta)
    delta = 0.5 * d[:, None] * (x[None, :] + 1)
    sd, cd = np.sin(delta), np.cos(delta)
    A = cd**2 * sd * (h2 * h**2 + 3 * h * h1**2)[:, None]
    B = (h * h1**2)[:, None] * sd
    inner = ((A - B) * 0.25 * (h + h2)[:, None] * sd * w[None, :]).sum(axis=1) * 0.5 * d
    lhs = inner.mean() * TWO_PI

    # right side: mu = cos 2d = 1 - 2 h^2 / R^2, derivatives from the h^2 series.
    # The integrand is a trigonometric polynomial of period pi, so the
    # trapezoid rule on enough nodes is exact.
    n_max = max(n for n, _, _ in spec.h2_terms)
    t = np.arange(4 * n_max + 8) * (math.pi / (4 * n_max + 8))
    m1 = -2 * curve.series(t, 1) / R**2
    m2 = -2 * curve.series(t, 2) / R**2
    rhs = math.pi * R**4 / 1024 * math.pi * float(np.mean(m2 * m2 - 4 * m1 * m1))
    parseval = math.pi * R**4 / 1024 * 4 / R**4 * math.pi * math.fsum(
        (n**4 - 4 * n**2) * (a * a + b * b) / 2 for n, a, b in spec.h2_terms if n > 0)
    d2 = d2_h2_U(spec)
    return Functional14(float(lhs), float(rhs), float(parseval), 125 * math.pi / 32 * d2,
                        125 * math.pi**2 / 32 * d2)


# -- bound reports ----------------------------------------------------------------------

@dataclass(frozen=True)
class BoundReport:
    theorem: str
    beta: float
    distance2: float
    rhs: float
    estimate: float
    band: float
    horizon: int
    psi_res: int
    delta_res: int
    region: str
    counts: dict = field(default_factory=dict)
    extras: dict = field(default_factory=dict)

    @property
    def consistent(self) -> bool:
        return self.estimate + self.band >= self.rhs

    @property
    def sharp(self) -> bool:
        return self.rhs == 0.0 and self.estimate == 0.0

    @property
    def verdict(self) -> str:
        if not self.consistent:
            return "violated"
        return "sharp case" if self.sharp else "consistent"

    def to_text(self) -> str:
        rows = [("theorem", self.theorem), ("verdict", self.verdict)]
        for k, v in asdict(self).items():
            if k in ("theorem", "counts", "extras"):
                continue
            rows.append((k, v))
        rows += [(f"count_{k}", v) for k, v in self.counts.items()]
        rows += list(self.extras.items())
        return "".join(f"{k} = {_fmt(v)}\n" for k, v in rows)


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.17g}"
    return str(v)


def bound_report_thm13(curve: SupportCurve, config: ScanConfig = ScanConfig()) -> BoundReport:
    beta = curve.min_curvature()
    d2 = d2_h_W(curve)
    rhs = math.pi**2 * beta * d2
    scan = estimate_delta_measure(curve, "full", config)
    return BoundReport("1.3", beta, d2, rhs, scan.estimate, scan.band, config.horizon,
                       config.psi_res, config.delta_res, "full", scan.counts(),
                       {"total_measure": scan.grid.total, "collar_mass": scan.grid.collar_mass})


def bound_report_thm14(spec: ClassCSpec, config: ScanConfig = ScanConfig()) -> BoundReport:
    curve = spec.curve
    beta = curve.min_curvature()
    d2 = d2_h2_U(spec)
    rhs = 25 * math.pi**2 / 32 * beta**3 * d2
    scan = estimate_delta_measure(curve, "A", config, spec)
    four = verify_4periodic(spec)
    return BoundReport("1.4", beta, d2, rhs, scan.estimate, scan.band, config.horizon,
                       config.psi_res, config.delta_res, "A", scan.counts(),
                       {"R": spec.R, "region_measure": scan.grid.total,
                        "collar_mass": scan.grid.collar_mass,
                        "four_periodic_defect": four.max_defect,
                        # the Parseval step with the exact constant gives 25 pi / 32 instead
                        "rhs_parseval_exact": 25 * math.pi / 32 * beta**3 * d2})


# -- output ---------------------------------------------------------------------------------

SCAN_COLUMNS = ("psi", "delta", "phi", "p", "verdict", "witness_len", "margin", "weight")


def write_scan_csv(out: IO[str], result: ScanResult, manifest: str | None = None) -> None:
    if manifest:
        out.write(f"# {manifest}\n")
    out.write(",".join(SCAN_COLUMNS) + "\n")
    g = result.grid
    for i in range(g.psi.size):
        row = (g.psi[i], g.delta[i], result.phi[i], result.p[i])
        out.write(",".join(f"{x:.17g}" for x in row))
        out.write(f",{VERDICT_NAMES[int(result.verdict[i])]},{int(result.witness_len[i])},"
                  f"{result.margin[i]:.17g},{g.weight[i]:.17g}\n")
