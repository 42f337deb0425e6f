"""Convex tables described by a finite Fourier support function.

A table is stored as a real trigonometric polynomial, either for the support
function ``h`` itself or for its square ``h**2``.  Everything else (boundary
points, curvature, arclength) is derived from that series, so derivatives are
exact rather than numerical.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy import optimize

TWO_PI = 2.0 * np.pi
GRID_SIZE = 4096
MARGIN = 1e-9

# arclength table: panels x Gauss-Legendre nodes per panel
_N_PANELS = 512
_GL_ORDER = 16
_GL_X, _GL_W = np.polynomial.legendre.leggauss(_GL_ORDER)


class InvalidCurveError(ValueError):
    """Raised when a support function fails positivity or convexity."""


class CurveInconsistencyError(ValueError):
    """Raised when derived quantities contradict each other."""


Term = tuple[int, float, float]


def normalize_terms(terms: Iterable[Sequence[float]]) -> tuple[Term, ...]:
    """Check and sort ``(n, cos_coeff, sin_coeff)`` records.

    Duplicate frequencies, negative frequencies and non-finite values are
    rejected.  The sine coefficient of ``n = 0`` must vanish.
    """
    out: dict[int, Term] = {}
    for rec in terms:
        if len(rec) != 3:
            raise ValueError(f"term must have 3 entries (n, cos, sin), got {rec!r}")
        n_raw, a, b = rec
        if float(n_raw) != int(n_raw) or int(n_raw) < 0:
            raise ValueError(f"frequency must be a non-negative integer, got {n_raw!r}")
        n = int(n_raw)
        a, b = float(a), float(b)
        if not (math.isfinite(a) and math.isfinite(b)):
            raise ValueError(f"non-finite coefficient for n={n}")
        if n in out:
            raise ValueError(f"duplicate frequency n={n}")
        if n == 0 and b != 0.0:
            raise ValueError("sin coefficient of n=0 must be zero")
        out[n] = (n, a, b)
    if not out:
        raise ValueError("empty Fourier series")
    return tuple(out[k] for k in sorted(out))


def eval_series(terms: Sequence[Term], psi, order: int = 0):
    """Evaluate the ``order``-th derivative of ``sum a cos(n psi) + b sin(n psi)``."""
    psi = np.asarray(psi, dtype=float)
    n = np.array([t[0] for t in terms], dtype=float)
    # a cos + b sin = Re[(a - i b) e^{i n psi}]
    c = np.array([complex(t[1], -t[2]) for t in terms]) * (1j * n) ** order
    phase = np.multiply.outer(psi, n)
    return (np.cos(phase) * c.real - np.sin(phase) * c.imag).sum(axis=-1)


def multiply_series(s1: Sequence[Term], s2: Sequence[Term]) -> tuple[Term, ...]:
    """Exact product of two real trigonometric polynomials."""

    def to_complex(terms):
        d: dict[int, complex] = {}
        for n, a, b in terms:
            if n == 0:
                d[0] = d.get(0, 0) + a
            else:
                d[n] = d.get(n, 0) + complex(a, -b) / 2
                d[-n] = d.get(-n, 0) + complex(a, b) / 2
        return d

    c1, c2 = to_complex(s1), to_complex(s2)
    prod: dict[int, complex] = {}
    for n1, v1 in c1.items():
        for n2, v2 in c2.items():
            prod[n1 + n2] = prod.get(n1 + n2, 0) + v1 * v2
    terms = []
    for n in sorted(k for k in prod if k >= 0):
        if n == 0:
            terms.append((0, prod[0].real, 0.0))
        else:
            c = prod[n]
            terms.append((n, 2 * c.real, -2 * c.imag))
    return tuple(terms)


@dataclass(frozen=True)
class CurveDiagnostics:
    h_min: float
    h_min_at: float
    rho_min: float
    rho_min_at: float
    rho_max: float
    rho_max_at: float


def _grid_extremum(fun: Callable, maximize: bool = False, n: int = GRID_SIZE,
                   candidates: int = 4) -> tuple[float, float]:
    """Global extremum of a 2pi-periodic function: grid scan, then local refinement."""
    sign = -1.0 if maximize else 1.0
    grid = np.arange(n) * (TWO_PI / n)
    vals = sign * np.asarray(fun(grid))
    step = TWO_PI / n
    best_val, best_x = vals.min(), grid[vals.argmin()]
    # refine the lowest few discrete local minima
    is_min = (vals <= np.roll(vals, 1)) & (vals <= np.roll(vals, -1))
    idx = np.flatnonzero(is_min)
    idx = idx[np.argsort(vals[idx])][:candidates]
    for i in idx:
        res = optimize.minimize_scalar(
            lambda x: sign * float(fun(np.array([x]))[0]),
            bounds=(grid[i] - step, grid[i] + step),
            method="bounded",
            options={"xatol": 1e-13},
        )
        if res.fun < best_val:
            best_val, best_x = float(res.fun), float(res.x)
    return sign * float(best_val), float(best_x) % TWO_PI


@dataclass(frozen=True)
class SupportCurve:
    """Strictly convex table with support function given by a Fourier series.

    ``terms`` holds ``(n, a_n, b_n)`` records.  With ``squared=False`` they
    define ``h(psi) = sum a_n cos(n psi) + b_n sin(n psi)``; with
    ``squared=True`` they define ``h(psi)**2`` and ``h`` is its positive root.
    """

    terms: tuple[Term, ...]
    squared: bool = False
    check: bool = field(default=True, compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "terms", normalize_terms(self.terms))
        if self.check:
            self.validate()

    @property
    def max_degree(self) -> int:
        return max(t[0] for t in self.terms)

    @property
    def kind(self) -> str:
        return "support_h2" if self.squared else "support_h"

    def series(self, psi, order: int = 0):
        """Derivative of the stored series (``h`` or ``h**2``)."""
        return eval_series(self.terms, psi, order)

    def h(self, psi, order: int = 0):
        if order not in (0, 1, 2):
            raise ValueError("order must be 0, 1 or 2")
        if not self.squared:
            return self.series(psi, order)
        H = self.series(psi, 0)
        with np.errstate(invalid="ignore"):
            h = np.sqrt(H)
        if order == 0:
            return h
        H1 = self.series(psi, 1)
        if order == 1:
            return H1 / (2 * h)
        H2 = self.series(psi, 2)
        return (2 * H2 * H - H1**2) / (4 * h**3)

    def h_all(self, psi):
        """``(h, h', h'')`` in one pass."""
        if not self.squared:
            return self.series(psi, 0), self.series(psi, 1), self.series(psi, 2)
        H, H1, H2 = self.series(psi, 0), self.series(psi, 1), self.series(psi, 2)
        h = np.sqrt(H)
        return h, H1 / (2 * h), (2 * H2 * H - H1**2) / (4 * h**3)

    def rho(self, psi):
        h, _, h2 = self.h_all(psi)
        return h + h2

    # -- validation ---------------------------------------------------------

    def diagnostics(self) -> CurveDiagnostics:
        if self.squared:
            # positivity of h**2 decides whether h exists at all
            H_min, H_at = _grid_extremum(lambda x: self.series(x))
            h_min = math.copysign(math.sqrt(abs(H_min)), H_min)
            if H_min <= MARGIN:
                return CurveDiagnostics(h_min, H_at, math.nan, math.nan, math.nan, math.nan)
        else:
            h_min, H_at = _grid_extremum(lambda x: self.h(x))
        rho_min, rmin_at = _grid_extremum(self.rho)
        rho_max, rmax_at = _grid_extremum(self.rho, maximize=True)
        return CurveDiagnostics(h_min, H_at, rho_min, rmin_at, rho_max, rmax_at)

    def validate(self) -> CurveDiagnostics:
        d = self.diagnostics()
        # convexity is checked first: positivity only locates the origin, except for
        # squared series where h itself must exist before rho means anything
        if self.squared and not d.h_min > MARGIN:
            raise InvalidCurveError(
                f"positivity violated: h^2 = {d.h_min * abs(d.h_min):.6g} at psi = {d.h_min_at:.6f}")
        if not d.rho_min > MARGIN:
            raise InvalidCurveError(
                f"convexity violated: h + h'' = {d.rho_min:.6g} at psi = {d.rho_min_at:.6f}")
        if not d.h_min > MARGIN:
            raise InvalidCurveError(
                f"positivity violated: h = {d.h_min:.6g} at psi = {d.h_min_at:.6f}")
        return d

    # -- arclength ----------------------------------------------------------

    @cached_property
    def _arc_table(self) -> np.ndarray:
        edges = np.linspace(0.0, TWO_PI, _N_PANELS + 1)
        half = 0.5 * (edges[1:] - edges[:-1])
        mid = 0.5 * (edges[1:] + edges[:-1])
        nodes = mid[:, None] + half[:, None] * _GL_X[None, :]
        panel = (self.rho(nodes) * _GL_W[None, :]).sum(axis=1) * half
        return np.concatenate([[0.0], np.cumsum(panel)])

    @property
    def length(self) -> float:
        return float(self._arc_table[-1])

    def arclength_from_psi(self, psi):
        """Arclength measured counterclockwise from the point with normal angle 0."""
        psi = np.asarray(psi, dtype=float)
        turns = np.floor(psi / TWO_PI)
        x = psi - turns * TWO_PI
        width = TWO_PI / _N_PANELS
        k = np.minimum((x / width).astype(int), _N_PANELS - 1)
        lo = k * width
        half = 0.5 * (x - lo)
        nodes = (lo + half)[..., None] + half[..., None] * _GL_X
        partial = (self.rho(nodes) * _GL_W).sum(axis=-1) * half
        return turns * self.length + self._arc_table[k] + partial

    def psi_from_arclength(self, s):
        """Inverse of :meth:`arclength_from_psi`, returned in ``[0, 2pi)``."""
        s = np.asarray(s, dtype=float)
        ell = self.length
        target = np.mod(s, ell)
        k = np.clip(np.searchsorted(self._arc_table, target, side="right") - 1, 0, _N_PANELS - 1)
        width = TWO_PI / _N_PANELS
        lo, hi = k * width, (k + 1) * width

        def fun(x):
            return self.arclength_from_psi(x) - target, self.rho(x)

        psi = bracketed_newton(fun, lo, hi, ftol=1e-14 * max(ell, 1.0))
        return np.mod(psi, TWO_PI)

    # -- geometry -----------------------------------------------------------

    def point(self, psi):
        """Boundary point whose outward normal has angle ``psi``."""
        psi = np.asarray(psi, dtype=float)
        h, h1, _ = self.h_all(psi)
        c, s = np.cos(psi), np.sin(psi)
        return np.stack([h * c - h1 * s, h * s + h1 * c], axis=-1)

    @cached_property
    def _rho_max(self) -> tuple[float, float]:
        return _grid_extremum(self.rho, maximize=True)

    def min_curvature(self) -> float:
        return 1.0 / self._rho_max[0]

    def diameter(self) -> float:
        width, _ = _grid_extremum(lambda x: self.h(x) + self.h(x + np.pi), maximize=True)
        return width


def bracketed_newton(fun, lo, hi, ftol: float = 1e-13, xtol: float = 4e-16, maxiter: int = 200):
    """Vectorised safeguarded Newton for increasing functions.

    ``fun(x)`` returns ``(f, df)``.  Each component must satisfy
    ``f(lo) <= 0 <= f(hi)``; Newton steps leaving the bracket fall back to
    bisection.  Components whose bracket is invalid come back as NaN.
    """
    lo = np.array(lo, dtype=float, copy=True)
    hi = np.array(hi, dtype=float, copy=True)
    lo, hi = np.broadcast_arrays(lo, hi)
    lo, hi = lo.copy(), hi.copy()
    x = 0.5 * (lo + hi)
    done = np.zeros(x.shape, dtype=bool)
    for _ in range(maxiter):
        f, df = fun(x)
        small = np.abs(f) <= ftol
        done |= small | (hi - lo <= xtol * np.maximum(1.0, np.abs(x)))
        if done.all():
            break
        pos = f > 0
        hi = np.where(pos & ~done, x, hi)
        lo = np.where(~pos & ~done, x, lo)
        with np.errstate(divide="ignore", invalid="ignore"):
            xn = x - f / df
        bad = ~np.isfinite(xn) | (xn <= lo) | (xn >= hi)
        xn = np.where(bad, 0.5 * (lo + hi), xn)
        x = np.where(done, x, xn)
    return x


# -- class C: centrally symmetric tables with a 4-periodic invariant curve ----

def _class_c_frequency_ok(n: int) -> bool:
    return n == 0 or n % 4 == 2


@dataclass(frozen=True)
class ClassCSpec:
    """Table whose ``h**2`` has frequencies in ``{0} U (2 + 4Z)``.

    ``R**2 = 2 c_0`` and ``h = R sin d(psi)``; the line through
    ``curve.point(psi)`` at angle ``d(psi)`` to the tangent belongs to the
    invariant curve of 4-periodic orbits.
    """

    h2_terms: tuple[Term, ...]
    R: float
    curve: SupportCurve

    def d(self, psi):
        return np.arcsin(np.clip(self.curve.h(psi) / self.R, 0.0, 1.0))

    def identity_defect(self, n: int = GRID_SIZE) -> tuple[float, float]:
        """Max defects of ``h^2(psi) + h^2(psi + pi/2) = R^2`` and ``d(psi + pi/2) = pi/2 - d(psi)``."""
        psi = np.arange(n) * (TWO_PI / n)
        h = self.curve.h
        e1 = np.abs(h(psi) ** 2 + h(psi + np.pi / 2) ** 2 - self.R**2).max()
        e2 = np.abs(self.d(psi + np.pi / 2) + self.d(psi) - np.pi / 2).max()
        return float(e1), float(e2)


class ClassCError(InvalidCurveError):
    """Raised when ``h**2`` has a frequency outside ``{0} U (2 + 4Z)``."""


def build_classC(h2_terms: Iterable[Sequence[float]], tol: float = 1e-10) -> ClassCSpec:
    """Construct the class-C table from Fourier terms of ``h**2``."""
    terms = normalize_terms(h2_terms)
    for n, a, b in terms:
        if not _class_c_frequency_ok(n) and (abs(a) > tol or abs(b) > tol):
            raise ClassCError(f"frequency {n} not in {{0}} U (2+4Z)")
    terms = tuple(t for t in terms if _class_c_frequency_ok(t[0]))
    c0 = dict((t[0], t[1]) for t in terms).get(0, 0.0)
    if c0 <= 0:
        raise InvalidCurveError("positivity violated: constant term of h^2 must be positive")
    curve = SupportCurve(terms, squared=True)
    spec = ClassCSpec(terms, math.sqrt(2 * c0), curve)
    e1, e2 = spec.identity_defect()
    if e1 > 1e-10 or e2 > 1e-10:
        raise CurveInconsistencyError(f"quarter-turn identities fail: {e1:.3g}, {e2:.3g}")
    return spec


def classC_from_curve(curve: SupportCurve, tol: float = 1e-10) -> ClassCSpec:
    """Class-C spec of an arbitrary curve, squaring ``h`` exactly when needed."""
    terms = curve.terms if curve.squared else multiply_series(curve.terms, curve.terms)
    return build_classC(terms, tol=tol)


def fit_support(func: Callable, degree: int, squared: bool = False, check: bool = True) -> SupportCurve:
    """Fourier-truncate a smooth periodic function ``func`` to ``degree``."""
    m = max(8 * degree, 64)
    psi = np.arange(m) * (TWO_PI / m)
    c = np.fft.rfft(func(psi)) / m
    terms = [(0, c[0].real, 0.0)]
    terms += [(n, 2 * c[n].real, -2 * c[n].imag) for n in range(1, degree + 1)]
    terms = [t for t in terms if t[0] == 0 or abs(t[1]) + abs(t[2]) > 1e-17]
    return SupportCurve(tuple(terms), squared=squared, check=check)


def circle(radius: float = 1.0, center: tuple[float, float] = (0.0, 0.0)) -> SupportCurve:
    x, y = center
    return SupportCurve(((0, radius, 0.0), (1, x, y)))


def ellipse(a: float, b: float) -> ClassCSpec:
    """Ellipse with semi-axes ``a`` (along x) and ``b``, as a class-C table."""
    return build_classC([(0, (a * a + b * b) / 2, 0.0), (2, (a * a - b * b) / 2, 0.0)])


def ellipse_support(a: float, b: float, degree: int = 48) -> SupportCurve:
    """Ellipse as a truncated Fourier series of ``h`` itself."""
    return fit_support(lambda x: np.sqrt(a * a * np.cos(x) ** 2 + b * b * np.sin(x) ** 2), degree)


# -- functional interface -------------------------------------------------------

def eval_h(curve: SupportCurve, psi, order: int = 0):
    return curve.h(psi, order)


def curve_point(curve: SupportCurve, psi):
    return curve.point(psi)


def radius_of_curvature(curve: SupportCurve, psi):
    rho = curve.rho(psi)
    if np.any(rho <= 0):
        raise InvalidCurveError("non-positive radius of curvature")
    return rho


def min_curvature(curve: SupportCurve) -> float:
    return curve.min_curvature()


def diameter_bound(curve: SupportCurve, rtol: float = 1e-9) -> float:
    """Diameter ``max_psi h(psi) + h(psi + pi)``, checked against ``2 / beta``."""
    D = curve.diameter()
    if D > 2.0 / curve.min_curvature() * (1 + rtol):
        raise CurveInconsistencyError(f"diameter {D:.6g} exceeds 2/beta")
    return D


def psi_from_arclength(curve: SupportCurve, s):
    return curve.psi_from_arclength(s)


def arclength_from_psi(curve: SupportCurve, psi):
    return curve.arclength_from_psi(psi)


# -- curve files ----------------------------------------------------------------

CURVE_KINDS = ("support_h", "support_h2")


class CurveFileError(InvalidCurveError):
    """Malformed curve file."""


@dataclass(frozen=True)
class CurveFile:
    kind: str
    terms: tuple[Term, ...]

    def build(self, check: bool = True) -> SupportCurve:
        """The table; ``support_h2`` files must describe a class-C table."""
        if self.kind == "support_h2":
            return build_classC(self.terms).curve
        return SupportCurve(self.terms, squared=False, check=check)

    def class_c(self) -> ClassCSpec:
        if self.kind == "support_h2":
            return build_classC(self.terms)
        return classC_from_curve(SupportCurve(self.terms))


def parse_curve_text(text: str) -> CurveFile:
    """Parse the line-oriented curve format.

    ::

        # comment
        kind = support_h          (or support_h2: the terms describe h**2)
        term = 0 1.0 0.0          n cos_coeff sin_coeff, one per frequency
        term = 3 0.01 0.0

    Keys may appear in any order; ``kind`` exactly once, at least one
    ``term``.  Values may be separated by blanks or commas.
    """
    kind = None
    recs = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if not sep:
            raise CurveFileError(f"line {lineno}: expected 'key = value'")
        if key == "kind":
            if kind is not None:
                raise CurveFileError(f"line {lineno}: kind given twice")
            if val not in CURVE_KINDS:
                raise CurveFileError(f"line {lineno}: unknown kind {val!r}")
            kind = val
        elif key == "term":
            fields = val.replace(",", " ").split()
            if len(fields) != 3:
                raise CurveFileError(f"line {lineno}: term needs n cos sin")
            try:
                n = float(fields[0])
                a, b = float(fields[1]), float(fields[2])
            except ValueError as exc:
                raise CurveFileError(f"line {lineno}: {exc}") from None
            recs.append((n, a, b))
        else:
            raise CurveFileError(f"line {lineno}: unknown key {key!r}")
    if kind is None:
        raise CurveFileError("missing 'kind'")
    try:
        terms = normalize_terms(recs)
    except ValueError as exc:
        raise CurveFileError(str(exc)) from None
    return CurveFile(kind, terms)


def format_curve_text(cf: CurveFile) -> str:
    lines = [f"kind = {cf.kind}"]
    lines += [f"term = {n} {a!r} {b!r}" for n, a, b in cf.terms]
    return "\n".join(lines) + "\n"


def load_curve(path) -> CurveFile:
    with open(path, encoding="utf-8") as fh:
        return parse_curve_text(fh.read())
