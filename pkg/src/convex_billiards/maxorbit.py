"""Locally maximizing orbits: second variation, Jacobi fields, classification.

A configuration segment ``q_0..q_K`` with fixed endpoints has the symmetric
tridiagonal second variation with diagonal ``a_n = H22(q_{n-1}, q_n) +
H11(q_n, q_{n+1})`` and off-diagonal ``b_n = H12(q_n, q_{n+1}) > 0``.  A
point lies on an m-orbit iff every such matrix along its orbit is negative
definite, which is tested here through the leading-minor recursion
``M_{k+1} = a_{k+1} M_k - b_k^2 M_{k-1}`` carried as ratios
``r_k = M_k / M_{k-1}``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
from scipy.linalg import solve_banded

from .billiard import (
    NO_INTERSECTION,
    OK,
    TANGENT,
    PhasePoint,
    chord_geometry,
    gen_S,
    gen_S_derivs,
    l_derivs_at,
    s_derivs_at,
    step_phi,
    step_phi_inverse,
    to_phiP,
)
from .curve import TWO_PI, SupportCurve

TOL_DEF = 1e-9

MCANDIDATE, NOTM, BOUNDARY, UNDETERMINED, PROPAGATION_FAILURE = range(5)
VERDICT_NAMES = {
    MCANDIDATE: "MCandidate",
    NOTM: "NotM",
    BOUNDARY: "BoundaryDegenerate",
    UNDETERMINED: "Undetermined",
    PROPAGATION_FAILURE: "PropagationFailure",
}


class SingularSystemError(np.linalg.LinAlgError):
    pass


class NotMCandidateError(ValueError):
    pass


# -- orbit tracing --------------------------------------------------------------

@dataclass(frozen=True)
class TracedLines:
    """Consecutive lines ``l_j`` of a batch of orbits, ``j = -n_back..n_fwd``.

    ``phi``/``p`` have shape ``(m, K)``; reflection ``r`` joins columns ``r``
    and ``r + 1`` and has shape ``(m, K - 1)``.
    """

    phi: np.ndarray
    p: np.ndarray
    psi: np.ndarray
    delta: np.ndarray
    status: np.ndarray
    n_back: int


def trace_lines(curve: SupportCurve, phi0, p0, n_back: int, n_fwd: int) -> TracedLines:
    phi0 = np.atleast_1d(np.asarray(phi0, dtype=float))
    p0 = np.atleast_1d(np.asarray(p0, dtype=float))
    m, K = phi0.size, n_back + n_fwd + 1
    phi = np.full((m, K), np.nan)
    p = np.full((m, K), np.nan)
    psi = np.full((m, K - 1), np.nan)
    delta = np.full((m, K - 1), np.nan)
    status = np.full((m, K - 1), NO_INTERSECTION, dtype=np.int8)
    phi[:, n_back], p[:, n_back] = phi0, p0
    for c in range(n_back, K - 1):
        st = step_phi(curve, phi[:, c], p[:, c])
        phi[:, c + 1], p[:, c + 1] = st.phi, st.p
        psi[:, c], delta[:, c], status[:, c] = st.psi, st.delta, st.status
    for c in range(n_back, 0, -1):
        st = step_phi_inverse(curve, phi[:, c], p[:, c])
        phi[:, c - 1], p[:, c - 1] = st.phi, st.p
        psi[:, c - 1], delta[:, c - 1], status[:, c - 1] = st.psi, st.delta, st.status
    return TracedLines(phi, p, psi, delta, status, n_back)


class ChordData(NamedTuple):
    """Configuration and per-chord Hessian entries on line columns ``1..K-1``.

    ``q``/``mom`` have ``K - 1`` columns; chord ``i`` joins ``q[:, i]`` and
    ``q[:, i + 1]``.
    """

    q: np.ndarray
    mom: np.ndarray
    h11: np.ndarray
    h12: np.ndarray
    h22: np.ndarray


def chord_data(curve: SupportCurve, tl: TracedLines, genfun: str) -> ChordData:
    if genfun == "S":
        # q_j = phi_j; chord (phi_j, phi_{j+1}) is the reflection between them
        d = s_derivs_at(curve, tl.psi[:, 1:], tl.delta[:, 1:])
        return ChordData(tl.phi[:, 1:], tl.p[:, 1:], d.S11, d.S12, d.S22)
    if genfun == "L":
        # q_j = s_j, the point where l_j leaves the boundary; chord (s_j, s_{j+1}) is l_j
        psi0, d0 = tl.psi[:, :-1], tl.delta[:, :-1]
        psi1, d1 = tl.psi[:, 1:], tl.delta[:, 1:]
        with np.errstate(invalid="ignore"):
            L, _, _ = chord_geometry(curve, np.nan_to_num(psi0), np.nan_to_num(psi1, nan=1.0))
        L = np.where(np.isfinite(psi0) & np.isfinite(psi1), L, np.nan)
        d = l_derivs_at(curve, psi0, d0, psi1, d1, L)
        s = curve.arclength_from_psi(np.mod(np.nan_to_num(tl.psi), 2 * np.pi))
        s = np.where(np.isfinite(tl.psi), s, np.nan)
        return ChordData(s, np.cos(tl.delta), d.L11, d.L12, d.L22)
    raise ValueError(f"unknown generating function {genfun!r}")


# -- segments and second variation --------------------------------------------------

@dataclass(frozen=True)
class OrbitSegment:
    """Configuration ``q_0..q_K`` with momenta and the chord data between them."""

    genfun: str
    q: np.ndarray
    p: np.ndarray
    h11: np.ndarray
    h12: np.ndarray
    h22: np.ndarray
    origin: int = 0   # index of the starting point within q

    def __len__(self):
        return len(self.q)


def orbit_segment(curve: SupportCurve, point: PhasePoint, n_back: int, n_fwd: int,
                  genfun: str = "S") -> OrbitSegment:
    """Configuration ``q_{-n_back}..q_{n_fwd}`` around ``point``."""
    z = to_phiP(curve, point)
    tl = trace_lines(curve, z.first, z.second, n_back + 1, n_fwd)
    if np.any(tl.status != OK):
        raise RuntimeError("orbit segment leaves the regular part of the phase cylinder")
    cd = chord_data(curve, tl, genfun)
    return OrbitSegment(genfun, cd.q[0], cd.mom[0], cd.h11[0], cd.h12[0], cd.h22[0], origin=n_back)


@dataclass(frozen=True)
class SecondVariation:
    """Second variation of a segment ``q_0..q_K`` with both endpoints fixed.

    ``a`` holds ``a_1..a_{K-1}`` and ``b`` holds ``b_0..b_{K-1}``; the matrix
    is ``tridiag(b_1..b_{K-2}; a_1..a_{K-1})``.  ``h11``/``h12``/``h22`` are
    kept when available so Jacobi fields can be lifted to the phase cylinder.
    """

    a: np.ndarray
    b: np.ndarray
    h11: np.ndarray | None = None
    h22: np.ndarray | None = None

    @classmethod
    def from_tridiagonal(cls, diag, offdiag, b_ends=(1.0, 1.0)) -> "SecondVariation":
        b = np.concatenate([[b_ends[0]], np.asarray(offdiag, dtype=float), [b_ends[1]]])
        return cls(np.asarray(diag, dtype=float), b)

    @property
    def diag(self) -> np.ndarray:
        return self.a

    @property
    def offdiag(self) -> np.ndarray:
        return self.b[1:-1]

    def matrix(self) -> np.ndarray:
        return np.diag(self.a) + np.diag(self.offdiag, 1) + np.diag(self.offdiag, -1)


def build_second_variation(segment: OrbitSegment) -> SecondVariation:
    if len(segment) < 3:
        raise ValueError("segment needs at least 3 points")
    if not np.all(np.isfinite(segment.h12)) or np.any(segment.h12 <= 0):
        raise ValueError("degenerate chord inside segment")
    a = segment.h22[:-1] + segment.h11[1:]
    return SecondVariation(a, segment.h12.copy(), segment.h11.copy(), segment.h22.copy())


# -- minors and definiteness -------------------------------------------------------

@dataclass(frozen=True)
class MinorReport:
    ratios: np.ndarray           # r_k = M_k / M_{k-1}
    rel_margin: float            # min_k -r_k / row scale (negative once a pivot is >= 0)
    alternating: bool

    @property
    def values(self) -> np.ndarray:
        with np.errstate(over="ignore", invalid="ignore"):
            return np.cumprod(self.ratios)

    @property
    def signs(self) -> np.ndarray:
        return np.sign(self.values)


def _bands(sv):
    if isinstance(sv, SecondVariation):
        return sv.diag, sv.offdiag
    diag, offdiag = sv
    return np.asarray(diag, dtype=float), np.asarray(offdiag, dtype=float)


def _row_scale(diag, offdiag):
    scale = np.abs(diag).copy()
    scale[..., 1:] += np.abs(offdiag)
    scale[..., :-1] += np.abs(offdiag)
    return scale


def minors(sv) -> MinorReport:
    """Leading principal minors of ``W`` through the normalised recursion."""
    diag, offdiag = _bands(sv)
    n = diag.size
    r = np.empty(n)
    with np.errstate(divide="ignore", invalid="ignore"):
        r[0] = diag[0]
        for k in range(1, n):
            r[k] = diag[k] - offdiag[k - 1] ** 2 / r[k - 1]
    rel = -r / _row_scale(diag, offdiag)
    rel = np.where(np.isnan(rel), -np.inf, rel)
    # M_k = M_{k-1} r_k, so the signs alternate exactly when every r_k < 0
    return MinorReport(r, float(rel.min()), bool(np.all(r < 0)))


class Definiteness(NamedTuple):
    verdict: str             # "yes" | "no" | "undetermined"
    margin: float            # smallest relative pivot margin seen
    witness: int | None      # size of the leading block that is not negative definite


def ratio_scan(diag, offdiag, tol: float = TOL_DEF):
    """Batched definiteness test on rows of ``diag`` (m, n) and ``offdiag`` (m, n-1).

    Returns ``(code, index, margin)``: code 0 = negative definite, 1 = not
    (leading block of size ``index + 1`` has a non-negative eigenvalue),
    3 = undetermined at pivot ``index``.
    """
    diag = np.atleast_2d(diag)
    offdiag = np.atleast_2d(offdiag)
    m, n = diag.shape
    scale = _row_scale(diag, offdiag)
    code = np.zeros(m, dtype=np.int8)
    index = np.full(m, -1)
    margin = np.full(m, np.inf)
    live = np.ones(m, dtype=bool)
    r = np.ones(m)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        for k in range(n):
            r = diag[:, k] if k == 0 else diag[:, k] - offdiag[:, k - 1] ** 2 / r
            rel = -r / scale[:, k]
            undet = live & (np.abs(rel) <= tol)
            bad = live & ~undet & ~(rel > 0)
            code[undet], index[undet] = UNDETERMINED, k
            code[bad], index[bad] = NOTM, k
            margin = np.where(live, np.minimum(margin, np.nan_to_num(rel, nan=-np.inf)), margin)
            live &= ~(undet | bad)
    return code, index, margin


def is_negative_definite(sv, tol: float = TOL_DEF) -> Definiteness:
    diag, offdiag = _bands(sv)
    code, index, margin = ratio_scan(diag[None, :], offdiag[None, :], tol)
    if code[0] == MCANDIDATE:
        return Definiteness("yes", float(margin[0]), None)
    if code[0] == NOTM:
        return Definiteness("no", float(margin[0]), int(index[0]) + 1)
    return Definiteness("undetermined", float(margin[0]), int(index[0]) + 1)


# -- Jacobi fields ------------------------------------------------------------------

@dataclass(frozen=True)
class JacobiField:
    dq: np.ndarray
    dp: np.ndarray | None = None

    def residual(self, sv: SecondVariation) -> np.ndarray:
        """Relative residual of the Jacobi equation at the interior indices."""
        x, a, b = self.dq, sv.a, sv.b
        res = b[:-1] * x[:-2] + a * x[1:-1] + b[1:] * x[2:]
        scale = np.abs(b[:-1] * x[:-2]) + np.abs(a * x[1:-1]) + np.abs(b[1:] * x[2:])
        return np.abs(res) / np.where(scale > 0, scale, 1.0)


def lift(sv: SecondVariation, dq: np.ndarray) -> np.ndarray | None:
    """Momentum component of the invariant vector field over ``dq``."""
    if sv.h11 is None:
        return None
    dp = np.empty_like(dq)
    dp[:-1] = -sv.h11 * dq[:-1] - sv.b * dq[1:]
    dp[-1] = sv.h22[-1] * dq[-1] + sv.b[-1] * dq[-2]
    return dp


def jacobi_propagate(sv: SecondVariation, dq0: float, dq1: float) -> JacobiField:
    K = sv.b.size
    x = np.empty(K + 1)
    x[0], x[1] = dq0, dq1
    for n in range(1, K):
        x[n + 1] = -(sv.b[n - 1] * x[n - 1] + sv.a[n - 1] * x[n]) / sv.b[n]
    return JacobiField(x, lift(sv, x))


def solve_bvp(sv: SecondVariation, M: int = 0, N: int | None = None) -> JacobiField:
    """Jacobi field on ``q_M..q_N`` with ``xi_M = 1`` and ``xi_N = 0``."""
    K = sv.b.size
    N = K if N is None else N
    if not 0 <= M < N <= K:
        raise ValueError("need 0 <= M < N <= K")
    x = np.zeros(N - M + 1)
    x[0] = 1.0
    if N - M == 1:
        return JacobiField(x)
    diag = sv.a[M:N - 1]            # a_{M+1}..a_{N-1}
    off = sv.b[M + 1:N - 1]         # b_{M+1}..b_{N-2}
    if np.any(minors((diag, off)).ratios == 0):
        raise SingularSystemError("zero leading minor")
    ab = np.zeros((3, diag.size))
    ab[0, 1:] = off
    ab[1] = diag
    ab[2, :-1] = off
    rhs = np.zeros(diag.size)
    rhs[0] = -sv.b[M]
    try:
        x[1:-1] = solve_banded((1, 1), ab, rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularSystemError(str(exc)) from exc
    return JacobiField(x)


# -- classification -----------------------------------------------------------------

@dataclass(frozen=True)
class Classification:
    verdict: str
    horizon: int
    witness_len: int | None = None
    margin: float = np.nan

    @property
    def definite(self) -> bool:
        return self.verdict in ("MCandidate", "NotM")


class BatchClassification(NamedTuple):
    verdict: np.ndarray      # int codes, see VERDICT_NAMES
    witness_len: np.ndarray  # size of the failing window (NotM), else 0
    margin: np.ndarray
    horizon: int


def _window_status(status: np.ndarray, lo: int, hi: int) -> tuple[np.ndarray, np.ndarray]:
    win = status[:, lo:hi]
    return (win == TANGENT).any(axis=1), (win == NO_INTERSECTION).any(axis=1)


def classify_lines(curve: SupportCurve, tl: TracedLines, genfun: str, horizon: int,
                   tol: float = TOL_DEF) -> BatchClassification:
    """Classify the line in column ``tl.n_back`` of every traced orbit.

    Windows ``W_{-n..n}`` are tested for ``n = 1..horizon``; the first window
    that is degenerate, not negative definite or undetermined decides.  The
    windows are nested, so this order makes verdicts stable in ``horizon``.
    """
    if tl.n_back < horizon + 2 or tl.phi.shape[1] - 1 - tl.n_back < horizon + 1:
        raise ValueError("traced orbit too short for this horizon")
    cd = chord_data(curve, tl, genfun)
    a = cd.h22[:, :-1] + cd.h11[:, 1:]     # a at config columns 1..K-3 -> line col 2..K-2
    b = cd.h12                             # b at line col 1..K-2
    m = tl.phi.shape[0]
    c0 = tl.n_back                         # line column of the point
    verdict = np.full(m, MCANDIDATE, dtype=np.int8)
    witness = np.zeros(m, dtype=int)
    margin = np.full(m, np.inf)
    live = np.ones(m, dtype=bool)
    for n in range(1, horizon + 1):
        # reflections touched by config -n-1..n+1 under either generating function
        tang, lost = _window_status(tl.status, c0 - n - 2, c0 + n + 1)
        deg = live & tang
        fail = live & ~tang & lost
        verdict[deg], verdict[fail] = BOUNDARY, PROPAGATION_FAILURE
        live &= ~(deg | fail)
        if not live.any():
            break
        diag = a[:, c0 - n - 2:c0 + n - 1]
        off = b[:, c0 - n - 1:c0 + n - 1]
        code, _, marg = ratio_scan(diag[live], off[live], tol)
        idx = np.flatnonzero(live)
        margin[idx] = marg
        bad, und = idx[code == NOTM], idx[code == UNDETERMINED]
        verdict[bad], witness[bad] = NOTM, 2 * n + 1
        verdict[und], witness[und] = UNDETERMINED, 2 * n + 1
        live[bad] = live[und] = False
    return BatchClassification(verdict, witness, margin, horizon)


def window_matrix(curve: SupportCurve, phi: float, p: float, genfun: str, n: int):
    """Bands ``(diag, offdiag)`` of the window ``W_{-n..n}`` used by the classifier."""
    tl = trace_lines(curve, phi, p, n + 2, n + 1)
    if np.any(tl.status != OK):
        raise RuntimeError("window leaves the regular part of the phase cylinder")
    cd = chord_data(curve, tl, genfun)
    a = cd.h22[:, :-1] + cd.h11[:, 1:]
    c0 = tl.n_back
    return a[0, c0 - n - 2:c0 + n - 1], cd.h12[0, c0 - n - 1:c0 + n - 1]


def classify_batch(curve: SupportCurve, phi, p, genfun: str, horizon: int,
                   tol: float = TOL_DEF) -> BatchClassification:
    tl = trace_lines(curve, phi, p, horizon + 2, horizon + 1)
    return classify_lines(curve, tl, genfun, horizon, tol)


def classify(curve: SupportCurve, point: PhasePoint, genfun: str = "S", horizon: int = 24,
             tol: float = TOL_DEF) -> Classification:
    z = to_phiP(curve, point)
    res = classify_batch(curve, z.first, z.second, genfun, horizon, tol)
    v = int(res.verdict[0])
    return Classification(
        VERDICT_NAMES[v], horizon,
        int(res.witness_len[0]) if v in (NOTM, UNDETERMINED) else None,
        float(res.margin[0]),
    )


# -- limiting field and omega ---------------------------------------------------------

@dataclass(frozen=True)
class NuEstimate:
    nu1: float
    history: tuple[tuple[int, float], ...]
    converged: bool
    monotone: bool

    @property
    def change(self) -> float:
        if len(self.history) < 2:
            return np.inf
        return abs(self.history[-1][1] - self.history[-2][1])


def _forward_variation(curve, point, genfun, n_fwd, n_back=1):
    """Second variation of ``q_{-n_back}..q_{n_fwd}``."""
    seg = orbit_segment(curve, point, n_back, n_fwd, genfun)
    return build_second_variation(seg)


def _nu_history(sv: SecondVariation, sched: Sequence[int]) -> list[tuple[int, float]]:
    """``xi^{0,N}_1`` for ``sv`` starting at ``q_0``."""
    history = []
    for N in sched:
        block = SecondVariation(sv.a[:N - 1], sv.b[:N])
        if is_negative_definite(block).verdict != "yes":
            raise NotMCandidateError(f"segment [0, {N}] is not negative definite")
        history.append((N, float(solve_bvp(sv, 0, N).dq[1])))
    return history


def _nu_estimate(history, tol) -> NuEstimate:
    vals = np.array([v for _, v in history])
    monotone = bool(np.all(np.diff(vals) >= -1e-14))
    converged = len(vals) > 1 and abs(vals[-1] - vals[-2]) < tol
    return NuEstimate(float(vals[-1]), tuple(history), converged, monotone)


def limit_field_nu(curve: SupportCurve, point: PhasePoint, genfun: str = "S",
                   schedule: Sequence[int] = (8, 16, 32, 64), tol: float = 1e-8) -> NuEstimate:
    """``xi^{0,N}_1`` along the schedule of horizons ``N``.

    The last value is returned; ``converged`` means the last change is below
    ``tol``.
    """
    sched = sorted(schedule)
    sv = _forward_variation(curve, point, genfun, sched[-1], n_back=0)
    return _nu_estimate(_nu_history(sv, sched), tol)


@dataclass(frozen=True)
class OmegaReport:
    omega_forward: float
    omega_backward: float
    lower: float                 # H22(q_{-1}, q_0)
    upper: float                 # -H11(q_0, q_1)
    nu: NuEstimate
    nu_prev: float               # nu_1 at the preimage, from its own boundary problem

    @property
    def bounds_ok(self) -> bool:
        return self.lower < self.omega_forward < self.upper

    @property
    def dual_defect(self) -> float:
        return abs(self.omega_forward - self.omega_backward)

    @property
    def status(self) -> str:
        return "converged" if self.nu.converged else "estimate"


def omega_from_variation(sv: SecondVariation, schedule: Sequence[int] = (8, 16, 32, 64),
                         tol: float = 1e-8) -> OmegaReport:
    """Omega at ``q_0`` from the second variation of ``q_{-1}..q_K``, ``K >= max(schedule)``."""
    sched = sorted(schedule)
    N = sched[-1]
    if sv.b.size < N + 1 or sv.h11 is None:
        raise ValueError("variation too short or without chord data")
    # shift the origin to q_0 for the forward field
    nu = _nu_estimate(_nu_history(SecondVariation(sv.a[1:], sv.b[1:]), sched), tol)
    if is_negative_definite(SecondVariation(sv.a[:N], sv.b[:N + 1])).verdict != "yes":
        raise NotMCandidateError("segment [-1, N] is not negative definite")
    nu_prev = float(solve_bvp(sv, 0, N + 1).dq[1])
    h11_0, h12_0 = sv.h11[1], sv.b[1]
    h22_m, h12_m = sv.h22[0], sv.b[0]
    fwd = -h11_0 - h12_0 * nu.nu1
    bwd = h22_m + h12_m / nu_prev
    return OmegaReport(float(fwd), float(bwd), float(h22_m), float(-h11_0), nu, nu_prev)


def omega(curve: SupportCurve, point: PhasePoint, genfun: str = "S",
          schedule: Sequence[int] = (8, 16, 32, 64), tol: float = 1e-8) -> OmegaReport:
    """Forward and backward expressions of omega at ``point``.

    The forward one uses ``nu_1`` at ``point``; the backward one uses
    ``H22(q_{-1}, q_0) + H12(q_{-1}, q_0) / nu_1(T^{-1} z)``, with ``nu_1`` at
    the preimage obtained from a separate boundary problem on ``q_{-1}..q_N``
    that shares the far endpoint.
    """
    N = max(schedule)
    return omega_from_variation(_forward_variation(curve, point, genfun, N, n_back=1), schedule, tol)


# -- periodic configurations ------------------------------------------------------------

def _periodic_phis(cycle: np.ndarray, start: int, stop: int) -> np.ndarray:
    q = cycle.size
    j = np.arange(start, stop + 1)
    return cycle[j % q] + TWO_PI * (j // q)


def max_periodic_orbit(curve: SupportCurve, q: int, shift: float | None = None,
                       n_starts: int = 6) -> np.ndarray:
    """Lines ``phi_0..phi_{q-1}`` of a q-periodic orbit of rotation number ``1/q``
    maximizing the action ``sum S``; the orbit closes with ``phi_q = phi_0 + 2 pi``.

    Symmetric starting polygons can sit on minimax orbits, so unless ``shift``
    is given several rotated starts are tried and the largest action wins.
    """
    from scipy.optimize import minimize, root

    if q < 2:
        raise ValueError("q >= 2")

    def action(x):
        phi = _periodic_phis(x, 0, q)
        return -float(np.sum(gen_S(curve, phi[:-1], phi[1:])))

    def grad(x):
        phi = _periodic_phis(x, -1, q)
        d = gen_S_derivs(curve, phi[:-1], phi[1:])
        return d.S2[:-1] + d.S1[1:]

    def solve(s):
        x0 = s + np.arange(q) * (TWO_PI / q)
        x = minimize(action, x0, jac=lambda x: -grad(x), method="BFGS", options=dict(gtol=1e-10)).x
        x = root(grad, x, tol=1e-15).x
        if np.max(np.abs(grad(x))) > 1e-12:
            raise RuntimeError("periodic orbit did not converge")
        return x

    if shift is not None:
        return solve(shift)
    best, best_action = None, np.inf
    for s in (np.arange(n_starts) + 0.5) * (TWO_PI / q / n_starts):
        try:
            x = solve(s)
            a = action(x)
        except (RuntimeError, ValueError, ArithmeticError):
            continue
        if a < best_action - 1e-12:
            best, best_action = x, a
    if best is None:
        raise RuntimeError("periodic orbit did not converge")
    return best


def periodic_variation(curve: SupportCurve, cycle, n_back: int, n_fwd: int,
                       start: int = 0) -> SecondVariation:
    """Second variation in the ``S`` chart of ``q_{start-n_back}..q_{start+n_fwd}`` along a
    periodic configuration, extended by periodicity rather than traced."""
    phi = _periodic_phis(np.asarray(cycle, dtype=float), start - n_back, start + n_fwd)
    d = gen_S_derivs(curve, phi[:-1], phi[1:])
    a = d.S22[:-1] + d.S11[1:]
    return SecondVariation(a, d.S12.copy(), d.S11.copy(), d.S22.copy())


# -- two generating functions ------------------------------------------------------------

@dataclass(frozen=True)
class CrossCheck:
    n_points: int
    n_definite_both: int
    n_agree: int
    disagreements: np.ndarray          # indices of definite-definite mismatches
    verdict_S: np.ndarray = field(repr=False)
    verdict_L: np.ndarray = field(repr=False)

    @property
    def agreement(self) -> float:
        return self.n_agree / self.n_definite_both if self.n_definite_both else 1.0


def cross_check_ML_MS(curve: SupportCurve, phi, p, horizon: int = 24,
                      tol: float = TOL_DEF) -> CrossCheck:
    """Classify the same orbits under ``S`` and ``L`` and compare definite verdicts."""
    tl = trace_lines(curve, phi, p, horizon + 2, horizon + 1)
    vS = classify_lines(curve, tl, "S", horizon, tol).verdict
    vL = classify_lines(curve, tl, "L", horizon, tol).verdict
    definite = np.isin(vS, (MCANDIDATE, NOTM)) & np.isin(vL, (MCANDIDATE, NOTM))
    agree = definite & (vS == vL)
    return CrossCheck(
        n_points=int(vS.size),
        n_definite_both=int(definite.sum()),
        n_agree=int(agree.sum()),
        disagreements=np.flatnonzero(definite & (vS != vL)),
        verdict_S=vS,
        verdict_L=vL,
    )
