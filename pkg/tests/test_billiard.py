import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from convex_billiards.billiard import (
    OK,
    TANGENT,
    ConeCollapseError,
    DegenerateChordError,
    NoIntersectionError,
    PhasePoint,
    TangencyError,
    assumption_margins,
    check_geometric_assumption,
    chord_geometry,
    cone_frame,
    dF_at,
    dF_matrix,
    gen_L,
    gen_L_derivs,
    gen_S,
    gen_S_derivs,
    map_phi,
    map_phi_inverse,
    map_s,
    s_to_phi,
    step_phi,
    step_phi_inverse,
    step_s,
    to_phiP,
    to_sCos,
)
from convex_billiards.measure import AlphaCurve, lines_from_psi_delta

from conftest import curve_of

WOBBLY = curve_of((0, 1.0, 0.0), (2, 0.05, 0.02), (3, 0.03, 0.0), (5, 0.01, 0.004))


def random_lines(curve, rng, n, lo=0.05):
    psi = rng.uniform(0, 2 * np.pi, n)
    delta = rng.uniform(lo, np.pi - lo, n)
    return lines_from_psi_delta(curve, psi, delta)


# -- generating function S -----------------------------------------------------

def test_gen_S_examples(unit_circle, cos2):
    assert gen_S(unit_circle, 0.0, np.pi) == pytest.approx(2.0)
    assert gen_S(unit_circle, 0.0, np.pi / 2) == pytest.approx(math.sqrt(2))
    assert gen_S(cos2, -np.pi / 4, np.pi / 4) == pytest.approx(1.55563, abs=1e-5)


def test_gen_S_is_width_of_chord(cos2, wobbly, rng):
    # S is the distance between the supporting lines at angles phi0 + pi/2 - ... ; independent
    # check: S = <point(psi) - point(psi'), u> where the chord of the reflected line ends
    for c in (cos2, wobbly):
        phi0, p0 = random_lines(c, rng, 50)
        st1 = step_phi(c, phi0, p0)
        # the incoming line phi0 and outgoing line phi1 share the point with normal psi
        x = c.point(st1.psi)
        n0 = np.column_stack([np.cos(phi0), np.sin(phi0)])
        n1 = np.column_stack([np.cos(st1.phi), np.sin(st1.phi)])
        assert np.allclose((x * n0).sum(axis=1), p0, atol=1e-12)
        assert np.allclose((x * n1).sum(axis=1), st1.p, atol=1e-12)
        # S = p1 - p0 cos(2 delta) ... reduces to 2 h sin(delta) for the reflection point
        u = np.column_stack([np.cos(st1.psi), np.sin(st1.psi)])
        assert np.allclose(gen_S(c, phi0, st1.phi), 2 * (x * u).sum(axis=1) * np.sin(st1.delta))


def test_gen_S_rejects_degenerate(unit_circle):
    with pytest.raises(DegenerateChordError):
        gen_S(unit_circle, 0.0, 0.0)
    with pytest.raises(DegenerateChordError):
        gen_S(unit_circle, 0.0, 2 * np.pi)


def test_gen_S_derivs_examples(unit_circle, cos2):
    d = gen_S_derivs(unit_circle, 0.0, np.pi)
    assert (d.S11, d.S22, d.S12) == pytest.approx((-0.5, -0.5, 0.5))
    d = gen_S_derivs(cos2, -np.pi / 4, np.pi / 4)
    assert d.S12 == pytest.approx(0.5 * 0.7 * math.sqrt(2) / 2)
    assert d.S12 == pytest.approx(0.24749, abs=1e-5)


def _fd_hessian(f, x0, x1, step=1e-4):
    f1 = (f(x0 + step, x1) - f(x0 - step, x1)) / (2 * step)
    f2 = (f(x0, x1 + step) - f(x0, x1 - step)) / (2 * step)
    f11 = (f(x0 + step, x1) - 2 * f(x0, x1) + f(x0 - step, x1)) / step**2
    f22 = (f(x0, x1 + step) - 2 * f(x0, x1) + f(x0, x1 - step)) / step**2
    f12 = (f(x0 + step, x1 + step) - f(x0 + step, x1 - step)
           - f(x0 - step, x1 + step) + f(x0 - step, x1 - step)) / (4 * step**2)
    return f1, f2, f11, f12, f22


def _rel(a, b):
    return np.abs(a - b) / np.maximum(np.abs(b), 1.0)


@pytest.mark.parametrize("name", ["cos2", "wobbly", "ellipse"])
def test_S_derivatives_match_finite_differences(name, cos2, wobbly, ellipse21, rng):
    c = {"cos2": cos2, "wobbly": wobbly, "ellipse": ellipse21.curve}[name]
    phi0 = rng.uniform(0, 2 * np.pi, 40)
    phi1 = phi0 + rng.uniform(0.2, 2 * np.pi - 0.2, 40)
    d = gen_S_derivs(c, phi0, phi1)
    fd = _fd_hessian(lambda a, b: gen_S(c, a, b), phi0, phi1)
    for exact, approx in zip((d.S1, d.S2, d.S11, d.S12, d.S22), fd):
        assert np.max(_rel(approx, exact)) < 1e-5


# -- generating function L -----------------------------------------------------

def test_gen_L_examples(unit_circle):
    d = gen_L_derivs(unit_circle, 0.0, np.pi / 2)
    assert d.L == pytest.approx(math.sqrt(2))
    assert -d.L11 == pytest.approx(math.sqrt(2) / 2 - 0.5 / math.sqrt(2))
    assert -d.L11 == pytest.approx(0.35355, abs=1e-5)
    d = gen_L_derivs(unit_circle, 0.0, np.pi)
    assert -d.L11 == pytest.approx(0.5)
    assert d.L12 > 0


@pytest.mark.parametrize("name", ["cos2", "wobbly", "ellipse"])
def test_L_derivatives_match_finite_differences(name, cos2, wobbly, ellipse21, rng):
    c = {"cos2": cos2, "wobbly": wobbly, "ellipse": ellipse21.curve}[name]
    ell = c.length
    s0 = rng.uniform(0, ell, 40)
    s1 = s0 + rng.uniform(0.1 * ell, 0.9 * ell, 40)
    d = gen_L_derivs(c, s0, s1)
    fd = _fd_hessian(lambda a, b: gen_L(c, a, b), s0, s1)
    for exact, approx in zip((d.L1, d.L2, d.L11, d.L12, d.L22), fd):
        assert np.max(_rel(approx, exact)) < 1e-5


@pytest.mark.parametrize("name", ["unit_circle", "cos2", "cos3", "wobbly"])
def test_twist_positivity(name, request, rng):
    c = request.getfixturevalue(name)
    n = 10_000
    phi0 = rng.uniform(0, 2 * np.pi, n)
    phi1 = phi0 + rng.uniform(1e-3, 2 * np.pi - 1e-3, n)
    assert np.all(gen_S_derivs(c, phi0, phi1).S12 > 0)
    s0 = rng.uniform(0, c.length, n)
    s1 = s0 + rng.uniform(1e-3, c.length - 1e-3, n)
    assert np.all(gen_L_derivs(c, s0, s1).L12 > 0)


# -- the map -------------------------------------------------------------------

def test_map_phi_circle_examples(unit_circle):
    z = map_phi(unit_circle, PhasePoint("phi", 0.0, 0.5))
    assert (z.first, z.second) == pytest.approx((2 * np.pi / 3, 0.5), abs=1e-13)
    z = map_phi(unit_circle, PhasePoint("phi", 0.0, 0.0))
    assert (z.first, z.second) == pytest.approx((np.pi, 0.0), abs=1e-13)


def test_map_phi_closes_on_alpha(ellipse21):
    phi, p = AlphaCurve(ellipse21).line(0.0)
    z0 = PhasePoint("phi", float(phi), float(p))
    z = z0
    for _ in range(4):
        z = map_phi(ellipse21.curve, z)
    assert abs(z.first - z0.first - 2 * np.pi) < 1e-9
    assert abs(z.second - z0.second) < 1e-9


def test_map_phi_errors(unit_circle):
    with pytest.raises(NoIntersectionError):
        map_phi(unit_circle, PhasePoint("phi", 0.0, 1.5))
    with pytest.raises(TangencyError):
        map_phi(unit_circle, PhasePoint("phi", 0.0, math.cos(1e-5)))


@pytest.mark.parametrize("name", ["cos2", "cos3", "wobbly"])
def test_momentum_consistency_and_reversibility(name, request, rng):
    c = request.getfixturevalue(name)
    phi0, p0 = random_lines(c, rng, 500)
    st1 = step_phi(c, phi0, p0)
    assert np.all(st1.status == OK)
    d = gen_S_derivs(c, phi0, st1.phi)
    assert np.max(np.abs(p0 + d.S1)) < 1e-10
    assert np.max(np.abs(st1.p - d.S2)) < 1e-10
    back = step_phi_inverse(c, st1.phi, st1.p)
    assert np.max(np.abs(back.phi - phi0)) < 1e-10
    assert np.max(np.abs(back.p - p0)) < 1e-10
    assert np.allclose(back.psi, st1.psi) and np.allclose(back.delta, st1.delta)


def test_circle_conserves_p(unit_circle, rng):
    phi, p = rng.uniform(0, 6, 200), rng.uniform(-0.99, 0.99, 200)
    for _ in range(50):
        st1 = step_phi(unit_circle, phi, p)
        assert np.max(np.abs(st1.p - p)) < 1e-12
        phi = st1.phi


def test_solver_status_near_boundary(unit_circle):
    st1 = step_phi(unit_circle, np.array([0.0, 0.0, 0.0]), np.array([math.cos(5e-5), 1.0, 0.3]))
    assert list(st1.status) == [TANGENT, 1, OK]


# -- the s chart ---------------------------------------------------------------

def test_map_s_circle(unit_circle):
    z = map_s(unit_circle, PhasePoint("s", 0.0, 0.0))
    assert z.first == pytest.approx(np.pi, abs=1e-12)
    assert z.second == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("name", ["unit_circle", "cos2", "wobbly"])
def test_chart_round_trip(name, request, rng):
    c = request.getfixturevalue(name)
    for _ in range(50):
        z = PhasePoint("s", rng.uniform(0, c.length), rng.uniform(-0.99, 0.99))
        w = to_sCos(c, to_phiP(c, z))
        assert abs(w.first - z.first) < 1e-12 and abs(w.second - z.second) < 1e-12


@pytest.mark.parametrize("name", ["cos2", "cos3", "wobbly", "ellipse"])
def test_map_s_conjugation(name, request, ellipse21, rng):
    c = ellipse21.curve if name == "ellipse" else request.getfixturevalue(name)
    s0 = rng.uniform(0, c.length, 300)
    c0 = rng.uniform(-0.995, 0.995, 300)
    s1, c1, status = step_s(c, s0, c0)
    assert np.all(status == OK)
    phi, p = s_to_phi(c, s0, c0)
    st1 = step_phi(c, phi, p)
    w = [to_sCos(c, PhasePoint("phi", a, b)) for a, b in zip(st1.phi, st1.p)]
    ds = np.array([x.first for x in w]) - s1
    ds = (ds + c.length / 2) % c.length - c.length / 2
    assert np.max(np.abs(ds)) < 1e-10
    assert np.max(np.abs(np.array([x.second for x in w]) - c1)) < 1e-10


# -- dF ------------------------------------------------------------------------

def test_dF_circle(unit_circle):
    assert np.allclose(dF_matrix(unit_circle, PhasePoint("s", 0.3, 0.0)), [[1, -1], [0, 1]])


def test_dF_determinant_positive(cos2, rng):
    psi = rng.uniform(0, 2 * np.pi, 1000)
    delta = rng.uniform(1e-3, np.pi - 1e-3, 1000)
    det = np.linalg.det(dF_at(cos2, psi, delta))
    assert np.all(det > 0)
    # symplectic: ds ^ dcos -> dphi ^ dp preserves area
    assert np.allclose(det, 1.0)


@pytest.mark.parametrize("name", ["cos2", "wobbly"])
def test_dF_matches_finite_differences(name, request, rng):
    c = request.getfixturevalue(name)
    step = 1e-6
    for _ in range(30):
        s, cd = rng.uniform(0, c.length), rng.uniform(-0.95, 0.95)
        J = dF_matrix(c, PhasePoint("s", s, cd))
        col_s = (np.array(s_to_phi(c, s + step, cd)) - np.array(s_to_phi(c, s - step, cd))) / (2 * step)
        col_c = (np.array(s_to_phi(c, s, cd + step)) - np.array(s_to_phi(c, s, cd - step))) / (2 * step)
        fd = np.column_stack([col_s, col_c])
        assert np.max(np.abs(fd - J)) < 1e-6 * max(1.0, np.abs(J).max())


# -- cones ---------------------------------------------------------------------

def test_cone_frame_circle(unit_circle):
    f = cone_frame(unit_circle, PhasePoint("phi", 0.0, 0.0), "S")
    assert (f.slope_low, f.slope_high) == pytest.approx((-0.5, 0.5))
    assert f.classify((0.0, 1.0)) == "N"
    assert f.classify((1.0, 0.0)) == "E"
    assert f.classify((0.0, -1.0)) == "S"
    assert f.classify((-1.0, 0.0)) == "W"
    fl = cone_frame(unit_circle, PhasePoint("phi", 0.0, 0.0), "L")
    assert fl.valid


def test_cone_collapse_is_reported():
    # near the short diameter of a thin table the 2-periodic orbit is far from maximizing
    c = curve_of((0, 1.0, 0.0), (2, 0.3, 0.0))
    phi, p = lines_from_psi_delta(c, np.array([np.pi / 2]), np.array([np.pi / 2]))
    with pytest.raises(ConeCollapseError):
        cone_frame(c, PhasePoint("phi", float(phi[0]), float(p[0])), "S")


def test_assumption_margins_circle(unit_circle, rng):
    phi, p = random_lines(unit_circle, rng, 200)
    b = step_phi_inverse(unit_circle, phi, p)
    bb = step_phi_inverse(unit_circle, b.phi, b.p)
    f = step_phi(unit_circle, phi, p)
    mS, mL, okS, okL = assumption_margins(unit_circle, bb, b, None, f)
    assert np.allclose(mS, 0.5 * np.sin(b.delta))
    assert np.allclose(mL, 0.5 * np.sin(b.delta))
    assert okS.all() and okL.all()


def test_north_margin_matches_classify(cos2, rng):
    phi, p = random_lines(cos2, rng, 50)
    for a, b in zip(phi, p):
        try:
            f = cone_frame(cos2, PhasePoint("phi", a, b), "S")
        except ConeCollapseError:
            continue
        for v in rng.normal(size=(5, 2)):
            assert (f.north_margin(v) > 0) == (f.classify(v) == "N")


@pytest.mark.parametrize("name", ["cos2", "ellipse"])
def test_geometric_assumption(name, cos2, ellipse21, rng):
    c = cos2 if name == "cos2" else ellipse21.curve
    phi, p = random_lines(c, rng, 1500, lo=0.01)
    rep = check_geometric_assumption(c, np.column_stack([phi, p]), horizon=24)
    assert rep.n_points >= 500
    assert rep.n_violations == 0
    assert rep.min_margin_S > 0 and rep.min_margin_L > 0


@given(st.floats(0.05, np.pi - 0.05), st.floats(0, 2 * np.pi))
def test_phase_point_validation(delta, s):
    z = PhasePoint("s", s, math.cos(delta))
    assert z.chart == "s"
    with pytest.raises(ValueError):
        PhasePoint("s", s, 1.0)
    with pytest.raises(ValueError):
        PhasePoint("xy", s, 0.0)
