from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose
from scipy import integrate

from mvortex.errors import CoreProximityError, IllConditionedProbeError, OnCutError
from mvortex.geometry import Link, circle_curve, disk_mesh, line_filament, trefoil_curve
from mvortex.kernels import (
    ProbeLoop,
    biot_savart_velocity,
    circulation,
    line_scalar_potential,
    nodal_regularizer,
    on_cut,
    random_probe_loops,
    scalar_potential,
    solid_angle,
    winding_number,
)

TWO_PI = 2.0 * math.pi


@pytest.fixture(scope="module")
def unit_ring():
    c = circle_curve(1.0, samples=256)
    return Link((c,), TWO_PI), disk_mesh(c)


@pytest.fixture(scope="module")
def z_line():
    return Link((line_filament((0, 0, 1), half_length=1e4, samples=2049),), TWO_PI)


# ---------------------------------------------------------------- Biot-Savart
def test_ring_center_velocity(unit_ring):
    link, _ = unit_ring
    # a polygon of N sides: exact center field is (gamma/2a) * tan(pi/N)/(pi/N)
    u = biot_savart_velocity(link, [0.0, 0.0, 0.0])
    n = 256
    polygon = math.pi * math.tan(math.pi / n) / (math.pi / n)
    assert_allclose(u, [0.0, 0.0, polygon], atol=1e-12)
    assert abs(u[2] - math.pi) < 1e-3 * math.pi
    fine = Link((circle_curve(1.0, samples=8192),), TWO_PI)
    assert abs(biot_savart_velocity(fine, [0.0, 0.0, 0.0])[2] - math.pi) < 1e-6


def test_exact_and_midpoint_rules_agree(unit_ring):
    link, _ = unit_ring
    rng = np.random.default_rng(0)
    pts = rng.uniform(-2, 2, size=(40, 3))
    pts[:, 2] += np.sign(pts[:, 2]) * 0.3
    a = biot_savart_velocity(link, pts, rule="exact")
    b = biot_savart_velocity(link, pts, rule="midpoint")
    assert np.max(np.linalg.norm(a - b, axis=1) / np.linalg.norm(a, axis=1)) < 1e-4


def test_line_filament_unit_speed(z_line):
    u = biot_savart_velocity(z_line, [1.0, 0.0, 0.0])
    assert_allclose(u, [0.0, 1.0, 0.0], atol=1e-6)


def test_line_velocity_converges_with_half_length():
    errs = []
    for L in (1e2, 1e3):
        link = Link((line_filament(half_length=L, samples=1025),), TWO_PI)
        errs.append(abs(biot_savart_velocity(link, [1.0, 0.0, 0.0])[1] - 1.0))
    # O((rho/L)^2) truncation
    assert errs[0] == pytest.approx(0.5 * (1 / 1e2) ** 2, rel=0.05)
    assert errs[1] < errs[0] / 90


def test_dipole_falloff(unit_ring):
    link, _ = unit_ring
    d = np.array([0.3, 0.5, 0.8])
    d /= np.linalg.norm(d)
    u1 = np.linalg.norm(biot_savart_velocity(link, 20 * d))
    u2 = np.linalg.norm(biot_savart_velocity(link, 40 * d))
    assert u1 / u2 == pytest.approx(8.0, rel=0.05)


def test_core_proximity(unit_ring):
    link, _ = unit_ring
    with pytest.raises(CoreProximityError):
        biot_savart_velocity(link, [1.0, 0.0, 0.001])
    with pytest.raises(CoreProximityError):
        biot_savart_velocity(link, [1.2, 0.0, 0.0], eps_core=0.5)


def test_two_component_link_superposes():
    a = circle_curve(1.0, center=(-3, 0, 0), samples=128)
    b = circle_curve(1.0, center=(3, 0, 0), normal=(0, 1, 0), samples=128)
    x = np.array([[0.1, 0.7, -0.4]])
    both = biot_savart_velocity(Link((a, b), 1.5), x)
    sep = biot_savart_velocity(Link((a,), 1.5), x) + biot_savart_velocity(Link((b,), 1.5), x)
    assert_allclose(both, sep, rtol=1e-13)


# ---------------------------------------------------------------- circulation
def test_circulation_around_line(z_line):
    loop = ProbeLoop.circle((0, 0, 0), (0, 0, 1), 0.5)
    assert abs(circulation(z_line, loop) / TWO_PI - 1.0) < 1e-4
    assert winding_number(z_line, loop) == 1


def test_circulation_unlinked_loop(z_line):
    loop = ProbeLoop.circle((3, 0, 0), (0, 0, 1), 0.5)
    assert abs(circulation(z_line, loop)) < 1e-4 * TWO_PI
    assert winding_number(z_line, loop) == 0


def test_circulation_double_traversal(z_line):
    loop = ProbeLoop.circle((0, 0, 0), (0, 0, 1), 0.5, turns=2)
    assert abs(circulation(z_line, loop) / (2 * TWO_PI) - 1.0) < 1e-4
    assert winding_number(z_line, loop) == 2
    back = ProbeLoop.circle((0, 0, 0), (0, 0, -1), 0.5)
    assert winding_number(z_line, back) == -1


def test_winding_far_small_loop(unit_ring):
    link, _ = unit_ring
    assert winding_number(link, ProbeLoop.circle((50, 0, 0), (1, 2, 3), 0.2)) == 0


def _gauss_linking(loop_pts, curve):
    # double sum of the Gauss linking integral over two closed polylines
    a = loop_pts
    da = np.roll(a, -1, axis=0) - a
    ma = a + 0.5 * da
    b = curve.points
    db = curve.segments
    mb = b + 0.5 * db
    r = ma[:, None, :] - mb[None, :, :]
    cr = np.cross(da[:, None, :], db[None, :, :])
    return float(np.sum(np.einsum("ijk,ijk->ij", cr, r) / np.linalg.norm(r, axis=2) ** 3) / (4 * math.pi))


def test_winding_counts_threaded_component_only():
    a = circle_curve(1.0, center=(-2, 0, 0), samples=256)
    b = circle_curve(1.0, center=(2, 0, 0), normal=(0, 1, 0), samples=256)
    link = Link((a, b), TWO_PI)
    # small loop around a strand of ring a at (-1, 0, 0), where a runs along +y
    loop = ProbeLoop.circle((-1.0, 0, 0), (0, 1, 0), 0.3, samples=512)
    w = winding_number(link, loop)
    lk = [_gauss_linking(loop.points, c) for c in link.curves]
    assert w == 1
    assert abs(lk[0] - 1.0) < 1e-3 and abs(lk[1]) < 1e-3
    assert w == round(sum(lk))


def test_ill_conditioned_probe():
    link = Link((circle_curve(1.0, samples=64),), TWO_PI)
    # a loop that crosses close to the filament sees a non-integer circulation only on tiny grids;
    # gamma = 0 is always ill-conditioned
    with pytest.raises(IllConditionedProbeError):
        winding_number(link.with_gamma(0.0), ProbeLoop.circle((1, 0, 0), (0, 1, 0), 0.3))
    with pytest.raises(IllConditionedProbeError):
        winding_number(link, ProbeLoop.circle((1, 0, 0), (0, 1, 0), 0.3), tol=0.0)


def test_probe_too_close_rejected(unit_ring):
    link, _ = unit_ring
    with pytest.raises(CoreProximityError):
        circulation(link, ProbeLoop.circle((1, 0, 0), (0, 1, 0), 0.01))


@pytest.mark.parametrize(
    "curve,radius",
    [
        (circle_curve(1.5, samples=128), (0.25, 0.5)),
        (line_filament(), (0.3, 1.0)),
        (trefoil_curve(512), (0.15, 0.3)),
    ],
    ids=["ring", "line", "trefoil"],
)
def test_random_loops_quantized(curve, radius):
    link = Link((curve,), TWO_PI)
    rng = np.random.default_rng(11)
    loops = random_probe_loops(link, 8, rng, radius)
    ws = []
    for loop, w in loops:
        ratio = circulation(link, loop) / link.gamma
        assert abs(ratio - w) < 1e-3
        ws.append(w)
    assert len(loops) == 8


# ---------------------------------------------------------------- solid angle
def _disk_quadrature(z, a=1.0):
    # brute-force integral of (x - R).dS / |x - R|^3 over a flat disk, point on axis
    f = lambda r: 2 * math.pi * r * z / (r * r + z * z) ** 1.5  # noqa: E731
    return integrate.quad(f, 0.0, a, epsabs=1e-13, epsrel=1e-13)[0]


def test_solid_angle_on_axis():
    exact = 2 * math.pi * (1 - 1 / math.sqrt(2))
    assert exact == pytest.approx(1.8403, abs=1e-4)
    assert abs(_disk_quadrature(1.0) - exact) < 1e-12
    mesh = disk_mesh(circle_curve(1.0, samples=65536))
    assert abs(solid_angle(mesh, [0.0, 0.0, 1.0]) - exact) < 1e-8


def test_solid_angle_off_axis_against_quadrature(unit_ring):
    _, mesh = unit_ring
    x = np.array([0.4, -0.3, 0.5])

    def integrand(r, t):
        R = np.array([r * math.cos(t), r * math.sin(t), 0.0])
        d = x - R
        return r * d[2] / np.linalg.norm(d) ** 3

    # quadrature over the inscribed 256-gon through its triangles is close to the disk;
    # compare the polygon against a polygon-shaped quadrature by splitting into wedges
    n = 256
    total = 0.0
    for k in range(n):
        t0, t1 = 2 * math.pi * k / n, 2 * math.pi * (k + 1) / n
        tm, half = 0.5 * (t0 + t1), math.pi / n
        rmax = lambda t: math.cos(half) / math.cos(t - tm)  # noqa: E731
        total += integrate.dblquad(integrand, t0, t1, 0.0, rmax, epsabs=1e-13, epsrel=1e-12)[0]
    assert abs(solid_angle(mesh, x) - total) < 1e-8


def test_solid_angle_jump_is_4pi(unit_ring):
    _, mesh = unit_ring
    for p in ([0.0, 0.0], [0.3, -0.5], [0.05, 0.8]):
        up = solid_angle(mesh, [*p, 1e-11])
        dn = solid_angle(mesh, [*p, -1e-11])
        assert abs((up - dn) - 4 * math.pi) < 1e-8


def test_solid_angle_far_field_decay(unit_ring):
    _, mesh = unit_ring
    # a flat loop of area A seen from distance d: Omega ~ A cos(theta) / d^2
    area = mesh.area
    for direction in ([0, 0, 1], [1, 0, 1], [1, 1, 0.2]):
        e = np.asarray(direction, float) / np.linalg.norm(direction)
        om = solid_angle(mesh, 1e3 * e)
        assert om == pytest.approx(area * e[2] / 1e6, rel=1e-5)
    assert abs(solid_angle(mesh, [1e3, 0.0, 0.0])) < 1e-12
    assert abs(solid_angle(mesh, [0.0, 0.0, 1e4])) < 1e-7


def test_on_cut_error(unit_ring):
    link, mesh = unit_ring
    with pytest.raises(OnCutError):
        solid_angle(mesh, [0.2, 0.1, 0.0])
    assert on_cut(mesh, [[0.2, 0.1, 0.0], [0.2, 0.1, 0.1], [3.0, 0.0, 0.0]]).tolist() == [True, False, False]
    with pytest.raises(OnCutError):
        scalar_potential(link, mesh, [0.0, 0.0, 0.0])


# ---------------------------------------------------------------- potential
def test_potential_value_and_jump(unit_ring):
    link, mesh = unit_ring
    up = scalar_potential(link, mesh, [0.1, 0.2, 1e-10])
    dn = scalar_potential(link, mesh, [0.1, 0.2, -1e-10])
    assert up == pytest.approx(-link.gamma / 2, rel=1e-8)
    assert abs(abs(up - dn) - link.gamma) < 1e-8
    rng = np.random.default_rng(3)
    r = 0.95 * np.sqrt(rng.uniform(0, 1, 10))
    a = rng.uniform(0, TWO_PI, 10)
    pts = np.stack([r * np.cos(a), r * np.sin(a), np.zeros(10)], axis=1)
    d = np.array([0, 0, 1e-9])
    jumps = scalar_potential(link, mesh, pts + d) - scalar_potential(link, mesh, pts - d)
    assert np.max(np.abs(jumps - jumps[0])) < 1e-6
    assert np.max(np.abs(np.abs(jumps) - link.gamma)) < 1e-6


def test_gradient_of_potential_is_velocity(unit_ring):
    link, mesh = unit_ring
    rng = np.random.default_rng(4)
    pts = rng.uniform(-1.5, 1.5, size=(30, 3))
    pts[:, 2] = np.sign(pts[:, 2]) * (0.2 + np.abs(pts[:, 2]))
    h = 1e-4
    g = np.zeros_like(pts)
    for k in range(3):
        e = np.zeros(3)
        e[k] = h
        g[:, k] = (scalar_potential(link, mesh, pts + e) - scalar_potential(link, mesh, pts - e)) / (2 * h)
    u = biot_savart_velocity(link, pts)
    assert np.max(np.linalg.norm(g - u, axis=1) / np.linalg.norm(u, axis=1)) < 1e-5


def test_line_potential_gradient_and_winding(z_line):
    rng = np.random.default_rng(5)
    pts = rng.uniform(0.5, 2.0, size=(10, 3)) * rng.choice([-1, 1], size=(10, 3))
    h = 1e-5
    g = np.zeros_like(pts)
    for k in range(3):
        e = np.zeros(3)
        e[k] = h
        g[:, k] = (line_scalar_potential(z_line, pts + e) - line_scalar_potential(z_line, pts - e)) / (2 * h)
    u = biot_savart_velocity(z_line, pts)
    ok = np.abs(np.abs(g).max(axis=1)) < 100  # skip stencils straddling the cut
    assert np.max(np.linalg.norm((g - u)[ok], axis=1) / np.linalg.norm(u[ok], axis=1)) < 1e-6


def _fd_laplacian(f, pts, h):
    out = -6.0 * f(pts)
    for k in range(3):
        e = np.zeros(3)
        e[k] = h
        out += f(pts + e) + f(pts - e)
    return out / (h * h)


def test_potential_is_harmonic(unit_ring):
    link, mesh = unit_ring
    rng = np.random.default_rng(6)
    pts = rng.uniform(-2, 2, size=(20, 3))
    pts[:, 2] = np.sign(pts[:, 2]) * (0.5 + np.abs(pts[:, 2]))
    phi = lambda p: scalar_potential(link, mesh, p)  # noqa: E731
    lap = _fd_laplacian(phi, pts, 1e-2)
    L = 1.0  # ring radius sets the length scale
    assert np.max(np.abs(lap)) < 1e-4 * abs(link.gamma) / L ** 2


def test_velocity_is_divergence_free(unit_ring):
    link, _ = unit_ring
    rng = np.random.default_rng(7)
    pts = rng.uniform(-2, 2, size=(20, 3))
    pts[:, 2] = np.sign(pts[:, 2]) * (0.5 + np.abs(pts[:, 2]))
    h = 1e-3
    div = np.zeros(len(pts))
    for k in range(3):
        e = np.zeros(3)
        e[k] = h
        div += (biot_savart_velocity(link, pts + e)[:, k] - biot_savart_velocity(link, pts - e)[:, k]) / (2 * h)
    mag = np.linalg.norm(biot_savart_velocity(link, pts), axis=1)
    assert np.max(np.abs(div) / mag) < 1e-4


# ---------------------------------------------------------------- regularizer
def test_regularizer_at_ring_center():
    c = circle_curve(1.0, samples=16384)
    for n in (1, 2, 3, 4, 6):
        assert nodal_regularizer(c, n, [0.0, 0.0, 0.0]) == pytest.approx(2 * math.pi, rel=1e-6)
    # the inscribed polygon itself: each chord subtends 2 pi/N at distance cos(pi/N)
    c = circle_curve(1.0, samples=64)
    assert nodal_regularizer(c, 2, [0.0, 0.0, 0.0]) == pytest.approx(2 * math.pi / math.cos(math.pi / 64), rel=1e-14)


def test_regularizer_infinite_on_filament():
    c = circle_curve(1.0, samples=64)
    for n in (1, 2, 5):
        val = nodal_regularizer(c, n, c.points[3])
        assert val == math.inf and 1.0 / val == 0.0
    # a segment midpoint is on the polyline only up to rounding
    mid = 0.5 * (c.points[3] + c.points[4])
    assert 1.0 / nodal_regularizer(c, 2, mid) < 1e-14


def test_regularizer_near_straight_line():
    line = line_filament(half_length=100.0, samples=257)
    for d in (1e-2, 1e-3):
        dI = d * nodal_regularizer(line, 2, [d, 0.0, 0.3])
        assert abs(dI / math.pi - 1.0) < 0.02


@pytest.mark.parametrize("n", [1, 2, 3, 4, 5])
def test_regularizer_against_quadrature(n):
    c = trefoil_curve(64)
    x = np.array([0.4, -0.2, 0.7])
    total = 0.0
    for a, b in zip(c.seg_start, c.seg_end):
        L = np.linalg.norm(b - a)
        f = lambda s: 1.0 / np.linalg.norm(x - (a + s * (b - a) / L)) ** n  # noqa: E731
        total += integrate.quad(f, 0.0, L, epsabs=1e-14, epsrel=1e-13)[0]
    assert nodal_regularizer(c, n, x) == pytest.approx(total, rel=1e-10)


def test_regularizer_rejects_bad_n():
    with pytest.raises(ValueError):
        nodal_regularizer(circle_curve(1.0), 0, [0, 0, 0])


@settings(max_examples=20, deadline=None)
@given(
    x=st.tuples(st.floats(-3, 3), st.floats(-3, 3), st.floats(0.2, 3)),
    n=st.integers(1, 6),
)
def test_regularizer_positive_and_decreasing_with_distance(x, n):
    c = circle_curve(1.0, samples=64)
    p = np.asarray(x)
    near = nodal_regularizer(c, n, p)
    far = nodal_regularizer(c, n, p + np.array([0.0, 0.0, 5.0]))
    assert near > 0 and far > 0
    assert far < near


@settings(max_examples=15, deadline=None)
@given(r=st.floats(0.2, 0.8), nx=st.floats(-0.4, 0.4), ny=st.floats(-0.4, 0.4), turns=st.integers(1, 3))
def test_circulation_is_quantized_property(r, nx, ny, turns):
    link = Link((line_filament(samples=513),), TWO_PI)
    loop = ProbeLoop.circle((0.0, 0.0, 0.0), (nx, ny, 1.0), r, samples=256, turns=turns)
    ratio = circulation(link, loop) / TWO_PI
    assert abs(ratio - turns) < 1e-3
