import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from plateau_fem.geometry import (
    BUILTINS,
    SQUARE_CORNERS,
    TWO_PI,
    OutOfDomain,
    PlanarSurface,
    UnknownName,
    arc_midpoint,
    builtin,
    fourier_curve,
    hausdorff_to_curve,
    project_to_plane,
)

CLOSED = ["circle", "ellipse", "rose3", "curve3d", "square"]
Z0 = PlanarSurface(np.zeros(3), np.array([0.0, 0.0, 1.0]))


def test_circle_at_zero():
    np.testing.assert_allclose(builtin("circle").eval(0.0), [1.0, 0.0], atol=1e-15)


def test_rose3_at_zero():
    np.testing.assert_allclose(builtin("rose3").eval(0.0), [1.5, 0.0], atol=1e-15)


def test_curve3d_at_quarter_turn():
    np.testing.assert_allclose(builtin("curve3d").eval(math.pi / 2), [0.0, 1.0, -0.5], atol=1e-15)


def test_ellipse_axis_point():
    np.testing.assert_allclose(builtin("ellipse", a=2, b=1).eval(math.pi / 2), [0.0, 1.0], atol=1e-15)


def test_square_corner_is_exact():
    sq = builtin("square")
    assert tuple(sq.eval(SQUARE_CORNERS[3])) == (1.0, -1.0)
    for t, corner in zip(SQUARE_CORNERS, [(1, 1), (-1, 1), (-1, -1), (1, -1)]):
        np.testing.assert_allclose(sq.eval(t), corner, atol=1e-14)


def test_square_is_arc_length_uniform():
    sq = builtin("square")
    pts = sq.sample(800)
    steps = np.linalg.norm(np.diff(np.vstack([pts, pts[:1]]), axis=0), axis=1)
    # chords across a corner are shorter than the arc length they span
    assert np.median(steps) == pytest.approx(8.0 / 800, rel=1e-12)
    assert steps.max() <= 8.0 / 800 + 1e-12


def test_arc_on_plane_endpoints():
    fb = builtin("arc_on_plane", alpha=math.pi)
    np.testing.assert_allclose(fb.q1, [1.0, 0.0, 0.0], atol=1e-15)
    np.testing.assert_allclose(fb.q3, [-1.0, 0.0, 0.0], atol=1e-15)
    assert fb.q1[2] == 0.0 and fb.q3[2] == 0.0
    np.testing.assert_array_equal(fb.surface.normal, [0.0, 0.0, 1.0])


@pytest.mark.parametrize("alpha", [0.5, math.pi / 2, 2.0, 4.0])
def test_arc_endpoints_lie_on_plane(alpha):
    fb = builtin("arc_on_plane", alpha=alpha)
    assert abs(fb.surface.signed_distance(fb.q1)) < 1e-14
    assert abs(fb.surface.signed_distance(fb.q3)) < 1e-14


def test_unknown_builtin():
    with pytest.raises(UnknownName):
        builtin("trefoil")


def test_arc_rejects_parameters_outside_domain():
    arc = builtin("arc_on_plane").arc
    with pytest.raises(OutOfDomain):
        arc.eval(-0.1)
    with pytest.raises(OutOfDomain):
        arc.eval(math.pi + 0.1)


@pytest.mark.parametrize("name", CLOSED)
def test_closed_curves_continuous_at_seam(name):
    c = builtin(name)
    np.testing.assert_allclose(c.func(0.0), c.func(TWO_PI - 1e-15), atol=1e-12)


@pytest.mark.parametrize("name", ["circle", "ellipse", "rose3", "curve3d", "square", "arc_on_plane"])
def test_derivatives_match_central_differences(name):
    c = builtin(name)
    c = getattr(c, "arc", c)
    lo, hi = c.domain
    rng = np.random.default_rng(len(name))
    h = 1e-4
    corners = np.array(SQUARE_CORNERS)
    for t in rng.uniform(lo + 2 * h, hi - 2 * h, size=1000):
        if name == "square" and np.min(np.abs(corners - t)) < 2 * h:
            continue  # one-sided derivatives at the corners
        fd1 = (c.eval(t + h) - c.eval(t - h)) / (2 * h)
        fd2 = (c.eval_d1(t + h) - c.eval_d1(t - h)) / (2 * h)
        assert np.abs(fd1 - c.eval_d1(t)).max() <= 1e-6
        assert np.abs(fd2 - c.eval_d2(t)).max() <= 1e-6


def test_square_derivative_at_corner_is_forward():
    sq = builtin("square")
    t = SQUARE_CORNERS[0]  # (1, 1); the next leg runs towards (-1, 1)
    d = sq.eval_d1(t)
    assert d[0] < 0 and d[1] == 0.0


def test_fourier_curve_matches_ellipse():
    c = fourier_curve([[0, 2], [0, 0]], [[0, 0], [0, 1]])
    e = builtin("ellipse", a=2, b=1)
    for t in np.linspace(0, TWO_PI, 17):
        np.testing.assert_allclose(c.eval(t), e.eval(t), atol=1e-14)
        np.testing.assert_allclose(c.eval_d1(t), e.eval_d1(t), atol=1e-14)
        np.testing.assert_allclose(c.eval_d2(t), e.eval_d2(t), atol=1e-14)


def test_fourier_shape_mismatch():
    with pytest.raises(ValueError):
        fourier_curve([[0, 1], [0, 0]], [[0, 0, 1], [0, 1, 0]])


def test_arc_midpoint_plain():
    assert arc_midpoint(0.5, 1.0) == pytest.approx(0.75)


def test_arc_midpoint_across_seam():
    mid = arc_midpoint(6.0, 0.5)
    # forward gap 0.5 + 2 pi - 6 = 0.78319; half of it past 6.0 wraps to 0.10841
    assert mid == pytest.approx(0.108407346410207, abs=1e-12)
    assert (mid - 6.0) % TWO_PI == pytest.approx((0.5 - mid) % TWO_PI, abs=1e-12)


def test_arc_midpoint_degenerate():
    assert arc_midpoint(1.25, 1.25) == 1.25


def test_arc_midpoint_open():
    assert arc_midpoint(0.5, 2.5, closed=False) == pytest.approx(1.5)


@given(st.floats(0, TWO_PI, exclude_max=True), st.floats(0, TWO_PI, exclude_max=True))
def test_arc_midpoint_equidistant(a, b):
    mid = arc_midpoint(a, b)
    assert 0 <= mid < TWO_PI
    ahead, behind = (mid - a) % TWO_PI, (b - mid) % TWO_PI
    assert min(abs(ahead - behind), TWO_PI - abs(ahead - behind)) <= 1e-9


def test_projection_axis_aligned():
    np.testing.assert_array_equal(project_to_plane(Z0, np.array([1.0, 2.0, 3.0])), [1.0, 2.0, 0.0])


def test_projection_with_bounding_disk():
    plane = PlanarSurface(np.zeros(3), np.array([0.0, 0.0, 1.0]), radius=1.0)
    out = project_to_plane(plane, np.array([3.0, 0.0, 5.0]))
    np.testing.assert_allclose(out, [1.0, 0.0, 0.0])
    assert np.linalg.norm(out - plane.point) == pytest.approx(1.0)


def test_plane_normal_is_normalised():
    plane = PlanarSurface(np.zeros(3), np.array([0.0, 3.0, 4.0]))
    assert np.linalg.norm(plane.normal) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        PlanarSurface(np.zeros(3), np.zeros(3))
    with pytest.raises(ValueError):
        PlanarSurface(np.zeros(3), np.ones(3), radius=-1.0)


vec3 = st.lists(st.floats(-10, 10), min_size=3, max_size=3).map(np.array)


@given(vec3, vec3, vec3.filter(lambda n: np.linalg.norm(n) > 1e-3))
def test_projection_idempotent_and_non_expansive(p, q, normal):
    plane = PlanarSurface(np.array([0.3, -0.2, 0.1]), normal)
    pp, qq = project_to_plane(plane, p), project_to_plane(plane, q)
    np.testing.assert_allclose(project_to_plane(plane, pp), pp, atol=1e-12)
    assert np.linalg.norm(pp - qq) <= np.linalg.norm(p - q) + 1e-12
    assert abs(plane.signed_distance(pp)) <= 1e-12


def test_hausdorff_of_dense_polygon_is_small():
    c = builtin("circle")
    poly = c.sample(400)
    assert hausdorff_to_curve(poly, c) < 1e-3


def test_hausdorff_sees_missing_arc():
    c = builtin("circle")
    poly = np.array([c.eval(t) for t in np.linspace(0, math.pi, 50)])
    # the lower half is up to 1 away from the chord through (1,0), (-1,0)
    assert hausdorff_to_curve(poly, c) == pytest.approx(1.0, abs=1e-3)


def test_builtin_names():
    assert set(BUILTINS) == {"circle", "ellipse", "rose3", "curve3d", "square", "arc_on_plane"}
