import math

import numpy as np
import pytest

import _runs
from plateau_fem import builtin, generate_disk_mesh, run
from plateau_fem.assembly import assemble, dirichlet_energy_elementwise
from plateau_fem.geometry import TWO_PI
from plateau_fem.mesh import CURVE, FIXED, FREE, INTERIOR, decode_status
from plateau_fem.refine import boundary_edge_lengths
from plateau_fem.relax import (
    InvalidFixedPoints,
    SolverConfig,
    Strategy,
    Termination,
    boundary_consistency,
    free_boundary_update,
    gauss_seidel_interior,
    init_surface,
    local_target,
    newton_boundary,
    newton_derivatives,
    parameter_bracket,
    parameters_monotone,
    start,
    sweep,
)


def _kinds(mesh):
    nb = mesh.n_boundary
    return np.array([decode_status(s, nb)[0] for s in mesh.status])


# initial surface

def test_circle_init_is_equally_spaced():
    mesh = generate_disk_mesh("T1")
    surface = init_surface(mesh, builtin("circle"), SolverConfig(warm_start_sweeps=0))
    t = surface.params[mesh.boundary]
    np.testing.assert_allclose(t, TWO_PI * np.arange(48) / 48, atol=1e-14)
    assert (_kinds(mesh)[mesh.boundary[[0, 16, 32]]] == FIXED).all()


def test_segments_have_equal_gaps():
    mesh = generate_disk_mesh("T1")
    fixed = ((0, 0.0), (10, 1.0), (30, 3.0))
    surface = init_surface(mesh, builtin("circle"), SolverConfig(fixed_points=fixed, warm_start_sweeps=0))
    t = surface.params[mesh.boundary]
    gaps = np.mod(np.roll(t, -1) - t, TWO_PI)
    # 10, 20 and 18 boundary edges between consecutive fixed points
    np.testing.assert_allclose(gaps[:10], 0.1, atol=1e-14)
    np.testing.assert_allclose(gaps[10:30], 0.1, atol=1e-14)
    np.testing.assert_allclose(gaps[30:], (TWO_PI - 3.0) / 18, atol=1e-14)


def test_warm_start_decreases_energy():
    base = generate_disk_mesh(4)
    energies = []
    for k in range(6):
        mesh = base.copy()
        s = init_surface(mesh, builtin("rose3"), SolverConfig(warm_start_sweeps=k))
        energies.append(dirichlet_energy_elementwise(mesh, s))
    assert all(b < a for a, b in zip(energies, energies[1:]))


def test_free_boundary_init_on_chord():
    mesh = generate_disk_mesh("T1")
    fb = builtin("arc_on_plane", alpha=math.pi)
    surface = init_surface(mesh, fb, SolverConfig(warm_start_sweeps=0))
    kinds = _kinds(mesh)
    free = [n for n in mesh.boundary if kinds[n] == FREE]
    assert len(free) == 23  # boundary indices 25..47
    for n in free:
        x, y, z = surface.images[n]
        assert z == 0.0 and y == 0.0 and -1.0 < x < 1.0
        assert np.isnan(surface.params[n])
    np.testing.assert_array_equal(surface.images[mesh.boundary[0]], fb.q1)
    np.testing.assert_array_equal(surface.images[mesh.boundary[24]], fb.q3)


@pytest.mark.parametrize("fixed", [
    ((0, 0.0), (10, 1.0)),
    ((0, 0.0), (10, 1.0), (99, 2.0)),
    ((10, 0.0), (0, 1.0), (30, 2.0)),
    ((0, 0.0), (10, 3.0), (30, 2.0)),
])
def test_invalid_fixed_points(fixed):
    with pytest.raises(InvalidFixedPoints):
        start(generate_disk_mesh("T1"), builtin("circle"), SolverConfig(fixed_points=fixed))


def test_free_boundary_middle_point_inside_arc():
    fb = builtin("arc_on_plane", alpha=math.pi)
    with pytest.raises(InvalidFixedPoints):
        start(generate_disk_mesh("T1"), fb, SolverConfig(fixed_points=((0, 0), (12, 4.0), (24, 0))))


@pytest.mark.parametrize("bad", [
    {"tol": 0.0}, {"check_interval": 0}, {"defect_threshold": 1.0}, {"max_iter": -1},
    {"max_insertions": -2}, {"metric": "area"}, {"strategy": "red"},
])
def test_solver_config_validation(bad):
    with pytest.raises(ValueError):
        SolverConfig(**bad)


# single-node updates

def test_gauss_seidel_centre_of_fan_is_centroid():
    state = start(generate_disk_mesh(1), builtin("ellipse", a=2.0, b=1.0), SolverConfig(warm_start_sweeps=0))
    X = state.surface.images
    img = gauss_seidel_interior(state, 0)
    np.testing.assert_allclose(img, X[1:].mean(axis=0), atol=1e-15)


def test_gauss_seidel_constant_neighbours():
    state = start(generate_disk_mesh(3), builtin("curve3d"), SolverConfig(warm_start_sweeps=0))
    A, X = state.stiffness, state.surface.images
    i = 0
    X[A.indices[i]] = [0.3, -0.7, 1.1]
    np.testing.assert_allclose(gauss_seidel_interior(state, i), [0.3, -0.7, 1.1], atol=1e-15)


def test_gauss_seidel_never_raises_energy():
    state = start(generate_disk_mesh(4), builtin("rose3"), SolverConfig(warm_start_sweeps=0))
    rng = np.random.default_rng(3)
    interior = np.nonzero(state.mesh.status == 0)[0]
    state.surface.images[interior] += rng.normal(scale=0.3, size=(len(interior), 2))
    for i in rng.choice(interior, size=40):
        before = state.energy()
        gauss_seidel_interior(state, int(i))
        assert state.energy() <= before + 1e-14


def test_circle_newton_derivative_closed_form():
    state = start(generate_disk_mesh(3), builtin("circle"), SolverConfig(warm_start_sweeps=3))
    A = state.stiffness
    i = int(state.mesh.boundary[5])
    b1, b2 = A.values[i] @ state.surface.images[A.indices[i]]
    for t in np.linspace(0, TWO_PI, 13):
        _, d1, _ = newton_derivatives(state, i, t)
        assert d1 == pytest.approx(-b1 * math.sin(t) + b2 * math.cos(t), abs=1e-13)
    # F = const + gamma . b is stationary where gamma is parallel to b
    for t in (math.atan2(b2, b1), math.atan2(-b2, -b1)):
        assert abs(newton_derivatives(state, i, t)[1]) <= 1e-13


def test_newton_step_vanishes_on_flat_disk():
    # the fan is mirror-symmetric about every boundary node, so the identity
    # map is stationary in each boundary parameter
    state = start(generate_disk_mesh(1), builtin("circle"), SolverConfig(warm_start_sweeps=0))
    X = state.surface.images
    X[:] = state.mesh.nodes
    positions = state.mesh.boundary_positions()
    moved = 0
    for i in state.mesh.boundary:
        if state.mesh.status[i] < 0:
            continue
        t_old = state.surface.params[i]
        t_new = newton_boundary(state, int(i), pos=positions[i])
        dt = (t_new - t_old + math.pi) % TWO_PI - math.pi
        assert abs(dt) < 1e-10
        moved += 1
    assert moved == 3


def test_newton_fallback_does_not_raise_energy():
    state = start(generate_disk_mesh(4), builtin("rose3"), SolverConfig(warm_start_sweeps=5))
    positions = state.mesh.boundary_positions()
    curve = state.curve
    fallbacks = 0
    for i in state.mesh.boundary:
        i = int(i)
        if state.mesh.status[i] < 0:
            continue
        lo, t, hi = parameter_bracket(state, positions[i])
        c, alpha = local_target(state, i), state.stiffness.diag[i]

        def F(tt):
            g = curve.eval(tt) - c
            return 0.5 * alpha * float(g @ g)

        _, d1, d2 = newton_derivatives(state, i, t)
        plain = t - d1 / d2 if d2 > 0 else None
        if plain is not None and lo <= plain <= hi and F(plain) <= F(t):
            continue
        fallbacks += 1
        f_old, e_old = F(t), state.energy()
        t_new = newton_boundary(state, i, pos=positions[i])
        unwrapped = t + (t_new - t + math.pi) % TWO_PI - math.pi
        assert lo - 1e-12 <= unwrapped <= hi + 1e-12
        assert F(t_new) <= f_old
        assert state.energy() <= e_old + 1e-14
    assert fallbacks >= 1


def test_free_boundary_update_projects_and_decreases():
    state = start(generate_disk_mesh(4), builtin("arc_on_plane", alpha=math.pi), SolverConfig(warm_start_sweeps=2))
    kinds = _kinds(state.mesh)
    rng = np.random.default_rng(5)
    X = state.surface.images
    interior = kinds == INTERIOR
    X[interior] += rng.normal(scale=0.2, size=X[interior].shape)
    for i in np.nonzero(kinds == FREE)[0]:
        before = state.energy()
        img = free_boundary_update(state, int(i))
        assert img[2] == 0.0
        assert state.energy() <= before + 1e-14


# runs and invariants

def test_circle_run_on_t2():
    state = run(generate_disk_mesh("T2"), builtin("circle"))
    assert state.termination is Termination.CONVERGED
    assert state.log[-1].report.dirichlet < math.pi


def test_max_iter_termination():
    state = run(generate_disk_mesh("T1"), builtin("rose3"), SolverConfig(max_iter=5))
    assert state.termination is Termination.MAX_ITER
    assert state.sweep == 5 and len(state.log) == 6


def test_rose3_refinement_with_longer_interval():
    plain = _runs.fixture_run("rose3", "none")
    refined = _runs.fixture_run("rose3", "bisect", check_interval=100)
    assert refined.termination is Termination.CONVERGED
    assert refined.insertions >= 1
    assert boundary_edge_lengths(refined.mesh, refined.surface).max() < boundary_edge_lengths(plain.mesh, plain.surface).max()


def test_insertion_cap_terminates():
    cfg = SolverConfig(strategy=Strategy.BISECT, max_insertions=2)
    state = run(_runs.mesh("T1"), builtin("square"), cfg)
    assert state.termination is Termination.INSERTION_CAP
    assert state.insertions == 2
    assert state.mesh.n_boundary == 50


def test_arc_run_keeps_free_images_on_plane():
    state = _runs.fixture_run("arc_on_plane")
    kinds = _kinds(state.mesh)
    free = kinds == FREE
    assert (state.surface.images[free, 2] == 0.0).all()
    # the surface spans the half disk: free images stay on the diameter side
    assert (np.abs(state.surface.images[free, 0]) <= 1.0 + 1e-9).all()


@pytest.mark.parametrize("name, strategy", [
    ("rose3", "bisect"), ("square", "regular"), ("arc_on_plane", "none"), ("ellipse", "none"),
])
def test_per_sweep_invariants(name, strategy):
    make, fixed = _runs.FIXTURES[name]
    cfg = SolverConfig(strategy=strategy, fixed_points=fixed, max_iter=600)
    seen = {"sweeps": 0}
    pinned = {}

    def check(state):
        seen["sweeps"] += 1
        assert boundary_consistency(state) <= 1e-10
        assert parameters_monotone(state)
        kinds = _kinds(state.mesh)
        for node in np.nonzero(kinds == FIXED)[0]:
            snap = (state.surface.params[node], state.surface.images[node].tobytes())
            assert pinned.setdefault(int(node), snap) == snap

    state = run(_runs.mesh("T1"), make(), cfg, on_sweep=check)
    assert seen["sweeps"] == state.sweep
    assert len(pinned) == 3
    assert not state.monotonicity_violations(1e-12)


@pytest.mark.parametrize("name, strategy", [
    ("circle", "none"), ("ellipse", "none"), ("rose3", "none"), ("curve3d", "none"),
    ("square", "bisect"), ("arc_on_plane", "none"),
])
def test_stationary_at_convergence(name, strategy):
    state = _runs.fixture_run(name, strategy)
    assert state.termination is Termination.CONVERGED
    A, X = state.stiffness, state.surface.images
    kinds = _kinds(state.mesh)
    positions = state.mesh.boundary_positions()
    pinned = 0
    for i in range(state.mesh.n_nodes):
        if kinds[i] == INTERIOR:
            assert np.linalg.norm(X[i] - local_target(state, i)) <= 1e-6
        elif kinds[i] == CURVE:
            lo, t, hi = parameter_bracket(state, positions[i])
            _, d1, _ = newton_derivatives(state, i, t)
            if abs(d1) <= 1e-6 * A.diag[i]:
                continue
            # otherwise pinned against a neighbour's parameter, pushing outwards
            assert (t == lo and d1 > 0) or (t == hi and d1 < 0), (i, lo, t, hi, d1)
            pinned += 1
    if name != "curve3d":
        assert pinned == 0


def test_sweep_reports_largest_move():
    state = start(generate_disk_mesh(3), builtin("ellipse", a=2.0, b=1.0), SolverConfig(warm_start_sweeps=0))
    before = state.surface.images.copy()
    disp = sweep(state)
    moved = np.linalg.norm(state.surface.images - before, axis=1).max()
    assert disp == pytest.approx(moved, rel=1e-12)


def test_start_copies_the_mesh():
    mesh = generate_disk_mesh(2)
    status = mesh.status.copy()
    start(mesh, builtin("circle"))
    np.testing.assert_array_equal(mesh.status, status)
    assert assemble(mesh).n == mesh.n_nodes
