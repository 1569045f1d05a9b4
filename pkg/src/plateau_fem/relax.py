"""Relaxation of the discrete Dirichlet energy over a disk triangulation.

One sweep visits every node in index order: interior images take the exact
Gauss-Seidel minimizer, contour nodes move their parameter by a safeguarded
Newton step, free nodes take the Gauss-Seidel minimizer projected onto the
support plane, fixed nodes are skipped. Every ``check_interval`` sweeps the
boundary is inspected and defective boundary triangles are refined.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Sequence, Union

import numpy as np

from . import refine as _refine
from .assembly import (
    EnergyReport,
    StiffnessMatrix,
    SurfaceMap,
    area_and_conformality,
    assemble,
    dirichlet_energy_elementwise,
    element_gradients,
)
from .geometry import (
    TWO_PI,
    Curve,
    FreeBoundaryContour,
    project_to_plane,
)
from .mesh import CURVE, FIXED, FREE, INTERIOR, DiskMesh, decode_status

log = logging.getLogger(__name__)

Contour = Union[Curve, FreeBoundaryContour]

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


class InvalidFixedPoints(ValueError):
    pass


class Strategy(str, Enum):
    NONE = "none"
    BISECT = "bisect"
    REGULAR = "regular"


class Termination(str, Enum):
    CONVERGED = "converged"
    MAX_ITER = "max_iter"
    INSERTION_CAP = "insertion_cap"


@dataclass
class SolverConfig:
    """Relaxation and refinement controls.

    ``fixed_points`` holds ``(boundary index, parameter)`` pairs in
    boundary order. For a free-boundary contour the first and last are
    pinned to the arc end points whatever parameter is given, and the middle
    one must lie inside the arc. ``None`` spreads three points evenly.
    ``max_insertions=None`` means four times the initial boundary count.
    """

    tol: float = 1e-8
    max_iter: int = 20_000
    check_interval: int = 50
    defect_threshold: float = 2.0
    strategy: Strategy = Strategy.NONE
    max_insertions: int | None = None
    fixed_points: Sequence[tuple[int, float]] | None = None
    metric: str = "distance"
    warm_start_sweeps: int = 200

    def __post_init__(self) -> None:
        self.strategy = Strategy(self.strategy)
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.check_interval < 1:
            raise ValueError("check_interval must be >= 1")
        if not self.defect_threshold > 1:
            raise ValueError("defect_threshold must exceed 1")
        if self.max_iter < 0:
            raise ValueError("max_iter must be >= 0")
        if self.max_insertions is not None and self.max_insertions < 0:
            raise ValueError("max_insertions must be >= 0")
        if self.metric not in ("distance", "angle"):
            raise ValueError("metric must be 'distance' or 'angle'")
        if self.fixed_points is not None:
            self.fixed_points = tuple((int(i), float(t)) for i, t in self.fixed_points)


@dataclass
class LogRow:
    sweep: int
    report: EnergyReport
    max_disp: float
    nodes: int
    insertions: int


@dataclass
class RefinementEvent:
    sweep: int
    energy_before: float
    energy_after: float
    defects: "_refine.DefectReport"
    inserted: int


@dataclass
class RunState:
    mesh: DiskMesh
    contour: Contour
    config: SolverConfig
    stiffness: StiffnessMatrix
    surface: SurfaceMap
    sweep: int = 0
    insertions: int = 0
    max_insertions: int = 0
    capped: bool = False
    log: list[LogRow] = field(default_factory=list)
    refinements: list[RefinementEvent] = field(default_factory=list)
    termination: Termination | None = None
    geometry: tuple[np.ndarray, np.ndarray] | None = None

    @property
    def free_boundary(self) -> bool:
        return isinstance(self.contour, FreeBoundaryContour)

    @property
    def curve(self) -> Curve:
        return self.contour.arc if self.free_boundary else self.contour

    def reassemble(self) -> None:
        self.stiffness = assemble(self.mesh)
        self.geometry = element_gradients(self.mesh)

    def energy(self) -> float:
        if self.geometry is None:
            self.geometry = element_gradients(self.mesh)
        return dirichlet_energy_elementwise(self.mesh, self.surface, self.geometry)

    def report(self) -> EnergyReport:
        if self.geometry is None:
            self.geometry = element_gradients(self.mesh)
        return area_and_conformality(self.mesh, self.surface, self.geometry)

    def record(self, max_disp: float) -> LogRow:
        row = LogRow(self.sweep, self.report(), max_disp, self.mesh.n_nodes, self.insertions)
        self.log.append(row)
        return row

    def monotonicity_violations(self, tol: float = 1e-12) -> list[tuple[int, float, float]]:
        """Sweeps whose energy exceeds the energy they started from by more than ``tol``.

        A sweep that directly follows a refinement pass is compared with the
        energy of the refined surface, not with the previous log row.
        """
        after_refine = {ev.sweep: ev.energy_after for ev in self.refinements}
        bad = []
        for prev, row in zip(self.log, self.log[1:]):
            start = after_refine.get(prev.sweep, prev.report.dirichlet)
            if row.report.dirichlet > start + tol:
                bad.append((row.sweep, start, row.report.dirichlet))
        return bad


# fixed points and initial surface

def default_fixed_points(nb: int, contour: Contour) -> tuple[tuple[int, float], ...]:
    if isinstance(contour, FreeBoundaryContour):
        ta, tb = contour.t_start, contour.t_end
        return ((0, ta), (nb // 4, 0.5 * (ta + tb)), (nb // 2, tb))
    return tuple((round(k * nb / 3), k * TWO_PI / 3) for k in range(3))


def _check_cyclic(values: Sequence[float], period: float) -> bool:
    gaps = [(values[(k + 1) % len(values)] - values[k]) % period for k in range(len(values))]
    return all(g > 0 for g in gaps) and abs(sum(gaps) - period) < 1e-9 * max(1.0, period)


def resolve_fixed_points(mesh: DiskMesh, contour: Contour, cfg: SolverConfig):
    nb = mesh.n_boundary
    fixed = list(cfg.fixed_points or default_fixed_points(nb, contour))
    if len(fixed) != 3:
        raise InvalidFixedPoints(f"need three fixed points, got {len(fixed)}")
    idx = [i for i, _ in fixed]
    if any(not 0 <= i < nb for i in idx):
        raise InvalidFixedPoints(f"boundary indices {idx} outside 0..{nb - 1}")
    if not _check_cyclic(idx, nb):
        raise InvalidFixedPoints(f"boundary indices {idx} are not distinct and cyclically ordered")
    if isinstance(contour, FreeBoundaryContour):
        ta, tb = contour.t_start, contour.t_end
        fixed[0] = (idx[0], ta)
        fixed[2] = (idx[2], tb)
        if not ta < fixed[1][1] < tb:
            raise InvalidFixedPoints(f"middle fixed parameter {fixed[1][1]} not inside ({ta}, {tb})")
    else:
        ts = [t % TWO_PI for _, t in fixed]
        if not _check_cyclic(ts, TWO_PI):
            raise InvalidFixedPoints(f"parameters {ts} are not distinct and cyclically ordered")
        fixed = [(i, t) for (i, _), t in zip(fixed, ts)]
    return fixed


def init_surface(
    mesh: DiskMesh,
    contour: Contour,
    cfg: SolverConfig,
    stiffness: StiffnessMatrix | None = None,
) -> SurfaceMap:
    """Initial surface: boundary spread evenly between fixed points, discrete-harmonic interior.

    Marks fixed (and, for free-boundary contours, free) nodes in
    ``mesh.status`` in place.
    """
    fixed = resolve_fixed_points(mesh, contour, cfg)
    nb = mesh.n_boundary
    free_bnd = isinstance(contour, FreeBoundaryContour)
    curve = contour.arc if free_bnd else contour
    images = np.zeros((mesh.n_nodes, curve.dim))
    params = np.full(mesh.n_nodes, np.nan)
    kinds = np.full(mesh.n_nodes, INTERIOR, dtype=np.int64)
    kinds[mesh.boundary] = CURVE

    segments = [(fixed[k], fixed[(k + 1) % 3]) for k in range(3)]
    if free_bnd:
        # the last segment (p3 back to p1) lies on the support plane
        plane_segment = segments.pop()
    for (i0, t0), (i1, t1) in segments:
        steps = (i1 - i0) % nb
        gap = (t1 - t0) if free_bnd else (t1 - t0) % TWO_PI
        for s in range(steps):
            node = mesh.boundary[(i0 + s) % nb]
            t = t0 + s * gap / steps
            params[node] = t if free_bnd else t % TWO_PI
    if free_bnd:
        (i0, _), (i1, _) = plane_segment
        q3, q1 = contour.q3, contour.q1
        steps = (i1 - i0) % nb
        for s in range(1, steps):
            node = mesh.boundary[(i0 + s) % nb]
            kinds[node] = FREE
            images[node] = project_to_plane(contour.surface, q3 + (s / steps) * (q1 - q3))
    for i, t in fixed:
        node = mesh.boundary[i]
        kinds[node] = FIXED
        params[node] = t
    for node in mesh.boundary:
        if kinds[node] != FREE:
            images[node] = curve.eval(params[node])
    mesh.set_kinds(kinds)

    surface = SurfaceMap(images, params)
    A = stiffness if stiffness is not None else assemble(mesh)
    interior = np.nonzero(kinds == INTERIOR)[0]
    X = surface.images
    for _ in range(cfg.warm_start_sweeps):
        for i in interior:
            X[i] = A.gs_weights(i) @ X[A.indices[i]]
    return surface


# single-node updates

def gauss_seidel_interior(state: RunState, i: int) -> np.ndarray:
    """Replace image ``i`` by the exact minimizer of the energy in that image."""
    A, X = state.stiffness, state.surface.images
    X[i] = A.gs_weights(i) @ X[A.indices[i]]
    return X[i]


def local_target(state: RunState, i: int) -> np.ndarray:
    """Unconstrained minimizer ``-b / alpha_ii`` of the energy in image ``i``."""
    A = state.stiffness
    return A.gs_weights(i) @ state.surface.images[A.indices[i]]


def newton_derivatives(state: RunState, i: int, t: float, curve: Curve | None = None):
    """``(F(t) - const, F'(t), F''(t))`` with image ``i`` on the contour at ``t``.

    With ``b = sum_{j != i} alpha_ij a_j``::

        F'  = gamma' . (alpha_ii gamma + b)
        F'' = gamma'' . (alpha_ii gamma + b) + alpha_ii |gamma'|^2
    """
    curve = curve or state.curve
    A = state.stiffness
    alpha = A.diag[i]
    b = A.values[i] @ state.surface.images[A.indices[i]]
    g, g1, g2 = curve.eval(t), curve.eval_d1(t), curve.eval_d2(t)
    r = alpha * g + b
    return 0.5 * alpha * (g @ g) + g @ b, float(g1 @ r), float(g2 @ r + alpha * (g1 @ g1))


def _golden_min(f: Callable[[float], float], lo: float, hi: float, xtol: float = 1e-13) -> float:
    a, b = lo, hi
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    while b - a > xtol * max(1.0, abs(a) + abs(b)):
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = f(d)
    best = min((f(a), a), (fc, c), (fd, d), (f(b), b))
    return best[1]


def _bracketed_min(f: Callable[[float], float], lo: float, hi: float, t0: float, samples: int = 16) -> float:
    """Golden section around the best of a coarse scan of ``[lo, hi]`` that includes ``t0``.

    ``f`` need not be unimodal on the whole interval; the scan picks the
    sub-interval and golden section refines inside it.
    """
    ts = np.union1d(np.linspace(lo, hi, samples + 1), [t0])
    fs = [f(float(t)) for t in ts]
    k = int(np.argmin(fs))
    a, b = float(ts[max(k - 1, 0)]), float(ts[min(k + 1, len(ts) - 1)])
    t = _golden_min(f, a, b)
    return t if f(t) <= fs[k] else float(ts[k])


def parameter_bracket(state: RunState, pos: int) -> tuple[float, float, float]:
    """``(lo, t, hi)``: the node's parameter between its boundary neighbours', unwrapped."""
    mesh, params = state.mesh, state.surface.params
    nb = mesh.n_boundary
    node = mesh.boundary[pos]
    t = params[node]
    t_prev = params[mesh.boundary[(pos - 1) % nb]]
    t_next = params[mesh.boundary[(pos + 1) % nb]]
    if state.free_boundary:
        return t_prev, t, t_next
    gp = (t - t_prev) % TWO_PI
    gn = (t_next - t) % TWO_PI
    g = (t_next - t_prev) % TWO_PI
    if gp + gn > g + 1e-9:
        # a neighbour is numerically coincident and wrapped by a full turn
        if gp > g:
            gp = 0.0
        else:
            gn = 0.0
    return t - gp, t, t + gn


def newton_boundary(state: RunState, i: int, contour: Contour | None = None, pos: int | None = None) -> float:
    """One safeguarded Newton step on the parameter of boundary node ``i``.

    The Newton iterate is kept only if ``F'' > 0``, it stays between the
    neighbours' parameters and it does not raise ``F``; otherwise ``F`` is
    minimized over that bracket by a coarse scan refined with golden
    section, and the result kept only if it does not raise ``F``. Returns
    the new parameter.
    """
    contour = contour if contour is not None else state.contour
    curve = contour.arc if isinstance(contour, FreeBoundaryContour) else contour
    if pos is None:
        pos = int(np.nonzero(state.mesh.boundary == i)[0][0])
    c = local_target(state, i)
    alpha = state.stiffness.diag[i]

    def F(t: float) -> float:
        g = curve.eval(t) - c
        return 0.5 * alpha * float(g @ g)

    lo, t_old, hi = parameter_bracket(state, pos)
    g = curve.eval(t_old)
    g1 = curve.eval_d1(t_old)
    r = g - c
    d1 = alpha * float(g1 @ r)
    d2 = alpha * float(curve.eval_d2(t_old) @ r + g1 @ g1)
    f_old = F(t_old)
    t_new = None
    if d2 > 0:
        cand = t_old - d1 / d2
        if lo <= cand <= hi and F(cand) <= f_old:
            t_new = cand
    if t_new is None:
        if hi > lo:
            cand = _bracketed_min(F, lo, hi, t_old)
            t_new = cand if F(cand) <= f_old else t_old
        else:
            t_new = t_old
    if not state.free_boundary:
        t_new %= TWO_PI
    state.surface.params[i] = t_new
    state.surface.images[i] = curve.eval(t_new)
    return t_new


def free_boundary_update(state: RunState, i: int, fb: FreeBoundaryContour | None = None) -> np.ndarray:
    """Gauss-Seidel minimizer of image ``i`` projected onto the support plane."""
    fb = fb if fb is not None else state.contour
    img = project_to_plane(fb.surface, local_target(state, i))
    state.surface.images[i] = img
    return img


def sweep(state: RunState) -> float:
    """Relax every node once in index order; returns the largest image displacement."""
    mesh = state.mesh
    nb = mesh.n_boundary
    X = state.surface.images
    positions = mesh.boundary_positions()
    status = mesh.status
    A = state.stiffness
    plane = state.contour.surface if state.free_boundary else None
    max_disp = 0.0
    for i in range(mesh.n_nodes):
        s = status[i]
        if s < 0:
            continue
        old = X[i].copy()
        if s == 0:
            X[i] = A.gs_weights(i) @ X[A.indices[i]]
        elif s > nb:
            X[i] = project_to_plane(plane, A.gs_weights(i) @ X[A.indices[i]])
        else:
            newton_boundary(state, i, pos=positions[i])
        delta = X[i] - old
        disp = math.sqrt(float(delta @ delta))
        if disp > max_disp:
            max_disp = disp
    return max_disp


# driver

def start(mesh: DiskMesh, contour: Contour, cfg: SolverConfig | None = None) -> RunState:
    """Copy the mesh, build the initial surface and log sweep 0."""
    cfg = cfg or SolverConfig()
    mesh = mesh.copy()
    A = assemble(mesh)
    surface = init_surface(mesh, contour, cfg, A)
    cap = cfg.max_insertions if cfg.max_insertions is not None else 4 * mesh.n_boundary
    state = RunState(mesh, contour, cfg, A, surface, max_insertions=cap)
    state.geometry = element_gradients(mesh)
    state.record(0.0)
    return state


def _check(state: RunState) -> int:
    if state.config.strategy is Strategy.NONE or state.capped:
        return 0
    before = state.energy()
    report = _refine.check_and_refine(
        state, state.config.strategy, state.config.defect_threshold, metric=state.config.metric
    )
    if not report.defects:
        return 0
    state.refinements.append(
        RefinementEvent(state.sweep, before, state.energy(), report, len(report.defects))
    )
    log.info(
        "sweep %d: refined %d boundary triangles (%d insertions, %d nodes)",
        state.sweep, len(report.defects), state.insertions, state.mesh.n_nodes,
    )
    for d in report.defects:
        log.debug("  defect %s", d)
    return len(report.defects)


def run(
    mesh: DiskMesh,
    contour: Contour,
    cfg: SolverConfig | None = None,
    on_sweep: Callable[[RunState], None] | None = None,
) -> RunState:
    """Relax to convergence, refining defective boundary triangles on schedule.

    Converged means one sweep moved no image by ``tol`` or more. When a
    refinement strategy is active a converged surface gets one more
    boundary check, and relaxation resumes if anything was refined. The
    insertion cap stops further refinement; such runs still relax to
    convergence but report :attr:`Termination.INSERTION_CAP`.

    ``on_sweep`` is called with the state after every sweep, before any
    refinement check of that sweep.
    """
    state = start(mesh, contour, cfg)
    cfg = state.config
    while state.sweep < cfg.max_iter:
        disp = sweep(state)
        state.sweep += 1
        state.record(disp)
        if on_sweep is not None:
            on_sweep(state)
        if disp < cfg.tol:
            if _check(state):
                continue
            state.termination = Termination.INSERTION_CAP if state.capped else Termination.CONVERGED
            return state
        if state.sweep % cfg.check_interval == 0:
            _check(state)
    state.termination = Termination.MAX_ITER
    return state


def boundary_consistency(state: RunState) -> float:
    """Largest distance between a contour node's image and gamma at its parameter."""
    worst = 0.0
    curve = state.curve
    for node in state.mesh.boundary:
        t = state.surface.params[node]
        if np.isnan(t):
            continue
        worst = max(worst, float(np.linalg.norm(state.surface.images[node] - curve.eval(t))))
    return worst


def parameters_monotone(state: RunState, tol: float = 1e-12) -> bool:
    """Whether contour parameters are non-decreasing along the boundary, winding once."""
    params = state.surface.params[state.mesh.boundary]
    if state.free_boundary:
        vals = params[~np.isnan(params)]
        return bool(np.all(np.diff(vals) >= -tol))
    gaps = np.mod(np.roll(params, -1) - params, TWO_PI)
    gaps = np.where(gaps > TWO_PI - tol, 0.0, gaps)
    return abs(gaps.sum() - TWO_PI) < 1e-8
