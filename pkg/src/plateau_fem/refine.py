"""Detection and refinement of defective boundary triangles.

A boundary triangle (two of its vertices consecutive on the disk boundary)
is defective when the image of its boundary edge is much longer than the
images of the two adjacent boundary edges. Its preimage is refined either
by bisecting the boundary edge or by regular (red) refinement, whose two
hanging nodes are resolved by bisecting the neighbours.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .assembly import DEGENERATE_AREA, SurfaceMap
from .geometry import TWO_PI, FreeBoundaryContour, arc_midpoint, project_to_plane
from .mesh import BOUNDARY, CURVE, FREE, INTERIOR, DiskMesh


class InsertionCapReached(RuntimeError):
    pass


class RefinementError(RuntimeError):
    """The requested refinement is not applicable; the mesh is left unchanged."""


class Defect(NamedTuple):
    boundary_index: int
    element: int
    length: float
    reference: float
    ratio: float


@dataclass
class DefectReport:
    defects: list[Defect] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.defects)

    def __iter__(self):
        return iter(self.defects)


def boundary_edge_lengths(mesh: DiskMesh, surface: SurfaceMap) -> np.ndarray:
    """Image length of boundary edge ``k`` (from ``boundary[k]`` to ``boundary[k+1]``)."""
    pts = surface.images[mesh.boundary]
    return np.linalg.norm(np.roll(pts, -1, axis=0) - pts, axis=1)


def _parameter_gaps(mesh: DiskMesh, surface: SurfaceMap, closed: bool) -> np.ndarray:
    t = surface.params[mesh.boundary]
    nxt = np.roll(t, -1)
    gaps = np.mod(nxt - t, TWO_PI) if closed else np.abs(nxt - t)
    # edges touching a free node have no parameter gap; fall back to distance
    return np.where(np.isnan(gaps), np.nan, gaps)


def detect_defective(
    mesh: DiskMesh,
    surface: SurfaceMap,
    tau: float,
    metric: str = "distance",
    closed: bool = True,
) -> DefectReport:
    """Flag boundary edges longer than ``tau`` times the median of their two neighbours.

    ``metric="angle"`` measures edges by their contour parameter gap
    instead; edges touching a free node keep the image distance.
    """
    if not tau > 1:
        raise ValueError("defect threshold must exceed 1")
    lengths = boundary_edge_lengths(mesh, surface)
    if metric == "angle":
        gaps = _parameter_gaps(mesh, surface, closed)
        if np.isnan(gaps).any():
            gaps = np.where(np.isnan(gaps), lengths, gaps)
        lengths = gaps
    elif metric != "distance":
        raise ValueError(f"unknown defect metric {metric!r}")
    nb = len(lengths)
    report = DefectReport()
    for k in range(nb):
        ref = float(np.median([lengths[k - 1], lengths[(k + 1) % nb]]))
        if lengths[k] > tau * ref:
            ratio = lengths[k] / ref if ref > 0 else math.inf
            report.defects.append(
                Defect(k, mesh.boundary_triangle(k), float(lengths[k]), ref, float(ratio))
            )
    return report


# local mesh surgery

def _rotate_to(tri: np.ndarray, first: int) -> tuple[int, int, int]:
    j = int(np.nonzero(tri == first)[0][0])
    return int(tri[j]), int(tri[(j + 1) % 3]), int(tri[(j + 2) % 3])


def _relink(mesh: DiskMesh, changed: set[int], old_neighbours: set[int]) -> None:
    """Recompute adjacency around modified elements.

    ``changed`` holds every element rewritten or created; ``old_neighbours``
    the elements adjacent to them before the change.
    """
    pool = changed | old_neighbours
    owner: dict[tuple[int, int], int] = {}
    for e in pool:
        tri = mesh.elements[e]
        for j in range(3):
            owner[(int(tri[(j + 1) % 3]), int(tri[(j + 2) % 3]))] = e
    for e in pool:
        tri = mesh.elements[e]
        for j in range(3):
            if e not in changed and mesh.neighbours[e, j] not in changed:
                continue
            a, b = int(tri[(j + 1) % 3]), int(tri[(j + 2) % 3])
            mesh.neighbours[e, j] = owner.get((b, a), BOUNDARY)


def _add_elements(mesh: DiskMesh, tris: list[tuple[int, int, int]]) -> list[int]:
    start = mesh.n_elements
    mesh.elements = np.vstack([mesh.elements, np.array(tris, dtype=np.int64).reshape(-1, 3)])
    mesh.neighbours = np.vstack(
        [mesh.neighbours, np.full((len(tris), 3), BOUNDARY, dtype=np.int64)]
    )
    return list(range(start, start + len(tris)))


def _add_node(mesh: DiskMesh, uv) -> int:
    mesh.nodes = np.vstack([mesh.nodes, np.asarray(uv, dtype=float)[None, :]])
    mesh.status = np.append(mesh.status, 0)
    return mesh.n_nodes - 1


def _neighbour_set(mesh: DiskMesh, elems: set[int]) -> set[int]:
    out = set()
    for e in elems:
        out.update(int(k) for k in mesh.neighbours[e] if k != BOUNDARY)
    return out - elems


def _boundary_midpoint(mesh: DiskMesh, p: int, q: int, nested: bool) -> np.ndarray:
    """Disk position of the node splitting boundary edge ``p -> q``."""
    if nested:
        return 0.5 * (mesh.nodes[p] + mesh.nodes[q])
    ap = math.atan2(mesh.nodes[p, 1], mesh.nodes[p, 0])
    aq = math.atan2(mesh.nodes[q, 1], mesh.nodes[q, 0])
    mid = arc_midpoint(ap, aq, closed=True)
    return np.array([math.cos(mid), math.sin(mid)])


def _area(a, b, c) -> float:
    return 0.5 * float((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))


def _check_children(tris, what: str) -> None:
    smallest = min(_area(*t) for t in tris)
    if smallest <= DEGENERATE_AREA:
        raise RefinementError(f"{what} would create a triangle of area {smallest:.3g}")


def _insert_boundary_node(
    mesh: DiskMesh,
    surface: SurfaceMap,
    contour,
    pos: int,
    nested: bool,
) -> int:
    """Create the node splitting boundary edge ``pos`` and splice it into ``boundary``."""
    nb = mesh.n_boundary
    p = int(mesh.boundary[pos])
    q = int(mesh.boundary[(pos + 1) % nb])
    kinds = mesh.node_kinds()
    free_contour = isinstance(contour, FreeBoundaryContour)
    node = _add_node(mesh, _boundary_midpoint(mesh, p, q, nested))

    on_plane = free_contour and (kinds[p] == FREE or kinds[q] == FREE)
    if nested:
        image = 0.5 * (surface.images[p] + surface.images[q])
        param = math.nan
        if not on_plane:
            param = arc_midpoint(surface.params[p], surface.params[q], closed=not free_contour)
        kind = FREE if on_plane else CURVE
    elif on_plane:
        image = project_to_plane(contour.surface, 0.5 * (surface.images[p] + surface.images[q]))
        param, kind = math.nan, FREE
    else:
        curve = contour.arc if free_contour else contour
        param = arc_midpoint(surface.params[p], surface.params[q], closed=not free_contour)
        image, kind = curve.eval(param), CURVE
    surface.append(image, param)

    mesh.boundary = np.insert(mesh.boundary, pos + 1, node)
    kinds = np.append(kinds, kind)
    mesh.set_kinds(kinds)
    return node


def _split_edge(mesh: DiskMesh, e: int, a: int, b: int, m: int) -> list[int]:
    """Split element ``e`` along the edge ``a-b`` at node ``m``, joining ``m`` to the opposite vertex.

    Returns the two element indices (``e`` is reused). Adjacency is not
    updated here.
    """
    tri = mesh.elements[e]
    rest = [int(v) for v in tri if v not in (a, b)]
    if len(rest) != 1:
        raise RefinementError(f"element {e} does not own edge {a}-{b}")
    r, x, y = _rotate_to(tri, rest[0])
    mesh.elements[e] = (r, x, m)
    (new,) = _add_elements(mesh, [(r, m, y)])
    return [e, new]


def _check_budget(budget: int | None) -> None:
    if budget is not None and budget < 1:
        raise InsertionCapReached("boundary insertion cap reached")


def bisect_boundary_triangle(
    mesh: DiskMesh,
    surface: SurfaceMap,
    contour,
    i: int,
    budget: int | None = None,
    nested: bool = False,
) -> int:
    """Marked-edge bisection of the boundary triangle on boundary edge ``i``.

    A new boundary node is put at the arc midpoint of the edge on the unit
    circle and joined to the opposite vertex. Its contour parameter is the
    parameter midpoint; on a free stretch its image is the chord midpoint
    projected onto the support plane. With ``nested=True`` the node goes to
    the chord midpoint and its image is interpolated, reproducing the old
    surface exactly (the mesh then no longer inscribes the circle).

    Returns the new node index.

    Raises
    ------
    InsertionCapReached
        If ``budget`` is exhausted.
    RefinementError
        If a child triangle would be degenerate in floating point; the mesh
        is not modified.
    """
    _check_budget(budget)
    nb = mesh.n_boundary
    i %= nb
    e = mesh.boundary_triangle(i)
    p, q = int(mesh.boundary[i]), int(mesh.boundary[(i + 1) % nb])
    v = [int(k) for k in mesh.elements[e] if k not in (p, q)][0]
    X, uv = mesh.nodes, _boundary_midpoint(mesh, p, q, nested)
    _check_children([(X[v], X[p], uv), (X[v], uv, X[q])], f"bisecting boundary edge {i}")
    around = _neighbour_set(mesh, {e})
    m = _insert_boundary_node(mesh, surface, contour, i, nested)
    changed = set(_split_edge(mesh, e, p, q, m))
    _relink(mesh, changed, around)
    return m


def regular_refine_boundary_triangle(
    mesh: DiskMesh,
    surface: SurfaceMap,
    contour,
    i: int,
    budget: int | None = None,
    nested: bool = False,
) -> tuple[int, int, int]:
    """Red refinement of the boundary triangle on boundary edge ``i``.

    The triangle is cut into four by its edge midpoints; the midpoint of the
    boundary edge is placed as in :func:`bisect_boundary_triangle`, the two
    interior midpoints at coordinate midpoints with interpolated images.
    Each neighbour carrying one of those hanging nodes is bisected through
    it. Returns ``(boundary midpoint, midpoint toward next, midpoint toward
    previous)`` node indices.
    """
    _check_budget(budget)
    nb = mesh.n_boundary
    i %= nb
    e = mesh.boundary_triangle(i)
    p, q = int(mesh.boundary[i]), int(mesh.boundary[(i + 1) % nb])
    tri = mesh.elements[e]
    v = [int(k) for k in tri if k not in (p, q)][0]
    jv = int(np.nonzero(tri == v)[0][0])
    jp = int(np.nonzero(tri == p)[0][0])
    jq = int(np.nonzero(tri == q)[0][0])
    across_qv = int(mesh.neighbours[e, jp])
    across_vp = int(mesh.neighbours[e, jq])
    if across_qv == BOUNDARY or across_vp == BOUNDARY or mesh.neighbours[e, jv] != BOUNDARY:
        raise RefinementError(f"element {e} must have exactly one boundary edge")
    X = mesh.nodes
    m0 = _boundary_midpoint(mesh, p, q, nested)
    m1, m2 = 0.5 * (X[q] + X[v]), 0.5 * (X[v] + X[p])
    children = [(m0, m1, m2), (X[p], m0, m2), (m0, X[q], m1), (m2, m1, X[v])]
    for f, a, b, m in ((across_qv, q, v, m1), (across_vp, v, p, m2)):
        r = [int(k) for k in mesh.elements[f] if k not in (a, b)][0]
        children += [(X[r], X[b], m), (X[r], m, X[a])]
    _check_children(children, f"refining boundary edge {i}")
    touched = {e, across_qv, across_vp}
    around = _neighbour_set(mesh, touched)

    m0 = _insert_boundary_node(mesh, surface, contour, i, nested)
    m1 = _add_node(mesh, 0.5 * (mesh.nodes[q] + mesh.nodes[v]))
    surface.append(0.5 * (surface.images[q] + surface.images[v]))
    m2 = _add_node(mesh, 0.5 * (mesh.nodes[v] + mesh.nodes[p]))
    surface.append(0.5 * (surface.images[v] + surface.images[p]))
    kinds = mesh.node_kinds()
    kinds[[m1, m2]] = INTERIOR
    mesh.set_kinds(kinds)

    mesh.elements[e] = (m0, m1, m2)
    children = _add_elements(mesh, [(p, m0, m2), (m0, q, m1), (m2, m1, v)])
    changed = {e, *children}
    changed.update(_split_edge(mesh, across_qv, q, v, m1))
    changed.update(_split_edge(mesh, across_vp, v, p, m2))
    _relink(mesh, changed, around)
    return m0, m1, m2


def check_and_refine(state, strategy, tau: float, metric: str = "distance") -> DefectReport:
    """One boundary quality pass over a run state.

    Flags defective boundary edges once, then refines each flagged triangle
    with ``strategy`` unless an earlier refinement in the same pass already
    rewrote it. Refinement stops at the insertion cap (``state.capped`` is
    set). Returns the defects actually refined; the stiffness matrix is
    reassembled when anything changed.
    """
    from .relax import Strategy

    strategy = Strategy(strategy)
    if strategy is Strategy.NONE:
        return DefectReport()
    mesh, surface = state.mesh, state.surface
    report = detect_defective(
        mesh, surface, tau, metric=metric, closed=not state.free_boundary
    )
    if not report.defects:
        return report
    pairs = [
        (d, int(mesh.boundary[d.boundary_index]),
         int(mesh.boundary[(d.boundary_index + 1) % mesh.n_boundary]))
        for d in report.defects
    ]
    touched: set[int] = set()
    applied = DefectReport()
    for d, p, q in pairs:
        pos = int(np.nonzero(mesh.boundary == p)[0][0])
        if int(mesh.boundary[(pos + 1) % mesh.n_boundary]) != q:
            continue
        e = mesh.boundary_triangle(pos)
        if e in touched:
            continue
        n_before = mesh.n_elements
        nbrs = {int(k) for k in mesh.neighbours[e] if k != BOUNDARY}
        try:
            budget = state.max_insertions - state.insertions
            if strategy is Strategy.BISECT:
                bisect_boundary_triangle(mesh, surface, state.contour, pos, budget=budget)
                touched.add(e)
            else:
                regular_refine_boundary_triangle(mesh, surface, state.contour, pos, budget=budget)
                touched.update({e} | nbrs)
        except InsertionCapReached:
            state.capped = True
            break
        except RefinementError:
            # edge too short to split in floating point; leave it
            continue
        touched.update(range(n_before, mesh.n_elements))
        state.insertions += 1
        applied.defects.append(d)
    if applied.defects:
        state.reassemble()
    return applied
