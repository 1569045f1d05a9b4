"""Face-to-face triangulations of the closed unit disk.

A :class:`DiskMesh` carries the arrays an element-oriented relaxation code
needs: node coordinates, counterclockwise elements, the cyclically ordered
boundary list, a per-node status tag and the element adjacency table.

Status encoding, with ``b`` the 1-based boundary index and ``nb`` the
number of boundary nodes::

    0        interior node
    b        boundary node moving on the contour
    -b       fixed boundary node
    b + nb   free boundary node (moves on a support plane)
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

#: Sentinel stored in ``neighbours`` for edges on the disk boundary.
BOUNDARY = -1
CIRCLE_TOL = 1e-12

# node kind codes used by node_kinds() / set_kinds()
INTERIOR, CURVE, FIXED, FREE = 0, 1, 2, 3
KIND_NAMES = {INTERIOR: "interior", CURVE: "boundary", FIXED: "fixed", FREE: "free"}


class NoSuchElement(LookupError):
    """Raised when two consecutive boundary nodes share no element."""


class MeshFormatError(ValueError):
    """Raised when a mesh text file cannot be parsed."""


def encode_status(kind: int, b: int, nb: int) -> int:
    """Status value of a node of the given kind at 1-based boundary index ``b``."""
    if kind == INTERIOR:
        return 0
    if kind == CURVE:
        return b
    if kind == FIXED:
        return -b
    if kind == FREE:
        return b + nb
    raise ValueError(f"unknown node kind {kind!r}")


def decode_status(status: int, nb: int) -> tuple[int, int]:
    """Inverse of :func:`encode_status`; returns ``(kind, b)`` with ``b = 0`` for interior nodes."""
    status = int(status)
    if status == 0:
        return INTERIOR, 0
    if status < 0:
        return FIXED, -status
    if status > nb:
        return FREE, status - nb
    return CURVE, status


def compute_neighbours(elements: np.ndarray) -> np.ndarray:
    """Element adjacency from scratch.

    ``result[e, j]`` is the element sharing the edge opposite the ``j``-th
    vertex of ``e``, or :data:`BOUNDARY`.
    """
    elements = np.asarray(elements, dtype=np.int64)
    owner: dict[tuple[int, int], int] = {}
    for e, tri in enumerate(elements):
        for j in range(3):
            a, b = int(tri[(j + 1) % 3]), int(tri[(j + 2) % 3])
            owner[(a, b)] = e
    nbr = np.full(elements.shape, BOUNDARY, dtype=np.int64)
    for e, tri in enumerate(elements):
        for j in range(3):
            a, b = int(tri[(j + 1) % 3]), int(tri[(j + 2) % 3])
            nbr[e, j] = owner.get((b, a), BOUNDARY)
    return nbr


def signed_areas(nodes: np.ndarray, elements: np.ndarray) -> np.ndarray:
    p = nodes[elements]
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])


@dataclass
class DiskMesh:
    """Triangulation of the unit disk with boundary bookkeeping.

    All indices are 0-based. ``status`` follows the module-level encoding
    and must be refreshed through :meth:`set_kinds` whenever the boundary
    changes length, because free-node codes depend on ``len(boundary)``.
    """

    nodes: np.ndarray
    elements: np.ndarray
    boundary: np.ndarray
    status: np.ndarray = field(default=None)  # type: ignore[assignment]
    neighbours: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        self.nodes = np.asarray(self.nodes, dtype=float).reshape(-1, 2)
        self.elements = np.asarray(self.elements, dtype=np.int64).reshape(-1, 3)
        self.boundary = np.asarray(self.boundary, dtype=np.int64).ravel()
        if self.status is None:
            status = np.zeros(len(self.nodes), dtype=np.int64)
            status[self.boundary] = np.arange(1, len(self.boundary) + 1)
            self.status = status
        else:
            self.status = np.asarray(self.status, dtype=np.int64).ravel()
        if self.neighbours is None:
            self.neighbours = compute_neighbours(self.elements)
        else:
            self.neighbours = np.asarray(self.neighbours, dtype=np.int64).reshape(-1, 3)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_elements(self) -> int:
        return len(self.elements)

    @property
    def n_boundary(self) -> int:
        return len(self.boundary)

    @property
    def n_interior(self) -> int:
        return self.n_nodes - self.n_boundary

    def copy(self) -> "DiskMesh":
        return DiskMesh(
            self.nodes.copy(),
            self.elements.copy(),
            self.boundary.copy(),
            self.status.copy(),
            self.neighbours.copy(),
        )

    def node_kinds(self) -> np.ndarray:
        nb = self.n_boundary
        return np.array([decode_status(s, nb)[0] for s in self.status], dtype=np.int64)

    def set_kinds(self, kinds: np.ndarray) -> None:
        """Re-encode ``status`` from per-node kinds and the current boundary order."""
        nb = self.n_boundary
        status = np.zeros(self.n_nodes, dtype=np.int64)
        for pos, node in enumerate(self.boundary):
            kind = int(kinds[node])
            if kind == INTERIOR:
                raise ValueError(f"boundary node {node} tagged interior")
            status[node] = encode_status(kind, pos + 1, nb)
        self.status = status

    def boundary_positions(self) -> dict[int, int]:
        return {int(node): pos for pos, node in enumerate(self.boundary)}

    def area(self) -> float:
        return float(signed_areas(self.nodes, self.elements).sum())

    def boundary_triangle(self, i: int) -> int:
        """Element owning the boundary edge ``boundary[i] -> boundary[i+1]``.

        ``i`` wraps cyclically.
        """
        nb = self.n_boundary
        p = int(self.boundary[i % nb])
        q = int(self.boundary[(i + 1) % nb])
        hit = np.nonzero(
            np.any(self.elements == p, axis=1) & np.any(self.elements == q, axis=1)
        )[0]
        if len(hit) != 1:
            raise NoSuchElement(
                f"boundary nodes {p} and {q} (boundary index {i % nb}) "
                f"share {len(hit)} elements"
            )
        return int(hit[0])


def generate_disk_mesh(preset: str | int = "T1") -> DiskMesh:
    """Concentric-ring triangulation of the unit disk.

    Parameters
    ----------
    preset : {"T1", "T2"} or int or "rings:n"
        ``T1`` is eight rings (169 interior, 48 boundary nodes) and ``T2``
        eleven rings (331 interior, 66 boundary nodes). An integer ``n``
        builds ``n`` rings: ring ``k`` holds ``6k`` equally spaced nodes at
        radius ``k/n`` around a center node.
    """
    if isinstance(preset, str):
        key = preset.strip().lower()
        if key == "t1":
            n = 8
        elif key == "t2":
            n = 11
        elif key.startswith("rings"):
            n = int(key.split(":", 1)[1]) if ":" in key else int(key[5:].strip("()"))
        else:
            raise ValueError(f"unknown triangulation preset {preset!r}")
    else:
        n = int(preset)
    if n < 1:
        raise ValueError("ring count must be >= 1")
    return ring_mesh(n)


def ring_mesh(n: int) -> DiskMesh:
    nodes = [(0.0, 0.0)]
    rings: list[list[int]] = [[0]]
    for k in range(1, n + 1):
        m = 6 * k
        ring = []
        for j in range(m):
            a = 2.0 * math.pi * j / m
            r = 1.0 if k == n else k / n
            nodes.append((r * math.cos(a), r * math.sin(a)))
            ring.append(len(nodes) - 1)
        rings.append(ring)

    elements: list[tuple[int, int, int]] = []
    first = rings[1]
    for j in range(6):
        elements.append((0, first[j], first[(j + 1) % 6]))
    for k in range(2, n + 1):
        inner, outer = rings[k - 1], rings[k]
        m, big = len(inner), len(outer)
        i = j = 0
        # merge the two rings by angle; fractions compared exactly as integers
        while i < m or j < big:
            advance_outer = j < big and (i == m or (j + 1) * (k - 1) <= (i + 1) * k)
            if advance_outer:
                elements.append((inner[i % m], outer[j], outer[(j + 1) % big]))
                j += 1
            else:
                elements.append((inner[i], outer[j % big], inner[(i + 1) % m]))
                i += 1
    mesh = DiskMesh(np.array(nodes), np.array(elements), np.array(rings[n]))
    assert np.all(signed_areas(mesh.nodes, mesh.elements) > 0)
    return mesh


class Violation(NamedTuple):
    kind: str
    index: int
    value: float


@dataclass
class MeshDiagnostics:
    violations: list[Violation] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.violations)

    @property
    def ok(self) -> bool:
        return not self.violations

    def kinds(self) -> set[str]:
        return {v.kind for v in self.violations}

    def add(self, kind: str, index: int, value: float = float("nan")) -> None:
        self.violations.append(Violation(kind, int(index), float(value)))


def validate_mesh(mesh: DiskMesh, area_tol: float = 1e-14) -> MeshDiagnostics:
    """Check every :class:`DiskMesh` invariant and report each violation.

    The checks are independent of how the mesh was built: adjacency is
    recomputed from the element list, hanging nodes show up as unpaired
    edges off the boundary polygon, and overlaps as an area mismatch.
    """
    diag = MeshDiagnostics()
    nodes, elements, boundary = mesh.nodes, mesh.elements, mesh.boundary
    n, nb = mesh.n_nodes, mesh.n_boundary

    if len(mesh.status) != n:
        diag.add("status_length", -1, len(mesh.status))
    if mesh.neighbours.shape != elements.shape:
        diag.add("neighbours_shape", -1, len(mesh.neighbours))
        return diag
    bad_index = (elements < 0) | (elements >= n)
    for e in np.nonzero(bad_index.any(axis=1))[0]:
        diag.add("element_index", e)
    if diag.violations:
        return diag

    radii = np.hypot(nodes[:, 0], nodes[:, 1])
    for i in np.nonzero(radii > 1.0 + CIRCLE_TOL)[0]:
        diag.add("outside_disk", i, radii[i])

    for e, tri in enumerate(elements):
        if len(set(tri.tolist())) != 3:
            diag.add("repeated_vertex", e)
    areas = signed_areas(nodes, elements)
    for e in np.nonzero(areas <= area_tol)[0]:
        diag.add("orientation", e, areas[e])

    used = np.zeros(n, dtype=bool)
    used[elements.ravel()] = True
    for i in np.nonzero(~used)[0]:
        diag.add("orphan_node", i)

    # boundary list
    if len(set(boundary.tolist())) != nb:
        diag.add("boundary_duplicate", -1, nb)
    for pos, node in enumerate(boundary):
        if not 0 <= node < n:
            diag.add("boundary_index", pos, node)
            return diag
        if abs(radii[node] - 1.0) > CIRCLE_TOL:
            diag.add("boundary_off_circle", node, radii[node])
    if nb >= 3:
        ang = np.arctan2(nodes[boundary, 1], nodes[boundary, 0])
        gaps = np.mod(np.roll(ang, -1) - ang, 2.0 * math.pi)
        for pos in np.nonzero(gaps <= 0.0)[0]:
            diag.add("boundary_order", pos, gaps[pos])
        total = gaps.sum()
        if abs(total - 2.0 * math.pi) > 1e-9:
            diag.add("boundary_winding", -1, total)
    else:
        diag.add("boundary_too_short", -1, nb)

    # edges: interior edges paired with opposite orientation, the rest
    # exactly the boundary polygon
    directed: dict[tuple[int, int], int] = {}
    for e, tri in enumerate(elements):
        for j in range(3):
            key = (int(tri[(j + 1) % 3]), int(tri[(j + 2) % 3]))
            if key in directed:
                diag.add("duplicate_edge", e)
            directed[key] = e
    bnd_edges = {
        (int(boundary[p]), int(boundary[(p + 1) % nb])) for p in range(nb)
    }
    for (a, b), e in directed.items():
        if (b, a) not in directed and (a, b) not in bnd_edges:
            diag.add("unpaired_edge", e)
    for a, b in bnd_edges:
        if (a, b) not in directed:
            diag.add("missing_boundary_edge", a)
        elif (b, a) in directed:
            diag.add("boundary_edge_interior", a)

    poly = nodes[boundary]
    poly_area = 0.5 * float(
        np.sum(poly[:, 0] * np.roll(poly[:, 1], -1) - np.roll(poly[:, 0], -1) * poly[:, 1])
    )
    if abs(areas.sum() - poly_area) > 1e-10:
        diag.add("area_mismatch", -1, areas.sum() - poly_area)

    expected = compute_neighbours(elements)
    for e, j in zip(*np.nonzero(expected != mesh.neighbours)):
        diag.add("neighbours", e, mesh.neighbours[e, j])

    # status
    is_bnd = np.zeros(n, dtype=bool)
    is_bnd[boundary] = True
    for i in range(n):
        s = int(mesh.status[i])
        if not is_bnd[i] and s != 0:
            diag.add("status_interior", i, s)
    for pos, node in enumerate(boundary):
        s = int(mesh.status[node])
        if s not in (pos + 1, -(pos + 1), pos + 1 + nb):
            diag.add("status_boundary", node, s)
    return diag


def save_mesh(mesh: DiskMesh, path: str | Path) -> None:
    """Write the text mesh format (1-based indices, ``-1`` boundary sentinel)."""
    lines = [f"nodes {mesh.n_nodes}"]
    lines += [f"{u:.17g} {v:.17g}" for u, v in mesh.nodes]
    lines.append(f"elements {mesh.n_elements}")
    lines += [" ".join(str(int(k) + 1) for k in tri) for tri in mesh.elements]
    lines.append(f"boundary {mesh.n_boundary}")
    lines += [str(int(k) + 1) for k in mesh.boundary]
    lines.append(f"status {mesh.n_nodes}")
    lines += [str(int(s)) for s in mesh.status]
    lines.append(f"neighbours {mesh.n_elements}")
    lines += [
        " ".join(str(int(k) + 1) if k != BOUNDARY else "-1" for k in row)
        for row in mesh.neighbours
    ]
    Path(path).write_text("\n".join(lines) + "\n")


def load_mesh(path: str | Path) -> DiskMesh:
    text = Path(path).read_text().splitlines()
    sections: dict[str, list[list[str]]] = {}
    pos = 0
    while pos < len(text):
        line = text[pos].split("#", 1)[0].split()
        pos += 1
        if not line:
            continue
        if len(line) != 2 or not line[1].isdigit():
            raise MeshFormatError(f"{path}:{pos}: expected '<section> <count>'")
        name, count = line[0], int(line[1])
        rows = []
        for _ in range(count):
            if pos >= len(text):
                raise MeshFormatError(f"{path}: section {name!r} truncated")
            rows.append(text[pos].split())
            pos += 1
        sections[name] = rows
    for name in ("nodes", "elements", "boundary"):
        if name not in sections:
            raise MeshFormatError(f"{path}: missing section {name!r}")
    try:
        nodes = np.array(sections["nodes"], dtype=float)
        elements = np.array(sections["elements"], dtype=np.int64) - 1
        boundary = np.array(sections["boundary"], dtype=np.int64).ravel() - 1
        status = (
            np.array(sections["status"], dtype=np.int64).ravel()
            if "status" in sections else None
        )
        neighbours = None
        if "neighbours" in sections:
            raw = np.array(sections["neighbours"], dtype=np.int64)
            neighbours = np.where(raw == -1, BOUNDARY, raw - 1)
    except ValueError as exc:
        raise MeshFormatError(f"{path}: {exc}") from None
    return DiskMesh(nodes, elements, boundary, status, neighbours)
