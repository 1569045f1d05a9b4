"""P1 stiffness assembly and energy functionals of piecewise-linear surfaces."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .mesh import DiskMesh

DEGENERATE_AREA = 1e-14


class DegenerateTriangle(ValueError):
    def __init__(self, message: str, element: int | None = None):
        super().__init__(message)
        self.element = element


class DimensionMismatch(ValueError):
    pass


def element_stiffness(p1, p2, p3) -> np.ndarray:
    """Local matrix ``K[a, b] = integral of grad(eta_a) . grad(eta_b)`` over one triangle."""
    p = np.array([p1, p2, p3], dtype=float)
    edges = np.array([p[2] - p[1], p[0] - p[2], p[1] - p[0]])
    area = 0.5 * (edges[2, 0] * (-edges[1, 1]) - edges[2, 1] * (-edges[1, 0]))
    if area <= DEGENERATE_AREA:
        raise DegenerateTriangle(f"triangle signed area {area:.3g} is not positive")
    return edges @ edges.T / (4.0 * area)


def element_gradients(mesh: DiskMesh) -> tuple[np.ndarray, np.ndarray]:
    """Constant shape-function gradients ``(M, 3, 2)`` and areas ``(M,)`` of every element."""
    p = mesh.nodes[mesh.elements]
    edges = np.stack([p[:, 2] - p[:, 1], p[:, 0] - p[:, 2], p[:, 1] - p[:, 0]], axis=1)
    areas = 0.5 * (edges[:, 2, 0] * -edges[:, 1, 1] + edges[:, 2, 1] * edges[:, 1, 0])
    bad = np.nonzero(areas <= DEGENERATE_AREA)[0]
    if len(bad):
        e = int(bad[0])
        raise DegenerateTriangle(f"element {e} has signed area {areas[e]:.3g}", element=e)
    # grad(lambda_a) is the edge opposite a rotated by +90 degrees over twice the area
    grads = np.stack([-edges[..., 1], edges[..., 0]], axis=-1) / (2.0 * areas[:, None, None])
    return grads, areas


@dataclass
class StiffnessMatrix:
    """Sparse symmetric P1 Laplacian stored row by row.

    ``indices[i]`` / ``values[i]`` hold the off-diagonal entries of row
    ``i``; ``diag[i]`` the diagonal. ``matrix`` is the same operator in CSR
    form for whole-vector products.
    """

    indices: list[np.ndarray]
    values: list[np.ndarray]
    diag: np.ndarray
    matrix: sp.csr_matrix
    weights: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self) -> None:
        if not self.weights:
            self.weights = [-v / d for v, d in zip(self.values, self.diag)]

    @property
    def n(self) -> int:
        return len(self.diag)

    def row(self, i: int) -> list[tuple[int, float]]:
        entries = [(int(j), float(a)) for j, a in zip(self.indices[i], self.values[i])]
        entries.append((i, float(self.diag[i])))
        return sorted(entries)

    def gs_weights(self, i: int) -> np.ndarray:
        """Coefficients ``-alpha_ij / alpha_ii`` of the Gauss-Seidel update of row ``i``."""
        return self.weights[i]


def assemble(mesh: DiskMesh) -> StiffnessMatrix:
    grads, areas = element_gradients(mesh)
    local = np.einsum("eak,ebk->eab", grads, grads) * areas[:, None, None]
    rows = np.repeat(mesh.elements, 3, axis=1).ravel()
    cols = np.tile(mesh.elements, (1, 3)).ravel()
    n = mesh.n_nodes
    mat = sp.coo_matrix((local.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    mat.sum_duplicates()
    mat.sort_indices()
    diag = mat.diagonal().copy()
    indices, values = [], []
    for i in range(n):
        lo, hi = mat.indptr[i], mat.indptr[i + 1]
        cols_i = mat.indices[lo:hi]
        keep = cols_i != i
        indices.append(cols_i[keep].copy())
        values.append(mat.data[lo:hi][keep].copy())
    return StiffnessMatrix(indices, values, diag, mat)


@dataclass
class SurfaceMap:
    """Nodal images of a piecewise-linear surface.

    ``params[i]`` is the contour parameter of a node whose image lies on the
    contour, NaN otherwise (interior and free nodes).
    """

    images: np.ndarray
    params: np.ndarray

    def __post_init__(self) -> None:
        self.images = np.array(self.images, dtype=float)
        if self.images.ndim != 2:
            raise DimensionMismatch("images must be an (N, d) array")
        self.params = np.asarray(self.params, dtype=float).ravel()
        if len(self.params) != len(self.images):
            raise DimensionMismatch("one parameter slot per node is required")

    @property
    def dim(self) -> int:
        return self.images.shape[1]

    @property
    def n(self) -> int:
        return len(self.images)

    def copy(self) -> "SurfaceMap":
        return SurfaceMap(self.images.copy(), self.params.copy())

    def append(self, image: np.ndarray, param: float = float("nan")) -> int:
        self.images = np.vstack([self.images, np.asarray(image, dtype=float)[None, :]])
        self.params = np.append(self.params, param)
        return self.n - 1


@dataclass(frozen=True)
class EnergyReport:
    dirichlet: float
    area: float
    conformality_deficit: float


def dirichlet_energy(A: StiffnessMatrix, s: SurfaceMap) -> float:
    """Quadratic form ``(1/2) sum_k a_k^T A a_k``."""
    if s.n != A.n:
        raise DimensionMismatch(f"surface has {s.n} nodes, matrix has {A.n} rows")
    X = s.images
    return 0.5 * float(np.sum(X * (A.matrix @ X)))


def surface_gradients(mesh: DiskMesh, s: SurfaceMap, geometry=None):
    if s.n != mesh.n_nodes:
        raise DimensionMismatch(f"surface has {s.n} nodes, mesh has {mesh.n_nodes}")
    grads, areas = geometry if geometry is not None else element_gradients(mesh)
    X = s.images[mesh.elements]  # (M, 3, d)
    phi_u = np.einsum("ea,ead->ed", grads[..., 0], X)
    phi_v = np.einsum("ea,ead->ed", grads[..., 1], X)
    return phi_u, phi_v, areas


def dirichlet_energy_elementwise(mesh: DiskMesh, s: SurfaceMap, geometry=None) -> float:
    """Dirichlet energy integrated element by element from constant gradients."""
    phi_u, phi_v, areas = surface_gradients(mesh, s, geometry)
    dens = 0.5 * (np.einsum("ed,ed->e", phi_u, phi_u) + np.einsum("ed,ed->e", phi_v, phi_v))
    return float(dens @ areas)


def area_and_conformality(
    mesh: DiskMesh,
    s: SurfaceMap,
    geometry=None,
) -> EnergyReport:
    """Area, conformality deficit and Dirichlet energy of a P1 surface.

    The area density is ``|phi_u ^ phi_v|`` and the deficit density
    ``sqrt((|phi_u|^2 - |phi_v|^2)^2 + 4 (phi_u . phi_v)^2)``; both are
    constant per element. ``geometry`` may pass precomputed
    :func:`element_gradients` output.

    The Dirichlet energy is summed element by element. It equals the
    quadratic form but adds only non-negative terms, so it stays accurate
    to roundoff on meshes with very thin elements where ``x^T A x``
    suffers cancellation.
    """
    phi_u, phi_v, areas = surface_gradients(mesh, s, geometry)
    uu = np.einsum("ed,ed->e", phi_u, phi_u)
    vv = np.einsum("ed,ed->e", phi_v, phi_v)
    uv = np.einsum("ed,ed->e", phi_u, phi_v)
    wedge = np.sqrt(np.maximum(uu * vv - uv * uv, 0.0))
    deficit = np.sqrt((uu - vv) ** 2 + 4.0 * uv * uv)
    dirichlet = float(0.5 * (uu + vv) @ areas)
    return EnergyReport(dirichlet, float(wedge @ areas), float(deficit @ areas))
