"""Conforming triangulations with cell/facet/vertex connectivity.

Conventions
-----------
* cells are stored counterclockwise; local facet ``i`` of a cell is the one
  opposite its local vertex ``i``.
* ``facet_cells[f] = (left, right)`` with ``left < right``; ``right == -1``
  marks a boundary facet.  ``facet_normal[f]`` is the unit normal pointing out
  of the left cell, so the jump of ``v`` across ``f`` is ``v|_left - v|_right``.
* the affine map of a cell sends the reference vertices (0,0), (1,0), (0,1)
  to the cell vertices in storage order: ``x = B @ xhat + b``.
"""
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Mesh",
    "Vertex",
    "Cell",
    "Facet",
    "AffineMap",
    "MeshStats",
    "DegenerateCellError",
    "build_structured_unit_square",
    "mesh_stats",
    "write_mesh",
    "read_mesh",
]

_AREA_TOL = 1e-14


class DegenerateCellError(ValueError):
    pass


@dataclass(frozen=True)
class Vertex:
    id: int
    coords: tuple
    on_boundary: bool


@dataclass(frozen=True)
class Cell:
    id: int
    vertex_ids: tuple
    facet_ids: tuple
    area: float
    diameter: float
    inradius: float

    @property
    def sigma(self):
        return self.diameter / self.inradius


@dataclass(frozen=True)
class Facet:
    id: int
    vertex_ids: tuple
    left_cell: int
    right_cell: object  # int or None
    normal: tuple
    barycenter: tuple
    length: float

    @property
    def is_boundary(self):
        return self.right_cell is None


@dataclass(frozen=True)
class AffineMap:
    matrix: np.ndarray
    offset: np.ndarray
    determinant: float

    def __call__(self, xhat):
        return np.asarray(xhat) @ self.matrix.T + self.offset

    def inverse(self, x):
        return np.linalg.solve(self.matrix, (np.asarray(x) - self.offset).T).T


@dataclass(frozen=True)
class MeshStats:
    h_max: float
    h_grid: object  # float for structured meshes, None otherwise
    sigma: float
    n_theta: int


def _readonly(*arrays):
    for a in arrays:
        a.setflags(write=False)


class Mesh:
    """Immutable triangulation built from vertex coordinates and cell triples."""

    def __init__(self, vertices, cells, h_grid=None):
        vertices = np.array(vertices, dtype=float)
        cells = np.array(cells, dtype=np.int64)
        if vertices.ndim != 2 or vertices.shape[1] != 2:
            raise ValueError("vertices must have shape (V, 2)")
        if cells.ndim != 2 or cells.shape[1] != 3:
            raise ValueError("cells must have shape (C, 3)")
        if not np.all(np.isfinite(vertices)):
            raise ValueError("vertex coordinates must be finite")
        self.vertices = vertices
        self.cells = cells
        self.h_grid = h_grid

        p = vertices[cells]  # (C, 3, 2)
        B = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=-1)
        J = B[:, 0, 0] * B[:, 1, 1] - B[:, 0, 1] * B[:, 1, 0]
        bad = np.flatnonzero(J <= 2 * _AREA_TOL)
        if bad.size:
            raise DegenerateCellError(
                f"cell {bad[0]} is degenerate or clockwise (signed area {0.5 * J[bad[0]]:.3e})"
            )
        self.B = B
        self.b = p[:, 0].copy()
        self.J = J
        self.area = 0.5 * J
        self.Binv = np.linalg.inv(B)
        # grad(lambda_i) is constant per cell; lambda_2, lambda_3 are xhat_1, xhat_2
        g = np.empty((len(cells), 3, 2))
        g[:, 1] = self.Binv[:, 0, :]
        g[:, 2] = self.Binv[:, 1, :]
        g[:, 0] = -g[:, 1] - g[:, 2]
        self.grad_lambda = g

        edge_len = np.stack(
            [np.linalg.norm(p[:, (i + 2) % 3] - p[:, (i + 1) % 3], axis=1) for i in range(3)],
            axis=1,
        )
        self.cell_diameter = edge_len.max(axis=1)
        self.cell_inradius = 2.0 * self.area / edge_len.sum(axis=1)
        self.cell_centroid = p.mean(axis=1)

        self._build_facets(edge_len)
        _readonly(
            self.vertices, self.cells, self.B, self.b, self.J, self.area, self.Binv,
            self.grad_lambda, self.cell_diameter, self.cell_inradius, self.cell_centroid,
            self.facets, self.facet_cells, self.facet_local, self.cell_facets,
            self.facet_normal, self.facet_length, self.facet_midpoint,
            self.boundary_facets, self.boundary_vertices, self.cell_normals,
        )

    def _build_facets(self, edge_len):
        cells = self.cells
        nc = len(cells)
        local = np.stack(
            [np.stack([cells[:, (i + 1) % 3], cells[:, (i + 2) % 3]], axis=1) for i in range(3)],
            axis=1,
        )  # (C, 3, 2)
        edges = np.sort(local.reshape(-1, 2), axis=1)
        facets, inverse, counts = np.unique(edges, axis=0, return_inverse=True, return_counts=True)
        inverse = inverse.ravel()
        if counts.max() > 2:
            raise ValueError("non-manifold mesh: a facet is shared by more than two cells")
        nf = len(facets)
        occ = np.arange(3 * nc)
        order = np.lexsort((occ, inverse))
        first = np.searchsorted(inverse[order], np.arange(nf))
        facet_cells = np.full((nf, 2), -1, dtype=np.int64)
        facet_local = np.full((nf, 2), -1, dtype=np.int64)
        o1 = order[first]
        facet_cells[:, 0] = o1 // 3
        facet_local[:, 0] = o1 % 3
        inner = counts == 2
        o2 = order[first[inner] + 1]
        facet_cells[inner, 1] = o2 // 3
        facet_local[inner, 1] = o2 % 3

        self.facets = facets
        self.facet_cells = facet_cells
        self.facet_local = facet_local
        self.cell_facets = inverse.reshape(nc, 3)

        a = self.vertices[facets[:, 0]]
        t = self.vertices[facets[:, 1]] - a
        length = np.linalg.norm(t, axis=1)
        n = np.stack([t[:, 1], -t[:, 0]], axis=1) / length[:, None]
        mid = a + 0.5 * t
        flip = np.einsum("ij,ij->i", n, mid - self.cell_centroid[facet_cells[:, 0]]) < 0
        n[flip] *= -1
        self.facet_normal = n
        self.facet_length = length
        self.facet_midpoint = mid
        self.boundary_facets = ~inner
        bv = np.zeros(len(self.vertices), dtype=bool)
        bv[facets[self.boundary_facets].ravel()] = True
        self.boundary_vertices = bv
        # outward normal of each local facet scaled by its length: -2|K| grad(lambda_i)
        self.cell_normals = -2.0 * self.area[:, None, None] * self.grad_lambda

    # -- sizes -----------------------------------------------------------
    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_cells(self):
        return len(self.cells)

    @property
    def n_facets(self):
        return len(self.facets)

    @property
    def interior_facets(self):
        return ~self.boundary_facets

    # -- entity views ----------------------------------------------------
    def vertex(self, i):
        return Vertex(int(i), tuple(self.vertices[i]), bool(self.boundary_vertices[i]))

    def cell(self, l):
        return Cell(
            int(l), tuple(int(v) for v in self.cells[l]), tuple(int(f) for f in self.cell_facets[l]),
            float(self.area[l]), float(self.cell_diameter[l]), float(self.cell_inradius[l]),
        )

    def facet(self, f):
        right = int(self.facet_cells[f, 1])
        return Facet(
            int(f), tuple(int(v) for v in self.facets[f]), int(self.facet_cells[f, 0]),
            None if right < 0 else right, tuple(self.facet_normal[f]),
            tuple(self.facet_midpoint[f]), float(self.facet_length[f]),
        )

    # -- geometry --------------------------------------------------------
    def affine_map(self, l):
        return AffineMap(self.B[l].copy(), self.b[l].copy(), float(self.J[l]))

    def inverse_map(self, l, x):
        """Reference coordinates of physical point(s) ``x`` w.r.t. cell ``l``."""
        return (np.asarray(x, dtype=float) - self.b[l]) @ self.Binv[l].T

    def barycentric_coords(self, l, x):
        """Barycentric coordinates ``(lambda_1, lambda_2, lambda_3)`` of ``x`` in cell ``l``.

        Uses ``lambda_j(x) = (x_j - x) . S_j / (2 |K|)`` where ``x_j`` is the
        barycentre of the facet opposite vertex ``j`` and ``S_j`` its scaled
        outward normal.
        """
        x = np.asarray(x, dtype=float)
        fac_bary = self.facet_midpoint[self.cell_facets[l]]  # (3, 2)
        S = self.cell_normals[l]
        return np.einsum("...jk,jk->...j", fac_bary - x[..., None, :], S) / (2.0 * self.area[l])

    def map_to_physical(self, cells, xhat):
        """Map reference points to physical space for each cell in ``cells``.

        ``xhat`` is ``(q, 2)`` (shared) or ``(m, q, 2)`` (per cell); returns ``(m, q, 2)``.
        """
        cells = np.asarray(cells)
        B = self.B[cells]
        if xhat.ndim == 2:
            return np.einsum("mij,qj->mqi", B, xhat) + self.b[cells][:, None, :]
        return np.einsum("mij,mqj->mqi", B, xhat) + self.b[cells][:, None, :]

    def facet_xhat(self, facets, side, t):
        """Reference coordinates of facet points seen from one adjacent cell.

        ``t`` parametrizes each facet from its first to its second vertex.
        Returns ``(cells, xhat)`` with ``xhat`` of shape ``(m, q, 2)``.
        """
        facets = np.asarray(facets)
        cells = self.facet_cells[facets, side]
        if np.any(cells < 0):
            raise ValueError("requested side does not exist for some facets")
        i = self.facet_local[facets, side]
        lam = np.zeros((len(facets), len(t), 3))
        j = (i + 1) % 3
        k = (i + 2) % 3
        forward = self.cells[cells, j] == self.facets[facets, 0]
        s = np.where(forward[:, None], t[None, :], 1.0 - t[None, :])
        rows = np.arange(len(facets))[:, None]
        q = np.arange(len(t))[None, :]
        lam[rows, q, j[:, None]] = 1.0 - s
        lam[rows, q, k[:, None]] = s
        return cells, lam[..., 1:]

    def local_facet_lambda(self, i, t):
        """Barycentric coordinates of points on local facet ``i`` of any cell.

        The facet is traversed from local vertex ``i+1`` to ``i+2``.
        """
        lam = np.zeros((len(t), 3))
        lam[:, (i + 1) % 3] = 1.0 - t
        lam[:, (i + 2) % 3] = t
        return lam


def build_structured_unit_square(n):
    """Uniform ``n x n`` grid of the unit square, each square cut along its
    (i/n, j/n) -- ((i+1)/n, (j+1)/n) diagonal."""
    n = int(n)
    if n < 1:
        raise ValueError("n must be >= 1")
    s = np.linspace(0.0, 1.0, n + 1)
    X, Y = np.meshgrid(s, s)  # vertex (i, j) -> j * (n + 1) + i
    vertices = np.stack([X.ravel(), Y.ravel()], axis=1)
    i, j = np.meshgrid(np.arange(n), np.arange(n))
    i, j = i.ravel(), j.ravel()
    v00 = j * (n + 1) + i
    v10 = v00 + 1
    v01 = v00 + n + 1
    v11 = v01 + 1
    lower = np.stack([v00, v10, v11], axis=1)
    upper = np.stack([v00, v11, v01], axis=1)
    cells = np.stack([lower, upper], axis=1).reshape(-1, 3)
    return Mesh(vertices, cells, h_grid=1.0 / n)


def mesh_stats(mesh):
    counts = np.bincount(mesh.cells.ravel(), minlength=mesh.n_vertices)
    return MeshStats(
        h_max=float(mesh.cell_diameter.max()),
        h_grid=mesh.h_grid,
        sigma=float((mesh.cell_diameter / mesh.cell_inradius).max()),
        n_theta=int(counts.max()),
    )


def write_mesh(mesh, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"vertices {mesh.n_vertices} cells {mesh.n_cells}\n")
        for x, y in mesh.vertices:
            fh.write(f"{x:.17g} {y:.17g}\n")
        for a, b, c in mesh.cells:
            fh.write(f"{a} {b} {c}\n")


def read_mesh(path):
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 4 or header[0] != "vertices" or header[2] != "cells":
            raise ValueError(f"bad mesh header in {path}")
        nv, nc = int(header[1]), int(header[3])
        rows = [line.split() for line in fh if line.strip()]
    if len(rows) != nv + nc:
        raise ValueError(f"expected {nv + nc} data lines, found {len(rows)}")
    vertices = np.array(rows[:nv], dtype=float)
    cells = np.array(rows[nv:], dtype=np.int64)
    return Mesh(vertices, cells)
