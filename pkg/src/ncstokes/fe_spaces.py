"""Crouzeix-Raviart / Fortin-Soulie velocity spaces and discontinuous pressures.

All local basis functions are written in barycentric coordinates
``lam = (lambda_1, lambda_2, lambda_3)``; on the reference cell
``lambda_1 = 1 - xhat_1 - xhat_2``, ``lambda_2 = xhat_1``, ``lambda_3 = xhat_2``.

Local ordering per cell:

* CR:  ``psi_i = 1 - 2 lambda_i`` attached to local facet ``i``;
* FS:  3 vertex functions ``lambda_i (2 lambda_i - 1)``, 3 edge functions
  ``4 lambda_j lambda_k`` (edge opposite vertex ``i``), 1 bubble
  ``2 - 3 sum(lambda_i^2)``;
* P0:  the constant 1;  P1_disc: ``lambda_i``.

Scalar global numbering for FS is vertices, then facets, then cells.
Vector spaces are component-major: all first components, then all second.
"""
from dataclasses import dataclass
from enum import Enum

import numpy as np
import scipy.sparse as sp

from .quadrature import edge_gauss_rule

__all__ = [
    "ElementFamily",
    "BasisEval",
    "DofMap",
    "DiscreteFunction",
    "PRESSURE_FOR",
    "cr_basis",
    "fs_basis",
    "local_values",
    "local_lambda_derivatives",
    "physical_gradients",
    "build_dofmap",
    "evaluate_function",
    "facet_moment_matrix",
    "lam_from_xhat",
]

REF_GRAD_LAMBDA = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])


class ElementFamily(str, Enum):
    CR = "CR"
    FS = "FS"
    P0_disc = "P0_disc"
    P1_disc = "P1_disc"

    @property
    def n_local(self):
        return {"CR": 3, "FS": 7, "P0_disc": 1, "P1_disc": 3}[self.value]

    @property
    def degree(self):
        return {"CR": 1, "FS": 2, "P0_disc": 0, "P1_disc": 1}[self.value]


PRESSURE_FOR = {ElementFamily.CR: ElementFamily.P0_disc, ElementFamily.FS: ElementFamily.P1_disc}


def lam_from_xhat(xhat):
    xhat = np.asarray(xhat, dtype=float)
    return np.concatenate([1.0 - xhat.sum(axis=-1, keepdims=True), xhat], axis=-1)


def local_values(family, lam):
    """Values of all local basis functions, shape ``lam.shape[:-1] + (n_local,)``."""
    family = ElementFamily(family)
    l1, l2, l3 = lam[..., 0], lam[..., 1], lam[..., 2]
    if family is ElementFamily.CR:
        return 1.0 - 2.0 * lam
    if family is ElementFamily.FS:
        return np.stack(
            [
                l1 * (2 * l1 - 1), l2 * (2 * l2 - 1), l3 * (2 * l3 - 1),
                4 * l2 * l3, 4 * l3 * l1, 4 * l1 * l2,
                2.0 - 3.0 * (l1 * l1 + l2 * l2 + l3 * l3),
            ],
            axis=-1,
        )
    if family is ElementFamily.P0_disc:
        return np.ones(lam.shape[:-1] + (1,))
    return np.array(lam, dtype=float)


def local_lambda_derivatives(family, lam):
    """Partial derivatives w.r.t. each barycentric coordinate, shape ``(..., n_local, 3)``."""
    family = ElementFamily(family)
    shape = lam.shape[:-1]
    if family is ElementFamily.CR:
        return np.broadcast_to(-2.0 * np.eye(3), shape + (3, 3)).copy()
    if family is ElementFamily.P0_disc:
        return np.zeros(shape + (1, 3))
    if family is ElementFamily.P1_disc:
        return np.broadcast_to(np.eye(3), shape + (3, 3)).copy()
    d = np.zeros(shape + (7, 3))
    for i in range(3):
        j, k = (i + 1) % 3, (i + 2) % 3
        d[..., i, i] = 4.0 * lam[..., i] - 1.0
        d[..., 3 + i, j] = 4.0 * lam[..., k]
        d[..., 3 + i, k] = 4.0 * lam[..., j]
        d[..., 6, i] = -6.0 * lam[..., i]
    return d


def physical_gradients(mesh, family, lam, cells=None):
    """Physical gradients at shared barycentric points: ``(m, q, n_local, 2)``."""
    gl = mesh.grad_lambda if cells is None else mesh.grad_lambda[cells]
    dl = local_lambda_derivatives(family, lam)
    return np.einsum("qbk,mkd->mqbd", dl, gl)


@dataclass(frozen=True)
class BasisEval:
    values: np.ndarray  # (n_local,)
    gradients: np.ndarray  # (n_local, 2), w.r.t. reference coordinates

    def physical_gradients(self, Binv):
        """Chain rule ``grad = B^{-T} grad_hat``."""
        return self.gradients @ Binv


def _basis_eval(family, xhat):
    lam = lam_from_xhat(xhat)
    return BasisEval(
        local_values(family, lam), local_lambda_derivatives(family, lam) @ REF_GRAD_LAMBDA
    )


def cr_basis(xhat):
    return _basis_eval(ElementFamily.CR, xhat)


def fs_basis(xhat):
    return _basis_eval(ElementFamily.FS, xhat)


@dataclass(frozen=True, eq=False)
class DofMap:
    mesh: object
    family: ElementFamily
    cell_dofs: np.ndarray  # (C, n_local) scalar global indices
    dof_kind: np.ndarray  # (n_scalar,) of "vertex" | "facet" | "cell"
    boundary_mask: np.ndarray  # (total_dofs,)
    ncomp: int = 1

    @property
    def n_scalar(self):
        return len(self.dof_kind)

    @property
    def total_dofs(self):
        return self.ncomp * self.n_scalar

    @property
    def cell_to_global(self):
        """``(C, ncomp * n_local)`` global indices, component-major within a cell."""
        return np.concatenate(
            [self.cell_dofs + c * self.n_scalar for c in range(self.ncomp)], axis=1
        )

    @property
    def free_dofs(self):
        return np.flatnonzero(~self.boundary_mask)

    def vector(self, ncomp=2):
        return DofMap(
            self.mesh, self.family, self.cell_dofs, self.dof_kind,
            np.tile(self.boundary_mask[: self.n_scalar], ncomp), ncomp,
        )

    def scalar(self):
        return DofMap(
            self.mesh, self.family, self.cell_dofs, self.dof_kind,
            self.boundary_mask[: self.n_scalar], 1,
        )


def build_dofmap(mesh, family, ncomp=1):
    family = ElementFamily(family)
    nv, nf, nc = mesh.n_vertices, mesh.n_facets, mesh.n_cells
    if family is ElementFamily.CR:
        cell_dofs = mesh.cell_facets.copy()
        kind = np.full(nf, "facet")
        bmask = mesh.boundary_facets.copy()
    elif family is ElementFamily.FS:
        cell_dofs = np.concatenate(
            [mesh.cells, nv + mesh.cell_facets, (nv + nf + np.arange(nc))[:, None]], axis=1
        )
        kind = np.array(["vertex"] * nv + ["facet"] * nf + ["cell"] * nc)
        bmask = np.concatenate([mesh.boundary_vertices, mesh.boundary_facets, np.zeros(nc, bool)])
    elif family is ElementFamily.P0_disc:
        cell_dofs = np.arange(nc)[:, None]
        kind = np.full(nc, "cell")
        bmask = np.zeros(nc, dtype=bool)
    else:
        cell_dofs = np.arange(3 * nc).reshape(nc, 3)
        kind = np.full(3 * nc, "cell")
        bmask = np.zeros(3 * nc, dtype=bool)
    return DofMap(mesh, family, cell_dofs, kind, np.tile(bmask, ncomp), ncomp)


class DiscreteFunction:
    """A finite element function: dof map plus coefficient vector."""

    def __init__(self, dofmap, coefficients):
        coefficients = np.asarray(coefficients, dtype=float)
        if coefficients.shape != (dofmap.total_dofs,):
            raise ValueError(
                f"expected {dofmap.total_dofs} coefficients, got shape {coefficients.shape}"
            )
        self.dofmap = dofmap
        self.coefficients = coefficients

    def _local(self, cells):
        dm = self.dofmap
        c = self.coefficients.reshape(dm.ncomp, dm.n_scalar)
        return c[:, dm.cell_dofs[cells]]  # (ncomp, m, n_local)

    def sample(self, cells, xhat):
        """Values at reference points; ``(m, q)`` for scalars, ``(m, q, ncomp)`` otherwise."""
        cells = np.asarray(cells)
        phi = local_values(self.dofmap.family, lam_from_xhat(xhat))
        coef = self._local(cells)
        if phi.ndim == 2:
            v = np.einsum("qb,cmb->mqc", phi, coef)
        else:
            v = np.einsum("mqb,cmb->mqc", phi, coef)
        return v[..., 0] if self.dofmap.ncomp == 1 else v

    def sample_gradient(self, cells, xhat):
        """Physical gradients ``(m, q, ncomp, 2)`` at shared reference points."""
        cells = np.asarray(cells)
        G = physical_gradients(self.dofmap.mesh, self.dofmap.family, lam_from_xhat(xhat), cells)
        return np.einsum("mqbd,cmb->mqcd", G, self._local(cells))


def evaluate_function(dofmap, coefficients, cell, xhat):
    """Value of a discrete function at one reference point of one cell."""
    f = DiscreteFunction(dofmap, coefficients)
    v = f.sample(np.array([cell]), np.asarray(xhat, dtype=float).reshape(1, 2))
    return float(v[0, 0]) if dofmap.ncomp == 1 else v[0, 0].copy()


def facet_moment_matrix(dofmap, degree, n_points=3):
    """Sparse matrix of jump moments ``int_F [phi_j] q_r`` for every facet.

    Row ``f * (degree + 1) + r`` uses the Legendre polynomial ``q_r(2t - 1)``
    in the facet parameter ``t`` running from the facet's first to its second
    vertex.  On boundary facets the jump is the trace.  Columns are scalar dofs.
    """
    mesh = dofmap.mesh
    rule = edge_gauss_rule(n_points)
    t = rule.points
    qs = np.stack([np.polynomial.legendre.Legendre.basis(r)(2 * t - 1) for r in range(degree + 1)])
    rows, cols, vals = [], [], []
    for side, sign in ((0, 1.0), (1, -1.0)):
        facets = np.flatnonzero(mesh.facet_cells[:, side] >= 0)
        cells, xhat = mesh.facet_xhat(facets, side, t)
        phi = local_values(dofmap.family, lam_from_xhat(xhat))  # (m, q, nb)
        mom = sign * mesh.facet_length[facets, None, None] * np.einsum(
            "mqb,rq,q->mrb", phi, qs, rule.weights
        )
        r_idx = facets[:, None, None] * (degree + 1) + np.arange(degree + 1)[None, :, None]
        rows.append(np.broadcast_to(r_idx, mom.shape).ravel())
        cols.append(np.broadcast_to(dofmap.cell_dofs[cells][:, None, :], mom.shape).ravel())
        vals.append(mom.ravel())
    n_rows = mesh.n_facets * (degree + 1)
    return sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n_rows, dofmap.n_scalar),
    ).tocsr()
