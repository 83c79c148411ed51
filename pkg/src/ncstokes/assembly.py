"""Sparse assembly of the nonconforming Stokes saddle-point system."""
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import ConfigurationError
from .fe_spaces import (
    PRESSURE_FOR,
    ElementFamily,
    build_dofmap,
    local_values,
    physical_gradients,
)
from .interp import local_rt_projection, reference_rt
from .quadrature import triangle_rule

__all__ = [
    "SourceTerm",
    "SaddleSystem",
    "assemble_stiffness",
    "assemble_divergence",
    "assemble_rhs",
    "assemble_pressure_mass",
    "assemble_mean_constraint",
    "assemble_system",
    "saddle_matrix",
    "write_coo",
]

STIFFNESS_DEGREE = {ElementFamily.CR: 1, ElementFamily.FS: 2}
DIVERGENCE_DEGREE = 3
RHS_DEGREE = 8
RT_ORDER = {ElementFamily.CR: 0, ElementFamily.FS: 1}


@dataclass(frozen=True)
class SourceTerm:
    kind: str  # "gradient_of_potential" or "analytic"
    f: object
    potential: object = None

    @classmethod
    def gradient_of_potential(cls, potential, gradient):
        """``f = grad(potential)``; ``gradient`` is its analytic gradient."""
        return cls("gradient_of_potential", gradient, potential)

    @classmethod
    def analytic(cls, f):
        return cls("analytic", f)

    def __call__(self, x):
        return self.f(x)


def _coo(rows, cols, vals, shape):
    # duplicates are summed in a fixed order by the conversion, so repeated
    # assemblies are bit-identical
    return sp.coo_matrix((vals.ravel(), (rows.ravel(), cols.ravel())), shape=shape).tocsr()


def _check_velocity(dofmap):
    if dofmap.family not in (ElementFamily.CR, ElementFamily.FS) or dofmap.ncomp != 2:
        raise ConfigurationError("velocity dof map must be a vector CR or FS space")


def assemble_stiffness(mesh, velocity, nu=1.0):
    """``nu * sum_K int_K grad(phi_j) : grad(phi_i)``, block diagonal in components."""
    _check_velocity(velocity)
    if not nu > 0:
        raise ConfigurationError("nu must be positive")
    rule = triangle_rule(STIFFNESS_DEGREE[velocity.family])
    G = physical_gradients(mesh, velocity.family, rule.points)  # (C, q, nb, 2)
    local = np.einsum("c,q,cqad,cqbd->cab", nu * mesh.area, rule.weights, G, G)
    blocks = []
    for comp in range(2):
        dofs = velocity.cell_dofs + comp * velocity.n_scalar
        blocks.append((np.repeat(dofs[:, :, None], dofs.shape[1], 2),
                       np.repeat(dofs[:, None, :], dofs.shape[1], 1), local))
    rows = np.concatenate([b[0] for b in blocks])
    cols = np.concatenate([b[1] for b in blocks])
    vals = np.concatenate([b[2] for b in blocks])
    n = velocity.total_dofs
    return _coo(rows, cols, vals, (n, n))


def assemble_divergence(mesh, velocity, pressure):
    """Rows pressure dofs, columns velocity dofs: ``sum_K int_K div(phi_j) q_i``."""
    _check_velocity(velocity)
    if PRESSURE_FOR[velocity.family] is not pressure.family:
        raise ConfigurationError(
            f"incompatible pair {velocity.family.value}/{pressure.family.value}"
        )
    rule = triangle_rule(DIVERGENCE_DEGREE)
    G = physical_gradients(mesh, velocity.family, rule.points)  # (C, q, nb, 2)
    q = local_values(pressure.family, rule.points)  # (q, np)
    # local[c, i, comp, b] = int_K d_comp(phi_b) q_i
    local = np.einsum("c,q,qi,cqbd->cidb", mesh.area, rule.weights, q, G)
    nc, npl, _, nb = local.shape
    vdofs = np.stack([velocity.cell_dofs + c * velocity.n_scalar for c in range(2)], axis=1)
    rows = np.broadcast_to(pressure.cell_dofs[:, :, None, None], local.shape)
    cols = np.broadcast_to(vdofs[:, None, :, :], local.shape)
    return _coo(rows, cols, local, (pressure.total_dofs, velocity.total_dofs))


def assemble_pressure_mass(mesh, pressure):
    rule = triangle_rule(2)
    q = local_values(pressure.family, rule.points)
    local = np.einsum("c,q,qa,qb->cab", mesh.area, rule.weights, q, q)
    d = pressure.cell_dofs
    k = d.shape[1]
    rows = np.repeat(d[:, :, None], k, 2)
    cols = np.repeat(d[:, None, :], k, 1)
    return _coo(rows, cols, local, (pressure.total_dofs, pressure.total_dofs))


def assemble_mean_constraint(mesh, pressure):
    rule = triangle_rule(1)
    q = local_values(pressure.family, rule.points)
    local = np.einsum("c,q,qa->ca", mesh.area, rule.weights, q)
    out = np.zeros(pressure.total_dofs)
    np.add.at(out, pressure.cell_dofs, local)
    return out


def _rt_basis_images(mesh, family):
    """Reference RT coefficients of ``Pi(phi_b e_c)`` per cell: ``(C, nb, 2, dim)``.

    The physical field ``phi_b e_c`` pulls back to ``phi_b B^{-1} e_c``.
    """
    R = local_rt_projection(family, RT_ORDER[family])  # (nb, 2, dim)
    return np.einsum("cka,bkn->cban", mesh.Binv, R)


def assemble_rhs(mesh, velocity, source, projection="none"):
    """Load vector ``int f . phi_j`` or ``int f . Pi_RT(phi_j)`` (cellwise, degree 8)."""
    _check_velocity(velocity)
    if projection not in ("none", "rt"):
        raise ConfigurationError(f"unknown projection {projection!r}")
    rule = triangle_rule(RHS_DEGREE)
    cells = np.arange(mesh.n_cells)
    fv = np.asarray(source(mesh.map_to_physical(cells, rule.xhat)), dtype=float)  # (C, q, 2)
    if not np.all(np.isfinite(fv)):
        raise FloatingPointError("source returned non-finite values")
    if projection == "none":
        phi = local_values(velocity.family, rule.points)  # (q, nb)
        local = np.einsum("c,q,qb,cqd->cdb", mesh.area, rule.weights, phi, fv)
    else:
        ref = reference_rt(RT_ORDER[velocity.family])
        g = np.einsum("cki,cqk->cqi", mesh.B, fv)  # B^T f
        s = np.einsum("q,qnk,cqk->cn", rule.weights, ref.basis_values(rule.xhat), g)
        coef = _rt_basis_images(mesh, velocity.family)  # (C, nb, 2, dim)
        local = mesh.area[:, None, None] * np.einsum("cbdn,cn->cdb", coef, s)
    out = np.zeros(velocity.total_dofs)
    for comp in range(2):
        np.add.at(out, velocity.cell_dofs + comp * velocity.n_scalar, local[:, comp])
    return out


@dataclass(eq=False)
class SaddleSystem:
    """Saddle-point blocks restricted to interior velocity dofs.

    ``A`` is ``nu``-scaled; ``B`` has pressure rows; ``rhs`` maps a projection
    name to its load vector.  ``free`` lists the interior velocity dofs.
    """

    A: object
    B: object
    M_p: object
    m: np.ndarray
    rhs: dict
    nu: float
    velocity: object
    pressure: object
    free: np.ndarray

    @property
    def rhs_u(self):
        return next(iter(self.rhs.values()))

    @property
    def n_velocity(self):
        return self.A.shape[0]

    @property
    def n_pressure(self):
        return self.B.shape[0]


def assemble_system(mesh, element, nu, source=None, projections=("none",)):
    """Assemble blocks and load vectors for ``element`` in {"CR", "FS"}."""
    try:
        family = ElementFamily(getattr(element, "value", element).upper())
    except ValueError:
        raise ConfigurationError(f"unknown element {element!r}") from None
    if family not in PRESSURE_FOR:
        raise ConfigurationError(f"{family.value} is not a velocity element")
    velocity = build_dofmap(mesh, family, ncomp=2)
    pressure = build_dofmap(mesh, PRESSURE_FOR[family])
    free = velocity.free_dofs
    A = assemble_stiffness(mesh, velocity, nu)[free][:, free]
    B = assemble_divergence(mesh, velocity, pressure)[:, free]
    rhs = {}
    for proj in projections:
        if source is None:
            rhs[proj] = np.zeros(len(free))
        else:
            rhs[proj] = assemble_rhs(mesh, velocity, source, proj)[free]
    return SaddleSystem(
        A.tocsr(), B.tocsr(), assemble_pressure_mass(mesh, pressure),
        assemble_mean_constraint(mesh, pressure), rhs, float(nu), velocity, pressure, free,
    )


def saddle_matrix(system):
    """Symmetric bordered matrix ``[[A, -B^T, 0], [-B, 0, m], [0, m^T, 0]]``."""
    m = sp.csr_matrix(system.m[:, None])
    return sp.bmat(
        [
            [system.A, -system.B.T, None],
            [-system.B, None, m],
            [None, m.T, None],
        ],
        format="csc",
    )


def write_coo(matrix, path):
    """Write ``row col value`` lines (0-based, 17 significant digits)."""
    coo = sp.coo_matrix(matrix)
    order = np.lexsort((coo.col, coo.row))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# {coo.shape[0]} {coo.shape[1]} {coo.nnz}\n")
        for r, c, v in zip(coo.row[order], coo.col[order], coo.data[order]):
            fh.write(f"{r} {c} {v:.17g}\n")
