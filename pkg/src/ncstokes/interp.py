"""Interpolation operators: Crouzeix-Raviart, Fortin-Soulie, Raviart-Thomas.

Fields passed to the operators are either a :class:`DiscreteFunction` or a
callable ``f(x)`` taking points with a trailing axis of length 2 and
returning values with the same leading shape (plus a trailing axis of
length 2 for vector fields).  Discrete functions are treated as broken
fields: facet moments use the average of the two cell traces.
"""
from dataclasses import dataclass

import numpy as np

from .fe_spaces import (
    DiscreteFunction,
    ElementFamily,
    lam_from_xhat,
    local_values,
    physical_gradients,
)
from .quadrature import edge_gauss_rule, triangle_rule

__all__ = [
    "Sampler",
    "as_sampler",
    "facet_means",
    "interpolate_cr",
    "ScottZhangSelection",
    "scott_zhang_selection",
    "interpolate_fs",
    "interpolate_fs_scalar",
    "fs_bubble_moment_reference",
    "ReferenceRT",
    "reference_rt",
    "RTField",
    "interpolate_rt",
    "interpolate_rt0",
    "interpolate_rt1",
    "rt0_basis_closed_form",
    "local_rt_projection",
    "rhs_projection_pairing",
]

FACET_RULE = edge_gauss_rule(3)


class Sampler:
    """Uniform ``(cells, xhat) -> values`` view of a field.

    Values always carry a trailing component axis: ``(m, q, ncomp)``.
    """

    def __init__(self, fn, ncomp, broken):
        self._fn = fn
        self.ncomp = ncomp
        self.broken = broken

    def __call__(self, cells, xhat):
        v = np.asarray(self._fn(np.asarray(cells), xhat), dtype=float)
        if self.ncomp == 1:
            v = v[..., None]
        if not np.all(np.isfinite(v)):
            raise FloatingPointError("field returned non-finite samples")
        return v


def as_sampler(field, mesh):
    if isinstance(field, Sampler):
        return field
    if isinstance(field, DiscreteFunction):
        return Sampler(field.sample, field.dofmap.ncomp, broken=True)
    if not callable(field):
        raise TypeError("field must be a DiscreteFunction or a callable f(x)")
    probe = np.asarray(field(np.array([[0.25, 0.25]])), dtype=float)
    ncomp = 2 if probe.ndim == 2 and probe.shape[-1] == 2 else 1

    def fn(cells, xhat):
        x = mesh.map_to_physical(cells, xhat)
        return np.broadcast_to(field(x), x.shape[:-1] + ((2,) if ncomp == 2 else ()))

    return Sampler(fn, ncomp, broken=False)


def _facet_samples(sampler, mesh, facets, t):
    """``{v}`` at facet points ``t`` (first to second vertex): ``(m, q, ncomp)``."""
    cells, xhat = mesh.facet_xhat(facets, 0, t)
    v = sampler(cells, xhat)
    if not sampler.broken:
        return v
    inner = mesh.facet_cells[facets, 1] >= 0
    if np.any(inner):
        fi = facets[inner]
        cells_r, xhat_r = mesh.facet_xhat(fi, 1, t)
        v = v.copy()
        v[inner] = 0.5 * (v[inner] + sampler(cells_r, xhat_r))
    return v


def facet_means(field, mesh):
    """``(1/|F|) int_F {v}`` for every facet, shape ``(F, ncomp)``."""
    s = as_sampler(field, mesh)
    v = _facet_samples(s, mesh, np.arange(mesh.n_facets), FACET_RULE.points)
    return np.einsum("fqc,q->fc", v, FACET_RULE.weights)


def interpolate_cr(field, mesh):
    """Crouzeix-Raviart interpolant: coefficient at each facet is the facet mean.

    Returns component-major coefficients of length ``ncomp * n_facets``.
    """
    return facet_means(field, mesh).T.ravel()


# ---------------------------------------------------------------------------
# Fortin-Soulie
# ---------------------------------------------------------------------------

_P2_MASS_REF = None


def _p2_mass_reference():
    """Mass matrix of the 6 local P2 Lagrange functions on a unit-area cell."""
    global _P2_MASS_REF
    if _P2_MASS_REF is None:
        rule = triangle_rule(4)
        phi = local_values(ElementFamily.FS, rule.points)[:, :6]
        _P2_MASS_REF = np.einsum("q,qa,qb->ab", rule.weights, phi, phi)
    return _P2_MASS_REF


@dataclass(frozen=True)
class ScottZhangSelection:
    cells: np.ndarray  # (V,) chosen cell per vertex
    local_index: np.ndarray  # (V,) local vertex position j_i in that cell
    weights: np.ndarray  # (V, 6) coefficients of the dual function in the local nodal basis

    def dual_function(self, mesh, i, lam):
        """Values of the dual basis function attached to vertex ``i``."""
        phi = local_values(ElementFamily.FS, lam)[..., :6]
        return phi @ self.weights[i]


def scott_zhang_selection(mesh):
    """Pick the lowest-index cell around each vertex and its L2 dual basis."""
    nv = mesh.n_vertices
    chosen = np.full(nv, np.iinfo(np.int64).max, dtype=np.int64)
    owner = np.repeat(np.arange(mesh.n_cells), 3)
    np.minimum.at(chosen, mesh.cells.ravel(), owner)
    local = np.argmax(mesh.cells[chosen] == np.arange(nv)[:, None], axis=1)
    minv = np.linalg.inv(_p2_mass_reference())
    weights = minv[local] / mesh.area[chosen, None]
    return ScottZhangSelection(chosen, local, weights)


def _scott_zhang_values(sampler, mesh, sel, rule):
    v = sampler(sel.cells, rule.xhat)  # (V, q, ncomp)
    phi = local_values(ElementFamily.FS, rule.points)[:, :6]
    moments = mesh.area[sel.cells, None, None] * np.einsum("q,qb,vqc->vbc", rule.weights, phi, v)
    return np.einsum("vb,vbc->vc", sel.weights, moments)


def _fs_lagrange_part(sampler, mesh, rule):
    sel = scott_zhang_selection(mesh)
    vs = _scott_zhang_values(sampler, mesh, sel, rule)  # (V, ncomp)
    vf = np.einsum(
        "fqc,q->fc",
        _facet_samples(sampler, mesh, np.arange(mesh.n_facets), FACET_RULE.points),
        FACET_RULE.weights,
    )
    vf_tilde = 1.5 * vf - 0.25 * (vs[mesh.facets[:, 0]] + vs[mesh.facets[:, 1]])
    return vs, vf_tilde


def _assemble_fs(mesh, vs, vf, vk):
    return np.concatenate([vs, vf, vk], axis=0).T.ravel()


def interpolate_fs_scalar(field, mesh, rule_degree=8):
    """Scalar Fortin-Soulie interpolant; bubble fixed by the cell mean."""
    s = as_sampler(field, mesh)
    rule = triangle_rule(rule_degree)
    vs, vf = _fs_lagrange_part(s, mesh, rule)
    phi = local_values(ElementFamily.FS, rule.points)  # (q, 7)
    coef = np.concatenate([vs[mesh.cells], vf[mesh.cell_facets]], axis=1)  # (C, 6, ncomp)
    mean_tilde = np.einsum("q,qb,cbk->ck", rule.weights, phi[:, :6], coef)
    mean_v = np.einsum("q,cqk->ck", rule.weights, s(np.arange(mesh.n_cells), rule.xhat))
    bubble_mean = rule.weights @ phi[:, 6]
    vk = (mean_v - mean_tilde) / bubble_mean
    return _assemble_fs(mesh, vs, vf, vk)


def fs_bubble_moment_reference(degree=2):
    """``int_Khat xhat_d grad(phi_K)`` on the reference cell, rows indexed by d."""
    rule = triangle_rule(degree)
    lam = rule.points
    grad = np.einsum("qk,kd->qd", -6.0 * lam, np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]]))
    return 0.5 * np.einsum("q,qa,qd->ad", rule.weights, rule.xhat, grad)


def _div_xhat_moments(sampler, mesh, rule):
    """``int_K xhat_d div v`` per cell by integration by parts on each cell."""
    nc = mesh.n_cells
    cells = np.arange(nc)
    erule = edge_gauss_rule(5)
    t = erule.points
    out = np.zeros((nc, 2))
    for i in range(3):
        lam = mesh.local_facet_lambda(i, t)
        xh = lam[:, 1:]
        v = sampler(cells, xh)  # (C, q, 2)
        vn = np.einsum("cqk,ck->cq", v, mesh.cell_normals[:, i])
        out += np.einsum("q,qa,cq->ca", erule.weights, xh, vn)
    v = sampler(cells, rule.xhat)
    out -= mesh.area[:, None] * np.einsum("q,cqk,cak->ca", rule.weights, v, mesh.Binv)
    return out


def interpolate_fs(field, mesh, div=None, rule_degree=8):
    """Vector Fortin-Soulie interpolant.

    Vertex values come from the Scott-Zhang dual basis, edge values from the
    facet means of ``{v}``, and each cell's bubble vector enforces
    ``int_K xhat_d div(Pi v) = int_K xhat_d div(v)`` for ``d = 1, 2``.
    The right-hand side uses ``div`` (callable of x) when given, otherwise
    integration by parts with the cell traces of ``v``.

    Returns component-major coefficients of length ``2 * (V + F + C)``.
    """
    s = as_sampler(field, mesh)
    if s.ncomp != 2:
        raise ValueError("interpolate_fs expects a vector field")
    rule = triangle_rule(rule_degree)
    vs, vf = _fs_lagrange_part(s, mesh, rule)

    if div is None:
        target = _div_xhat_moments(s, mesh, rule)
    else:
        x = mesh.map_to_physical(np.arange(mesh.n_cells), rule.xhat)
        target = mesh.area[:, None] * np.einsum("q,qa,cq->ca", rule.weights, rule.xhat, div(x))

    r4 = triangle_rule(4)
    G = physical_gradients(mesh, ElementFamily.FS, r4.points)  # (C, q, 7, 2)
    coef = np.concatenate([vs[mesh.cells], vf[mesh.cell_facets]], axis=1)  # (C, 6, 2)
    div_tilde = np.einsum("cqbk,cbk->cq", G[:, :, :6, :], coef)
    target = target - mesh.area[:, None] * np.einsum("q,qa,cq->ca", r4.weights, r4.xhat, div_tilde)
    bubble = mesh.area[:, None, None] * np.einsum("q,qa,cqk->cak", r4.weights, r4.xhat, G[:, :, 6, :])
    vk = np.linalg.solve(bubble, target[..., None])[..., 0]
    return _assemble_fs(mesh, vs, vf, vk)


# ---------------------------------------------------------------------------
# Raviart-Thomas
# ---------------------------------------------------------------------------

_REF_FACET_NORMALS = np.array([[1.0, 1.0], [-1.0, 0.0], [0.0, -1.0]])
_REF_FACET_NORMALS[0] /= np.sqrt(2.0)
_REF_FACET_LENGTHS = np.array([np.sqrt(2.0), 1.0, 1.0])


class ReferenceRT:
    """RT_k on the reference cell in monomial form.

    * k = 0: ``v = d + beta x``, coefficients ``(d1, d2, beta)``;
    * k = 1: ``v = A x + (b . x) x + d``, coefficients
      ``(A11, A12, A21, A22, b1, b2, d1, d2)``.

    Degrees of freedom are the facet moments ``int v.n q_r`` (``q_r`` Legendre
    in the facet parameter running from local vertex ``i+1`` to ``i+2``) and,
    for k = 1, the two cell moments ``int v``.
    """

    def __init__(self, order, cell_rule_degree=6):
        if order not in (0, 1):
            raise ValueError("only RT0 and RT1 are supported")
        self.order = order
        self.dim = 3 if order == 0 else 8
        self.cell_rule = triangle_rule(cell_rule_degree)
        t = FACET_RULE.points
        self._legendre = np.stack(
            [np.polynomial.legendre.Legendre.basis(r)(2 * t - 1) for r in range(order + 1)]
        )
        self.facet_xhat = np.stack([self._facet_lambda(i, t)[:, 1:] for i in range(3)])
        # rows: degrees of freedom, columns: monomial basis vectors
        self.matrix = self.moments(lambda xh: self.basis_values(xh)).T
        inv = np.linalg.inv(self.matrix)
        if not np.all(np.isfinite(inv)):
            raise np.linalg.LinAlgError("singular reference RT moment system")
        self.inverse = inv

    @staticmethod
    def _facet_lambda(i, t):
        lam = np.zeros((len(t), 3))
        lam[:, (i + 1) % 3] = 1.0 - t
        lam[:, (i + 2) % 3] = t
        return lam

    def basis_values(self, xhat):
        """Monomial basis vectors at ``xhat``: ``xhat.shape[:-1] + (dim, 2)``."""
        x1, x2 = xhat[..., 0], xhat[..., 1]
        z, o = np.zeros_like(x1), np.ones_like(x1)
        if self.order == 0:
            cols = [(o, z), (z, o), (x1, x2)]
        else:
            cols = [
                (x1, z), (x2, z), (z, x1), (z, x2),
                (x1 * x1, x1 * x2), (x1 * x2, x2 * x2),
                (o, z), (z, o),
            ]
        return np.stack([np.stack(c, axis=-1) for c in cols], axis=-2)

    def basis_divergence(self, xhat):
        x1, x2 = xhat[..., 0], xhat[..., 1]
        z, o = np.zeros_like(x1), np.ones_like(x1)
        if self.order == 0:
            return np.stack([z, z, 2 * o], axis=-1)
        return np.stack([o, z, z, o, 3 * x1, 3 * x2, z, z], axis=-1)

    def moments(self, sample_facets, sample_cell=None):
        """Apply the degrees of freedom.

        ``sample_facets(xhat)`` is evaluated on ``(3, q, 2)`` facet points
        and ``sample_cell`` (defaults to the same callable) on the cell rule;
        both return values with a trailing axis of 2 and any batch axes
        between (e.g. ``(3, q, ..., 2)``).  Returns ``(..., dim)``.
        """
        sample_cell = sample_facets if sample_cell is None else sample_cell
        vf = sample_facets(self.facet_xhat)  # (3, q, *batch, 2)
        vn = np.einsum("fq...k,fk->fq...", vf, _REF_FACET_NORMALS)
        fm = np.einsum("f,rq,q,fq...->...fr", _REF_FACET_LENGTHS, self._legendre,
                       FACET_RULE.weights, vn)
        fm = fm.reshape(fm.shape[:-2] + (-1,))
        if self.order == 0:
            return fm
        vc = sample_cell(self.cell_rule.xhat)  # (q, *batch, 2)
        cm = 0.5 * np.einsum("q,q...k->...k", self.cell_rule.weights, vc)
        return np.concatenate([fm, cm], axis=-1)

    def evaluate(self, coeffs, xhat):
        """``coeffs`` ``(..., dim)`` at shared points ``(q, 2)`` -> ``(..., q, 2)``."""
        return np.einsum("...n,qnk->...qk", coeffs, self.basis_values(xhat))


_REF_RT = {}


def reference_rt(order):
    if order not in _REF_RT:
        _REF_RT[order] = ReferenceRT(order)
    return _REF_RT[order]


@dataclass(frozen=True, eq=False)
class RTField:
    """Per-cell RT_k field ``v|_K(x) = B_K w_K(T_K^{-1} x)`` with ``w_K`` in
    reference monomial form (``coeffs``, shape ``(C, dim)``)."""

    order: int
    mesh: object
    coeffs: np.ndarray

    @property
    def reference(self):
        return reference_rt(self.order)

    def evaluate(self, cells, xhat):
        """Physical vector values ``(m, q, 2)`` at reference points."""
        cells = np.asarray(cells)
        ref = self.reference
        if xhat.ndim == 2:
            w = np.einsum("mn,qnk->mqk", self.coeffs[cells], ref.basis_values(xhat))
        else:
            w = np.einsum("mn,mqnk->mqk", self.coeffs[cells], ref.basis_values(xhat))
        return np.einsum("mij,mqj->mqi", self.mesh.B[cells], w)

    def divergence(self, cells, xhat):
        """Physical divergence; equals the reference divergence of ``w_K``."""
        cells = np.asarray(cells)
        d = self.reference.basis_divergence(xhat)
        if xhat.ndim == 2:
            return np.einsum("mn,qn->mq", self.coeffs[cells], d)
        return np.einsum("mn,mqn->mq", self.coeffs[cells], d)

    def facet_fluxes(self):
        """Outward normal fluxes ``int_{F_i} v . n`` per cell and local facet ``(C, 3)``."""
        ref = self.reference
        fm = self.coeffs @ ref.matrix.T
        step = ref.order + 1
        return self.mesh.J[:, None] * fm[:, 0 : 3 * step : step]

    def physical_coefficients(self):
        """``(A, b, d)`` with ``v|_K(x) = A x + (b . x) x + d`` in physical coordinates."""
        c = self.coeffs
        nc = len(c)
        if self.order == 0:
            Ah = c[:, 2, None, None] * np.eye(2)
            bh = np.zeros((nc, 2))
            dh = c[:, :2]
        else:
            Ah = c[:, :4].reshape(nc, 2, 2)
            bh = c[:, 4:6]
            dh = c[:, 6:8]
        B, Binv, x0 = self.mesh.B, self.mesh.Binv, self.mesh.b
        # w(xh) = Ah xh + (bh.xh) xh + dh with xh = Binv (x - x0); v = B w
        BA = np.einsum("cij,cjk,ckl->cil", B, Ah, Binv)
        cvec = np.einsum("cji,cj->ci", Binv, bh)  # Binv^T bh
        cx0 = np.einsum("ci,ci->c", cvec, x0)
        A = BA - cx0[:, None, None] * np.eye(2) - np.einsum("ci,cj->cij", x0, cvec)
        d = (
            -np.einsum("cij,cj->ci", BA, x0)
            + cx0[:, None] * x0
            + np.einsum("cij,cj->ci", B, dh)
        )
        return A, cvec, d


def interpolate_rt(field, mesh, order):
    """Raviart-Thomas interpolant of order 0 or 1 (facet moments of ``{v . n}``)."""
    s = as_sampler(field, mesh)
    if s.ncomp != 2:
        raise ValueError("Raviart-Thomas interpolation needs a vector field")
    ref = reference_rt(order)
    nc = mesh.n_cells
    cells = np.arange(nc)
    Binv = mesh.Binv

    def facet_values(xh):  # xh (3, q, 2) reference facet points
        out = np.empty(xh.shape[:2] + (nc, 2))
        for i in range(3):
            v = s(cells, xh[i])  # (C, q, 2)
            if s.broken:
                nb = _neighbour_across(mesh, i)
                has = nb >= 0
                if np.any(has):
                    x = mesh.map_to_physical(cells[has], xh[i])
                    xh_nb = np.einsum("mij,mqj->mqi", Binv[nb[has]], x - mesh.b[nb[has]][:, None, :])
                    v = v.copy()
                    v[has] = 0.5 * (v[has] + s(nb[has], xh_nb))
            out[i] = np.einsum("cij,cqj->qci", Binv, v)
        return out

    def cell_values(xh):
        v = s(cells, xh)
        return np.einsum("cij,cqj->qci", Binv, v)

    mom = ref.moments(facet_values, cell_values)  # (C, dim)
    return RTField(order, mesh, mom @ ref.inverse.T)


def _neighbour_across(mesh, i):
    """Cell across local facet ``i`` of every cell (``-1`` on the boundary)."""
    f = mesh.cell_facets[:, i]
    left, right = mesh.facet_cells[f, 0], mesh.facet_cells[f, 1]
    return np.where(left == np.arange(mesh.n_cells), right, left)


def interpolate_rt0(field, mesh):
    return interpolate_rt(field, mesh, 0)


def interpolate_rt1(field, mesh):
    return interpolate_rt(field, mesh, 1)


def rt0_basis_closed_form(mesh, cell, local_facet, component, x):
    """``Pi_RT0 (psi_f e_d)`` on a cell: ``(x - S) (S_f . e_d) / (2 |K|)``
    with ``S`` the vertex opposite the facet and ``S_f`` its scaled outward normal."""
    S = mesh.vertices[mesh.cells[cell, local_facet]]
    flux = mesh.cell_normals[cell, local_facet, component]
    return (np.asarray(x) - S) * flux / (2.0 * mesh.area[cell])


def local_rt_projection(family, order):
    """Reference RT coefficients of ``Pi_hat(phi_b e_c)`` for every local basis function.

    Returns ``(n_local, 2, dim)``.  Uses the cell-local traces, which agree
    with the averaged facet moments for functions satisfying the patch test.
    """
    ref = reference_rt(order)
    nb = ElementFamily(family).n_local
    eye = np.eye(2)

    def sample(xh):
        phi = local_values(family, lam_from_xhat(xh))  # (..., nb)
        return phi[..., :, None, None] * eye  # (..., nb, 2, 2)

    return ref.moments(sample) @ ref.inverse.T


def rhs_projection_pairing(f, field, rt_order, mesh=None, rule_degree=8):
    """``int_Omega f . Pi_RT(field)`` by cellwise quadrature on the RT representation."""
    if mesh is None:
        if not isinstance(field, DiscreteFunction):
            raise ValueError("mesh is required for non-discrete fields")
        mesh = field.dofmap.mesh
    rt = interpolate_rt(field, mesh, rt_order)
    rule = triangle_rule(rule_degree)
    cells = np.arange(mesh.n_cells)
    w = rt.evaluate(cells, rule.xhat)
    fv = as_sampler(f, mesh)(cells, rule.xhat)
    return float(np.einsum("c,q,cqk,cqk->", mesh.area, rule.weights, fv, w))
