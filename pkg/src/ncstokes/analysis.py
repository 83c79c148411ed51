"""Error metrics, convergence rates, inf-sup estimates and stability constants."""
import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse.linalg as spla

from .assembly import (
    assemble_divergence,
    assemble_mean_constraint,
    assemble_pressure_mass,
    assemble_stiffness,
)
from .errors import ConfigurationError
from .fe_spaces import PRESSURE_FOR, DiscreteFunction, ElementFamily, build_dofmap
from .quadrature import triangle_rule

__all__ = [
    "ErrorMetrics",
    "StabilityReport",
    "l2_norm",
    "broken_h1_seminorm",
    "l2_velocity_error",
    "convergence_rate",
    "successive_rates",
    "discrete_infsup",
    "stability_constants",
    "costabel_dauge_beta",
    "costabel_dauge_simplified",
    "named_domain_beta",
]

ERROR_DEGREE = 8
INFSUP_MAX_VELOCITY_DOFS = 3000


@dataclass(frozen=True)
class ErrorMetrics:
    eps0: float
    l2_pressure_error: float
    broken_h1_error: float
    exact_is_zero: bool


def _as_function(obj, which="velocity"):
    if isinstance(obj, DiscreteFunction):
        return obj
    return obj.velocity_function() if which == "velocity" else obj.pressure_function()


def _cell_quadrature(mesh, degree=ERROR_DEGREE):
    rule = triangle_rule(degree)
    cells = np.arange(mesh.n_cells)
    return rule, cells, mesh.map_to_physical(cells, rule.xhat)


def _integrate(mesh, rule, values):
    """``sum_K |K| sum_q w_q values[K, q, ...]`` summed over all trailing axes."""
    return float(np.einsum("c,q,cq->", mesh.area, rule.weights,
                           values.reshape(values.shape[:2] + (-1,)).sum(axis=-1)))


def l2_norm(function, degree=ERROR_DEGREE):
    mesh = function.dofmap.mesh
    rule, cells, _ = _cell_quadrature(mesh, degree)
    v = function.sample(cells, rule.xhat)
    return math.sqrt(_integrate(mesh, rule, v * v))


def broken_h1_seminorm(function, degree=ERROR_DEGREE):
    """``(sum_K ||grad v||^2_K)^{1/2}``."""
    mesh = function.dofmap.mesh
    rule, cells, _ = _cell_quadrature(mesh, degree)
    g = function.sample_gradient(cells, rule.xhat)
    return math.sqrt(_integrate(mesh, rule, g * g))


def l2_velocity_error(solution, exact_u=None, exact_grad=None, exact_p=None,
                      pressure=None, degree=ERROR_DEGREE):
    """Errors of a discrete velocity (and optionally pressure).

    ``eps0`` is ``||u_h||`` when the exact velocity is zero (``exact_u`` is
    None or vanishes at every quadrature point) and ``||u - u_h|| / ||u||``
    otherwise.  ``broken_h1_error`` needs ``exact_grad`` unless the exact
    velocity is zero; it is NaN when it cannot be evaluated.
    """
    uh = _as_function(solution)
    mesh = uh.dofmap.mesh
    rule, cells, x = _cell_quadrature(mesh, degree)
    v = uh.sample(cells, rule.xhat)
    ue = np.zeros_like(v) if exact_u is None else np.broadcast_to(exact_u(x), v.shape)
    norm_u = math.sqrt(_integrate(mesh, rule, ue * ue))
    diff = math.sqrt(_integrate(mesh, rule, (v - ue) ** 2))
    zero = norm_u == 0.0
    eps0 = diff if zero else diff / norm_u

    g = uh.sample_gradient(cells, rule.xhat)
    if exact_grad is not None:
        h1 = math.sqrt(_integrate(mesh, rule, (g - exact_grad(x)) ** 2))
    elif zero:
        h1 = math.sqrt(_integrate(mesh, rule, g * g))
    else:
        h1 = float("nan")

    p_err = float("nan")
    if pressure is None and not isinstance(solution, DiscreteFunction):
        pressure = solution.pressure_function()
    if pressure is not None and exact_p is not None:
        ph = pressure.sample(cells, rule.xhat)
        p_err = math.sqrt(_integrate(mesh, rule, (ph - exact_p(x)) ** 2))
    elif pressure is not None:
        ph = pressure.sample(cells, rule.xhat)
        p_err = math.sqrt(_integrate(mesh, rule, ph * ph))
    return ErrorMetrics(eps0, p_err, h1, zero)


def _check_positive(h, e):
    h = np.asarray(h, dtype=float)
    e = np.asarray(e, dtype=float)
    if h.shape != e.shape or h.ndim != 1 or len(h) < 2:
        raise ValueError("need at least two (h, error) pairs of equal length")
    if np.any(h <= 0) or np.any(e <= 0) or not np.all(np.isfinite(np.r_[h, e])):
        raise ValueError("mesh sizes and errors must be positive and finite")
    return h, e


def convergence_rate(h_list, error_list):
    """Least-squares slope of ``log(error)`` against ``log(h)``."""
    h, e = _check_positive(h_list, error_list)
    return float(np.polyfit(np.log(h), np.log(e), 1)[0])


def successive_rates(h_list, error_list):
    """``log(e_i / e_{i+1}) / log(h_i / h_{i+1})`` for consecutive levels."""
    h, e = _check_positive(h_list, error_list)
    return np.log(e[:-1] / e[1:]) / np.log(h[:-1] / h[1:])


def discrete_infsup(mesh, element="CR", nu=1.0):
    """Discrete inf-sup constant of the velocity/pressure pair on ``mesh``.

    ``beta^2`` is the smallest eigenvalue of ``B A^{-1} B^T q = lambda M_p q``
    on zero-mean pressures, with ``A`` the broken stiffness.  The stiffness is
    assembled with ``nu`` and rescaled, so the result does not depend on it.
    """
    family = ElementFamily(getattr(element, "value", element).upper())
    if family not in PRESSURE_FOR:
        raise ConfigurationError(f"{family.value} is not a velocity element")
    velocity = build_dofmap(mesh, family, ncomp=2)
    pressure = build_dofmap(mesh, PRESSURE_FOR[family])
    free = velocity.free_dofs
    if len(free) > INFSUP_MAX_VELOCITY_DOFS:
        raise ConfigurationError(
            f"{len(free)} interior velocity dofs exceed the dense limit {INFSUP_MAX_VELOCITY_DOFS}"
        )
    A = (assemble_stiffness(mesh, velocity, nu)[free][:, free] / nu).tocsc()
    B = assemble_divergence(mesh, velocity, pressure)[:, free].toarray()
    M = assemble_pressure_mass(mesh, pressure).toarray()
    m = assemble_mean_constraint(mesh, pressure)
    try:
        lu = spla.splu(A)
    except RuntimeError as exc:
        raise ConfigurationError(f"velocity stiffness is singular: {exc}") from exc
    S = B @ lu.solve(B.T)
    S = 0.5 * (S + S.T)
    Q = sla.null_space(m[None, :])  # orthonormal basis of zero-mean pressures
    lam = sla.eigh(Q.T @ S @ Q, Q.T @ M @ Q, eigvals_only=True, subset_by_index=[0, 0])[0]
    return math.sqrt(max(lam, 0.0))


@dataclass(frozen=True)
class StabilityReport:
    c_div: float
    c_min: float
    c_max: float
    c_stab: float
    nu: float
    c_nc: float = None
    c_div_nc: float = None


def stability_constants(c_div, nu, c_nc=None):
    """T-coercivity stability constants.

    ``c_min = min(C^2, 1) / 2``, ``c_max = C (1 + C)`` and
    ``c_stab = (nu / 2) c_min / c_max`` with ``C = c_div``, or
    ``C = c_nc * c_div`` when the interpolation constant ``c_nc`` is given.
    """
    if not (c_div > 0 and nu > 0):
        raise ValueError("c_div and nu must be positive")
    if c_nc is not None and not c_nc >= 1:
        raise ValueError("c_nc must be at least 1")
    C = c_div if c_nc is None else c_nc * c_div
    c_min = 0.5 * min(C * C, 1.0)
    c_max = C * (1.0 + C)
    return StabilityReport(
        c_div, c_min, c_max, 0.5 * nu * c_min / c_max, nu,
        c_nc, None if c_nc is None else C,
    )


def _check_radii(rho, R):
    if not (rho > 0 and R > 0):
        raise ValueError("radii must be positive")
    if rho > R:
        raise ValueError("inner radius exceeds outer radius")


def costabel_dauge_beta(rho, R):
    """Lower bound ``rho / (sqrt(2) R) * (1 + sqrt(1 - rho^2/R^2))^{-1/2}``."""
    _check_radii(rho, R)
    t = rho / R
    return t / math.sqrt(2.0) / math.sqrt(1.0 + math.sqrt(max(1.0 - t * t, 0.0)))


def costabel_dauge_simplified(rho, R):
    _check_radii(rho, R)
    return rho / (2.0 * R)


def named_domain_beta(domain, k=1.0):
    """Inf-sup lower bounds for standard domain shapes (``k`` is an aspect ratio)."""
    if k < 1:
        raise ValueError("aspect ratio k must be at least 1")
    table = {
        "ball": 0.5,
        "disk": 0.5,
        "square": 1.0 / (2.0 * math.sqrt(2.0)),
        "stretched": 1.0 / (2.0 * k),
        "l-shape": 1.0 / (2.0 * math.sqrt(2.0) * k),
        "cross": 1.0 / (4.0 * k),
    }
    key = domain.lower().replace("_", "-")
    if key == "lshape":
        key = "l-shape"
    if key not in table:
        raise ValueError(f"unknown domain {domain!r}; choose from {sorted(table)}")
    return table[key]
