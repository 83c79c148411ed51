"""Manufactured Stokes problems on the unit square."""
from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class StokesProblem:
    name: str
    nu: float
    f: object  # f(x) -> (..., 2)
    u: object = None  # None means u = 0
    grad_u: object = None  # (..., 2, 2), rows are components
    p: object = None
    potential: object = None  # phi with f = grad(phi), when applicable


def _p_cubic(x):
    return x[..., 0] ** 3 + x[..., 1] ** 3 - 0.5


def _grad_p_cubic(x):
    return 3.0 * np.stack([x[..., 0] ** 2, x[..., 1] ** 2], axis=-1)


def gradient_problem(nu=1.0):
    """``u = 0``, ``p = x1^3 + x2^3 - 1/2``, ``f = grad p``."""
    return StokesProblem("gradient", float(nu), _grad_p_cubic, p=_p_cubic, potential=_p_cubic)


def trig_u(x):
    s1, s2 = np.sin(TWO_PI * x[..., 0]), np.sin(TWO_PI * x[..., 1])
    c1, c2 = np.cos(TWO_PI * x[..., 0]), np.cos(TWO_PI * x[..., 1])
    return np.stack([(1 - c1) * s2, (c2 - 1) * s1], axis=-1)


def trig_grad_u(x):
    s1, s2 = np.sin(TWO_PI * x[..., 0]), np.sin(TWO_PI * x[..., 1])
    c1, c2 = np.cos(TWO_PI * x[..., 0]), np.cos(TWO_PI * x[..., 1])
    g = np.empty(x.shape[:-1] + (2, 2))
    g[..., 0, 0] = TWO_PI * s1 * s2
    g[..., 0, 1] = TWO_PI * (1 - c1) * c2
    g[..., 1, 0] = TWO_PI * (c2 - 1) * c1
    g[..., 1, 1] = -TWO_PI * s2 * s1
    return g


def trig_p(x):
    return np.sin(TWO_PI * x[..., 0]) * np.sin(TWO_PI * x[..., 1])


def trig_problem(nu):
    """Divergence-free trigonometric velocity with ``p = sin(2 pi x1) sin(2 pi x2)``."""
    nu = float(nu)
    k2 = TWO_PI**2

    def f(x):
        s1, s2 = np.sin(TWO_PI * x[..., 0]), np.sin(TWO_PI * x[..., 1])
        c1, c2 = np.cos(TWO_PI * x[..., 0]), np.cos(TWO_PI * x[..., 1])
        lap1 = k2 * s2 * (2 * c1 - 1)
        lap2 = -k2 * s1 * (2 * c2 - 1)
        return np.stack(
            [-nu * lap1 + TWO_PI * c1 * s2, -nu * lap2 + TWO_PI * s1 * c2], axis=-1
        )

    return StokesProblem("trig", nu, f, u=trig_u, grad_u=trig_grad_u, p=trig_p)
