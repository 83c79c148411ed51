import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from ncstokes.mesh import Mesh, build_structured_unit_square

settings.register_profile(
    "repo", max_examples=25, deadline=None, derandomize=True,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("repo")


def perturbed_mesh(n, seed, amplitude=0.2):
    """Structured mesh with interior vertices moved by up to ``amplitude / n``."""
    base = build_structured_unit_square(n)
    rng = np.random.default_rng(seed)
    v = base.vertices.copy()
    inner = ~base.boundary_vertices
    v[inner] += amplitude / n * rng.uniform(-1.0, 1.0, (inner.sum(), 2))
    return Mesh(v, base.cells, h_grid=base.h_grid)


def random_polynomial_field(rng, degree, ncomp=2):
    """Random polynomial of total degree ``degree`` with its gradient and divergence."""
    powers = [(i, j) for i in range(degree + 1) for j in range(degree + 1 - i)]
    coef = rng.normal(size=(ncomp, len(powers)))

    def value(x):
        terms = np.stack([x[..., 0] ** i * x[..., 1] ** j for i, j in powers], axis=-1)
        out = terms @ coef.T
        return out if ncomp > 1 else out[..., 0]

    def grad(x):
        d0 = np.stack([i * x[..., 0] ** max(i - 1, 0) * x[..., 1] ** j for i, j in powers], -1)
        d1 = np.stack([j * x[..., 0] ** i * x[..., 1] ** max(j - 1, 0) for i, j in powers], -1)
        return np.stack([d0 @ coef.T, d1 @ coef.T], axis=-1)  # (..., ncomp, 2)

    def div(x):
        g = grad(x)
        return g[..., 0, 0] + g[..., 1, 1]

    return value, grad, div


@pytest.fixture(scope="session")
def mesh2():
    return build_structured_unit_square(2)


@pytest.fixture(scope="session")
def mesh4():
    return build_structured_unit_square(4)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
