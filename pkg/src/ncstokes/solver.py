"""Direct solver for the bordered saddle-point system.

The matrix ``K = [[A, -B^T, 0], [-B, 0, m], [0, m^T, 0]]`` is symmetric
indefinite with a zero pressure block.  Threshold pivoting on those zero
pivots destroys any fill-reducing ordering, so the factorization is taken of
a diagonally scaled, quasi-definite neighbour ``D K0 D - delta * diag(0, I)``
(``K0`` drops the dense border row), which admits a symmetric ordering with no
pivoting.  The border is handled by block elimination and the exact system is
then recovered by iterative refinement against ``K`` itself.
"""
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import saddle_matrix
from .errors import ConfigurationError, SolverError
from .fe_spaces import DiscreteFunction

__all__ = ["Solution", "Factorization", "factorize", "solve"]

REGULARIZATION = 1e-10
MAX_REFINEMENT = 20
TARGET_RESIDUAL = 1e-14
SINGULAR_PIVOT = 1e-13  # relative, dense pivot search only
DENSE_LIMIT = 5000
# |K_delta^{-1}| ~ 1/delta exposes a null vector of K hidden by the shift
SINGULAR_AMPLIFICATION = 0.25
POWER_STEPS = 4


@dataclass(eq=False)
class Solution:
    u: np.ndarray  # full velocity coefficients (boundary dofs are zero)
    p: np.ndarray
    multiplier: float
    residual_norm: float
    solve_stats: dict = field(default_factory=dict)
    velocity: object = None
    pressure: object = None

    def velocity_function(self):
        return DiscreteFunction(self.velocity, self.u)

    def pressure_function(self):
        return DiscreteFunction(self.pressure, self.p)


def _dense_zero_pivot(K):
    if K.shape[0] > DENSE_LIMIT:
        return None
    _, _, U = sla.lu(K.toarray())
    d = np.abs(np.diag(U))
    bad = np.flatnonzero(d <= SINGULAR_PIVOT * max(d.max(), 1.0))
    return int(bad[0]) if len(bad) else None


def _symmetric_scaling(system):
    """Diagonal ``D`` giving ``D K D`` a unit velocity diagonal and a unit-scale pressure Schur block.

    The pressure Schur block ``B A^{-1} B^T`` is estimated by ``B diag(A)^{-1} B^T``.
    """
    d = np.abs(system.A.diagonal())
    dv = 1.0 / np.sqrt(np.where(d > 0, d, 1.0))
    s = np.asarray(system.B.multiply(system.B) @ (dv * dv)).ravel()
    dp = 1.0 / np.sqrt(np.where(s > 0, s, 1.0))
    mm = np.linalg.norm(system.m * dp)
    return np.concatenate([dv, dp, [1.0 / mm if mm > 0 else 1.0]])


class Factorization:
    """Factor once, solve for any number of velocity load vectors.

    ``D K D`` (see :func:`_symmetric_scaling`) is shifted by ``-delta`` on its
    pressure and multiplier diagonal; all tolerances below refer to that scaled matrix.
    """

    def __init__(self, system):
        nv, npr = system.n_velocity, system.n_pressure
        if system.A.shape != (nv, nv) or system.B.shape != (npr, nv) or len(system.m) != npr:
            raise ConfigurationError("saddle-point blocks have inconsistent dimensions")
        self.system = system
        K = saddle_matrix(system)
        K.eliminate_zeros()
        self.matrix = K
        n = K.shape[0]
        self.delta = REGULARIZATION
        self._scale = _symmetric_scaling(system)
        D = sp.diags(self._scale)
        Ks = (D @ K @ D).tocsc()
        reg = np.concatenate([np.zeros(nv), np.full(npr, -self.delta)])
        K0 = (Ks[: n - 1, : n - 1] + sp.diags(reg)).tocsc()
        self._border = Ks[: n - 1, n - 1].toarray().ravel()

        t0 = time.perf_counter()
        try:
            self._lu = spla.splu(
                K0, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                options={"SymmetricMode": True},
            )
        except RuntimeError as exc:
            pivot = _dense_zero_pivot(K)
            raise SolverError(f"singular factorization ({exc}); pivot index {pivot}", pivot) from exc
        # shifted pivots of size delta are expected; only exact zeros mean singular
        udiag = np.abs(self._lu.U.diagonal())
        worst = int(np.argmin(np.where(np.isfinite(udiag), udiag, 0.0)))
        if not udiag[worst] > 0.0:
            pivot = int(np.flatnonzero(self._lu.perm_c == worst)[0])
            raise SolverError(f"singular factorization: zero pivot at index {pivot}", pivot)
        self._w = self._lu.solve(self._border)
        self._schur = -self.delta - self._border @ self._w
        self._check_rank()
        self.factor_time = time.perf_counter() - t0

    def _check_rank(self):
        """Power iteration on the shifted scaled inverse; a null vector of K makes it grow like 1/delta."""
        x = np.random.default_rng(0).standard_normal(self.matrix.shape[0])
        x /= np.linalg.norm(x)
        growth = 0.0
        for _ in range(POWER_STEPS):
            y = self._scaled_inverse(x)
            growth = np.linalg.norm(y)
            if not np.isfinite(growth) or growth == 0.0:
                break
            x = y / growth
        self.inverse_estimate = float(growth)
        if not (np.isfinite(growth) and growth * self.delta < SINGULAR_AMPLIFICATION):
            pivot = _dense_zero_pivot(self.matrix)
            if pivot is None:
                pivot = int(np.argmax(np.abs(x)))
            raise SolverError(
                f"saddle-point matrix is singular (scaled inverse norm ~{growth:.3e}); "
                f"pivot index {pivot}",
                pivot,
            )

    def _scaled_inverse(self, r):
        y = self._lu.solve(r[:-1])
        lam = (r[-1] - self._border @ y) / self._schur
        return np.append(y - self._w * lam, lam)

    def _apply_inverse(self, r):
        return self._scale * self._scaled_inverse(self._scale * r)

    def solve(self, rhs_u):
        s = self.system
        rhs_u = np.asarray(rhs_u, dtype=float)
        if rhs_u.shape != (s.n_velocity,):
            raise ConfigurationError(
                f"load vector has shape {rhs_u.shape}, expected ({s.n_velocity},)"
            )
        b = np.concatenate([rhs_u, np.zeros(s.n_pressure + 1)])
        t0 = time.perf_counter()
        bnorm = np.linalg.norm(b)
        z = np.zeros_like(b)
        res, steps = 0.0, 0
        if bnorm > 0.0:
            res = 1.0
            for steps in range(1, MAX_REFINEMENT + 1):
                z += self._apply_inverse(b - self.matrix @ z)
                new = np.linalg.norm(b - self.matrix @ z) / bnorm
                if not np.isfinite(new):
                    raise SolverError("factorization produced non-finite values")
                stalled = new > 0.5 * res
                res = new
                if res <= TARGET_RESIDUAL or stalled:
                    break
            if res > 1e-10:
                raise SolverError(f"refinement stalled at relative residual {res:.3e}")
        u = np.zeros(s.velocity.total_dofs)
        u[s.free] = z[: s.n_velocity]
        p = z[s.n_velocity : s.n_velocity + s.n_pressure].copy()
        stats = {
            "size": int(self.matrix.shape[0]),
            "nnz": int(self.matrix.nnz),
            "factor_nnz": int(self._lu.L.nnz + self._lu.U.nnz),
            "factor_time": self.factor_time,
            "solve_time": time.perf_counter() - t0,
            "refinement_steps": steps,
        }
        return Solution(u, p, float(z[-1]), float(res), stats, s.velocity, s.pressure)


def factorize(system):
    return Factorization(system)


def solve(system, projection=None):
    """Solve for one load vector (``projection`` keys ``system.rhs``)."""
    rhs = system.rhs_u if projection is None else system.rhs[projection]
    return Factorization(system).solve(rhs)
