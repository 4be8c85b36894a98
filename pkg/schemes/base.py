"""
Base time-stepper functionality shared across all schemes.

Every scheme marches forward in reversed time (t <- T - t) from the payoff at
level 0, applies the discounting rule V_t = -rV at the left boundary and a
Dirichlet rule at the right boundary.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np

from config import Config
from errors import DivergenceError, MeshConditionError, ValidationError
from grid import GridSpec, MeshReport
from model import Domain, payoff_on_grid, sigma_star

logger = logging.getLogger(__name__)


class Method(str, Enum):
    EXPLICIT_X = 'explicit_x'
    IMPLICIT_X = 'implicit_x'
    EXPLICIT_S = 'explicit_s'


class Enforcement(str, Enum):
    ERROR = 'error'
    WARN = 'warn'
    IGNORE = 'ignore'


@dataclass(frozen=True)
class SchemeConfig:
    """
    Scheme selection and inner-iteration controls.

    Attributes:
        method (Method): Time stepper
        picard_tol (float): Sup-norm increment that ends the Picard loop
        picard_max_iters (int): Sweep cap per implicit step
        enforce_mesh_conditions (Enforcement): Reaction to a violated mesh inequality
    """

    method: Method = Method.IMPLICIT_X
    picard_tol: float = Config.PICARD_TOL
    picard_max_iters: int = Config.PICARD_MAX_ITERS
    enforce_mesh_conditions: Enforcement = Enforcement(Config.MESH_ENFORCEMENT)

    def __post_init__(self):
        object.__setattr__(self, 'method', Method(self.method))
        object.__setattr__(self, 'enforce_mesh_conditions', Enforcement(self.enforce_mesh_conditions))
        if not (math.isfinite(self.picard_tol) and self.picard_tol > 0):
            raise ValidationError('scheme.picard_tol', f"must be > 0, got {self.picard_tol}")
        if int(self.picard_max_iters) != self.picard_max_iters or self.picard_max_iters < 1:
            raise ValidationError('scheme.picard_max_iters', f"must be an integer >= 1, got {self.picard_max_iters}")
        object.__setattr__(self, 'picard_max_iters', int(self.picard_max_iters))

    def to_dict(self):
        return {
            'method': self.method.value,
            'picard_tol': self.picard_tol,
            'picard_max_iters': self.picard_max_iters,
            'enforce_mesh_conditions': self.enforce_mesh_conditions.value,
        }


@dataclass(eq=False)
class Solution:
    """
    Time levels produced by a scheme.

    ``levels[k]`` is the value vector at time index ``level_index[k]``; with
    all levels kept that is simply V^k, level 0 being the payoff.
    """

    grid: GridSpec
    method: Method
    levels: np.ndarray
    level_index: np.ndarray
    picard_counts: np.ndarray
    sup_norms: np.ndarray
    boundary_values: np.ndarray
    mesh: Optional[MeshReport] = None
    cpu_seconds: float = 0.0
    meta: dict = field(default_factory=dict)

    @property
    def final(self):
        return self.levels[-1]

    @property
    def is_implicit(self):
        return self.method is Method.IMPLICIT_X


class BaseScheme:
    """Base class for all time steppers with common functionality."""

    method = None
    domain = Domain.X

    def __init__(self, grid, params, payoff, config=None):
        self.grid = grid
        self.params = params
        self.payoff = payoff
        self.config = config or SchemeConfig(method=self.method)

        if grid.domain is not self.domain:
            raise ValidationError(
                'grid.domain', f"{self.method.value} needs a {self.domain.value}-grid, got {grid.domain.value}")
        if not math.isclose(grid.T, params.T, rel_tol=1e-12):
            raise ValidationError('grid.T', f"grid maturity {grid.T} differs from market maturity {params.T}")

        self.band = params.effective_band()
        self.h = grid.h
        self.dt = grid.dt
        self.r = params.r
        self.growth = 1.0 + params.r * grid.dt

    def mesh_report(self):
        raise NotImplementedError

    def requires_lower_bound(self):
        return True

    def check_mesh(self):
        """
        Apply the configured mesh-condition policy.

        Returns:
            MeshReport: The evaluated inequalities

        Raises:
            MeshConditionError: If a condition fails under ``Enforcement.ERROR``
        """
        report = self.mesh_report()
        broken = report.violations(require_lower=self.requires_lower_bound())
        policy = self.config.enforce_mesh_conditions
        if broken and policy is Enforcement.ERROR:
            raise MeshConditionError(broken[0], report)
        if broken and policy is Enforcement.WARN:
            logger.warning(f"{self.method.value}: mesh condition violated ({'; '.join(broken)}), "
                           f"h={report.h:.4e}, dt={report.dt:.4e}")
        return report

    def initial_level(self):
        return payoff_on_grid(self.payoff, self.grid.nodes, self.grid.domain)

    def boundary(self, n):
        """Right-boundary value phi^n."""
        return self.payoff.boundary_value(n * self.dt, self.grid.s_max, self.r)

    def discount_left(self, Vn):
        """Discrete V_t = -rV at the left boundary."""
        return Vn[0] / self.growth

    def select_volatility(self, w, n):
        """sigma_star on the interior, reporting blow-ups as divergence at level n."""
        finite = np.isfinite(w)
        if not finite.all():
            raise DivergenceError(n, int(np.argmin(finite)) + 1)
        return sigma_star(w, self.band)

    def ensure_finite(self, V, n):
        finite = np.isfinite(V)
        if not finite.all():
            raise DivergenceError(n, int(np.argmin(finite)))

    def step(self, Vn, n):
        """
        Advance level n to level n + 1.

        Returns:
            tuple: (new level, inner iteration count or None)
        """
        raise NotImplementedError

    def run(self, keep_levels=True):
        """
        March all N steps from the payoff.

        Args:
            keep_levels (bool): Keep every level; otherwise only the payoff and the final level

        Returns:
            Solution: All requested time levels and diagnostics
        """
        grid = self.grid
        report = self.check_mesh()
        logger.info(f"Solving {self.payoff.kind.value} with {self.method.value}: N={grid.N}, M={grid.M}")
        start_time = time.perf_counter()

        V = self.initial_level()
        if keep_levels:
            levels = np.empty((grid.N + 1, grid.M + 1))
            levels[0] = V
        sup_norms = np.empty(grid.N + 1)
        boundary_values = np.empty(grid.N + 1)
        sup_norms[0] = np.max(np.abs(V))
        boundary_values[0] = self.boundary(0)
        picard_counts = []

        for n in range(grid.N):
            V, iterations = self.step(V, n)
            if keep_levels:
                levels[n + 1] = V
            sup_norms[n + 1] = np.max(np.abs(V))
            boundary_values[n + 1] = V[-1]
            if iterations is not None:
                picard_counts.append(iterations)

        processing_time = time.perf_counter() - start_time
        logger.info(f"Solved {self.method.value} (N={grid.N}, M={grid.M}) in {processing_time:.3f}s")

        if keep_levels:
            level_index = np.arange(grid.N + 1)
        else:
            levels = np.vstack([self.initial_level(), V])
            level_index = np.array([0, grid.N])

        return Solution(
            grid=grid,
            method=self.method,
            levels=levels,
            level_index=level_index,
            picard_counts=np.asarray(picard_counts, dtype=int),
            sup_norms=sup_norms,
            boundary_values=boundary_values,
            mesh=report,
            cpu_seconds=processing_time,
        )
