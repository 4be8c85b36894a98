"""
Implicit scheme for the log-price G-Black-Scholes equation.

Each step solves the nonlinear system by Picard iteration: freeze the
volatility selection on the current iterate, solve the resulting tridiagonal
system, repeat until the sup-norm increment drops below the tolerance.
"""
import logging

import numpy as np
from scipy.linalg import LinAlgError, solve_banded

from errors import PicardIterationError, SingularSystemError
from grid import check_explicit_mesh, first_diff_interior, second_diff_interior
from .base import BaseScheme, Method

logger = logging.getLogger(__name__)

# Steps needing more sweeps than this are logged at WARNING.
SLOW_STEP_SWEEPS = 10


class ImplicitXScheme(BaseScheme):
    """Backward-Euler stepper on the X = ln S grid with Picard linearisation."""

    method = Method.IMPLICIT_X

    def mesh_report(self):
        return check_explicit_mesh(self.grid, self.params)

    def requires_lower_bound(self):
        # unconditionally stable in time; only the spatial bound matters
        return False

    def _system(self, V):
        """Banded matrix (1, 1) of the system linearised at iterate V."""
        h, dt, r = self.h, self.dt, self.r
        with np.errstate(over='ignore', invalid='ignore'):
            w = second_diff_interior(V, h) - first_diff_interior(V, h)
        sigma2 = self.select_volatility(w, self._level) ** 2

        ab = np.zeros((3, V.size))
        ab[1, 0] = 1.0 / dt + r
        ab[1, 1:-1] = 1.0 / dt + r + sigma2 / (h * h)
        ab[1, -1] = 1.0
        # super-diagonal entry of row i sits at column i + 1, sub-diagonal of row i at column i - 1
        ab[0, 2:] = -(sigma2 / (2.0 * h * h) + r / (2.0 * h) - sigma2 / (4.0 * h))
        ab[2, :-2] = -(sigma2 / (2.0 * h * h) - r / (2.0 * h) + sigma2 / (4.0 * h))
        return ab

    def _solve_linearised(self, ab, rhs):
        try:
            V = solve_banded((1, 1), ab, rhs)
        except (LinAlgError, ValueError) as e:
            raise SingularSystemError(f"linearised system at level {self._level + 1} is singular: {e}")
        if not np.all(np.isfinite(V)):
            raise SingularSystemError(f"linearised system at level {self._level + 1} produced non-finite values")
        return V

    def step(self, Vn, n, trace=None):
        cfg = self.config
        self._level = n

        rhs = Vn / self.dt
        rhs[-1] = self.boundary(n + 1)

        current = Vn
        increment = np.inf
        for sweep in range(1, cfg.picard_max_iters + 1):
            candidate = self._solve_linearised(self._system(current), rhs)
            increment = float(np.max(np.abs(candidate - current)))
            if trace is not None:
                trace.append(candidate)
            current = candidate
            if increment < cfg.picard_tol:
                break
        else:
            raise PicardIterationError(n + 1, cfg.picard_max_iters, increment)

        if sweep > SLOW_STEP_SWEEPS:
            logger.warning(f"Picard iteration needed {sweep} sweeps at level {n + 1}")
        else:
            logger.debug(f"Level {n + 1}: {sweep} Picard sweeps, last increment {increment:.3e}")
        return current, sweep


def implicit_step_x(Vn, n, grid, params, payoff, cfg=None, trace=None):
    """
    One implicit step V^n -> V^{n+1} on an X-domain grid.

    Args:
        Vn (ndarray): Level n, M + 1 finite values
        n (int): Time index of Vn
        grid (GridSpec): X-domain lattice
        params (MarketParams): Market data
        payoff (PayoffSpec): Contract (supplies the right-boundary rule)
        cfg (SchemeConfig): Picard tolerance and sweep cap
        trace (list): If given, receives every Picard iterate V^{n+1,k}, k >= 1

    Returns:
        tuple: (level n + 1, number of Picard sweeps)

    Raises:
        PicardIterationError: If the sweep cap is hit before convergence
        SingularSystemError: If a linearised system cannot be solved
    """
    scheme = ImplicitXScheme(grid, params, payoff, cfg)
    return scheme.step(np.asarray(Vn, dtype=float), n, trace=trace)
