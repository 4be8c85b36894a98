"""
Explicit scheme for the log-price G-Black-Scholes equation.
"""

import numpy as np

from grid import check_explicit_mesh, first_diff_interior, second_diff_interior
from .base import BaseScheme, Method



class ExplicitXScheme(BaseScheme):
    """Forward-Euler stepper on the X = ln S grid."""

    method = Method.EXPLICIT_X

    def mesh_report(self):
        return check_explicit_mesh(self.grid, self.params)

    def step(self, Vn, n):
        h, dt, r = self.h, self.dt, self.r

        with np.errstate(over='ignore', invalid='ignore'):
            w = second_diff_interior(Vn, h) - first_diff_interior(Vn, h)
        sigma2 = self.select_volatility(w, n) ** 2

        lower = dt / (2.0 * h) * (sigma2 / h + 0.5 * sigma2 - r)
        centre = 1.0 - sigma2 * dt / (h * h)
        upper = dt / (2.0 * h) * (r + sigma2 / h - 0.5 * sigma2)

        V = np.empty_like(Vn)
        with np.errstate(over='ignore', invalid='ignore'):
            V[1:-1] = (lower * Vn[:-2] + centre * Vn[1:-1] + upper * Vn[2:]) / self.growth
        V[0] = self.discount_left(Vn)
        V[-1] = self.boundary(n + 1)

        self.ensure_finite(V, n + 1)
        return V, None


def explicit_step_x(Vn, n, grid, params, payoff):
    """
    One explicit step V^n -> V^{n+1} on an X-domain grid.

    Args:
        Vn (ndarray): Level n, M + 1 finite values
        n (int): Time index of Vn
        grid (GridSpec): X-domain lattice
        params (MarketParams): Market data
        payoff (PayoffSpec): Contract (supplies the right-boundary rule)

    Returns:
        ndarray: Level n + 1
    """
    V, _ = ExplicitXScheme(grid, params, payoff).step(np.asarray(Vn, dtype=float), n)
    return V
