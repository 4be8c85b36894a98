"""
Explicit scheme for the G-Black-Scholes equation in the original price variable.
"""
import numpy as np

from grid import check_s_domain_mesh, first_diff_interior, second_diff_interior
from model import Domain
from .base import BaseScheme, Method


class ExplicitSScheme(BaseScheme):
    """Forward-Euler stepper on a price grid [S_min, S_max]."""

    method = Method.EXPLICIT_S
    domain = Domain.S

    def __init__(self, grid, params, payoff, config=None):
        super().__init__(grid, params, payoff, config)
        prices = grid.nodes[1:-1]
        self.drift = params.r * prices
        self.half_s2 = 0.5 * prices * prices

    def mesh_report(self):
        grid = self.grid
        return check_s_domain_mesh(grid.x_min, grid.x_max, grid.M, self.params, N=grid.N)

    def step(self, Un, n):
        h, dt = self.h, self.dt

        with np.errstate(over='ignore', invalid='ignore'):
            d1 = first_diff_interior(Un, h)
            d2 = second_diff_interior(Un, h)
        # the sup multiplies U_SS alone in the price variable
        sigma2 = self.select_volatility(d2, n) ** 2

        U = np.empty_like(Un)
        with np.errstate(over='ignore', invalid='ignore'):
            U[1:-1] = (Un[1:-1] + dt * (self.drift * d1 + self.half_s2 * sigma2 * d2)) / self.growth
        U[0] = self.discount_left(Un)
        U[-1] = self.boundary(n + 1)

        self.ensure_finite(U, n + 1)
        return U, None


def explicit_step_s(Un, n, grid, params, payoff):
    """
    One explicit step U^n -> U^{n+1} on an S-domain grid.

    Args:
        Un (ndarray): Level n, M + 1 finite values
        n (int): Time index of Un
        grid (GridSpec): S-domain lattice (nodes are prices)
        params (MarketParams): Market data
        payoff (PayoffSpec): Contract

    Returns:
        ndarray: Level n + 1
    """
    U, _ = ExplicitSScheme(grid, params, payoff).step(np.asarray(Un, dtype=float), n)
    return U
