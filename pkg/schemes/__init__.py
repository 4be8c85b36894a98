"""
Time-stepping schemes for the G-Black-Scholes equation.
"""
from .base import BaseScheme, Enforcement, Method, SchemeConfig, Solution
from .explicit_s import ExplicitSScheme, explicit_step_s
from .explicit_x import ExplicitXScheme, explicit_step_x
from .implicit_x import ImplicitXScheme, implicit_step_x

SCHEMES = {
    Method.EXPLICIT_X: ExplicitXScheme,
    Method.IMPLICIT_X: ImplicitXScheme,
    Method.EXPLICIT_S: ExplicitSScheme,
}


def solve(payoff, params, grid, cfg=None, keep_levels=True):
    """
    Price a contract on a grid with the configured scheme.

    Args:
        payoff (PayoffSpec): Contract
        params (MarketParams): Market data
        grid (GridSpec): Lattice; its domain must match the method
        cfg (SchemeConfig): Scheme selection, defaults to implicit X
        keep_levels (bool): Keep every time level in the result

    Returns:
        Solution: Levels 0..N and per-step diagnostics
    """
    cfg = cfg or SchemeConfig()
    scheme = SCHEMES[cfg.method](grid, params, payoff, cfg)
    return scheme.run(keep_levels=keep_levels)


__all__ = [
    'BaseScheme', 'Enforcement', 'Method', 'SchemeConfig', 'Solution', 'SCHEMES', 'solve',
    'ExplicitXScheme', 'ImplicitXScheme', 'ExplicitSScheme',
    'explicit_step_x', 'implicit_step_x', 'explicit_step_s',
]
