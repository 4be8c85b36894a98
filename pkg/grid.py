"""
Space-time lattice, central difference operators and mesh-ratio checks.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from errors import ValidationError
from model import Domain

logger = logging.getLogger(__name__)

# Relative slack when comparing the non-strict mesh inequalities, so exact ties
# (e.g. 5625 steps for M = 400 on [50, 150]) stay admissible in floating point.
_TIE_RTOL = 1e-12


@dataclass(frozen=True)
class GridSpec:
    """
    Uniform lattice on [x_min, x_max] x [0, T] with M intervals and N time steps.

    Nodes are log-prices for ``Domain.X`` and prices for ``Domain.S``.
    """

    x_min: float
    x_max: float
    M: int
    N: int
    T: float
    domain: Domain = Domain.X

    def __post_init__(self):
        for name in ('x_min', 'x_max', 'T'):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise ValidationError(f"grid.{name}", f"must be finite, got {value}")
        if not self.x_min < self.x_max:
            raise ValidationError('grid.x_min', f"need x_min < x_max, got [{self.x_min}, {self.x_max}]")
        if int(self.M) != self.M or self.M < 2:
            raise ValidationError('grid.M', f"need an integer M >= 2, got {self.M}")
        if int(self.N) != self.N or self.N < 1:
            raise ValidationError('grid.N', f"need an integer N >= 1, got {self.N}")
        if self.T <= 0:
            raise ValidationError('grid.T', f"must be > 0, got {self.T}")
        domain = Domain(self.domain)
        if domain is Domain.S and self.x_min <= 0:
            raise ValidationError('grid.x_min', 'S-domain grids need a positive lower bound')
        object.__setattr__(self, 'M', int(self.M))
        object.__setattr__(self, 'N', int(self.N))
        object.__setattr__(self, 'domain', domain)

    @property
    def h(self):
        return (self.x_max - self.x_min) / self.M

    @property
    def dt(self):
        return self.T / self.N

    @cached_property
    def nodes(self):
        return np.linspace(self.x_min, self.x_max, self.M + 1)

    @property
    def s_max(self):
        """Price at the right truncation."""
        return math.exp(self.x_max) if self.domain is Domain.X else self.x_max

    def to_dict(self):
        return {
            'x_min': self.x_min,
            'x_max': self.x_max,
            'M': self.M,
            'N': self.N,
            'T': self.T,
            'domain': self.domain.value,
            'h': self.h,
            'dt': self.dt,
        }


@dataclass(frozen=True)
class MeshReport:
    """Outcome of the monotonicity/stability inequalities for one grid."""

    h: float
    dt: float
    explicit_lower_ok: bool
    upper_ok: bool
    min_timesteps: int
    lower_rule: str
    upper_rule: str
    upper_bound: float

    def violations(self, require_lower=True):
        """Names of the inequalities this grid breaks."""
        broken = []
        if require_lower and not self.explicit_lower_ok:
            broken.append(self.lower_rule)
        if not self.upper_ok:
            broken.append(self.upper_rule)
        return broken

    def to_dict(self):
        return {
            'h': self.h,
            'dt': self.dt,
            'explicit_lower_ok': self.explicit_lower_ok,
            'upper_ok': self.upper_ok,
            'min_timesteps': self.min_timesteps,
            'upper_bound': self.upper_bound if math.isfinite(self.upper_bound) else None,
        }


def build_grid(x_min, x_max, M, N, T, domain=Domain.X):
    """
    Build a uniform space-time lattice.

    Args:
        x_min (float): Left end of the spatial domain
        x_max (float): Right end of the spatial domain
        M (int): Number of spatial intervals (M + 1 nodes), M >= 2
        N (int): Number of time steps, N >= 1
        T (float): Maturity
        domain (Domain): Node coordinate

    Returns:
        GridSpec: The lattice
    """
    grid = GridSpec(float(x_min), float(x_max), M, N, float(T), Domain(domain))
    logger.debug(f"Built {grid.domain.value}-grid: M={grid.M}, N={grid.N}, h={grid.h:.4e}, dt={grid.dt:.4e}")
    return grid


def _check_interior(V, i):
    M = len(V) - 1
    if not 0 < i < M:
        raise ValidationError('i', f"central differences need 0 < i < {M}, got {i}")


def first_diff(V, i, h):
    """Central first difference (V[i+1] - V[i-1]) / 2h at interior node i."""
    _check_interior(V, i)
    return (V[i + 1] - V[i - 1]) / (2.0 * h)


def second_diff(V, i, h):
    """Central second difference (V[i+1] - 2V[i] + V[i-1]) / h^2 at interior node i."""
    _check_interior(V, i)
    return (V[i + 1] - 2.0 * V[i] + V[i - 1]) / (h * h)


def first_diff_interior(V, h):
    """Vectorised ``first_diff`` over all interior nodes."""
    return (V[2:] - V[:-2]) / (2.0 * h)


def second_diff_interior(V, h):
    """Vectorised ``second_diff`` over all interior nodes."""
    return (V[2:] - 2.0 * V[1:-1] + V[:-2]) / (h * h)


def _min_steps(ratio):
    """Smallest integer N >= ratio; exact ties keep the equality."""
    return max(1, math.ceil(ratio * (1.0 - _TIE_RTOL)))


def check_explicit_mesh(grid, params):
    """
    Evaluate the X-domain monotonicity window Sigma_high*sqrt(dt) <= h <= h_max.

    h_max = 2 Sigma_low^2 / max(2r - Sigma_low^2, Sigma_high^2 - 2r), and the
    upper inequality is vacuous when that max is <= 0.

    Args:
        grid (GridSpec): X-domain lattice
        params (MarketParams): Market data (sigma folded into the band)

    Returns:
        MeshReport: Both inequalities and the minimum admissible N
    """
    band = params.effective_band()
    h, dt = grid.h, grid.dt
    low2, high2 = band.low ** 2, band.high ** 2

    lower_ok = high2 * dt <= h * h * (1.0 + _TIE_RTOL)
    denominator = max(2.0 * params.r - low2, high2 - 2.0 * params.r)
    upper_bound = math.inf if denominator <= 0 else 2.0 * low2 / denominator
    upper_ok = h <= upper_bound * (1.0 + _TIE_RTOL)

    return MeshReport(
        h=h,
        dt=dt,
        explicit_lower_ok=lower_ok,
        upper_ok=upper_ok,
        min_timesteps=_min_steps(grid.T * high2 / (h * h)),
        lower_rule='Sigma_high * sqrt(dt) <= h',
        upper_rule='h <= 2 Sigma_low^2 / max(2r - Sigma_low^2, Sigma_high^2 - 2r)',
        upper_bound=upper_bound,
    )


def check_s_domain_mesh(s_min, s_max, M, params, N=None):
    """
    Evaluate the S-domain window S_max*Sigma_high*sqrt(dt) <= h_s <= S_min*Sigma_low^2/r.

    Args:
        s_min (float): Lower price truncation, > 0
        s_max (float): Upper price truncation
        M (int): Number of spatial intervals
        params (MarketParams): Market data
        N (int): Time steps to check; defaults to the minimum admissible count

    Returns:
        MeshReport: Both inequalities and the minimum admissible N
    """
    if not 0 < s_min < s_max:
        raise ValidationError('s_min', f"need 0 < s_min < s_max, got [{s_min}, {s_max}]")
    band = params.effective_band()
    h_s = (s_max - s_min) / M
    speed2 = (s_max * band.high) ** 2

    min_timesteps = _min_steps(params.T * speed2 / (h_s * h_s))
    steps = min_timesteps if N is None else N
    dt = params.T / steps

    lower_ok = speed2 * dt <= h_s * h_s * (1.0 + _TIE_RTOL)
    upper_bound = math.inf if params.r == 0 else s_min * band.low ** 2 / params.r
    upper_ok = h_s <= upper_bound * (1.0 + _TIE_RTOL)

    return MeshReport(
        h=h_s,
        dt=dt,
        explicit_lower_ok=lower_ok,
        upper_ok=upper_ok,
        min_timesteps=min_timesteps,
        lower_rule='S_max * Sigma_high * sqrt(dt) <= h_s',
        upper_rule='h_s <= S_min * Sigma_low^2 / r',
        upper_bound=upper_bound,
    )


def timestep_ratio(s_min, s_max):
    """
    How many times fewer explicit steps the log grid needs at equal M.

    S_max^2 (ln S_max - ln S_min)^2 / (S_max - S_min)^2, about 2.7155 on [50, 150].
    """
    if not 0 < s_min < s_max:
        raise ValidationError('s_min', f"need 0 < s_min < s_max, got [{s_min}, {s_max}]")
    log_width = math.log(s_max) - math.log(s_min)
    return (s_max * log_width / (s_max - s_min)) ** 2
