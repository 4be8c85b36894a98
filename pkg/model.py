"""
Market and contract data for European options under volatility uncertainty.

Holds the market/contract types, the optimal-volatility selector used by every
scheme, and the classical Black-Scholes closed form that the engine must
reproduce when the volatility band collapses or the payoff is convex/concave.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional, Tuple

import numpy as np
from scipy.stats import norm

from errors import NumericDomainError, ValidationError


# Nodes this close (relatively) to a digital strike are treated as at-the-strike.
_STRIKE_RTOL = 1e-12


class Domain(str, Enum):
    """Coordinate of the spatial grid: log-price X = ln S or price S."""

    X = 'x'
    S = 's'


class PayoffKind(str, Enum):
    BUTTERFLY = 'butterfly'
    DIGITAL = 'digital'
    CALL = 'call'
    PUT = 'put'
    TABULATED = 'tabulated'


def _require_finite(name, value):
    if value is None or not math.isfinite(value):
        raise ValidationError(name, f"must be a finite number, got {value!r}")


@dataclass(frozen=True)
class EffectiveBand:
    """Volatility band with the reference volatility folded in (sigma * Sigma)."""

    low: float
    high: float

    def __post_init__(self):
        _require_finite('band.low', self.low)
        _require_finite('band.high', self.high)
        if not 0 < self.low <= self.high:
            raise ValidationError('band', f"need 0 < low <= high, got ({self.low}, {self.high})")


@dataclass(frozen=True)
class MarketParams:
    """
    Market data of the G-Black-Scholes model.

    Attributes:
        r (float): Risk-free rate per year, r >= 0
        sigma (float): Reference volatility multiplying the G-Brownian driver
        sigma_band (tuple): Uncertainty band (Sigma_low, Sigma_high)
        T (float): Maturity in years
    """

    r: float
    sigma: float
    sigma_band: Tuple[float, float]
    T: float

    def __post_init__(self):
        _require_finite('r', self.r)
        _require_finite('sigma', self.sigma)
        _require_finite('T', self.T)
        if self.r < 0:
            raise ValidationError('r', f"must be >= 0, got {self.r}")
        if self.sigma <= 0:
            raise ValidationError('sigma', f"must be > 0, got {self.sigma}")
        if self.T <= 0:
            raise ValidationError('T', f"must be > 0, got {self.T}")
        band = tuple(self.sigma_band)
        if len(band) != 2:
            raise ValidationError('sigma_band', f"expected (low, high), got {self.sigma_band!r}")
        for value in band:
            _require_finite('sigma_band', value)
        low, high = band
        if not 0 < low <= high:
            raise ValidationError('sigma_band', f"need 0 < low <= high, got ({low}, {high})")
        object.__setattr__(self, 'sigma_band', (float(low), float(high)))

    def effective_band(self):
        """Fold sigma into the band so the schemes can run with sigma = 1."""
        low, high = self.sigma_band
        return EffectiveBand(low=self.sigma * low, high=self.sigma * high)


@dataclass(frozen=True)
class PayoffSpec:
    """
    Contract descriptor with its right-boundary (Dirichlet) rule.

    Build instances with the ``butterfly``/``digital``/``call``/``put``/
    ``tabulated`` constructors rather than directly.
    """

    kind: PayoffKind
    K: Optional[float] = None
    K1: Optional[float] = None
    Km: Optional[float] = None
    K2: Optional[float] = None
    values: Optional[Tuple[float, ...]] = None
    right_value: Optional[float] = None
    rule: Optional[Callable[[float], float]] = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        kind = PayoffKind(self.kind)
        object.__setattr__(self, 'kind', kind)
        if kind is PayoffKind.BUTTERFLY:
            for name in ('K1', 'K2'):
                _require_finite(name, getattr(self, name))
            if not self.K1 < self.K2:
                raise ValidationError('payoff.K1', f"need K1 < K2, got K1={self.K1}, K2={self.K2}")
            mid = 0.5 * (self.K1 + self.K2)
            if self.Km is None:
                object.__setattr__(self, 'Km', mid)
            elif not math.isclose(self.Km, mid, rel_tol=1e-12):
                raise ValidationError('payoff.Km', f"must equal (K1 + K2) / 2 = {mid}, got {self.Km}")
        elif kind is PayoffKind.TABULATED:
            if self.values is None or len(self.values) < 3:
                raise ValidationError('payoff.values', 'need at least three tabulated values')
            values = tuple(float(v) for v in self.values)
            if not all(math.isfinite(v) for v in values):
                raise ValidationError('payoff.values', 'tabulated values must be finite')
            object.__setattr__(self, 'values', values)
            if self.right_value is not None:
                _require_finite('payoff.right_value', self.right_value)
        else:
            _require_finite('payoff.K', self.K)
            if self.K <= 0:
                raise ValidationError('payoff.K', f"must be > 0, got {self.K}")

    @classmethod
    def butterfly(cls, K1, K2, Km=None):
        return cls(PayoffKind.BUTTERFLY, K1=K1, K2=K2, Km=Km)

    @classmethod
    def digital(cls, K):
        return cls(PayoffKind.DIGITAL, K=K)

    @classmethod
    def call(cls, K):
        return cls(PayoffKind.CALL, K=K)

    @classmethod
    def put(cls, K):
        return cls(PayoffKind.PUT, K=K)

    @classmethod
    def tabulated(cls, values, right_value=None, rule=None):
        """
        Payoff given by its values on the grid nodes.

        Args:
            values (sequence): Payoff at each node, length M + 1
            right_value (float): Undiscounted right-boundary value; defaults to values[-1]
            rule (callable): Optional t -> Dirichlet value replacing the discounted rule
        """
        return cls(PayoffKind.TABULATED, values=tuple(values), right_value=right_value, rule=rule)

    def boundary_value(self, t, s_max, r):
        """
        Right-boundary Dirichlet value at reversed time t.

        Args:
            t (float): Reversed time (time to maturity) in [0, T]
            s_max (float): Price at the right truncation
            r (float): Risk-free rate

        Returns:
            float: Boundary value
        """
        if self.rule is not None:
            return float(self.rule(t))

        discount = math.exp(-r * t)
        if self.kind is PayoffKind.CALL:
            return s_max - self.K * discount
        if self.kind is PayoffKind.DIGITAL:
            return discount
        if self.kind is PayoffKind.TABULATED:
            last = self.values[-1] if self.right_value is None else self.right_value
            return last * discount
        # butterfly and put vanish for large S
        return 0.0

    def describe(self):
        """Plain-data description, used in output metadata and cache keys."""
        description = {'kind': self.kind.value}
        if self.kind is PayoffKind.BUTTERFLY:
            description.update(K1=self.K1, Km=self.Km, K2=self.K2)
        elif self.kind is PayoffKind.TABULATED:
            description.update(values=list(self.values), right_value=self.right_value)
        else:
            description['K'] = self.K
        if self.rule is not None:
            description['rule'] = getattr(self.rule, '__name__', 'custom')
        return description


def sigma_star(w, band):
    """
    Select the volatility attaining the sup in the G-Black-Scholes operator.

    The sup of Sigma^2 * w over the band sits at an end point: the upper edge
    when w >= 0, the lower edge when w < 0. Works elementwise on arrays.

    Args:
        w (float or ndarray): Discrete proxy for V_XX - V_X (X-domain) or U_SS (S-domain)
        band (EffectiveBand): Volatility band

    Returns:
        float or ndarray: Selected volatility

    Raises:
        NumericDomainError: If any w is not finite
    """
    w_arr = np.asarray(w, dtype=float)
    if not np.all(np.isfinite(w_arr)):
        raise NumericDomainError('sigma_star argument must be finite', w=str(w))
    selected = np.where(w_arr >= 0.0, band.high, band.low)
    if selected.ndim == 0:
        return float(selected)
    return selected


def bs_closed_form(contract, s0, K, r, vol, T):
    """
    Classical Black-Scholes price of a European call or put.

    Args:
        contract (PayoffKind or str): 'call' or 'put'
        s0 (float): Spot price
        K (float): Strike
        r (float): Risk-free rate
        vol (float): Constant volatility
        T (float): Time to maturity in years

    Returns:
        float: Option price
    """
    kind = PayoffKind(contract)
    if kind not in (PayoffKind.CALL, PayoffKind.PUT):
        raise NumericDomainError(f"closed form only covers calls and puts, got {kind.value}")
    for name, value in (('s0', s0), ('K', K), ('r', r), ('vol', vol), ('T', T)):
        if not math.isfinite(value):
            raise NumericDomainError(f"{name} must be finite, got {value}")
    for name, value in (('s0', s0), ('K', K), ('vol', vol), ('T', T)):
        if value <= 0:
            raise NumericDomainError(f"{name} must be > 0, got {value}")

    sqrt_t = math.sqrt(T)
    d1 = (math.log(s0 / K) + (r + 0.5 * vol * vol) * T) / (vol * sqrt_t)
    d2 = d1 - vol * sqrt_t
    discounted_strike = K * math.exp(-r * T)

    if kind is PayoffKind.CALL:
        return float(s0 * norm.cdf(d1) - discounted_strike * norm.cdf(d2))
    return float(discounted_strike * norm.cdf(-d2) - s0 * norm.cdf(-d1))


def payoff_on_grid(payoff, nodes, domain=Domain.X):
    """
    Evaluate a payoff at grid nodes (level 0 of every scheme).

    Args:
        payoff (PayoffSpec): Contract
        nodes (array-like): Strictly increasing node coordinates
        domain (Domain): Whether nodes are log-prices (X) or prices (S)

    Returns:
        ndarray: Payoff values
    """
    nodes = np.asarray(nodes, dtype=float)
    if nodes.ndim != 1 or nodes.size < 2 or not np.all(np.diff(nodes) > 0):
        raise ValidationError('nodes', 'must be a strictly increasing vector')
    domain = Domain(domain)
    if domain is Domain.S and nodes[0] <= 0:
        raise ValidationError('nodes', 'S-domain nodes must be positive')

    kind = payoff.kind
    if kind is PayoffKind.TABULATED:
        if len(payoff.values) != nodes.size:
            raise ValidationError(
                'payoff.values', f"expected {nodes.size} values, got {len(payoff.values)}")
        return np.array(payoff.values, dtype=float)

    if kind is PayoffKind.DIGITAL:
        if domain is Domain.X:
            log_strike = math.log(payoff.K)
            cutoff = log_strike - _STRIKE_RTOL * max(1.0, abs(log_strike))
        else:
            cutoff = payoff.K * (1.0 - _STRIKE_RTOL)
        return np.where(nodes >= cutoff, 1.0, 0.0)

    prices = np.exp(nodes) if domain is Domain.X else nodes
    if kind is PayoffKind.CALL:
        return np.maximum(prices - payoff.K, 0.0)
    if kind is PayoffKind.PUT:
        return np.maximum(payoff.K - prices, 0.0)

    spread = (np.maximum(prices - payoff.K1, 0.0)
              - 2.0 * np.maximum(prices - payoff.Km, 0.0)
              + np.maximum(prices - payoff.K2, 0.0))
    # the linear pieces cancel exactly outside (K1, K2)
    return np.where((prices <= payoff.K1) | (prices >= payoff.K2), 0.0, spread)
