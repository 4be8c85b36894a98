"""
Convergence studies, error norms and the log-vs-price domain comparison.

Reference solutions are implicit X-domain solves on a grid every ladder grid
nests in, so errors are taken on shared nodes without any cross-grid
interpolation.
"""
from __future__ import annotations

import hashlib
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
from scipy.interpolate import BarycentricInterpolator

from config import Config
from errors import (GridMismatchError, InterpolationRangeError, NotApplicableError,
                    NumericDomainError, PricingError, StudyLevelError, ValidationError)
from grid import build_grid, check_explicit_mesh, check_s_domain_mesh, timestep_ratio
from model import Domain, MarketParams, PayoffSpec
from schemes import Method, SchemeConfig, Solution, solve

logger = logging.getLogger(__name__)

SPOT = 100.0
TARGET_X = math.log(SPOT)

# Market data shared by every benchmark study.
STUDY_MARKET = MarketParams(r=0.1, sigma=1.0, sigma_band=(0.15, 0.25), T=0.25)

COMPARISON_REFERENCES = {'full': (16384, 20480), 'fast': (4096, 8192)}

# Output columns: errors get 6 significant digits.
_ERROR_FORMAT = '{:.5e}'


@dataclass
class LevelRecord:
    timesteps: int
    nodes: int
    linf_error: float
    rate: Optional[float]
    cpu_seconds: float
    value_at_target: float
    value_diff: float
    mean_picard_iters: Optional[float] = None


@dataclass
class ReferenceRecord:
    value: float
    timesteps: int
    nodes: int
    cpu_seconds: float = 0.0
    cached: bool = False


@dataclass
class ConvergenceReport:
    """Per-level errors, observed rates and timings of one study."""

    levels: List[LevelRecord]
    reference: ReferenceRecord
    meta: dict = field(default_factory=dict)

    COLUMNS = ['timesteps', 'nodes', 'linf_error', 'rate', 'cpu_seconds',
               'value_at_target', 'value_diff', 'mean_picard_iters']

    def to_frame(self):
        return pd.DataFrame([asdict(level) for level in self.levels], columns=self.COLUMNS)

    def to_csv(self, path=None):
        frame = self.to_frame()
        formatted = pd.DataFrame({
            'timesteps': frame['timesteps'],
            'nodes': frame['nodes'],
            'linf_error': frame['linf_error'].map(_ERROR_FORMAT.format),
            'rate': frame['rate'].map(_optional('{:.4f}')),
            'cpu_seconds': frame['cpu_seconds'].map('{:.4f}'.format),
            'value_at_target': frame['value_at_target'].map('{:.6f}'.format),
            'value_diff': frame['value_diff'].map(_ERROR_FORMAT.format),
            'mean_picard_iters': frame['mean_picard_iters'].map(_optional('{:.4f}')),
        })
        return formatted.to_csv(path, index=False)

    def to_json(self, path=None):
        payload = {
            'meta': {**self.meta, 'reference': asdict(self.reference)},
            'rows': [asdict(level) for level in self.levels],
        }
        return _dump_json(payload, path)


@dataclass
class IterationProfile:
    """Picard sweeps per implicit time step."""

    counts: np.ndarray
    mean: float
    max: int

    def to_frame(self):
        return pd.DataFrame({'step': np.arange(1, self.counts.size + 1), 'iterations': self.counts})


@dataclass
class DomainRow:
    M: int
    domain: Domain
    h: float
    min_timesteps: int
    value: float
    relative_error: float
    cpu_seconds: float


@dataclass
class DomainComparison:
    """Explicit solves in the price and log-price variables at their minimum admissible N."""

    rows: List[DomainRow]
    reference_value: float
    timestep_ratio: float
    meta: dict = field(default_factory=dict)

    LABELS = [
        ('Spatial step size', 'h', _ERROR_FORMAT),
        ('Minimum time step', 'min_timesteps', '{:d}'),
        ('Numerical solution', 'value', '{:.5f}'),
        ('Relative error', 'relative_error', _ERROR_FORMAT),
        ('CPU time', 'cpu_seconds', '{:.4f}'),
    ]

    def pair(self, M):
        by_domain = {row.domain: row for row in self.rows if row.M == M}
        return by_domain[Domain.S], by_domain[Domain.X]

    def to_frame(self):
        """Five labelled rows per M with a without-log and a with-log column."""
        records = []
        for M in dict.fromkeys(row.M for row in self.rows):
            without_log, with_log = self.pair(M)
            for label, attr, fmt in self.LABELS:
                records.append({
                    'M': M,
                    'quantity': label,
                    'without_log': fmt.format(getattr(without_log, attr)),
                    'with_log': fmt.format(getattr(with_log, attr)),
                })
        return pd.DataFrame(records, columns=['M', 'quantity', 'without_log', 'with_log'])

    def to_csv(self, path=None):
        return self.to_frame().to_csv(path, index=False)

    def to_json(self, path=None):
        payload = {
            'meta': {**self.meta, 'reference_value': self.reference_value,
                     'timestep_ratio': self.timestep_ratio},
            'rows': [asdict(row) for row in self.rows],
        }
        return _dump_json(payload, path)


def _optional(fmt):
    def render(value):
        if value is None or (isinstance(value, float) and math.isnan(value)):
            return ''
        return fmt.format(value)
    return render


def _json_default(value):
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, Domain):
        return value.value
    raise TypeError(f"{type(value).__name__} is not JSON serialisable")


def _dump_json(payload, path=None):
    text = json.dumps(payload, indent=2, default=_json_default) + '\n'
    if path is None:
        return text
    Path(path).write_text(text)


def interpolate_quadratic(level, grid, x0):
    """
    Evaluate a time level off-grid by 3-point Lagrange interpolation.

    The stencil is centred on the node nearest x0 and shifted inward at the
    edges, so x0 on a node returns that nodal value.

    Args:
        level (ndarray): Values on the M + 1 grid nodes
        grid (GridSpec): Lattice of ``level``
        x0 (float): Evaluation point in grid coordinates

    Returns:
        float: Interpolated value
    """
    level = np.asarray(level, dtype=float)
    if level.size != grid.M + 1:
        raise ValidationError('level', f"expected {grid.M + 1} values, got {level.size}")
    if not (math.isfinite(x0) and grid.x_min <= x0 <= grid.x_max):
        raise InterpolationRangeError(
            f"x0={x0} lies outside [{grid.x_min}, {grid.x_max}]", x0=x0)

    centre = int(round((x0 - grid.x_min) / grid.h))
    centre = min(max(centre, 1), grid.M - 1)
    stencil = slice(centre - 1, centre + 2)
    return float(BarycentricInterpolator(grid.nodes[stencil], level[stencil])(x0))


def _nesting_stride(coarse, fine):
    a, b = coarse.grid, fine.grid
    same_domain = (a.domain is b.domain
                   and math.isclose(a.x_min, b.x_min, rel_tol=1e-12, abs_tol=1e-12)
                   and math.isclose(a.x_max, b.x_max, rel_tol=1e-12, abs_tol=1e-12))
    if not same_domain:
        raise GridMismatchError('grids cover different domains',
                                coarse=a.to_dict(), fine=b.to_dict())
    if not math.isclose(a.T, b.T, rel_tol=1e-12):
        raise GridMismatchError(f"final times differ: {a.T} vs {b.T}")
    if b.M % a.M:
        raise GridMismatchError(f"M={a.M} does not nest in M={b.M}", coarse_M=a.M, fine_M=b.M)
    return b.M // a.M


def linf_error(candidate, reference):
    """
    Max-norm difference of the final levels over the shared nodes.

    Args:
        candidate (Solution): One solution
        reference (Solution): Another solution on a nested grid

    Returns:
        float: Largest absolute nodal difference
    """
    coarse, fine = candidate, reference
    if coarse.grid.M > fine.grid.M:
        coarse, fine = fine, coarse
    stride = _nesting_stride(coarse, fine)
    return float(np.max(np.abs(coarse.final - fine.final[::stride])))


def observed_rate(e_coarse, e_fine, refinement_ratio=2.0):
    """Observed order ln(E_coarse / E_fine) / ln(ratio)."""
    for name, value in (('e_coarse', e_coarse), ('e_fine', e_fine)):
        if not (math.isfinite(value) and value > 0):
            raise NumericDomainError(f"{name} must be a positive error, got {value}")
    if not refinement_ratio > 1:
        raise NumericDomainError(f"refinement ratio must exceed 1, got {refinement_ratio}")
    return math.log(e_coarse / e_fine) / math.log(refinement_ratio)


def iteration_profile(solution):
    """
    Picard sweeps per step of an implicit solution.

    Raises:
        NotApplicableError: For explicit solutions
    """
    if not solution.is_implicit:
        raise NotApplicableError(f"{solution.method.value} solutions have no inner iteration",
                                 method=solution.method.value)
    counts = np.asarray(solution.picard_counts, dtype=int)
    return IterationProfile(counts=counts, mean=float(counts.mean()), max=int(counts.max()))


class ReferenceCache:
    """Final reference levels stored as .npz files keyed by a hash of the run inputs."""

    def __init__(self, directory=Config.CACHE_DIR):
        self.directory = Path(directory) if directory else None

    @property
    def enabled(self):
        return self.directory is not None

    @staticmethod
    def key(payoff, params, grid, cfg):
        description = {
            'payoff': payoff.describe(),
            'market': {'r': params.r, 'sigma': params.sigma,
                       'sigma_band': list(params.sigma_band), 'T': params.T},
            'grid': grid.to_dict(),
            'scheme': cfg.to_dict(),
        }
        text = json.dumps(description, sort_keys=True)
        return hashlib.sha256(text.encode('utf-8')).hexdigest()

    def _path(self, key):
        return self.directory / f"{key}.npz"

    def load(self, key, grid, method):
        if not self.enabled or not self._path(key).exists():
            return None
        with np.load(self._path(key)) as data:
            return Solution(
                grid=grid,
                method=method,
                levels=data['levels'],
                level_index=data['level_index'],
                picard_counts=data['picard_counts'],
                sup_norms=data['sup_norms'],
                boundary_values=data['boundary_values'],
                cpu_seconds=float(data['cpu_seconds']),
                meta={'cached': True},
            )

    def store(self, key, solution):
        if not self.enabled:
            return
        self.directory.mkdir(parents=True, exist_ok=True)
        np.savez(
            self._path(key),
            levels=solution.levels,
            level_index=solution.level_index,
            picard_counts=solution.picard_counts,
            sup_norms=solution.sup_norms,
            boundary_values=solution.boundary_values,
            cpu_seconds=solution.cpu_seconds,
        )


def solve_reference(payoff, params, grid, cfg=None, cache=None):
    """
    Implicit solve keeping only the final level, served from the cache when possible.

    Returns:
        Solution: Reference solution (``meta['cached']`` tells where it came from)
    """
    base = cfg or SchemeConfig()
    ref_cfg = SchemeConfig(method=Method.IMPLICIT_X, picard_tol=base.picard_tol,
                           picard_max_iters=base.picard_max_iters,
                           enforce_mesh_conditions=base.enforce_mesh_conditions)
    cache = cache or ReferenceCache(None)
    cacheable = cache.enabled and payoff.rule is None

    key = ReferenceCache.key(payoff, params, grid, ref_cfg) if cacheable else None
    if cacheable:
        cached = cache.load(key, grid, ref_cfg.method)
        if cached is not None:
            logger.info(f"Reference cache hit (N={grid.N}, M={grid.M}): {key[:12]}")
            return cached
        logger.info(f"Reference cache miss (N={grid.N}, M={grid.M}): {key[:12]}")

    solution = solve(payoff, params, grid, ref_cfg, keep_levels=False)
    solution.meta['cached'] = False
    if cacheable:
        cache.store(key, solution)
    return solution


@dataclass(frozen=True)
class StudyPreset:
    """A benchmark convergence study: payoff, scheme, domain and grids."""

    name: str
    payoff: PayoffSpec
    method: Method
    ladder: Tuple[Tuple[int, int], ...]
    x_min: float
    x_max: float
    references: Dict[str, Tuple[int, int]]

    def reference(self, preset=None):
        preset = preset or Config.REFERENCE_PRESET
        if preset not in self.references:
            raise ValidationError('reference', f"unknown preset {preset!r}, expected one of {sorted(self.references)}")
        return self.references[preset]


_BUTTERFLY = PayoffSpec.butterfly(90.0, 110.0)
_DIGITAL = PayoffSpec.digital(100.0)
_BUTTERFLY_REFERENCES = {'full': (16384, 20480), 'fast': (4096, 10240)}
_DIGITAL_REFERENCES = {'full': (16384, 30720), 'fast': (4096, 30720)}

STUDIES = {
    preset.name: preset for preset in (
        StudyPreset('butterfly-explicit', _BUTTERFLY, Method.EXPLICIT_X,
                    ((16, 160), (64, 320), (256, 640), (1024, 1280)),
                    TARGET_X - 5.0, TARGET_X + 5.0, _BUTTERFLY_REFERENCES),
        StudyPreset('butterfly-implicit', _BUTTERFLY, Method.IMPLICIT_X,
                    ((16, 640), (64, 1280), (256, 2560), (1024, 5120)),
                    TARGET_X - 5.0, TARGET_X + 5.0, _BUTTERFLY_REFERENCES),
        StudyPreset('digital-explicit', _DIGITAL, Method.EXPLICIT_X,
                    ((64, 960), (256, 1920), (1024, 3840), (4096, 7680)),
                    TARGET_X - 8.0, TARGET_X + 8.0, _DIGITAL_REFERENCES),
        StudyPreset('digital-implicit', _DIGITAL, Method.IMPLICIT_X,
                    ((64, 1280), (256, 2560), (1024, 5120), (4096, 10240)),
                    TARGET_X - 8.0, TARGET_X + 8.0, _DIGITAL_REFERENCES),
    )
}


def _validate_ladder(ladder, reference_cfg):
    ladder = [(int(N), int(M)) for N, M in ladder]
    if not ladder:
        raise ValidationError('ladder', 'needs at least one (N, M) level')
    for (n0, m0), (n1, m1) in zip(ladder, ladder[1:]):
        if not (n1 > n0 and m1 > m0):
            raise ValidationError('ladder', f"levels must strictly refine, got ({n0}, {m0}) then ({n1}, {m1})")
    N_ref, M_ref = reference_cfg
    N_last, M_last = ladder[-1]
    if N_ref < N_last or M_ref < M_last:
        raise ValidationError('reference', f"({N_ref}, {M_ref}) is coarser than the finest level ({N_last}, {M_last})")
    for N, M in ladder:
        if M_ref % M:
            raise GridMismatchError(f"ladder M={M} does not nest in reference M={M_ref}", M=M, reference_M=M_ref)
    return ladder


def run_convergence_study(payoff, params, ladder, cfg, reference_cfg, x_min=TARGET_X - 5.0,
                          x_max=TARGET_X + 5.0, target=TARGET_X, workers=1, cache=None):
    """
    Solve a refinement ladder and measure it against an implicit reference.

    Args:
        payoff (PayoffSpec): Contract
        params (MarketParams): Market data
        ladder (list): (N, M) levels, strictly refining
        cfg (SchemeConfig): Scheme for the ladder levels
        reference_cfg (tuple): (N_ref, M_ref) of the reference grid
        x_min (float): Left end of the X-domain
        x_max (float): Right end of the X-domain
        target (float): Evaluation point X0
        workers (int): Parallel level solves; CPU times are only comparable when 1
        cache (ReferenceCache): Where reference levels are kept

    Returns:
        ConvergenceReport: One record per ladder level

    Raises:
        StudyLevelError: If a ladder level fails to solve
    """
    ladder = _validate_ladder(ladder, reference_cfg)
    N_ref, M_ref = reference_cfg
    logger.info(f"Convergence study: {payoff.kind.value}, {cfg.method.value}, {len(ladder)} levels, "
                f"reference (N={N_ref}, M={M_ref})")

    reference = solve_reference(payoff, params, build_grid(x_min, x_max, M_ref, N_ref, params.T),
                                cfg, cache)
    reference_value = interpolate_quadratic(reference.final, reference.grid, target)

    def solve_level(index):
        N, M = ladder[index]
        try:
            grid = build_grid(x_min, x_max, M, N, params.T)
            solution = solve(payoff, params, grid, cfg, keep_levels=False)
            error = linf_error(solution, reference)
        except PricingError as e:
            raise StudyLevelError(index + 1, N, M + 1, e) from e
        logger.info(f"Level {index + 1}: N={N}, nodes={M + 1}, error={error:.4e}")
        return solution, error

    if workers > 1:
        logger.info(f"Solving {len(ladder)} levels on {workers} threads; CPU times are not comparable")
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(solve_level, range(len(ladder))))
    else:
        results = [solve_level(index) for index in range(len(ladder))]

    records = []
    for index, (solution, error) in enumerate(results):
        grid = solution.grid
        value = interpolate_quadratic(solution.final, grid, target)
        rate = None
        if index and error > 0 and records[-1].linf_error > 0:
            rate = observed_rate(records[-1].linf_error, error, grid.M / results[index - 1][0].grid.M)
        mean_iters = float(np.mean(solution.picard_counts)) if solution.is_implicit else None
        records.append(LevelRecord(
            timesteps=grid.N,
            nodes=grid.M + 1,
            linf_error=error,
            rate=rate,
            cpu_seconds=solution.cpu_seconds,
            value_at_target=value,
            value_diff=abs(value - reference_value),
            mean_picard_iters=mean_iters,
        ))

    return ConvergenceReport(
        levels=records,
        reference=ReferenceRecord(
            value=reference_value,
            timesteps=N_ref,
            nodes=M_ref + 1,
            cpu_seconds=reference.cpu_seconds,
            cached=bool(reference.meta.get('cached')),
        ),
        meta={
            'payoff': payoff.describe(),
            'scheme': cfg.to_dict(),
            'domain': [x_min, x_max],
            'target': target,
            'config': Config.to_dict(),
        },
    )


def compare_domains(payoff, params, s_min, s_max, M_list, reference=None, spot=SPOT, cfg=None, cache=None):
    """
    Run both explicit schemes at their minimum admissible time steps.

    Args:
        payoff (PayoffSpec): Contract
        params (MarketParams): Market data
        s_min (float): Lower price truncation
        s_max (float): Upper price truncation
        M_list (list): Spatial interval counts
        reference (str or tuple): Preset name or (N, M) of the log-domain implicit reference
        spot (float): Evaluation price S0
        cfg (SchemeConfig): Mesh enforcement and Picard settings
        cache (ReferenceCache): Where the reference level is kept

    Returns:
        DomainComparison: One row per (M, domain)
    """
    if not 0 < s_min < s_max:
        raise ValidationError('s_min', f"need 0 < s_min < s_max, got [{s_min}, {s_max}]")
    if not M_list:
        raise ValidationError('M_list', 'needs at least one M')
    cfg = cfg or SchemeConfig()
    if reference is None or isinstance(reference, str):
        reference = COMPARISON_REFERENCES[reference or Config.REFERENCE_PRESET]
    N_ref, M_ref = reference

    x_min, x_max = math.log(s_min), math.log(s_max)
    x_target = math.log(spot)
    ref_solution = solve_reference(payoff, params, build_grid(x_min, x_max, M_ref, N_ref, params.T), cfg, cache)
    reference_value = interpolate_quadratic(ref_solution.final, ref_solution.grid, x_target)

    rows = []
    for M in M_list:
        s_report = check_s_domain_mesh(s_min, s_max, M, params)
        x_report = check_explicit_mesh(build_grid(x_min, x_max, M, 1, params.T), params)
        runs = (
            (Domain.S, Method.EXPLICIT_S, s_min, s_max, s_report, spot),
            (Domain.X, Method.EXPLICIT_X, x_min, x_max, x_report, x_target),
        )
        for domain, method, lo, hi, report, point in runs:
            grid = build_grid(lo, hi, M, report.min_timesteps, params.T, domain)
            run_cfg = SchemeConfig(method=method, picard_tol=cfg.picard_tol,
                                   picard_max_iters=cfg.picard_max_iters,
                                   enforce_mesh_conditions=cfg.enforce_mesh_conditions)
            solution = solve(payoff, params, grid, run_cfg, keep_levels=False)
            value = interpolate_quadratic(solution.final, grid, point)
            rows.append(DomainRow(
                M=M,
                domain=domain,
                h=grid.h,
                min_timesteps=grid.N,
                value=value,
                relative_error=abs(value - reference_value) / abs(reference_value),
                cpu_seconds=solution.cpu_seconds,
            ))
        logger.info(f"M={M}: N_s={s_report.min_timesteps}, N_x={x_report.min_timesteps}")

    return DomainComparison(
        rows=rows,
        reference_value=reference_value,
        timestep_ratio=timestep_ratio(s_min, s_max),
        meta={'payoff': payoff.describe(), 'domain': [s_min, s_max], 'spot': spot,
              'reference': {'timesteps': N_ref, 'nodes': M_ref + 1}, 'config': Config.to_dict()},
    )
