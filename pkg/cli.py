#!/usr/bin/env python3
"""
Command-line front end for the G-expectation pricing engine.

Runs are described by a YAML document (see ``--help`` for every key) and can
be adjusted with ``--set section.key=value`` overrides.
"""
import argparse
import json
import logging
import math
import sys
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Optional, Tuple, Union

import numpy as np
import pandas as pd
import yaml

from analysis import (COMPARISON_REFERENCES, SPOT, STUDIES, compare_domains, interpolate_quadratic,
                      iteration_profile, run_convergence_study, ReferenceCache)
from config import Config
from errors import (ConfigParseError, ConfigValidationError, OutputError, PricingError, ValidationError,
                    error_record)
from grid import build_grid
from model import Domain, MarketParams, PayoffKind, PayoffSpec
from schemes import Enforcement, Method, SchemeConfig, solve

logger = logging.getLogger(__name__)


class Command(str, Enum):
    PRICE = 'price'
    CONVERGE = 'converge'
    COMPARE_DOMAINS = 'compare-domains'
    ITERATIONS = 'iterations'


class OutputFormat(str, Enum):
    CSV = 'csv'
    JSON = 'json'


SECTION_KEYS = {
    'market': ('r', 'sigma', 'sigma_band', 'T'),
    'payoff': ('kind', 'K', 'K1', 'Km', 'K2', 'values', 'right_value'),
    'grid': ('domain', 'x_min', 'x_max', 's_min', 's_max', 'M', 'N',
             'study', 'ladder', 'reference', 'M_list', 'workers'),
    'scheme': ('method', 'picard_tol', 'picard_max_iters', 'enforce_mesh_conditions'),
    'target': ('spot',),
    'output': ('path', 'format', 'curve_path'),
}
TOP_LEVEL_KEYS = ('command',) + tuple(SECTION_KEYS)

CONFIG_HELP = f"""
configuration keys (YAML, every section is a mapping):
  command                 price | converge | compare-domains | iterations (the subcommand wins)
  market.r                risk-free rate, >= 0
  market.sigma            reference volatility, > 0 (default 1.0)
  market.sigma_band       [low, high] uncertainty band, 0 < low <= high
  market.T                maturity in years, > 0
  payoff.kind             butterfly | digital | call | put | tabulated
  payoff.K                strike (digital, call, put)
  payoff.K1, payoff.K2    butterfly wings; payoff.Km defaults to their midpoint
  payoff.values           tabulated payoff on the M + 1 grid nodes
  payoff.right_value      tabulated right-boundary value before discounting
  grid.domain             x (log-price, default) | s (price)
  grid.x_min, grid.x_max  domain ends in grid coordinates
  grid.s_min, grid.s_max  domain ends as prices (logged on x-grids); use one pair
  grid.M, grid.N          spatial intervals and time steps (price, iterations)
  grid.study              converge preset: {', '.join(STUDIES)}
  grid.ladder             converge levels [[N, M], ...], strictly refining
  grid.reference          full | fast | [N, M] reference grid (converge, compare-domains)
  grid.M_list             compare-domains spatial interval counts
  grid.workers            converge levels solved in parallel (default 1)
  scheme.method           explicit_x | implicit_x | explicit_s (default implicit_x)
  scheme.picard_tol       Picard stopping increment (default {Config.PICARD_TOL:g})
  scheme.picard_max_iters Picard sweep cap (default {Config.PICARD_MAX_ITERS})
  scheme.enforce_mesh_conditions  error | warn | ignore (default {Config.MESH_ENFORCEMENT})
  target.spot             evaluation price S0 (default {SPOT:g})
  output.path             output file; standard output when omitted
  output.format           csv | json (default {Config.OUTPUT_FORMAT})
  output.curve_path       price only: also write the final (S, value) curve as CSV
"""


@dataclass(frozen=True)
class GridSection:
    """Grid keys of a run; which ones are required depends on the command."""

    domain: Domain = Domain.X
    x_min: Optional[float] = None
    x_max: Optional[float] = None
    s_min: Optional[float] = None
    s_max: Optional[float] = None
    M: Optional[int] = None
    N: Optional[int] = None
    study: Optional[str] = None
    ladder: Optional[Tuple[Tuple[int, int], ...]] = None
    reference: Optional[Union[str, Tuple[int, int]]] = None
    M_list: Optional[Tuple[int, ...]] = None
    workers: int = 1

    def bounds(self):
        """Domain ends in grid coordinates."""
        if self.x_min is not None:
            return self.x_min, self.x_max
        if self.s_min is None:
            return None
        if self.domain is Domain.X:
            return math.log(self.s_min), math.log(self.s_max)
        return self.s_min, self.s_max


@dataclass(frozen=True)
class OutputSection:
    path: Optional[str] = None
    format: OutputFormat = OutputFormat(Config.OUTPUT_FORMAT)
    curve_path: Optional[str] = None


@dataclass(frozen=True)
class RunConfig:
    command: Command
    market: MarketParams
    payoff: PayoffSpec
    grid: GridSection
    scheme: SchemeConfig = field(default_factory=SchemeConfig)
    spot: float = SPOT
    output: OutputSection = field(default_factory=OutputSection)


@contextmanager
def _section(name):
    """Re-raise invariant violations with their full key path."""
    try:
        yield
    except ConfigValidationError:
        raise
    except ValidationError as e:
        path = e.field if e.field.startswith(f"{name}.") else f"{name}.{e.field}"
        raise ConfigValidationError(path, e.reason) from e


def _float(path, value, required=False):
    if value is None:
        if required:
            raise ConfigValidationError(path, 'is required')
        return None
    try:
        number = float(value)
    except (TypeError, ValueError):
        raise ConfigValidationError(path, f"expected a number, got {value!r}")
    if not math.isfinite(number):
        raise ConfigValidationError(path, f"must be finite, got {value!r}")
    return number


def _int(path, value, required=False):
    if value is None:
        if required:
            raise ConfigValidationError(path, 'is required')
        return None
    if isinstance(value, bool) or not isinstance(value, (int, float, str)):
        raise ConfigValidationError(path, f"expected an integer, got {value!r}")
    try:
        number = float(value)
    except ValueError:
        raise ConfigValidationError(path, f"expected an integer, got {value!r}")
    if not number.is_integer():
        raise ConfigValidationError(path, f"expected an integer, got {value!r}")
    return int(number)


def _text(path, value):
    if value is None:
        return None
    if isinstance(value, (dict, list)):
        raise ConfigValidationError(path, f"expected text, got {value!r}")
    return str(value)


def _enum(path, enum_cls, value):
    try:
        return enum_cls(value)
    except (TypeError, ValueError):
        choices = ', '.join(member.value for member in enum_cls)
        raise ConfigValidationError(path, f"expected one of {choices}, got {value!r}")


def _pair(path, value, convert):
    if not isinstance(value, (list, tuple)) or len(value) != 2:
        raise ConfigValidationError(path, f"expected a pair, got {value!r}")
    return tuple(convert(f"{path}[{i}]", item, True) for i, item in enumerate(value))


def _mapping(path, value):
    if value is None:
        return {}
    if not isinstance(value, dict):
        raise ConfigValidationError(path, f"expected a mapping, got {type(value).__name__}")
    return value


def _check_keys(section, data):
    for key in data:
        if key not in SECTION_KEYS[section]:
            raise ConfigValidationError(f"{section}.{key}", 'unknown key')


def _apply_override(document, override):
    if '=' not in override:
        raise ConfigParseError(f"override {override!r} is not of the form section.key=value")
    path, raw = override.split('=', 1)
    try:
        value = yaml.safe_load(raw) if raw.strip() else None
    except yaml.YAMLError as e:
        raise ConfigParseError(f"override {path!r} has an unreadable value: {e}")

    if '.' not in path:
        document[path.strip()] = value
        return
    section, key = (part.strip() for part in path.split('.', 1))
    target = document.setdefault(section, {})
    if not isinstance(target, dict):
        raise ConfigValidationError(section, f"expected a mapping, got {type(target).__name__}")
    target[key] = value


def _load_document(text):
    try:
        document = yaml.safe_load(text) if text else None
    except yaml.YAMLError as e:
        mark = getattr(e, 'problem_mark', None)
        problem = getattr(e, 'problem', None) or str(e)
        if mark is not None:
            raise ConfigParseError(problem, line=mark.line + 1, column=mark.column + 1)
        raise ConfigParseError(problem)
    if document is None:
        return {}
    if not isinstance(document, dict):
        raise ConfigParseError(f"expected a mapping at the top level, got {type(document).__name__}")
    return document


def _parse_market(data):
    _check_keys('market', data)
    with _section('market'):
        return MarketParams(
            r=_float('market.r', data.get('r'), True),
            sigma=_float('market.sigma', data.get('sigma', 1.0), True),
            sigma_band=_pair('market.sigma_band', data.get('sigma_band'), _float),
            T=_float('market.T', data.get('T'), True),
        )


def _parse_payoff(data):
    _check_keys('payoff', data)
    if 'kind' not in data:
        raise ConfigValidationError('payoff.kind', 'is required')
    kind = _enum('payoff.kind', PayoffKind, data['kind'])
    with _section('payoff'):
        if kind is PayoffKind.BUTTERFLY:
            return PayoffSpec.butterfly(
                _float('payoff.K1', data.get('K1'), True),
                _float('payoff.K2', data.get('K2'), True),
                _float('payoff.Km', data.get('Km')),
            )
        if kind is PayoffKind.TABULATED:
            values = data.get('values')
            if not isinstance(values, (list, tuple)):
                raise ConfigValidationError('payoff.values', 'expected a list of numbers')
            return PayoffSpec.tabulated(
                [_float(f"payoff.values[{i}]", v, True) for i, v in enumerate(values)],
                right_value=_float('payoff.right_value', data.get('right_value')),
            )
        constructor = getattr(PayoffSpec, kind.value)
        return constructor(_float('payoff.K', data.get('K'), True))


def _parse_scheme(data):
    _check_keys('scheme', data)
    with _section('scheme'):
        return SchemeConfig(
            method=_enum('scheme.method', Method, data.get('method', Method.IMPLICIT_X.value)),
            picard_tol=_float('scheme.picard_tol', data.get('picard_tol', Config.PICARD_TOL), True),
            picard_max_iters=_int('scheme.picard_max_iters',
                                  data.get('picard_max_iters', Config.PICARD_MAX_ITERS), True),
            enforce_mesh_conditions=_enum('scheme.enforce_mesh_conditions', Enforcement,
                                          data.get('enforce_mesh_conditions', Config.MESH_ENFORCEMENT)),
        )


def _parse_reference(value):
    if value is None:
        return None
    if isinstance(value, str):
        if value not in COMPARISON_REFERENCES:
            raise ConfigValidationError('grid.reference', f"expected full, fast or [N, M], got {value!r}")
        return value
    return _pair('grid.reference', value, _int)


def _parse_grid(data, command, market, payoff, scheme):
    _check_keys('grid', data)
    domain = _enum('grid.domain', Domain, data.get('domain', Domain.X.value))

    ladder = data.get('ladder')
    if ladder is not None:
        if not isinstance(ladder, (list, tuple)) or not ladder:
            raise ConfigValidationError('grid.ladder', 'expected a list of [N, M] pairs')
        ladder = tuple(_pair(f"grid.ladder[{i}]", level, _int) for i, level in enumerate(ladder))
    M_list = data.get('M_list')
    if M_list is not None:
        if not isinstance(M_list, (list, tuple)) or not M_list:
            raise ConfigValidationError('grid.M_list', 'expected a list of integers')
        M_list = tuple(_int(f"grid.M_list[{i}]", M, True) for i, M in enumerate(M_list))

    section = GridSection(
        domain=domain,
        x_min=_float('grid.x_min', data.get('x_min')),
        x_max=_float('grid.x_max', data.get('x_max')),
        s_min=_float('grid.s_min', data.get('s_min')),
        s_max=_float('grid.s_max', data.get('s_max')),
        M=_int('grid.M', data.get('M')),
        N=_int('grid.N', data.get('N')),
        study=_text('grid.study', data.get('study')),
        ladder=ladder,
        reference=_parse_reference(data.get('reference')),
        M_list=M_list,
        workers=_int('grid.workers', data.get('workers', 1), True),
    )

    if (section.x_min is None) != (section.x_max is None):
        raise ConfigValidationError('grid.x_max' if section.x_max is None else 'grid.x_min',
                                    'x_min and x_max go together')
    if (section.s_min is None) != (section.s_max is None):
        raise ConfigValidationError('grid.s_max' if section.s_max is None else 'grid.s_min',
                                    's_min and s_max go together')
    if section.x_min is not None and section.s_min is not None:
        raise ConfigValidationError('grid.s_min', 'give either x_min/x_max or s_min/s_max')
    if section.s_min is not None and not 0 < section.s_min < section.s_max:
        raise ConfigValidationError('grid.s_min', f"need 0 < s_min < s_max, got [{section.s_min}, {section.s_max}]")
    if section.workers < 1:
        raise ConfigValidationError('grid.workers', f"must be >= 1, got {section.workers}")

    if command in (Command.PRICE, Command.ITERATIONS):
        if section.bounds() is None:
            raise ConfigValidationError('grid.x_min', 'a domain (x_min/x_max or s_min/s_max) is required')
        x_min, x_max = section.bounds()
        with _section('grid'):
            build_grid(x_min, x_max, _int('grid.M', section.M, True), _int('grid.N', section.N, True),
                       market.T, domain)
        needed = Domain.S if scheme.method is Method.EXPLICIT_S else Domain.X
        if domain is not needed:
            raise ConfigValidationError('grid.domain', f"{scheme.method.value} needs domain {needed.value}")
    elif command is Command.CONVERGE:
        if section.study is not None and section.study not in STUDIES:
            raise ConfigValidationError('grid.study', f"expected one of {', '.join(STUDIES)}, got {section.study!r}")
        if section.study is None:
            if section.ladder is None:
                raise ConfigValidationError('grid.ladder', 'is required without grid.study')
            if section.bounds() is None:
                raise ConfigValidationError('grid.x_min', 'a domain is required without grid.study')
            if not isinstance(section.reference, tuple):
                raise ConfigValidationError('grid.reference', 'an explicit [N, M] is required without grid.study')
        else:
            preset = STUDIES[section.study]
            if scheme.method is not preset.method:
                raise ConfigValidationError(
                    'scheme.method', f"study {preset.name} runs {preset.method.value}, got {scheme.method.value}")
            if payoff.kind is not preset.payoff.kind:
                raise ConfigValidationError(
                    'payoff.kind', f"study {preset.name} prices a {preset.payoff.kind.value}, got {payoff.kind.value}")
            if payoff != preset.payoff:
                raise ConfigValidationError(
                    'payoff', f"study {preset.name} prices {preset.payoff.describe()}, got {payoff.describe()}")
        if domain is not Domain.X or scheme.method is Method.EXPLICIT_S:
            raise ConfigValidationError('scheme.method', 'convergence studies run on the log-price grid')
    elif command is Command.COMPARE_DOMAINS:
        if section.s_min is None:
            raise ConfigValidationError('grid.s_min', 'compare-domains needs s_min and s_max')
        if section.M_list is None:
            raise ConfigValidationError('grid.M_list', 'is required')
        for M in section.M_list:
            if M < 2:
                raise ConfigValidationError('grid.M_list', f"need M >= 2, got {M}")

    if command is Command.ITERATIONS and scheme.method is not Method.IMPLICIT_X:
        raise ConfigValidationError('scheme.method', 'iterations needs implicit_x')
    return section


def _parse_output(data):
    _check_keys('output', data)
    return OutputSection(
        path=_text('output.path', data.get('path')),
        format=_enum('output.format', OutputFormat, data.get('format', Config.OUTPUT_FORMAT)),
        curve_path=_text('output.curve_path', data.get('curve_path')),
    )


def parse_config(text, overrides=()):
    """
    Parse and validate a run configuration.

    Args:
        text (str): YAML document
        overrides (iterable): ``section.key=value`` strings applied on top

    Returns:
        RunConfig: Validated configuration

    Raises:
        ConfigParseError: If the text is not well-formed
        ConfigValidationError: If a key is unknown or a value breaks an invariant
    """
    document = _load_document(text)
    for override in overrides:
        _apply_override(document, override)

    for key in document:
        if key not in TOP_LEVEL_KEYS:
            raise ConfigValidationError(str(key), 'unknown key')
    if 'command' not in document:
        raise ConfigValidationError('command', 'is required')
    command = _enum('command', Command, document['command'])

    sections = {name: _mapping(name, document.get(name)) for name in SECTION_KEYS}
    for name in ('market', 'payoff'):
        if not sections[name]:
            raise ConfigValidationError(name, 'section is required')

    market = _parse_market(sections['market'])
    payoff = _parse_payoff(sections['payoff'])
    scheme_data = sections['scheme']
    study = sections['grid'].get('study')
    if command is Command.CONVERGE and isinstance(study, str) and study in STUDIES and 'method' not in scheme_data:
        scheme_data = {**scheme_data, 'method': STUDIES[study].method.value}
    scheme = _parse_scheme(scheme_data)
    grid = _parse_grid(sections['grid'], command, market, payoff, scheme)
    _check_keys('target', sections['target'])
    spot = _float('target.spot', sections['target'].get('spot', SPOT), True)
    if spot <= 0:
        raise ConfigValidationError('target.spot', f"must be > 0, got {spot}")

    return RunConfig(
        command=command,
        market=market,
        payoff=payoff,
        grid=grid,
        scheme=scheme,
        spot=spot,
        output=_parse_output(sections['output']),
    )


def _plain(value):
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, tuple):
        return [_plain(item) for item in value]
    return value


def render_config(config):
    """Serialise a RunConfig back to YAML that ``parse_config`` accepts."""
    payoff = {key: value for key, value in config.payoff.describe().items()
              if value is not None and key != 'rule'}
    grid = {name: _plain(getattr(config.grid, name)) for name in SECTION_KEYS['grid']
            if getattr(config.grid, name) is not None}
    output = {name: _plain(getattr(config.output, name)) for name in SECTION_KEYS['output']
              if getattr(config.output, name) is not None}
    document = {
        'command': config.command.value,
        'market': {
            'r': config.market.r,
            'sigma': config.market.sigma,
            'sigma_band': list(config.market.sigma_band),
            'T': config.market.T,
        },
        'payoff': payoff,
        'grid': grid,
        'scheme': config.scheme.to_dict(),
        'target': {'spot': config.spot},
        'output': output,
    }
    return yaml.safe_dump(document, sort_keys=False)


def _emit(text, path):
    """Standard output gets whatever a writer returned instead of writing a file."""
    if path is None and text is not None:
        sys.stdout.write(text)
    elif path is not None:
        logger.info(f"Wrote {path}")


def _write_rows(rows, meta, fmt, path):
    if fmt is OutputFormat.CSV:
        text = pd.DataFrame(rows).to_csv(path, index=False)
    else:
        text = json.dumps({'meta': meta, 'rows': rows}, indent=2) + '\n'
        if path is not None:
            with open(path, 'w') as handle:
                handle.write(text)
            text = None
    _emit(text, path)


def _run_price(config):
    x_min, x_max = config.grid.bounds()
    grid = build_grid(x_min, x_max, config.grid.M, config.grid.N, config.market.T, config.grid.domain)
    solution = solve(config.payoff, config.market, grid, config.scheme, keep_levels=False)
    point = math.log(config.spot) if grid.domain is Domain.X else config.spot
    value = interpolate_quadratic(solution.final, grid, point)

    mesh = solution.mesh.to_dict()
    record = {
        'value': value,
        'spot': config.spot,
        'method': config.scheme.method.value,
        'domain': grid.domain.value,
        'M': grid.M,
        'N': grid.N,
        'h': grid.h,
        'dt': grid.dt,
        'explicit_lower_ok': mesh['explicit_lower_ok'],
        'upper_ok': mesh['upper_ok'],
        'min_timesteps': mesh['min_timesteps'],
        'max_abs_value': float(solution.sup_norms.max()),
        'mean_picard_iters': float(solution.picard_counts.mean()) if solution.is_implicit else None,
        'cpu_seconds': solution.cpu_seconds,
    }
    meta = {'payoff': config.payoff.describe(), 'grid': grid.to_dict(), 'scheme': config.scheme.to_dict(),
            'mesh': mesh, 'config': Config.to_dict()}
    _write_rows([record], meta, config.output.format, config.output.path)

    if config.output.curve_path:
        prices = np.exp(grid.nodes) if grid.domain is Domain.X else grid.nodes
        pd.DataFrame({'S': prices, 'value': solution.final}).to_csv(config.output.curve_path, index=False)
        logger.info(f"Wrote value curve to {config.output.curve_path}")


def _run_converge(config):
    grid = config.grid
    if grid.study is not None:
        preset = STUDIES[grid.study]
        ladder = grid.ladder or preset.ladder
        reference = grid.reference if isinstance(grid.reference, tuple) else preset.reference(grid.reference)
        x_min, x_max = grid.bounds() or (preset.x_min, preset.x_max)
    else:
        ladder, reference = grid.ladder, grid.reference
        x_min, x_max = grid.bounds()

    report = run_convergence_study(
        config.payoff, config.market, ladder, config.scheme, reference,
        x_min=x_min, x_max=x_max, target=math.log(config.spot),
        workers=grid.workers, cache=ReferenceCache(Config.CACHE_DIR),
    )
    if grid.study is not None:
        report.meta['study'] = grid.study
    writer = report.to_csv if config.output.format is OutputFormat.CSV else report.to_json
    _emit(writer(config.output.path), config.output.path)


def _run_compare_domains(config):
    grid = config.grid
    comparison = compare_domains(
        config.payoff, config.market, grid.s_min, grid.s_max, list(grid.M_list),
        reference=grid.reference, spot=config.spot, cfg=config.scheme,
        cache=ReferenceCache(Config.CACHE_DIR),
    )
    writer = comparison.to_csv if config.output.format is OutputFormat.CSV else comparison.to_json
    _emit(writer(config.output.path), config.output.path)


def _run_iterations(config):
    x_min, x_max = config.grid.bounds()
    grid = build_grid(x_min, x_max, config.grid.M, config.grid.N, config.market.T)
    solution = solve(config.payoff, config.market, grid, config.scheme, keep_levels=False)
    profile = iteration_profile(solution)
    rows = profile.to_frame().to_dict('records')
    rows = [{key: int(value) for key, value in row.items()} for row in rows]
    meta = {'payoff': config.payoff.describe(), 'grid': grid.to_dict(),
            'mean': profile.mean, 'max': profile.max, 'config': Config.to_dict()}
    _write_rows(rows, meta, config.output.format, config.output.path)


COMMANDS = {
    Command.PRICE: _run_price,
    Command.CONVERGE: _run_converge,
    Command.COMPARE_DOMAINS: _run_compare_domains,
    Command.ITERATIONS: _run_iterations,
}


def _fail(error, start_time):
    record = error_record(error, start_time)
    sys.stderr.write(json.dumps(record) + '\n')
    return record['exit_code']


def run(config):
    """
    Execute a validated configuration.

    Returns:
        int: Process exit status; failures print a JSON error record on stderr
    """
    start_time = time.perf_counter()
    logger.info(f"Running {config.command.value}")
    try:
        for path in (config.output.path, config.output.curve_path):
            if path:
                Path(path).parent.mkdir(parents=True, exist_ok=True)
        COMMANDS[config.command](config)
    except PricingError as e:
        logger.error(f"{config.command.value} failed: {e}")
        return _fail(e, start_time)
    except OSError as e:
        error = OutputError(e.filename or config.output.path, e)
        logger.error(f"{config.command.value} failed: {error}")
        return _fail(error, start_time)
    logger.info(f"{config.command.value} finished in {time.perf_counter() - start_time:.3f}s")
    return 0


def configure_logging():
    logging.basicConfig(
        level=getattr(logging, Config.LOG_LEVEL, logging.INFO),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        handlers=[
            logging.FileHandler(Config.LOG_FILE),
            logging.StreamHandler()
        ],
        force=True,
    )


def build_parser():
    parser = argparse.ArgumentParser(
        description='Price European options under volatility uncertainty (G-Black-Scholes)',
        epilog=CONFIG_HELP,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    subparsers = parser.add_subparsers(dest='command', help='Available commands')

    descriptions = {
        Command.PRICE: 'Price one contract on one grid',
        Command.CONVERGE: 'Run a grid-refinement convergence study',
        Command.COMPARE_DOMAINS: 'Compare explicit solves in price and log-price variables',
        Command.ITERATIONS: 'Record Picard sweeps per implicit time step',
    }
    for command, description in descriptions.items():
        sub = subparsers.add_parser(command.value, help=description, epilog=CONFIG_HELP,
                                    formatter_class=argparse.RawDescriptionHelpFormatter)
        sub.add_argument('--config', '-c', help='YAML run configuration')
        sub.add_argument('--set', dest='overrides', action='append', default=[], metavar='SECTION.KEY=VALUE',
                         help='Override one configuration key (repeatable)')
        sub.add_argument('--output', '-o', help='Output file (overrides output.path)')
        sub.add_argument('--format', '-f', choices=[f.value for f in OutputFormat],
                         help='Output format (overrides output.format)')
    return parser


def main(argv=None):
    """Main CLI function."""
    parser = build_parser()
    args = parser.parse_args(argv)

    if not args.command:
        parser.print_help()
        return 0

    configure_logging()
    start_time = time.perf_counter()
    overrides = list(args.overrides) + [f"command={args.command}"]
    if args.output:
        overrides.append(f"output.path={args.output}")
    if args.format:
        overrides.append(f"output.format={args.format}")

    try:
        text = ''
        if args.config:
            with open(args.config) as handle:
                text = handle.read()
        config = parse_config(text, overrides)
    except OSError as e:
        logger.error(f"Cannot read configuration: {e}")
        return _fail(ConfigParseError(f"cannot read {args.config}: {e.strerror}"), start_time)
    except PricingError as e:
        logger.error(f"Invalid configuration: {e}")
        return _fail(e, start_time)

    return run(config)


if __name__ == '__main__':
    sys.exit(main())
