import io
import json
import math
import re

import numpy as np
import pandas as pd
import pytest

from analysis import (STUDIES, STUDY_MARKET, ConvergenceReport, ReferenceCache, compare_domains,
                      interpolate_quadratic, iteration_profile, linf_error, observed_rate,
                      run_convergence_study, solve_reference)
from config import Config
from errors import (GridMismatchError, InterpolationRangeError, NotApplicableError, NumericDomainError,
                    StudyLevelError, ValidationError)
from grid import build_grid, check_explicit_mesh, check_s_domain_mesh
from model import Domain, PayoffSpec
from schemes import Enforcement, Method, SchemeConfig, solve
from tests.conftest import LOG_SPOT, make_solution

SMALL_LADDER = ((4, 40), (16, 80))
SMALL_REFERENCE = (64, 160)


class TestInterpolateQuadratic:
    def test_reproduces_square(self):
        grid = build_grid(0.0, 2.0, 2, 1, 1.0)
        assert interpolate_quadratic([0.0, 1.0, 4.0], grid, 1.5) == pytest.approx(2.25, abs=1e-15)

    def test_nodal_value_is_exact(self):
        grid = build_grid(-1.0, 3.0, 16, 1, 1.0)
        level = np.exp(grid.nodes) + np.sin(7 * grid.nodes)
        for i in (0, 1, 7, 15, 16):
            assert interpolate_quadratic(level, grid, grid.nodes[i]) == level[i]

    def test_quadratic_exactness(self):
        rng = np.random.default_rng(11)
        grid = build_grid(-2.0, 5.0, 35, 1, 1.0)
        for _ in range(25):
            a, b, c = rng.normal(size=3)
            level = a * grid.nodes ** 2 + b * grid.nodes + c
            x0 = rng.uniform(grid.x_min, grid.x_max)
            expected = a * x0 * x0 + b * x0 + c
            assert interpolate_quadratic(level, grid, x0) == pytest.approx(expected, rel=1e-10, abs=1e-10)

    @pytest.mark.parametrize('x0', [-1.01, 3.5, math.nan])
    def test_outside_domain(self, x0):
        grid = build_grid(-1.0, 3.0, 8, 1, 1.0)
        with pytest.raises(InterpolationRangeError):
            interpolate_quadratic(np.zeros(9), grid, x0)

    def test_level_length_checked(self):
        grid = build_grid(-1.0, 3.0, 8, 1, 1.0)
        with pytest.raises(ValidationError):
            interpolate_quadratic(np.zeros(8), grid, 0.0)


class TestLinfError:
    def test_identical(self):
        grid = build_grid(0.0, 1.0, 8, 4, 1.0)
        solution = make_solution(grid, np.linspace(0.0, 1.0, 9) ** 2)
        assert linf_error(solution, solution) == 0.0

    def test_constants(self):
        coarse = make_solution(build_grid(0.0, 1.0, 4, 4, 1.0), np.full(5, 1.25))
        fine = make_solution(build_grid(0.0, 1.0, 16, 64, 1.0), np.full(17, -0.5))
        assert linf_error(coarse, fine) == pytest.approx(1.75)

    def test_uses_shared_nodes_only(self):
        fine_grid = build_grid(0.0, 1.0, 8, 4, 1.0)
        fine_values = np.zeros(9)
        fine_values[1::2] = 100.0
        coarse = make_solution(build_grid(0.0, 1.0, 4, 4, 1.0), np.ones(5))
        assert linf_error(coarse, make_solution(fine_grid, fine_values)) == 1.0

    def test_symmetric(self):
        rng = np.random.default_rng(3)
        coarse = make_solution(build_grid(0.0, 1.0, 5, 4, 1.0), rng.normal(size=6))
        fine = make_solution(build_grid(0.0, 1.0, 20, 4, 1.0), rng.normal(size=21))
        assert linf_error(coarse, fine) == linf_error(fine, coarse)

    @pytest.mark.parametrize('other', [
        build_grid(0.0, 1.0, 12, 4, 1.0),
        build_grid(0.0, 2.0, 16, 4, 1.0),
        build_grid(0.0, 1.0, 16, 4, 2.0),
    ])
    def test_mismatch(self, other):
        coarse = make_solution(build_grid(0.0, 1.0, 8, 4, 1.0), np.zeros(9))
        with pytest.raises(GridMismatchError):
            linf_error(coarse, make_solution(other, np.zeros(other.M + 1)))


class TestObservedRate:
    @pytest.mark.parametrize('coarse, fine, expected', [
        (1.196, 0.3858, 1.63),
        (6.032e-2, 1.565e-2, 1.95),
    ])
    def test_known_rates(self, coarse, fine, expected):
        assert observed_rate(coarse, fine, 2) == pytest.approx(expected, abs=0.01)

    def test_exact_orders(self):
        assert observed_rate(4e-2, 1e-2, 2) == 2.0
        for p in (1, 2, 3):
            assert observed_rate(0.37, 0.37 / 2 ** p, 2) == pytest.approx(p, rel=1e-12)

    @pytest.mark.parametrize('args', [(0.0, 1.0, 2), (1.0, -1.0, 2), (1.0, 0.5, 1.0), (math.nan, 0.5, 2)])
    def test_domain_errors(self, args):
        with pytest.raises(NumericDomainError):
            observed_rate(*args)


class TestIterationProfile:
    def test_explicit_not_applicable(self, market, butterfly, study_grid):
        solution = solve(butterfly, market, study_grid(N=16, M=160), SchemeConfig(method=Method.EXPLICIT_X))
        with pytest.raises(NotApplicableError):
            iteration_profile(solution)

    def test_counts_and_summary(self, market, butterfly, study_grid):
        solution = solve(butterfly, market, study_grid(N=64, M=640), keep_levels=False)
        profile = iteration_profile(solution)
        assert profile.counts.size == 64
        assert profile.mean == pytest.approx(profile.counts.mean())
        assert profile.max == profile.counts.max()
        assert 1 <= profile.max <= SchemeConfig().picard_max_iters
        assert profile.mean < 10
        frame = profile.to_frame()
        assert list(frame.columns) == ['step', 'iterations']
        assert frame['step'].tolist() == list(range(1, 65))


class TestConvergenceStudy:
    @staticmethod
    def run(payoff, params, method=Method.IMPLICIT_X, ladder=SMALL_LADDER, reference=SMALL_REFERENCE, **kwargs):
        return run_convergence_study(payoff, params, ladder, SchemeConfig(method=method), reference,
                                     x_min=LOG_SPOT - 5.0, x_max=LOG_SPOT + 5.0, **kwargs)

    def test_report_fields(self, market, butterfly):
        report = self.run(butterfly, market)
        first, second = report.levels
        assert (first.timesteps, first.nodes) == (4, 41)
        assert (second.timesteps, second.nodes) == (16, 81)
        assert first.rate is None
        assert second.rate == pytest.approx(observed_rate(first.linf_error, second.linf_error, 2))
        assert first.linf_error > second.linf_error > 0
        for level in report.levels:
            assert level.value_diff == pytest.approx(abs(level.value_at_target - report.reference.value))
            assert level.mean_picard_iters >= 1
        assert report.reference.nodes == 161

    def test_explicit_levels_have_no_iterations(self, market, butterfly):
        report = self.run(butterfly, market, Method.EXPLICIT_X, ladder=((16, 40), (64, 80)))
        assert all(level.mean_picard_iters is None for level in report.levels)

    def test_level_equal_to_reference(self, market, butterfly):
        report = self.run(butterfly, market, ladder=(SMALL_REFERENCE,))
        assert report.levels[0].linf_error == 0.0
        assert report.levels[0].rate is None
        assert report.levels[0].value_diff == 0.0

    def test_ladder_must_refine(self, market, butterfly):
        with pytest.raises(ValidationError):
            self.run(butterfly, market, ladder=((16, 80), (4, 40)))
        with pytest.raises(ValidationError):
            self.run(butterfly, market, ladder=((4, 40), (128, 320)))

    def test_ladder_must_nest(self, market, butterfly):
        with pytest.raises(GridMismatchError):
            self.run(butterfly, market, ladder=((4, 30), (16, 80)))

    def test_failed_level_is_named(self, market, butterfly):
        cfg = SchemeConfig(method=Method.EXPLICIT_X, enforce_mesh_conditions=Enforcement.ERROR)
        with pytest.raises(StudyLevelError) as exc_info:
            run_convergence_study(butterfly, market, ((1, 160), (4, 320)), cfg, (16, 640),
                                  x_min=LOG_SPOT - 5.0, x_max=LOG_SPOT + 5.0)
        assert exc_info.value.level == 1
        assert exc_info.value.details['timesteps'] == 1
        assert exc_info.value.details['cause'] == 'MeshConditionError'

    def test_parallel_levels_match(self, market, digital):
        sequential = self.run(digital, market)
        parallel = self.run(digital, market, workers=2)
        for a, b in zip(sequential.levels, parallel.levels):
            assert a.linf_error == b.linf_error
            assert a.value_at_target == b.value_at_target

    def test_csv_layout(self, market, butterfly, tmp_path):
        path = tmp_path / 'study.csv'
        self.run(butterfly, market).to_csv(path)
        frame = pd.read_csv(path, dtype=str, keep_default_na=False)
        assert list(frame.columns) == ConvergenceReport.COLUMNS
        assert all(re.fullmatch(r'\d\.\d{5}e[+-]\d{2}', value) for value in frame['linf_error'])
        assert frame['rate'][0] == ''

    def test_csv_deterministic(self, market, digital):
        first = pd.read_csv(io.StringIO(self.run(digital, market).to_csv()))
        second = pd.read_csv(io.StringIO(self.run(digital, market).to_csv()))
        pd.testing.assert_frame_equal(first.drop(columns='cpu_seconds'), second.drop(columns='cpu_seconds'))

    def test_json_layout(self, market, butterfly, tmp_path):
        path = tmp_path / 'study.json'
        self.run(butterfly, market).to_json(path)
        payload = json.loads(path.read_text())
        assert set(payload) == {'meta', 'rows'}
        assert len(payload['rows']) == 2
        assert payload['rows'][0]['rate'] is None
        assert payload['meta']['reference']['nodes'] == 161
        assert payload['meta']['config'] == Config.to_dict()


class TestReferenceCache:
    def test_second_solve_is_served_from_cache(self, market, butterfly, tmp_path):
        cache = ReferenceCache(tmp_path / 'cache')
        grid = build_grid(LOG_SPOT - 5.0, LOG_SPOT + 5.0, 80, 16, market.T)
        first = solve_reference(butterfly, market, grid, cache=cache)
        second = solve_reference(butterfly, market, grid, cache=cache)
        assert first.meta['cached'] is False
        assert second.meta['cached'] is True
        np.testing.assert_array_equal(first.final, second.final)
        assert len(list((tmp_path / 'cache').glob('*.npz'))) == 1

    def test_key_depends_on_inputs(self, market, butterfly, digital):
        grid = build_grid(LOG_SPOT - 5.0, LOG_SPOT + 5.0, 80, 16, market.T)
        other = build_grid(LOG_SPOT - 5.0, LOG_SPOT + 5.0, 160, 16, market.T)
        cfg = SchemeConfig()
        key = ReferenceCache.key(butterfly, market, grid, cfg)
        assert key == ReferenceCache.key(butterfly, market, grid, cfg)
        assert key != ReferenceCache.key(digital, market, grid, cfg)
        assert key != ReferenceCache.key(butterfly, market, other, cfg)

    def test_disabled_cache_writes_nothing(self, market, butterfly, tmp_path):
        grid = build_grid(LOG_SPOT - 5.0, LOG_SPOT + 5.0, 80, 16, market.T)
        solution = solve_reference(butterfly, market, grid, cache=ReferenceCache(''))
        assert solution.meta['cached'] is False
        assert not any(tmp_path.glob('**/*.npz'))


class TestCompareDomains:
    def test_rows_and_minimum_steps(self, market, butterfly):
        comparison = compare_domains(butterfly, market, 50.0, 150.0, [20, 40], reference=(64, 160))
        assert len(comparison.rows) == 4
        for M in (20, 40):
            without_log, with_log = comparison.pair(M)
            assert without_log.domain is Domain.S and with_log.domain is Domain.X
            assert without_log.min_timesteps == check_s_domain_mesh(50.0, 150.0, M, market).min_timesteps
            grid = build_grid(math.log(50.0), math.log(150.0), M, 1, market.T)
            assert with_log.min_timesteps == check_explicit_mesh(grid, market).min_timesteps
            assert with_log.min_timesteps < without_log.min_timesteps
            for row in (without_log, with_log):
                assert row.relative_error == pytest.approx(
                    abs(row.value - comparison.reference_value) / comparison.reference_value)
        assert comparison.timestep_ratio == pytest.approx(2.7155, abs=1e-3)

    def test_table_layout(self, market, digital, tmp_path):
        comparison = compare_domains(digital, market, 50.0, 150.0, [20], reference=(64, 160))
        frame = comparison.to_frame()
        assert frame['quantity'].tolist() == [
            'Spatial step size', 'Minimum time step', 'Numerical solution', 'Relative error', 'CPU time']
        assert list(frame.columns) == ['M', 'quantity', 'without_log', 'with_log']
        comparison.to_json(tmp_path / 'compare.json')
        payload = json.loads((tmp_path / 'compare.json').read_text())
        assert payload['rows'][0]['domain'] == 's'
        assert payload['meta']['config'] == Config.to_dict()

    def test_rejects_bad_range(self, market, digital):
        with pytest.raises(ValidationError):
            compare_domains(digital, market, 150.0, 50.0, [20])


class TestStudyPresets:
    def test_ladders_nest_in_references(self):
        for preset in STUDIES.values():
            for N_ref, M_ref in preset.references.values():
                for N, M in preset.ladder:
                    assert M_ref % M == 0
                    assert N <= N_ref

    def test_explicit_ladders_satisfy_mesh_conditions(self):
        for preset in STUDIES.values():
            for N, M in preset.ladder:
                grid = build_grid(preset.x_min, preset.x_max, M, N, STUDY_MARKET.T)
                report = check_explicit_mesh(grid, STUDY_MARKET)
                assert report.upper_ok
                if preset.method is Method.EXPLICIT_X:
                    assert report.explicit_lower_ok, (preset.name, N, M)

    def test_strike_is_a_node(self):
        for name in ('digital-explicit', 'digital-implicit'):
            preset = STUDIES[name]
            for _, M in preset.ladder:
                grid = build_grid(preset.x_min, preset.x_max, M, 1, STUDY_MARKET.T)
                assert np.min(np.abs(grid.nodes - LOG_SPOT)) < 1e-12

    def test_unknown_reference_preset(self):
        with pytest.raises(ValidationError):
            STUDIES['butterfly-explicit'].reference('huge')

    def test_payoffs(self):
        assert STUDIES['butterfly-implicit'].payoff == PayoffSpec.butterfly(90, 110)
        assert STUDIES['digital-explicit'].payoff == PayoffSpec.digital(100)
