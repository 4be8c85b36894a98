"""
Benchmark convergence studies and domain comparisons at full size.

These solve grids with tens of thousands of nodes; run them with ``pytest -m slow``.
They use the ``fast`` reference grids, so values carry a 5e-3 absolute tolerance.
"""
import pytest

from analysis import STUDIES, STUDY_MARKET, compare_domains, run_convergence_study
from model import PayoffSpec
from schemes import SchemeConfig

pytestmark = pytest.mark.slow

RATE_TOL = 0.3
VALUE_TOL = 5e-3


def run_study(name):
    preset = STUDIES[name]
    return run_convergence_study(preset.payoff, STUDY_MARKET, preset.ladder, SchemeConfig(method=preset.method),
                                 preset.reference('fast'), x_min=preset.x_min, x_max=preset.x_max)


@pytest.fixture(scope='module')
def butterfly_explicit():
    return run_study('butterfly-explicit')


@pytest.fixture(scope='module')
def butterfly_implicit():
    return run_study('butterfly-implicit')


@pytest.fixture(scope='module')
def digital_explicit():
    return run_study('digital-explicit')


@pytest.fixture(scope='module')
def digital_implicit():
    return run_study('digital-implicit')


def rates(report):
    return [level.rate for level in report.levels[1:]]


def errors(report):
    return [level.linf_error for level in report.levels]


def assert_value_diffs_settle(report):
    """From the second level on, each |value - reference| is at most twice the previous one."""
    diffs = [level.value_diff for level in report.levels]
    for previous, current in zip(diffs[1:], diffs[2:]):
        assert current <= 2.0 * previous


class TestButterflyStudies:
    def test_explicit_rates(self, butterfly_explicit):
        assert errors(butterfly_explicit) == sorted(errors(butterfly_explicit), reverse=True)
        assert rates(butterfly_explicit) == pytest.approx([1.63, 1.90, 2.04], abs=RATE_TOL)

    def test_implicit_rates(self, butterfly_implicit):
        assert errors(butterfly_implicit) == sorted(errors(butterfly_implicit), reverse=True)
        assert rates(butterfly_implicit) == pytest.approx([1.95, 1.87, 2.36], abs=RATE_TOL)

    @pytest.mark.parametrize('study', ['butterfly_explicit', 'butterfly_implicit'])
    def test_values_approach_reference(self, study, request):
        assert_value_diffs_settle(request.getfixturevalue(study))

    def test_picard_needs_few_sweeps(self, butterfly_implicit):
        assert all(level.mean_picard_iters <= 3 for level in butterfly_implicit.levels)

    def test_values_at_spot(self, butterfly_explicit, butterfly_implicit):
        assert butterfly_explicit.reference.value == pytest.approx(4.881582, abs=VALUE_TOL)
        assert butterfly_explicit.levels[-1].value_at_target == pytest.approx(4.883390, abs=VALUE_TOL)
        assert butterfly_implicit.levels[-1].value_at_target == pytest.approx(4.881922, abs=VALUE_TOL)


class TestDigitalStudies:
    def test_explicit_rates(self, digital_explicit):
        assert rates(digital_explicit) == pytest.approx([1.06, 1.11, 1.24], abs=RATE_TOL)

    def test_implicit_final_rate(self, digital_implicit):
        assert digital_implicit.levels[-1].rate == pytest.approx(1.19, abs=0.4)
        assert digital_implicit.levels[-1].linf_error < digital_implicit.levels[0].linf_error

    def test_values_at_spot(self, digital_explicit):
        assert digital_explicit.reference.value == pytest.approx(0.690662, abs=VALUE_TOL)
        assert digital_explicit.levels[-1].value_at_target == pytest.approx(0.688773, abs=VALUE_TOL)


@pytest.mark.parametrize('payoff, reference, with_log, without_log', [
    (PayoffSpec.butterfly(90.0, 110.0), 4.881540, (4.88094, 4.88127, 4.88142), {200: 4.88397}),
    (PayoffSpec.digital(100.0), 0.690660, (0.68470, 0.68928, 0.69156), {800: 0.68755}),
], ids=['butterfly', 'digital'])
def test_domain_comparison(payoff, reference, with_log, without_log):
    comparison = compare_domains(payoff, STUDY_MARKET, 50.0, 150.0, [200, 400, 800], reference='fast')
    assert comparison.reference_value == pytest.approx(reference, abs=VALUE_TOL)
    assert comparison.timestep_ratio == pytest.approx(2.7155, abs=1e-3)
    for M, expected in zip((200, 400, 800), with_log):
        s_row, x_row = comparison.pair(M)
        assert x_row.value == pytest.approx(expected, abs=VALUE_TOL)
        assert x_row.min_timesteps < s_row.min_timesteps
    for M, expected in without_log.items():
        assert comparison.pair(M)[0].value == pytest.approx(expected, abs=VALUE_TOL)
    assert [comparison.pair(M)[1].min_timesteps for M in (200, 400, 800)] == [518, 2072, 8286]
    assert [comparison.pair(M)[0].min_timesteps for M in (200, 400, 800)] == [1407, 5625, 22500]
