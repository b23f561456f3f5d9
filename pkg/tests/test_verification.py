import math
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from jacobs_ladder import verification as ver
from jacobs_ladder.bundle import read_bundle
from jacobs_ladder.config import CACHE_ENV_VAR, RunConfig
from jacobs_ladder.errors import TableInvariantError
from jacobs_ladder.ladder import LadderTable, format_table
from jacobs_ladder.models import CLAIMS, IntervalSpec, SignalParams, VerificationReport


def _recorded(*ratios: float) -> list[VerificationReport]:
	return [VerificationReport.measured('thm-1', ratio, 1.0, band=None) for ratio in ratios]


# ------------------------------------------------------------------------------------------------ #
#                                             Stability                                            #
# ------------------------------------------------------------------------------------------------ #

def test_stability_reports():
	reports = ver.stability_reports(_recorded(1.0, 2.0), 2.5)
	assert [r.status for r in reports] == ['pass', 'pass']
	assert reports[0].tolerance_band == pytest.approx((0.8, 2.5))

	reports = ver.stability_reports(_recorded(1.0, 3.0), 2.5)
	assert [r.status for r in reports] == ['fail', 'fail']

	assert ver.stability_reports([], 2.5) == []


def test_stability_reports_power():
	"""Constants of squared inequalities are ratio ** (1 / 2^m)."""
	reports = ver.stability_reports(_recorded(1.0, 4.0), 2.5, power=2)
	assert [r.empirical_constant for r in reports] == pytest.approx([1.0, 2.0])
	assert all(r.status == 'pass' for r in reports)

	reports = ver.stability_reports(_recorded(1.0, 9.0), 2.5, power=2)
	assert all(r.status == 'fail' for r in reports)


def test_stability_reports_nonpositive():
	reports = ver.stability_reports(_recorded(0.0, 1.0), 2.5)
	assert all(r.status == 'fail' for r in reports)

	reports = ver.stability_reports(_recorded(0.0), 2.5)
	assert reports[0].status == 'fail'


def test_trend_widths():
	widths = ver.trend_widths(1000.0, 4, 0.01)
	assert len(widths) == 4
	assert widths[0] == pytest.approx(1000 / math.log(1000) ** 2)
	assert widths[-1] == pytest.approx(1000.0 ** (1 / 3 + 0.02))
	assert all(a > b for a, b in zip(widths, widths[1:]))


def test_scales():
	assert ver.ramachandra_scale(math.e, 0) == pytest.approx(math.e)
	assert ver.ramachandra_scale(100.0, 1) == pytest.approx(100 * math.log(100) ** 1.25)
	assert ver.eq_1_2_band(0) == (0.8, 1.25)
	assert ver.eq_1_2_band(2) == (0.7, 1.4)


def test_distinct_signals():
	signals = [SignalParams(r=0, n=0), SignalParams(r=0, n=1), SignalParams(r=1, n=1)]
	assert ver.distinct_signals(signals, ('r',)) == [SignalParams(r=0), SignalParams(r=1)]
	assert len(ver.distinct_signals(signals, ('r', 'n'))) == 3


# ------------------------------------------------------------------------------------------------ #
#                                            Claims                                                #
# ------------------------------------------------------------------------------------------------ #

def test_verify_eq_1_1(functionals):
	reports = ver.verify_eq_1_1([(1000.0, 100.0), (1000.0, 0.0)], functionals, band=0.25)
	assert len(reports) == 2

	measured, skipped = reports
	assert measured.claim_id == 'eq-1.1'
	assert 0.85 <= measured.ratio <= 1.25
	assert measured.status == 'pass'
	assert measured.eval_counts > 0
	assert measured.interval.U == 100

	assert skipped.status == 'skipped'
	assert 'U = 0' in skipped.note


def test_verify_eq_1_2(functionals):
	"""With n = 0 the product of means is the mean itself."""
	reports = ver.verify_eq_1_2(1000.0, [0], functionals)
	assert len(reports) == 1
	assert reports[0].ratio == pytest.approx(1, rel=1e-5)
	assert reports[0].status == 'pass'


def test_verify_eq_1_3(functionals):
	reports = ver.verify_eq_1_3(1000.0, [0], [0], functionals)
	assert len(reports) == 1
	assert 0.85 <= reports[0].ratio <= 1.25


def test_verify_eq_3_3(functionals):
	reports = ver.verify_eq_3_3(1000.0, [0], [100.0, 15.0], functionals, trend_points=3)
	assert len(reports) == 5

	# U = 100 is above T/ln²T
	assert reports[0].status == 'skipped'
	assert reports[1].status in ('pass', 'fail')
	assert reports[1].ratio > 0

	trend = reports[2:]
	assert all(r.note == 'trend' and r.status == 'recorded' for r in trend)
	assert trend[-1].interval.U == pytest.approx(1000.0 ** (1 / 3 + 0.02))


def test_verify_transfer(functionals):
	reports = ver.verify_transfer(1000.0, 100.0, [0], functionals)
	assert len(reports) == 1
	assert reports[0].claim_id == 'eq-3.1'
	assert 0.85 <= reports[0].ratio <= 1.25

	# Width below the short range
	reports = ver.verify_transfer(1000.0, 5.0, [0], functionals)
	assert reports[0].status == 'skipped'


def test_verify_eq_4_1(functionals):
	reports = ver.verify_eq_4_1(1000.0, [0], functionals)
	assert [r.note for r in reports] == ['first powers', 'squares']
	assert all(r.status == 'recorded' and r.ratio > 0 for r in reports)
	# (∫|ζ|)² ≤ U ∫|ζ|²
	first, squares = reports
	U = first.interval.U
	assert first.lhs ** 2 <= U * squares.lhs * (1 + 1e-5)


def test_verify_theorem(functionals):
	reports = ver.verify_theorem('cor', [SignalParams(m=1)], [1000.0], functionals)
	assert len(reports) == 2

	constant, cauchy = reports
	assert constant.status == 'pass'
	assert constant.empirical_constant == pytest.approx(math.sqrt(constant.ratio))

	assert cauchy.note == 'Cauchy-Schwarz consistency'
	assert cauchy.status == 'pass'
	assert cauchy.ratio <= 1

	with pytest.raises(ValueError):
		ver.verify_theorem('bogus', [SignalParams()], [1000.0], functionals)


def test_theorem_scale():
	spec = IntervalSpec.for_regime(1e4, 'macroscopic')
	lnU = math.log(spec.U)
	lnT = math.log(1e4)
	signal = SignalParams(r=1, n=1, m=1)
	assert ver.theorem_scale('thm-2', spec, signal) == pytest.approx(0.5 * spec.U * lnU ** 1.25 * lnT ** 2)
	assert ver.theorem_scale('cor', spec, signal) == pytest.approx(0.25 * spec.U * lnU ** 2.5 * lnT ** 4)
	with pytest.raises(ValueError):
		ver.theorem_scale('eq-1.1', spec, signal)


def test_claim_runners():
	assert set(ver.CLAIM_RUNNERS) == set(CLAIMS)
	for claim_id, runner in ver.CLAIM_RUNNERS.items():
		assert runner.claim_id == claim_id

	with pytest.raises(ValueError):
		ver.claim_runner('bogus')

	# Each claim has a single runner
	with pytest.raises(ValueError, match='Already registered'):
		ver.claim_runner('eq-1.1')(lambda config, fx: [])
	assert ver.CLAIM_RUNNERS['eq-1.1'] is ver._run_eq_1_1


# ------------------------------------------------------------------------------------------------ #
#                                              Suite                                               #
# ------------------------------------------------------------------------------------------------ #

def test_run_suite_empty(tmp_path: Path):
	config = RunConfig().with_overrides({'suite.claims': [], 'out_dir': str(tmp_path)})
	result = ver.run_suite(config)
	assert result.reports == []
	assert result.exit_code == ver.EXIT_OK
	assert (tmp_path / 'summary.tsv').read_text().count('\n') == 1
	assert read_bundle(tmp_path) == []


def test_run_suite(table, tmp_path: Path):
	config = RunConfig().with_overrides({
		'suite.claims': ['eq-1.1', 'eq-4.3'],
		'suite.base_T': 1000.0,
		'suite.ladder_pairs': [[1000.0, 100.0]],
		'suite.ladder_band': 0.5,
		'out_dir': str(tmp_path),
		'output_format': 'structured',
	})
	result = ver.run_suite(config, table)
	assert result.exit_code == ver.EXIT_OK
	assert [r.claim_id for r in result.reports] == ['eq-1.1', 'eq-4.3']
	assert result.reports[0].status == 'pass'

	# The range of eq-4.3 is empty at T = 1000
	assert result.reports[1].status == 'skipped'

	assert result.paths[0] == tmp_path / 'summary.jsonl'
	assert read_bundle(tmp_path) == [replace(r, runtime_s=None) for r in result.reports]


def test_run_suite_failure(table, tmp_path: Path):
	config = RunConfig().with_overrides({
		'suite.claims': ['eq-1.1'],
		'suite.ladder_pairs': [[1000.0, 100.0]],
		'suite.ladder_band': 1e-6,
		'out_dir': str(tmp_path),
	})
	result = ver.run_suite(config, table)
	assert result.exit_code == ver.EXIT_FAILED
	assert result.failed == result.reports


def test_run_suite_broken_table(monkeypatch, tmp_path: Path):
	"""A cached table that is not monotone is refused and the suite stops."""
	monkeypatch.setenv(CACHE_ENV_VAR, str(tmp_path / 'cache'))
	t = np.arange(100.0, 201.0, 10.0)
	text = format_table(LadderTable(t, 0.9 * t, step=10.0))
	lines = text.splitlines()
	# φ₁(130) below φ₁(120) = 108
	assert lines[5].startswith('130.0,')
	lines[5] = '130.0,100.0'
	path = tmp_path / 'ladder.csv'
	path.write_text('\n'.join(lines) + '\n')

	config = RunConfig().with_overrides({
		'suite.claims': ['eq-1.1'],
		'table_path': str(path),
		'out_dir': str(tmp_path / 'bundle'),
	})
	with pytest.raises(TableInvariantError, match='phi1 not strictly increasing'):
		ver.run_suite(config)
	assert not (tmp_path / 'bundle').exists()
