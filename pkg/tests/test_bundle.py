import json
from pathlib import Path

import pytest

from jacobs_ladder import bundle
from jacobs_ladder import logger as logmodels
from jacobs_ladder.errors import ReportParseError
from jacobs_ladder.models import IntervalSpec, Regime, SignalParams, VerificationReport, adapter_cache


@pytest.fixture()
def reports() -> list[VerificationReport]:
	spec = IntervalSpec.for_regime(1000.0, Regime.SHORT, U=100.0)
	return [
		VerificationReport.measured(
			'eq-1.1', 1234.5678901234567, 1200.0, band=(0.95, 1.05), interval=spec,
			runtime_s=0.25, eval_counts=930,
		),
		VerificationReport.measured(
			'thm-2', 3.5, 2.0, band=None, signal=SignalParams(r=1, n=1), interval=spec,
			note='tab\tand\nnewline',
		),
		VerificationReport.skipped('eq-4.3', 'U=20 at T=1000 violates U ∈ [T^{1/2+ε}, T/ln²T]'),
	]


def test_record_roundtrip(example_records: list[logmodels.JsonLogRecord]):
	"""Test round-tripping records to JSON."""

	for record in example_records:
		dumped_bytes = adapter_cache.dump_json(record)
		dumped_python = json.loads(dumped_bytes)

		for data in [dumped_bytes, dumped_python]:
			parsed = bundle.logrecord_from_json(data)
			assert type(parsed) is type(record)
			assert parsed == record


def test_logrecord_invalid():
	with pytest.raises(ReportParseError):
		bundle.logrecord_from_json('{"message": "no type"}')
	with pytest.raises(ReportParseError):
		bundle.logrecord_from_json(dict(type='meta', event='bogus', message=None, levelno=20))
	with pytest.raises(ReportParseError):
		bundle.logrecord_from_json('[1, 2]')
	with pytest.raises(TypeError):
		bundle.logrecord_from_json(42)


@pytest.mark.parametrize('output_format', ['delimited', 'structured'])
def test_bundle_roundtrip(reports, output_format, tmp_path: Path):
	paths = bundle.write_bundle(reports, tmp_path, output_format, record_timings=True)
	suffix = bundle.FORMAT_SUFFIXES[output_format]

	names = [p.name for p in paths]
	assert names[0] == 'summary' + suffix
	assert 'eq-1.1' + suffix in names
	assert 'thm-2.plot.tsv' in names

	parsed = bundle.read_bundle(tmp_path)
	assert len(parsed) == len(reports)
	assert parsed[0] == reports[0]
	assert parsed[2] == reports[2]

	if output_format == 'structured':
		assert parsed[1] == reports[1]
	else:
		# Cell separators are blanked in delimited notes
		assert parsed[1].note == 'tab and newline'
		assert parsed[1].ratio == reports[1].ratio


def test_bundle_drops_timings(reports, tmp_path: Path):
	bundle.write_bundle(reports, tmp_path)
	parsed = bundle.read_bundle(tmp_path)
	assert all(r.runtime_s is None for r in parsed)
	assert parsed[0].eval_counts == 930


def test_bundle_deterministic(reports, tmp_path: Path):
	bundle.write_bundle(reports, tmp_path / 'a')
	bundle.write_bundle(reports, tmp_path / 'b')
	for path in sorted((tmp_path / 'a').iterdir()):
		assert path.read_bytes() == (tmp_path / 'b' / path.name).read_bytes()


def test_plot_file(reports, tmp_path: Path):
	bundle.write_bundle(reports, tmp_path)
	lines = (tmp_path / 'eq-1.1.plot.tsv').read_text().splitlines()
	assert lines[0].split('\t') == list(bundle.PLOT_COLUMNS)
	row = dict(zip(bundle.PLOT_COLUMNS, lines[1].split('\t')))
	assert float(row['T']) == 1000
	assert float(row['ratio']) == reports[0].ratio
	assert row['status'] == 'pass'


def test_invalid_format(reports, tmp_path: Path):
	with pytest.raises(ValueError):
		bundle.write_bundle(reports, tmp_path, 'xml')


def test_read_errors(tmp_path: Path):
	with pytest.raises(FileNotFoundError):
		bundle.read_bundle(tmp_path)

	(tmp_path / 'summary.tsv').write_text('claim_id\tT\n')
	with pytest.raises(ReportParseError):
		bundle.read_bundle(tmp_path)

	header = '\t'.join(bundle.TSV_COLUMNS)
	(tmp_path / 'summary.tsv').write_text(header + '\neq-1.1\t1000\n')
	with pytest.raises(ReportParseError) as excinfo:
		bundle.read_bundle(tmp_path)
	assert excinfo.value.start_line == 2

	(tmp_path / 'summary.jsonl').write_text('{"claim_id": "eq-1.1", "status": "maybe"}\n')
	with pytest.raises(ReportParseError):
		bundle.read_bundle(tmp_path)


def test_json_object_parser():
	lines = ['{"a": 1}\n', '\n', '{\n', '  "b": {\n', '    "c": 2\n', '  }\n', '}\n']
	parser = bundle.JsonObjectParser()
	results = list(parser.process_lines(lines))
	parser.complete()
	assert results == [(1, 1, dict(a=1)), (3, 7, dict(b=dict(c=2)))]

	parser = bundle.JsonObjectParser()
	list(parser.process_lines(['{\n', '  "a": 1\n']))
	with pytest.raises(ReportParseError):
		parser.complete()

	with pytest.raises(ReportParseError):
		bundle.JsonObjectParser().process_line('not json')
