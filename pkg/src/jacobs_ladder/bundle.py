"""Read and write report bundles and JSON log files.

A report bundle is a directory containing

* ``summary.tsv`` or ``summary.jsonl``: one row/object per :class:`.VerificationReport`, in run order;
* ``<claim_id>.tsv`` or ``<claim_id>.jsonl``: the same, restricted to one claim;
* ``<claim_id>.plot.tsv``: columnar data for plotting the empirical ratio against T and U.

Delimited files are tab-separated with the header row :data:`TSV_COLUMNS`. Floats are written with
``repr`` so that values survive a round trip exactly. Empty cells stand for missing values.
"""

import json
from typing import Any, Iterable, Iterator, Mapping, Sequence, TypeAlias, get_args
from dataclasses import replace
from pathlib import Path
import os

from .errors import ReportParseError
from .logger import JsonLogRecord, StandardLogRecord, META_RECORD_MODELS
from .models import adapter_cache, VerificationReport


JsonData: TypeAlias = str | bytes | bytearray

JSON_DATA_TYPES: tuple[type, ...] = get_args(JsonData)

#: Header row of delimited report files.
TSV_COLUMNS = (
	'claim_id', 'T', 'U', 'regime', 'epsilon', 'c', 'r', 'n', 'm', 'l',
	'lhs', 'rhs_scale', 'ratio', 'empirical_constant', 'status', 'band_lo', 'band_hi',
	'runtime_s', 'eval_counts', 'note',
)

#: Header row of plot data files.
PLOT_COLUMNS = ('T', 'U', 'r', 'n', 'm', 'l', 'ratio', 'empirical_constant', 'status')

FORMAT_SUFFIXES = {'delimited': '.tsv', 'structured': '.jsonl'}


# ------------------------------------------------------------------------------------------------ #
#                                         Parse log records                                        #
# ------------------------------------------------------------------------------------------------ #

def _get_record_model(obj: Mapping[str, Any]) -> type[JsonLogRecord]:
	"""Determine the specific log record model class from parsed JSON data."""

	if 'type' not in obj:
		raise ReportParseError('Record JSON missing "type" property', data=obj)

	typ = obj['type']

	if typ == 'standard':
		return StandardLogRecord

	if typ != 'meta':
		raise ReportParseError(f'Invalid value for "type" property: {typ!r}', data=obj)

	if 'event' not in obj:
		raise ReportParseError(f'Record JSON of type {typ!r} missing "event" property', data=obj)

	event = obj['event']
	if event not in META_RECORD_MODELS:
		raise ReportParseError(f'Invalid "event" property for meta record: {event!r}', data=obj)

	return META_RECORD_MODELS[event]


def _as_object(data: JsonData | Mapping[str, Any]) -> dict[str, Any]:
	if isinstance(data, JSON_DATA_TYPES):
		obj = json.loads(data)
		if not isinstance(obj, dict):
			raise ReportParseError('Parsed JSON value is not an object', data=obj)
		return obj
	if isinstance(data, Mapping):
		return dict(data)
	raise TypeError('Expected JSON-encoded string/bytes or a mapping object')


def logrecord_from_json(data: JsonData | Mapping[str, Any]) -> JsonLogRecord:
	"""Parse a log record from JSON data.

	Parameters
	----------
	data
		Either a JSON-encoded string/bytes or a parsed JSON object.
	"""
	obj = _as_object(data)
	model = _get_record_model(obj)
	obj.pop('type', None)
	obj.pop('levelname', None)
	if model is not StandardLogRecord:
		obj.pop('event', None)
	return adapter_cache.validate_python(model, obj)


def report_from_json(data: JsonData | Mapping[str, Any]) -> VerificationReport:
	"""Parse a verification report from JSON data."""
	return adapter_cache.validate_python(VerificationReport, _as_object(data))


# ------------------------------------------------------------------------------------------------ #
#                                          Parse JSON files                                        #
# ------------------------------------------------------------------------------------------------ #

_ObjParseResult = tuple[int, int, dict[str, Any]]


class JsonObjectParser:
	"""Lazily parses a file containing multiple JSON objects.

	Expects either of two formats (determined automatically, and may be mixed):

	* Single-line (JSONL): each line contains a complete JSON object.
	* Multi-line: Each JSON object spans multiple lines. The opening and closing braces must
	  appear on their own line with no indentation. Braces of nested objects must be indented or
	  appear with other non-whitespace characters. This is what you get with :func:`json.dump`
	  with a nonzero value for ``indent``.
	"""

	current_line: int

	def __init__(self):
		self.current_line = 0
		self._current_obj: list[str] = []
		self._current_started = 0

	def process_line(self, line: str) -> _ObjParseResult | None:
		"""Process a single line. If it concludes an object, return it."""
		self.current_line += 1

		# Ignore trailing whitespace but not leading
		line = line.rstrip()

		if not line:
			return None

		# Already in the middle of a multi-line object?
		if self._current_obj:
			self._current_obj.append(line)

			if line == '}':
				data = ''.join(self._current_obj)
				try:
					value = json.loads(data)
				except json.JSONDecodeError as exc:
					raise ReportParseError(
						str(exc),
						start_line=self._current_started,
						end_line=self.current_line,
					) from exc

				rval = (self._current_started, self.current_line, value)
				self._current_obj = []
				self._current_started = 0
				return rval

			return None

		# Starting a new multi-line object?
		if line == '{':
			self._current_obj = [line]
			self._current_started = self.current_line
			return None

		# Otherwise expect complete object on single line
		if line.startswith('{'):
			try:
				value = json.loads(line)
			except json.JSONDecodeError:
				pass
			else:
				if isinstance(value, dict):
					return (self.current_line, self.current_line, value)

		raise ReportParseError(
			'Expected single opening brace or complete JSON object',
			start_line=self.current_line,
			end_line=self.current_line,
		)

	def process_lines(self, lines: Iterable[str]) -> Iterable[_ObjParseResult]:
		"""Process multiple lines and yield all complete objects parsed."""
		for line in lines:
			result = self.process_line(line)
			if result is not None:
				yield result

	def complete(self) -> None:
		"""Signal that there are no more lines available.

		Raises an exception if the final JSON object has not been concluded.
		"""
		if self._current_obj:
			raise ReportParseError(
				f'JSON object starting on line {self._current_started} not closed',
				start_line=self._current_started,
				end_line=self.current_line,
			)


def parse_logfile(lines: Iterable[str]) -> Iterator[JsonLogRecord]:
	"""Parse records of a log written by :class:`.JsonLogHandler`."""
	parser = JsonObjectParser()

	for l1, l2, obj in parser.process_lines(lines):
		yield logrecord_from_json(obj)

	parser.complete()


def parse_reports(lines: Iterable[str]) -> Iterator[VerificationReport]:
	"""Parse reports of a structured (JSONL) bundle file."""
	parser = JsonObjectParser()

	for l1, l2, obj in parser.process_lines(lines):
		try:
			yield report_from_json(obj)
		except ValueError as exc:
			raise ReportParseError(str(exc), data=obj, start_line=l1, end_line=l2) from exc

	parser.complete()


# ------------------------------------------------------------------------------------------------ #
#                                         Delimited format                                         #
# ------------------------------------------------------------------------------------------------ #

def _cell(value: Any) -> str:
	if value is None:
		return ''
	if isinstance(value, float):
		return repr(float(value))
	text = str(value)
	if '\t' in text or '\n' in text:
		text = text.replace('\t', ' ').replace('\n', ' ')
	return text


def report_row(report: VerificationReport) -> list[str]:
	"""Cells of a report in the order of :data:`TSV_COLUMNS`."""
	iv = report.interval
	sig = report.signal
	band = report.tolerance_band
	values = [
		report.claim_id,
		None if iv is None else iv.T,
		None if iv is None else iv.U,
		None if iv is None else iv.regime.value,
		None if iv is None else iv.epsilon,
		None if iv is None else iv.c,
		sig.r, sig.n, sig.m, sig.l,
		report.lhs, report.rhs_scale, report.ratio, report.empirical_constant, report.status,
		None if band is None else band[0],
		None if band is None else band[1],
		report.runtime_s, report.eval_counts, report.note,
	]
	return [_cell(v) for v in values]


def report_from_row(row: Mapping[str, str]) -> VerificationReport:
	"""Parse a report from a delimited row (mapping from column name to cell)."""

	def get(name):
		value = row.get(name, '')
		return None if value == '' else value

	data: dict[str, Any] = dict(
		claim_id=row['claim_id'],
		signal=dict(r=row['r'], n=row['n'], m=row['m'], l=row['l']),
		lhs=get('lhs'),
		rhs_scale=get('rhs_scale'),
		ratio=get('ratio'),
		empirical_constant=get('empirical_constant'),
		status=row['status'],
		runtime_s=get('runtime_s'),
		eval_counts=row.get('eval_counts') or 0,
		note=get('note'),
	)
	if get('T') is not None:
		data['interval'] = dict(
			T=row['T'], U=row['U'], regime=row['regime'], epsilon=row['epsilon'], c=row['c'],
		)
	if get('band_lo') is not None:
		data['tolerance_band'] = (row['band_lo'], row['band_hi'])
	try:
		return adapter_cache.validate_python(VerificationReport, data)
	except ValueError as exc:
		raise ReportParseError(str(exc), data=dict(row)) from exc


def parse_report_table(lines: Iterable[str]) -> Iterator[VerificationReport]:
	"""Parse reports of a delimited bundle file."""
	it = iter(lines)
	try:
		header = next(it).rstrip('\n').split('\t')
	except StopIteration:
		return
	if tuple(header) != TSV_COLUMNS:
		raise ReportParseError('Unexpected header row', data=header, start_line=1, end_line=1)
	for lineno, line in enumerate(it, 2):
		line = line.rstrip('\n')
		if not line:
			continue
		cells = line.split('\t')
		if len(cells) != len(TSV_COLUMNS):
			raise ReportParseError(
				f'Expected {len(TSV_COLUMNS)} cells, got {len(cells)}',
				data=cells, start_line=lineno, end_line=lineno,
			)
		yield report_from_row(dict(zip(TSV_COLUMNS, cells)))


# ------------------------------------------------------------------------------------------------ #
#                                          Bundle files                                            #
# ------------------------------------------------------------------------------------------------ #

def _format_reports(reports: Sequence[VerificationReport], output_format: str) -> str:
	if output_format == 'structured':
		return ''.join(adapter_cache.dump_json(r).decode() + '\n' for r in reports)
	lines = ['\t'.join(TSV_COLUMNS)]
	lines.extend('\t'.join(report_row(r)) for r in reports)
	return '\n'.join(lines) + '\n'


def _format_plot(reports: Sequence[VerificationReport]) -> str:
	lines = ['\t'.join(PLOT_COLUMNS)]
	for r in reports:
		iv = r.interval
		sig = r.signal
		values = [
			None if iv is None else iv.T,
			None if iv is None else iv.U,
			sig.r, sig.n, sig.m, sig.l,
			r.ratio, r.empirical_constant, r.status,
		]
		lines.append('\t'.join(_cell(v) for v in values))
	return '\n'.join(lines) + '\n'


def write_bundle(
	reports: Sequence[VerificationReport],
	out_dir: str | os.PathLike,
	output_format: str = 'delimited',
	record_timings: bool = False,
) -> list[Path]:
	"""Write a report bundle, returning the paths written.

	Files are written in a fixed order from a single thread. Unless ``record_timings`` is set, run
	times are dropped so that repeated runs produce identical files.
	"""
	if output_format not in FORMAT_SUFFIXES:
		raise ValueError(f'Unknown output format {output_format!r}')
	suffix = FORMAT_SUFFIXES[output_format]

	if not record_timings:
		reports = [replace(r, runtime_s=None) for r in reports]

	out_dir = Path(out_dir)
	out_dir.mkdir(parents=True, exist_ok=True)

	by_claim: dict[str, list[VerificationReport]] = dict()
	for r in reports:
		by_claim.setdefault(r.claim_id, []).append(r)

	written = []

	def write(name: str, text: str):
		path = out_dir / name
		path.write_text(text, encoding='utf-8')
		written.append(path)

	write('summary' + suffix, _format_reports(reports, output_format))
	for claim_id in sorted(by_claim):
		write(claim_id + suffix, _format_reports(by_claim[claim_id], output_format))
		write(claim_id + '.plot.tsv', _format_plot(by_claim[claim_id]))

	return written


def read_bundle(path: str | os.PathLike) -> list[VerificationReport]:
	"""Read the summary file of a report bundle (either format)."""
	path = Path(path)
	jsonl = path / 'summary.jsonl'
	tsv = path / 'summary.tsv'
	if jsonl.exists():
		with open(jsonl, encoding='utf-8') as fh:
			return list(parse_reports(fh))
	if tsv.exists():
		with open(tsv, encoding='utf-8') as fh:
			return list(parse_report_table(fh))
	raise FileNotFoundError(f'No summary file in {path}')
