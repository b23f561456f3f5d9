from typing import Sequence, TypeVar
import logging
from dataclasses import dataclass, fields

import pytest

from jacobs_ladder import logger as logmodels
from jacobs_ladder.config import EvalConfig, LadderConfig, RegimeConfig
from jacobs_ladder.functionals import Functionals
from jacobs_ladder.ladder import EnergyProfile, LadderSolver, LadderTable, build_table
from jacobs_ladder.models import adapter_cache


M = TypeVar('M', bound=logmodels.JsonLogRecord)


RANDOM_TIMESTAMP = 1759974850.185749
LEVELS = [logging.DEBUG, logging.INFO, logging.WARNING, logging.ERROR]

# Range of the ladder table shared by the tests. Small enough to build in seconds, large enough that
# the first few iterates of T = 1000 stay inside it.
TABLE_START = 600.0
TABLE_END = 2000.0
TABLE_STEP = 10.0


def pytest_addoption(parser):
	parser.addoption('--runslow', action='store_true', default=False, help='Run checks at T >= 1e4.')


def pytest_collection_modifyitems(config, items):
	if config.getoption('--runslow'):
		return
	skip_slow = pytest.mark.skip(reason='needs --runslow')
	for item in items:
		if 'slow' in item.keywords:
			item.add_marker(skip_slow)


def make_record(cls: type[M], **kw) -> M:
	kw.setdefault('message', f'Test {cls}')
	kw.setdefault('levelno', logging.INFO)
	kw.setdefault('created', RANDOM_TIMESTAMP)

	fieldnames = {field.name for field in fields(cls)}
	for name in kw:
		if name not in fieldnames:
			raise ValueError(f'Unknown field: {name!r}')

	return adapter_cache.validate_python(cls, kw)


@dataclass
class RecordFactory:
	"""
	Cycles through some different values for attribute defaults.
	"""

	i: int = 0

	def make_record(self, cls: type[M], **kw) -> M:
		kw.setdefault('levelno', LEVELS[self.i % len(LEVELS)])
		kw.setdefault('created', RANDOM_TIMESTAMP + self.i * 5.13917)
		self.i += 1
		return make_record(cls, **kw)


@pytest.fixture(scope='session')
def example_records_standard() -> Sequence[logmodels.StandardLogRecord]:
	"""Example StandardLogRecord instances, one of each level, some with structured context."""

	factory = RecordFactory()

	plain = tuple(
		factory.make_record(logmodels.StandardLogRecord, levelno=level, name='jacobs_ladder.test')
		for level in LEVELS
	)
	structured = (
		factory.make_record(
			logmodels.StandardLogRecord,
			name='jacobs_ladder.ladder',
			message='Solved ladder equation',
			event='ladder.solve',
			data=dict(T=1000.0, phi=1876.25),
		),
		factory.make_record(
			logmodels.StandardLogRecord,
			name='jacobs_ladder.verification',
			message='eq-1.1 pass',
			event='suite.report',
			data=dict(claim_id='eq-1.1', status='pass', ratio=0.964, note=None),
		),
	)
	return plain + structured


@pytest.fixture(scope='session')
def example_records_meta() -> Sequence[logmodels.MetaLogRecord]:
	"""Example MetaLogRecord instances, one of each subclass."""

	factory = RecordFactory()

	return (
		factory.make_record(logmodels.LoggingStartedRecord, pid=1234),
		factory.make_record(logmodels.LoggingFinishedRecord),
		factory.make_record(logmodels.FormattingErrorRecord, record_partial={'foo': 'bar'}),
	)


@pytest.fixture(scope='session')
def example_records(example_records_standard, example_records_meta) -> Sequence[logmodels.JsonLogRecord]:
	"""Example JsonLogRecord instances, one of each subclass."""
	return (*example_records_standard, *example_records_meta)


# ------------------------------------------------------------------------------------------------ #
#                                         Numerical fixtures                                       #
# ------------------------------------------------------------------------------------------------ #

@pytest.fixture(scope='session')
def eval_config() -> EvalConfig:
	return EvalConfig()


@pytest.fixture(scope='session')
def ladder_config() -> LadderConfig:
	return LadderConfig(t_start=TABLE_START, t_end=TABLE_END, step=TABLE_STEP)


@pytest.fixture(scope='session')
def profile(eval_config, ladder_config) -> EnergyProfile:
	"""In-memory energy profile (not backed by the cache directory)."""
	return EnergyProfile(eval_config, None, ladder_config)


@pytest.fixture(scope='session')
def solver(profile) -> LadderSolver:
	return LadderSolver(profile)


@pytest.fixture(scope='session')
def table(solver) -> LadderTable:
	"""Ladder table on [600, 2000] with step 10."""
	return build_table(TABLE_START, TABLE_END, TABLE_STEP, solver)


@pytest.fixture(scope='session')
def functionals(table, eval_config) -> Functionals:
	return Functionals(table, eval_config, None, RegimeConfig(), rtol=1e-6)
