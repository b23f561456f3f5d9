"""Run configuration.

Configuration objects are frozen dataclasses validated through pydantic. On disk they are stored as flat,
commented TOML using dotted keys only (``section.key = value``), e.g.::

	# jacobs-ladder run configuration
	eval.rs_correction_terms = 5
	regime.epsilon = 0.01
	suite.claims = ["eq-1.1", "eq-3.3"]

Command line flags override values read from the file.
"""

from typing import Annotated, Any, Literal, Mapping
from dataclasses import dataclass, field, fields, is_dataclass
from pathlib import Path
import json
import os
import tomllib

from pydantic import Field, ValidationError

from .errors import ConfigError
from .models import adapter_cache, CLAIMS


#: Environment variable giving the default cache directory.
CACHE_ENV_VAR = 'JACOBS_LADDER_CACHE'


def default_cache_dir() -> Path:
	"""Directory for ladder tables and energy profiles."""
	value = os.environ.get(CACHE_ENV_VAR)
	if value:
		return Path(value)
	return Path.home() / '.cache' / 'jacobs-ladder'


@dataclass(frozen=True)
class EvalConfig:
	"""Accuracy settings for evaluating functions on the critical line."""

	target_abs_tol: Annotated[float, Field(gt=0)] = field(default=1e-6, metadata={
		'help': 'Absolute accuracy target for theta and Z.',
	})
	rs_correction_terms: Annotated[int, Field(ge=0, le=5)] = field(default=5, metadata={
		'help': 'Number of Riemann-Siegel correction terms C_0 ... C_{k-1}.',
	})
	fd_order: Annotated[int, Field(ge=2, le=8, multiple_of=2)] = field(default=4, metadata={
		'help': 'Order of the central finite differences used for zeta derivatives.',
	})
	rs_crossover: Annotated[float, Field(gt=0)] = field(default=100.0, metadata={
		'help': 'Height below which Euler-Maclaurin replaces the Riemann-Siegel formula.',
	})
	theta_crossover: Annotated[float, Field(gt=0)] = field(default=30.0, metadata={
		'help': 'Height below which theta uses log-Gamma directly instead of its asymptotic series.',
	})
	em_cutoff: Annotated[int, Field(ge=10)] = field(default=60, metadata={
		'help': 'Number of Dirichlet terms before the Euler-Maclaurin tail.',
	})
	em_terms: Annotated[int, Field(ge=2, le=30)] = field(default=12, metadata={
		'help': 'Number of Bernoulli correction terms in Euler-Maclaurin.',
	})
	fd_rel_check: Annotated[float, Field(gt=0)] = field(default=1e-2, metadata={
		'help': 'Maximum relative disagreement of finite differences at h and h/2.',
	})


@dataclass(frozen=True)
class PanelPolicy:
	"""Panel sizing and refinement limits for adaptive quadrature."""

	points_per_oscillation: Annotated[int, Field(ge=4)] = field(default=12, metadata={
		'help': 'Controls initial panel width relative to the zero spacing of Z.',
	})
	max_depth: Annotated[int, Field(ge=1, le=60)] = field(default=30, metadata={
		'help': 'Maximum number of bisections of an initial panel.',
	})
	rule_order: Literal[7, 15, 31] = field(default=15, metadata={
		'help': 'Number of nodes of the nested Fejer rule applied to each panel.',
	})


@dataclass(frozen=True)
class LadderConfig:
	"""Parameters of ladder construction."""

	t_start: Annotated[float, Field(ge=100)] = field(default=100.0, metadata={
		'help': 'First height of the table (realizes the validity threshold of the ladder).',
	})
	t_end: Annotated[float, Field(gt=100)] = field(default=60000.0, metadata={
		'help': 'Last height of the table.',
	})
	step: Annotated[float, Field(gt=0, le=10)] = field(default=10.0, metadata={
		'help': 'Grid step of the table.',
	})
	solve_tol: Annotated[float, Field(gt=0, lt=1e-3)] = field(default=1e-9, metadata={
		'help': 'Relative tolerance of the root of the integral equation.',
	})
	mu_coefficient: Annotated[float, Field(ge=7)] = field(default=7.0, metadata={
		'help': 'Coefficient a of mu(y) = a y ln y.',
	})
	tail_eps: Annotated[float, Field(gt=0, lt=1e-3)] = field(default=1e-12, metadata={
		'help': 'Relative budget for truncating the exponentially weighted tail.',
	})
	z2_bound: Annotated[float, Field(ge=1)] = field(default=1e3, metadata={
		'help': 'Upper estimate of Z^2 used to bound the truncated tail.',
	})
	moment_order: Annotated[int, Field(ge=2, le=10)] = field(default=6, metadata={
		'help': 'Highest cell moment kept in the energy profile.',
	})
	cell_tol: Annotated[float, Field(gt=0)] = field(default=1e-11, metadata={
		'help': 'Absolute quadrature tolerance per unit cell of the energy profile.',
	})


@dataclass(frozen=True)
class RegimeConfig:
	"""The symbolic constants of the U-ranges."""

	epsilon: Annotated[float, Field(gt=0, lt=0.5)] = field(default=0.01, metadata={
		'help': 'The epsilon of the range endpoints.',
	})
	c: Annotated[float, Field(gt=0)] = field(default=1.5, metadata={
		'help': 'Exponent c of the short range 3 ln^c T.',
	})


@dataclass(frozen=True)
class SuiteConfig:
	"""Which claims to verify and where."""

	claims: tuple[str, ...] = field(default=tuple(CLAIMS), metadata={
		'help': 'Claim ids to verify.',
	})
	base_T: Annotated[float, Field(gt=100)] = field(default=1e4, metadata={
		'help': 'Height of single-height checks.',
	})
	heights: tuple[float, ...] = field(default=(1e4, 2e4, 5e4), metadata={
		'help': 'Heights for cross-T stability of empirical constants.',
	})
	ladder_pairs: tuple[tuple[float, float], ...] = field(default=((1e3, 1e2), (1e4, 1e3)), metadata={
		'help': '(T, U) pairs of the ladder increment check.',
	})
	transfer_width: Annotated[float, Field(gt=0)] = field(default=1e3, metadata={
		'help': 'Interval width U of the transfer lemma check (eq-3.1).',
	})
	r_values: tuple[int, ...] = (0, 1)
	n_values: tuple[int, ...] = (0, 1, 2)
	m_values: tuple[int, ...] = (1,)
	l_values: tuple[int, ...] = (1,)
	spread_limit: Annotated[float, Field(gt=1)] = field(default=2.5, metadata={
		'help': 'Maximum max/min spread of an empirical constant across heights.',
	})
	ladder_band: Annotated[float, Field(gt=0)] = field(default=0.05, metadata={
		'help': 'Relative band of the ladder identities (eq-1.1, eq-3.3).',
	})
	factor_band: Annotated[float, Field(gt=1)] = field(default=3.0, metadata={
		'help': 'Multiplicative band of slow asymptotics (eq-4.2, eq-4.3).',
	})
	rtol: Annotated[float, Field(gt=0)] = field(default=1e-6, metadata={
		'help': 'Relative quadrature tolerance of functionals.',
	})
	u_trend_points: Annotated[int, Field(ge=2)] = field(default=5, metadata={
		'help': 'Number of U values in the increment trend toward the lower regime end.',
	})
	record_timings: bool = field(default=False, metadata={
		'help': 'Write run times into report files (makes bundles non-reproducible).',
	})

	def __post_init__(self):
		unknown = [c for c in self.claims if c not in CLAIMS]
		if unknown:
			raise ValueError(f'Unknown claim ids: {", ".join(unknown)}')


OutputFormat = Literal['delimited', 'structured']


@dataclass(frozen=True)
class RunConfig:
	"""Complete configuration of a run."""

	eval: EvalConfig = field(default_factory=EvalConfig)
	quadrature: PanelPolicy = field(default_factory=PanelPolicy)
	ladder: LadderConfig = field(default_factory=LadderConfig)
	regime: RegimeConfig = field(default_factory=RegimeConfig)
	suite: SuiteConfig = field(default_factory=SuiteConfig)
	out_dir: str = field(default='reports', metadata={
		'help': 'Directory the report bundle is written to.',
	})
	output_format: OutputFormat = field(default='delimited', metadata={
		'help': 'Bundle file format (delimited = TSV, structured = JSONL).',
	})
	jobs: Annotated[int, Field(ge=1)] = field(default=1, metadata={
		'help': 'Number of worker processes.',
	})
	table_path: str | None = field(default=None, metadata={
		'help': 'Ladder table cache file (default: inside the cache directory).',
	})
	log_file: str | None = field(default=None, metadata={
		'help': 'JSON log file (- for stderr).',
	})

	def resolved_table_path(self) -> Path:
		if self.table_path is not None:
			return Path(self.table_path)
		lc = self.ladder
		return default_cache_dir() / f'ladder_{lc.t_start:g}_{lc.t_end:g}_{lc.step:g}.csv'

	def with_overrides(self, overrides: Mapping[str, Any]) -> 'RunConfig':
		"""Copy with dotted keys replaced, e.g. ``{'regime.epsilon': 0.02}``. ``None`` values are ignored."""
		data = adapter_cache.dump_python(self)
		for key, value in overrides.items():
			if value is None:
				continue
			_set_dotted(data, key, value)
		return validate_config(data)


def _set_dotted(data: dict[str, Any], key: str, value: Any) -> None:
	*path, last = key.split('.')
	for part in path:
		data = data.setdefault(part, {})
	data[last] = value


def validate_config(data: Mapping[str, Any]) -> RunConfig:
	try:
		return adapter_cache.validate_python(RunConfig, data)
	except ValidationError as exc:
		raise ConfigError(f'Invalid configuration:\n{exc}') from exc


# ------------------------------------------------------------------------------------------------ #
#                                           File format                                            #
# ------------------------------------------------------------------------------------------------ #

def load_config(path: str | os.PathLike) -> RunConfig:
	"""Read a flat TOML configuration file."""
	try:
		with open(path, 'rb') as fh:
			data = tomllib.load(fh)
	except (OSError, tomllib.TOMLDecodeError) as exc:
		raise ConfigError(f'Cannot read configuration file {path}: {exc}') from exc
	return validate_config(data)


def _format_value(value: Any) -> str:
	if isinstance(value, bool):
		return 'true' if value else 'false'
	if isinstance(value, int):
		return repr(int(value))
	if isinstance(value, float):
		return repr(float(value))
	if isinstance(value, str):
		return json.dumps(value, ensure_ascii=False)
	if isinstance(value, (tuple, list)):
		return '[' + ', '.join(_format_value(v) for v in value) + ']'
	raise TypeError(f'Cannot format {value!r} as a config value')


def _flat_items(obj, prefix: str = ''):
	for f in fields(obj):
		value = getattr(obj, f.name)
		key = prefix + f.name
		if is_dataclass(value):
			yield from _flat_items(value, key + '.')
		else:
			yield key, value, f.metadata.get('help')


def dump_config(config: RunConfig) -> str:
	"""Serialize to the flat commented TOML form read by :func:`load_config`."""
	lines = ['# jacobs-ladder run configuration']
	for key, value, help in _flat_items(config):
		if value is None:
			lines.append(f'# {key} = (unset)')
			continue
		if help:
			lines.append(f'# {help}')
		lines.append(f'{key} = {_format_value(value)}')
	return '\n'.join(lines) + '\n'
