"""Command line interface.

Exit codes: 0 success, 1 verification failure, 2 usage or configuration error, 3 numerical
non-convergence.
"""

from typing import Any, Callable
from contextlib import contextmanager
from pathlib import Path
import functools
import math

import click

from .config import RunConfig, dump_config, load_config
from .errors import (
	ConfigError, DerivativeToleranceError, DomainError, LadderLabError, LadderSolveError, NonConvergenceError,
	TableFormatError, TableInvariantError, ZeroCountAmbiguityError,
)
from .functionals import POWER_REGIME, Functionals, moment_coefficient
from .ladder import LadderTable, build_table, load_table, save_table, solver_for
from .logger import close_logging, configure_logging
from .models import CLAIMS, IntegralResult, Regime, SignalParams
from . import special_functions as sf
from .verification import EXIT_OK, functionals_for, remark2_scale, run_suite, theorem_scale, ramachandra_scale


EXIT_USAGE = 2
EXIT_NONCONVERGENCE = 3


class CliError(click.ClickException):
	"""Error reported to the user with a specific exit code."""

	def __init__(self, message: str, exit_code: int = 1):
		super().__init__(message)
		self.exit_code = exit_code


@contextmanager
def handle_errors():
	"""Map package errors to messages and exit codes."""
	try:
		yield
	except (NonConvergenceError, LadderSolveError, ZeroCountAmbiguityError, DerivativeToleranceError) as exc:
		raise CliError(str(exc), EXIT_NONCONVERGENCE) from exc
	except (ConfigError, DomainError, TableFormatError, TableInvariantError) as exc:
		raise CliError(str(exc), EXIT_USAGE) from exc
	except LadderLabError as exc:
		raise CliError(str(exc)) from exc
	except ValueError as exc:
		# Range validation of parameters by pydantic
		raise CliError(str(exc), EXIT_USAGE) from exc


def _run_config(config_path: str | None, overrides: dict[str, Any]) -> RunConfig:
	config = load_config(config_path) if config_path is not None else RunConfig()
	return config.with_overrides(overrides)


def run_options(func: Callable) -> Callable:
	"""Options shared by all commands that build a :class:`.RunConfig`."""
	options = [
		click.option('--config', 'config_path', type=click.Path(dir_okay=False), default=None,
		             help='Flat TOML configuration file.'),
		click.option('--table', 'table_path', default=None, help='Ladder table cache file.'),
		click.option('--jobs', type=click.IntRange(min=1), default=None, help='Number of worker processes.'),
		click.option('--tol', type=float, default=None, help='Relative quadrature tolerance of functionals.'),
		click.option('--epsilon', type=float, default=None, help='The ε of the regime range endpoints.'),
		click.option('--c-exp', 'c_exp', type=float, default=None, help='Exponent c of the short range 3 ln^c T.'),
	]
	for option in reversed(options):
		func = option(func)
	return func


def _overrides(table_path, jobs, tol, epsilon, c_exp, **extra) -> dict[str, Any]:
	return {
		'table_path': table_path,
		'jobs': jobs,
		'suite.rtol': tol,
		'regime.epsilon': epsilon,
		'regime.c': c_exp,
		**extra,
	}


def _load_table(config: RunConfig) -> LadderTable:
	path = config.resolved_table_path()
	if not path.exists():
		raise CliError(
			f'No ladder table at {path}. Build one with "jacobs-ladder ladder build" or pass --table.',
			EXIT_USAGE,
		)
	# The cached energy profile refines interpolation between the knots
	return load_table(path, solver_for(config).profile.energy)


def _echo_result(value: float, error: float) -> None:
	click.echo(f'{value!r}\t{error:.3e}')


@click.group()
@click.option('--log-file', default=None, help='Write JSON log records to this file (- for stderr).')
@click.option('--log-multiline', is_flag=True, help='Indented multi-line log records.')
@click.option('-v', '--verbose', is_flag=True, help='Log debug records.')
@click.pass_context
def main(ctx: click.Context, log_file: str | None, log_multiline: bool, verbose: bool):
	"""Numerical laboratory for Jacob's ladders and energies of zeta signals on the critical line."""
	handler = configure_logging(log_file, multiline=log_multiline, level='DEBUG' if verbose else 'INFO')
	ctx.call_on_close(functools.partial(close_logging, handler))


# ------------------------------------------------------------------------------------------------ #
#                                               eval                                               #
# ------------------------------------------------------------------------------------------------ #

@main.group('eval')
def eval_group():
	"""Evaluate a function at a single height.

	Prints the value and an error estimate, separated by a tab.
	"""


def _point_command(name: str, help: str):
	def decorator(func):
		@eval_group.command(name, help=help)
		@click.option('--t', 't', type=float, required=True, help='Height t.')
		@run_options
		def command(t, config_path, **kw):
			with handle_errors():
				config = _run_config(config_path, _overrides(**kw))
				value, error = func(t, config)
			_echo_result(value, error)
		return command
	return decorator


@_point_command('theta', 'Riemann-Siegel theta function.')
def eval_theta(t, config):
	return sf.theta(t, config.eval), config.eval.target_abs_tol


@_point_command('z', "Hardy's Z function.")
def eval_z(t, config):
	return sf.hardy_z(t, config.eval), config.eval.target_abs_tol


@_point_command('s', 'S(t) = arg zeta(1/2 + it) / pi.')
def eval_s(t, config):
	return sf.s_of_t(t, config.eval), config.eval.target_abs_tol / math.pi


@_point_command('s1', 'S1(t), the integral of S from 0.')
def eval_s1(t, config):
	return sf.s1_of_t(t, config.eval), config.eval.target_abs_tol


@_point_command('phi1', 'The ladder phi1(t), interpolated from the table.')
def eval_phi1(t, config):
	table = _load_table(config)
	value = table.phi1_at(t)
	return value, table.solve_tol * abs(value)


@eval_group.command('zeta-abs')
@click.option('--t', 't', type=float, required=True, help='Height t.')
@click.option('--r', 'r', type=int, default=0, show_default=True, help='Derivative order.')
@run_options
def eval_zeta_abs(t, r, config_path, **kw):
	"""|zeta^(r)(1/2 + it)|."""
	with handle_errors():
		config = _run_config(config_path, _overrides(**kw))
		value = sf.zeta_derivative_abs(t, r, config.eval)
	_echo_result(value, config.eval.fd_rel_check * value if r else config.eval.target_abs_tol)


@eval_group.command('iterate')
@click.option('--t', 't', type=float, required=True, help='Height t.')
@click.option('--k', 'k', type=click.IntRange(min=0), required=True, help='Iteration depth.')
@run_options
def eval_iterate(t, k, config_path, **kw):
	"""The k-th iterate of phi1."""
	with handle_errors():
		config = _run_config(config_path, _overrides(**kw))
		table = _load_table(config)
		value = table.iterate(t, k)
	_echo_result(value, k * table.solve_tol * abs(value))


# ------------------------------------------------------------------------------------------------ #
#                                              ladder                                              #
# ------------------------------------------------------------------------------------------------ #

@main.group('ladder')
def ladder_group():
	"""Ladder table construction."""


@ladder_group.command('build')
@click.option('--t-start', type=float, default=None, help='First height of the table (>= 100).')
@click.option('--t-end', type=float, default=None, help='Last height of the table.')
@click.option('--step', type=float, default=None, help='Grid step (<= 10).')
@run_options
def ladder_build(t_start, t_end, step, config_path, **kw):
	"""Solve the ladder equation on a grid and save the table."""
	with handle_errors():
		config = _run_config(config_path, _overrides(
			**kw, **{'ladder.t_start': t_start, 'ladder.t_end': t_end, 'ladder.step': step},
		))
		lc = config.ladder
		table = build_table(lc.t_start, lc.t_end, lc.step, solver_for(config), jobs=config.jobs)
		path = config.resolved_table_path()
		save_table(table, path)

	lo, hi = table.phi1_range
	click.echo(f'table\t{path}')
	click.echo(f'rows\t{len(table)}')
	click.echo(f't\t[{table.t_min!r}, {table.t_max!r}]')
	click.echo(f'phi1\t[{lo!r}, {hi!r}]')
	click.echo('invariants\tincreasing, below diagonal')
	click.echo(f'partial\t{str(table.partial).lower()}')


# ------------------------------------------------------------------------------------------------ #
#                                            functional                                            #
# ------------------------------------------------------------------------------------------------ #

#: Claim ids that name a single functional, with its regime.
FUNCTIONAL_CLAIMS: dict[str, Regime] = {
	'eq-1.2': Regime.MACROSCOPIC,
	'eq-1.5': Regime.SHORT,
	'thm-1': Regime.SHORT,
	'thm-2': Regime.MACROSCOPIC,
	'cor': Regime.MACROSCOPIC,
	'eq-4.1': Regime.MACROSCOPIC,
	'eq-4.2': Regime.SEVEN_EIGHTHS,
	'eq-4.3': Regime.HALF_PLUS,
	'eq-4.4': Regime.HALF_PLUS,
	'rem-2': Regime.MACROSCOPIC,
}


def evaluate_functional(
	fx: Functionals,
	claim_id: str,
	T: float,
	U: float | None,
	signal: SignalParams,
	kind: str = 'product',
) -> tuple[IntegralResult, float | None, Any]:
	"""Value of the functional of a claim and the right-hand side shape it is compared against."""
	if claim_id == 'rem-2':
		regime = POWER_REGIME[kind]
	else:
		regime = FUNCTIONAL_CLAIMS[claim_id]
	spec = fx.interval(T, U, regime)
	r, n, m, l = signal.r, signal.n, signal.m, signal.l
	lnT = math.log(T)

	if claim_id == 'eq-1.2':
		res = fx.product_energy(spec, n)
		scale = None
	elif claim_id == 'eq-1.5':
		res = fx.ramachandra_lhs(spec, r)
		scale = ramachandra_scale(spec.U, r) if spec.U > 1 else None
	elif claim_id == 'thm-1':
		res = fx.theorem1_lhs(spec, r)
		scale = theorem_scale(claim_id, spec, signal) if spec.U > 1 else None
	elif claim_id == 'thm-2':
		res = fx.theorem2_lhs(spec, r, n)
		scale = theorem_scale(claim_id, spec, signal) if spec.U > 1 else None
	elif claim_id == 'cor':
		res = fx.corollary_lhs(spec, r, n, m)
		scale = theorem_scale(claim_id, spec, signal) if spec.U > 1 else None
	elif claim_id == 'eq-4.1':
		res = fx.first_power_product(spec, n)
		scale = spec.U * lnT ** (n + 1)
	elif claim_id == 'eq-4.2':
		res = fx.fourth_power_energy(spec, n)
		scale = spec.U * lnT ** (n + 5) / (2 * math.pi ** 2)
	elif claim_id == 'eq-4.3':
		res = fx.arg_moment(spec, n, l)
		scale = float(moment_coefficient(l)) * spec.U * lnT ** (n + 1) * math.log(lnT) ** l
	elif claim_id == 'eq-4.4':
		res = fx.s1_moment(spec, n, l)
		scale = spec.U * lnT ** (n + 1)
	else:
		res = fx.power_energy(kind, spec, signal)
		scale = remark2_scale(kind, spec, signal)
	return res, scale, spec


@main.command('functional')
@click.argument('claim_id', type=click.Choice(list(FUNCTIONAL_CLAIMS)))
@click.option('--T', 'height', type=float, required=True, help='Left end T of the interval.')
@click.option('--U', 'width', type=float, default=None, help='Interval width (default: top of the regime range).')
@click.option('--r', 'r', type=int, default=0, show_default=True, help='Derivative order.')
@click.option('--n', 'n', type=int, default=0, show_default=True, help='Iteration depth.')
@click.option('--m', 'm', type=int, default=1, show_default=True, help='Squaring level.')
@click.option('--l', 'l', type=int, default=1, show_default=True, help='Moment order.')
@click.option('--kind', type=click.Choice(['product', 'fourth', 'arg', 's1']), default='product',
              show_default=True, help='Squared signal of rem-2.')
@click.option('--require-converged', is_flag=True, help='Fail with exit code 3 if quadrature did not converge.')
@run_options
def functional(claim_id, height, width, r, n, m, l, kind, require_converged, config_path, **kw):
	"""Evaluate the functional of a claim at one parameter point.

	Prints the value with its error estimate, the ratio to the right-hand side shape, and a provenance
	line.
	"""
	with handle_errors():
		config = _run_config(config_path, _overrides(**kw))
		signal = SignalParams.create(r=r, n=n, m=m, l=l)
		fx = functionals_for(config, _load_table(config))
		res, scale, spec = evaluate_functional(fx, claim_id, height, width, signal, kind)
		if require_converged and not res.converged:
			raise NonConvergenceError(f'Quadrature did not converge (error estimate {res.abs_error_est:.3e})')

	_echo_result(res.value, res.abs_error_est)
	if scale is not None:
		click.echo(f'ratio\t{res.value / scale!r}')
	click.echo(
		f'# claim={claim_id} T={spec.T!r} U={spec.U!r} regime={spec.regime} r={r} n={n} m={m} l={l} '
		f'evaluations={res.evaluations} converged={str(res.converged).lower()}'
	)


# ------------------------------------------------------------------------------------------------ #
#                                          verify, config                                          #
# ------------------------------------------------------------------------------------------------ #

def _parse_claims(ctx, param, value):
	if value is None:
		return None
	claims = tuple(c.strip() for c in value.split(',') if c.strip())
	unknown = [c for c in claims if c not in CLAIMS]
	if unknown:
		raise click.BadParameter(f'unknown claim id(s) {", ".join(unknown)}; known: {", ".join(CLAIMS)}')
	return claims


@main.command('verify')
@click.option('--claims', callback=_parse_claims, default=None, help='Comma separated claim ids.')
@click.option('--T', 'height', type=float, default=None, help='Height of single-height checks.')
@click.option('--out', 'out_dir', default=None, help='Output directory of the report bundle.')
@click.option('--format', 'output_format', type=click.Choice(['delimited', 'structured']), default=None,
              help='Bundle file format.')
@run_options
@click.pass_context
def verify(ctx, claims, height, out_dir, output_format, config_path, **kw):
	"""Run the verification suite and write the report bundle."""
	with handle_errors():
		config = _run_config(config_path, _overrides(
			**kw, **{'suite.claims': claims, 'suite.base_T': height, 'out_dir': out_dir, 'output_format': output_format},
		))
		result = run_suite(config)

	for report in result.reports:
		ratio = '' if report.ratio is None else f'{report.ratio:.6g}'
		click.echo(f'{report.claim_id}\t{report.status}\t{ratio}\t{report.note or ""}')
	click.echo(f'# {len(result.reports)} reports, {len(result.failed)} failed, bundle in {Path(config.out_dir)}')
	if result.exit_code != EXIT_OK:
		ctx.exit(result.exit_code)


@main.command('config')
@click.option('--out', 'out_dir', default=None, help='Output directory of the report bundle.')
@click.option('--format', 'output_format', type=click.Choice(['delimited', 'structured']), default=None,
              help='Bundle file format.')
@run_options
def config_cmd(out_dir, output_format, config_path, **kw):
	"""Print the effective configuration as flat TOML."""
	with handle_errors():
		config = _run_config(config_path, _overrides(**kw, out_dir=out_dir, output_format=output_format))
	click.echo(dump_config(config), nl=False)
