"""Numerical checks of the claims at desk-scale heights.

Each ``verify_*`` function returns a list of :class:`.VerificationReport`. Inequalities with unspecified
constants are checked through empirical constants: the ratio of the left-hand side to the right-hand side
shape must be positive and stable (bounded max/min spread) across heights.
"""

from typing import Callable, Iterable, Sequence
from dataclasses import dataclass, field, replace
from pathlib import Path
import logging
import math
import time

from .bundle import write_bundle
from .config import RunConfig
from .errors import RegimeError
from .functionals import POWER_REGIME, Functionals, moment_coefficient
from .ladder import LadderTable, load_or_build_table
from .models import (
	CLAIMS, IntegralResult, IntervalSpec, Regime, SignalParams, VerificationReport,
	make_registration_decorator,
)


logger = logging.getLogger(__name__)

# Smallest positive float, so that a zero ratio falls outside every stability band
_POSITIVE = math.ulp(0.0)

EXIT_OK = 0
EXIT_FAILED = 1


def _relative_band(width: float) -> tuple[float, float]:
	return 1 - width, 1 + width


def _factor_band(factor: float) -> tuple[float, float]:
	return 1 / factor, factor


def _skip(claim_id: str, exc: Exception, **kw) -> VerificationReport:
	logger.info(str(exc), extra=dict(event='suite.skip', data=dict(claim_id=claim_id)))
	return VerificationReport.skipped(claim_id, str(exc), **kw)


@dataclass
class _Timer:
	start: float = field(default_factory=time.perf_counter)

	@property
	def elapsed(self) -> float:
		return time.perf_counter() - self.start


def _measured(
	claim_id: str,
	results: IntegralResult | Sequence[IntegralResult],
	lhs: float,
	rhs_scale: float,
	timer: _Timer,
	*,
	band: tuple[float, float] | None,
	note: str | None = None,
	**kw,
) -> VerificationReport:
	if isinstance(results, IntegralResult):
		results = [results]
	unconverged = not all(r.converged for r in results)
	if unconverged:
		note = 'quadrature not converged' if note is None else note + '; quadrature not converged'
	return VerificationReport.measured(
		claim_id,
		lhs,
		rhs_scale,
		band=band,
		runtime_s=timer.elapsed,
		eval_counts=sum(r.evaluations for r in results),
		note=note,
		**kw,
	)


def stability_reports(
	reports: list[VerificationReport],
	spread_limit: float,
	power: int = 1,
) -> list[VerificationReport]:
	"""Assign bands to a group of measurements of one empirical constant at different heights.

	The empirical constant is ``ratio ** (1 / power)``. The group passes when all constants are positive and
	their max/min spread is at most ``spread_limit``, which is the same as every ratio lying in
	``[max / spread_limit**power, min * spread_limit**power]``. That interval becomes the band of every
	report in the group.
	"""
	if not reports:
		return []
	ratios = [r.ratio for r in reports]
	limit = spread_limit ** power
	band = (max(max(ratios) / limit, _POSITIVE), min(ratios) * limit)
	return [replace(r.with_band(band), empirical_constant=r.ratio ** (1 / power)) for r in reports]


def _ladder_increment(table: LadderTable, T: float, U: float, depth: int) -> float:
	return table.iterate(T + U, depth) - table.iterate(T, depth)


# ------------------------------------------------------------------------------------------------ #
#                                          Ladder identities                                       #
# ------------------------------------------------------------------------------------------------ #

def verify_eq_1_1(pairs: Iterable[tuple[float, float]], fx: Functionals, band: float = 0.05) -> list[VerificationReport]:
	"""(φ₁(T+U) − φ₁(T))·ln T against ∫_T^{T+U} Z² dt."""
	reports = []
	for T, U in pairs:
		spec = fx.interval(T, U, Regime.SHORT)
		if U == 0:
			reports.append(VerificationReport.skipped('eq-1.1', 'U = 0: ratio undefined', interval=spec))
			continue
		timer = _Timer()
		energy = fx.product_energy(spec, 0)
		lhs = _ladder_increment(fx.table, T, U, 1) * math.log(T)
		reports.append(_measured('eq-1.1', energy, lhs, energy.value, timer, band=_relative_band(band), interval=spec))
	return reports


def product_of_means(fx: Functionals, T: float, U: float, n: int) -> tuple[float, list[IntegralResult]]:
	"""∏_{k=0}^n (mean of |ζ|² over [φ₁^k(T), φ₁^k(T+U)])."""
	value = 1.0
	results = []
	for k in range(n + 1):
		a = fx.table.iterate(T, k)
		b = fx.table.iterate(T + U, k)
		res = fx.product_energy(fx.interval(a, b - a, Regime.MACROSCOPIC), 0)
		results.append(res)
		value *= res.value / (b - a)
	return value, results


def eq_1_2_band(n: int) -> tuple[float, float]:
	return (0.8, 1.25) if n <= 1 else (0.7, 1.4)


def verify_eq_1_2(T: float, n_values: Iterable[int], fx: Functionals, U: float | None = None) -> list[VerificationReport]:
	"""Mean of the iterated product against the product of means."""
	spec = fx.interval(T, U, Regime.MACROSCOPIC)
	reports = []
	for n in n_values:
		timer = _Timer()
		lhs = fx.product_energy(spec, n)
		rhs, parts = product_of_means(fx, spec.T, spec.U, n)
		reports.append(_measured(
			'eq-1.2', [lhs, *parts], lhs.value / spec.U, rhs, timer,
			band=eq_1_2_band(n), signal=SignalParams(n=n), interval=spec,
		))
	return reports


def verify_eq_1_3(
	T: float,
	n_values: Iterable[int],
	r_values: Iterable[int],
	fx: Functionals,
	band: float = 0.25,
	U: float | None = None,
) -> list[VerificationReport]:
	"""Weighted product energy with F = |ζ^(r)| against {∫F}·ln^{n+1}T."""
	spec = fx.interval(T, U, Regime.MACROSCOPIC)
	reports = []
	for r in r_values:
		F = fx.integrand('ramachandra', SignalParams(r=r))
		for n in n_values:
			timer = _Timer()
			lhs = fx.weighted_product_energy(F, spec, n)
			a = fx.table.iterate(spec.T, n + 1)
			b = fx.table.iterate(spec.end, n + 1)
			inner = fx.ramachandra_lhs(fx.interval(a, b - a, Regime.MACROSCOPIC), r)
			rhs = inner.value * math.log(T) ** (n + 1)
			reports.append(_measured(
				'eq-1.3', [lhs, inner], lhs.value, rhs, timer,
				band=_relative_band(band), signal=SignalParams(r=r, n=n), interval=spec,
			))
	return reports


def trend_widths(T: float, points: int, epsilon: float) -> list[float]:
	"""Widths from T/ln²T down to T^{1/3+2ε}, geometrically spaced."""
	lo = T ** (1 / 3 + 2 * epsilon)
	hi = T / math.log(T) ** 2
	widths = [hi * (lo / hi) ** (i / (points - 1)) for i in range(points)]
	widths[-1] = lo
	return widths


def verify_eq_3_3(
	T: float,
	n_values: Iterable[int],
	U_values: Iterable[float],
	fx: Functionals,
	band: float = 0.05,
	trend_points: int = 0,
) -> list[VerificationReport]:
	"""φ₁^{n+1}(T+U) − φ₁^{n+1}(T) ∼ U in the macroscopic range.

	With ``trend_points`` the deviation is additionally recorded along widths shrinking toward the lower
	end of the range.
	"""
	U_values = list(U_values)
	reports = []
	trend = trend_widths(T, trend_points, fx.regime.epsilon) if trend_points >= 2 else []
	for n in n_values:
		signal = SignalParams(n=n)
		for U, checked in [(U, True) for U in U_values] + [(U, False) for U in trend]:
			spec = fx.interval(T, U, Regime.MACROSCOPIC)
			try:
				spec.require()
			except RegimeError as exc:
				reports.append(_skip('eq-3.3', exc, signal=signal, interval=spec))
				continue
			timer = _Timer()
			lhs = _ladder_increment(fx.table, T, U, n + 1)
			reports.append(VerificationReport.measured(
				'eq-3.3', lhs, U,
				band=_relative_band(band) if checked else None,
				signal=signal, interval=spec, runtime_s=timer.elapsed,
				note=None if checked else 'trend',
			))
	return reports


# ------------------------------------------------------------------------------------------------ #
#                                        Inequalities                                              #
# ------------------------------------------------------------------------------------------------ #

def ramachandra_scale(U: float, r: int) -> float:
	"""U (ln U)^{r+1/4}."""
	return U * math.log(U) ** (r + 0.25)


def verify_ramachandra(
	heights: Iterable[float],
	r_values: Iterable[int],
	fx: Functionals,
	spread_limit: float = 2.5,
) -> list[VerificationReport]:
	"""Empirical B of ∫|ζ^(r)| > B U (ln U)^{r+1/4}, with U = T/ln T."""
	reports = []
	for r in r_values:
		group = []
		for T in heights:
			spec = fx.interval(T, None, Regime.SHORT)
			timer = _Timer()
			lhs = fx.ramachandra_lhs(spec, r)
			group.append(_measured(
				'eq-1.5', lhs, lhs.value, ramachandra_scale(spec.U, r), timer,
				band=None, signal=SignalParams(r=r), interval=spec,
			))
		reports.extend(stability_reports(group, spread_limit))
	return reports


def verify_transfer(
	T: float,
	U: float,
	r_values: Iterable[int],
	fx: Functionals,
	band: float = 0.1,
) -> list[VerificationReport]:
	"""Theorem 1 integral against ln T times the Ramachandra integral."""
	spec = fx.interval(T, U, Regime.SHORT)
	reports = []
	for r in r_values:
		signal = SignalParams(r=r)
		try:
			timer = _Timer()
			lhs = fx.theorem1_lhs(spec, r)
		except RegimeError as exc:
			reports.append(_skip('eq-3.1', exc, signal=signal, interval=spec))
			continue
		base = fx.ramachandra_lhs(spec, r)
		reports.append(_measured(
			'eq-3.1', [lhs, base], lhs.value, math.log(T) * base.value, timer,
			band=_relative_band(band), signal=signal, interval=spec,
		))
	return reports


THEOREM_CLAIMS = ('thm-1', 'thm-2', 'cor')

# Exponents each claim depends on
THEOREM_EXPONENTS = {'thm-1': ('r',), 'thm-2': ('r', 'n'), 'cor': ('r', 'n', 'm')}


def distinct_signals(signals: Iterable[SignalParams], names: Sequence[str]) -> list[SignalParams]:
	"""Signals reduced to the given exponents (others at their defaults), without repetitions."""
	out = []
	for signal in signals:
		reduced = SignalParams(**{name: getattr(signal, name) for name in names})
		if reduced not in out:
			out.append(reduced)
	return out


def theorem_scale(claim_id: str, spec: IntervalSpec, signal: SignalParams) -> float:
	"""Right-hand side of the theorem with B = 1."""
	r, n, m = signal.r, signal.n, signal.m
	lnU = math.log(spec.U)
	lnT = math.log(spec.T)
	if claim_id == 'thm-1':
		return 0.5 * spec.U * lnU ** (r + 0.25) * lnT
	if claim_id == 'thm-2':
		return 0.5 * spec.U * lnU ** (r + 0.25) * lnT ** (n + 1)
	if claim_id == 'cor':
		p = 2 ** m
		return 0.5 ** p * spec.U * lnU ** (p * (r + 0.25)) * lnT ** (p * (n + 1))
	raise ValueError(f'Not a theorem claim: {claim_id!r}')


def verify_theorem(
	claim_id: str,
	signals: Iterable[SignalParams],
	heights: Iterable[float],
	fx: Functionals,
	spread_limit: float = 2.5,
) -> list[VerificationReport]:
	"""Positivity and cross-height stability of the empirical B of Theorem 1, Theorem 2 or the Corollary.

	Theorem 1 uses U = T/ln T, the others U = T/ln²T. For the corollary with m = 1 a Cauchy–Schwarz
	consistency report ``thm2² / (U·cor) ≤ 1`` is added at each height.
	"""
	if claim_id not in THEOREM_CLAIMS:
		raise ValueError(f'Not a theorem claim: {claim_id!r}')
	heights = list(heights)
	regime = Regime.SHORT if claim_id == 'thm-1' else Regime.MACROSCOPIC
	reports = []

	for signal in distinct_signals(signals, THEOREM_EXPONENTS[claim_id]):
		if claim_id == 'cor' and signal.m < 1:
			continue
		group = []
		extra = []
		power = 2 ** signal.m if claim_id == 'cor' else 1
		for T in heights:
			spec = fx.interval(T, None, regime)
			timer = _Timer()
			if claim_id == 'thm-1':
				lhs = fx.theorem1_lhs(spec, signal.r)
			elif claim_id == 'thm-2':
				lhs = fx.theorem2_lhs(spec, signal.r, signal.n)
			else:
				lhs = fx.corollary_lhs(spec, signal.r, signal.n, signal.m)
			group.append(_measured(
				claim_id, lhs, lhs.value, theorem_scale(claim_id, spec, signal), timer,
				band=None, signal=signal, interval=spec,
			))
			if claim_id == 'cor' and signal.m == 1:
				timer = _Timer()
				thm2 = fx.theorem2_lhs(spec, signal.r, signal.n)
				slack = 4 * fx.rtol
				extra.append(_measured(
					'cor', [thm2, lhs], thm2.value ** 2, spec.U * lhs.value, timer,
					band=(0.0, 1 + slack), signal=signal, interval=spec, note='Cauchy-Schwarz consistency',
				))

		reports.extend(stability_reports(group, spread_limit, power))
		reports.extend(extra)
	return reports


# ------------------------------------------------------------------------------------------------ #
#                                       Concluding formulae                                        #
# ------------------------------------------------------------------------------------------------ #

def verify_eq_4_1(T: float, n_values: Iterable[int], fx: Functionals) -> list[VerificationReport]:
	"""Both readings of the first-power product formula, recorded against U ln^{n+1}T."""
	spec = fx.interval(T, None, Regime.MACROSCOPIC)
	reports = []
	for n in n_values:
		signal = SignalParams(n=n)
		scale = spec.U * math.log(T) ** (n + 1)
		for name, method in [('first powers', fx.first_power_product), ('squares', fx.product_energy)]:
			timer = _Timer()
			lhs = method(spec, n)
			reports.append(_measured(
				'eq-4.1', lhs, lhs.value, scale, timer, band=None, signal=signal, interval=spec, note=name,
			))
	return reports


def verify_eq_4_2(T: float, n_values: Iterable[int], fx: Functionals, factor: float = 3.0) -> list[VerificationReport]:
	"""Fourth-power energy against U₁ ln^{n+5}T / (2π²)."""
	spec = fx.interval(T, None, Regime.SEVEN_EIGHTHS)
	reports = []
	for n in n_values:
		timer = _Timer()
		lhs = fx.fourth_power_energy(spec, n)
		scale = spec.U * math.log(T) ** (n + 5) / (2 * math.pi ** 2)
		reports.append(_measured(
			'eq-4.2', lhs, lhs.value, scale, timer,
			band=_factor_band(factor), signal=SignalParams(n=n), interval=spec,
		))
	return reports


def verify_eq_4_3(
	T: float,
	n_values: Iterable[int],
	l_values: Iterable[int],
	fx: Functionals,
	factor: float = 3.0,
) -> list[VerificationReport]:
	"""arg moment against (2l)!/(l!4^l) U ln^{n+1}T (ln ln T)^l."""
	spec = fx.interval(T, None, Regime.HALF_PLUS)
	lnT = math.log(T)
	reports = []
	for l in l_values:
		for n in n_values:
			timer = _Timer()
			lhs = fx.arg_moment(spec, n, l)
			scale = float(moment_coefficient(l)) * spec.U * lnT ** (n + 1) * math.log(lnT) ** l
			reports.append(_measured(
				'eq-4.3', lhs, lhs.value, scale, timer,
				band=_factor_band(factor), signal=SignalParams(n=n, l=l), interval=spec,
			))
	return reports


def verify_eq_4_4(T: float, n_values: Iterable[int], l_values: Iterable[int], fx: Functionals) -> list[VerificationReport]:
	"""S₁ moment; the ratio to U ln^{n+1}T is recorded as the empirical d_l."""
	spec = fx.interval(T, None, Regime.HALF_PLUS)
	reports = []
	for l in l_values:
		for n in n_values:
			timer = _Timer()
			lhs = fx.s1_moment(spec, n, l)
			scale = spec.U * math.log(T) ** (n + 1)
			reports.append(_measured(
				'eq-4.4', lhs, lhs.value, scale, timer, band=None, signal=SignalParams(n=n, l=l), interval=spec,
			))
	return reports


def remark2_scale(kind: str, spec: IntervalSpec, signal: SignalParams) -> float:
	"""Right-hand side shape of the squared-signal inequalities with D = 1."""
	p = 2 ** signal.m
	lnT = math.log(spec.T)
	if kind == 'fourth':
		return spec.U * lnT ** (p * (signal.n + 5))
	scale = spec.U * lnT ** (p * (signal.n + 1))
	if kind == 'arg':
		scale *= math.log(lnT) ** (signal.l * p)
	return scale


REMARK2_KINDS = ('product', 'fourth', 'arg', 's1')


def verify_remark2(
	heights: Iterable[float],
	signals: Iterable[SignalParams],
	fx: Functionals,
	spread_limit: float = 2.5,
) -> list[VerificationReport]:
	"""Positivity and stability of the empirical D, D(l) of the squared signals."""
	heights = list(heights)
	signals = list(signals)
	reports = []
	for kind in REMARK2_KINDS:
		regime = POWER_REGIME[kind]
		names = ('n', 'm', 'l') if kind in ('arg', 's1') else ('n', 'm')
		for signal in distinct_signals(signals, names):
			power = 2 ** signal.m
			group = []
			for T in heights:
				spec = fx.interval(T, None, regime)
				timer = _Timer()
				lhs = fx.power_energy(kind, spec, signal)
				group.append(_measured(
					'rem-2', lhs, lhs.value, remark2_scale(kind, spec, signal), timer,
					band=None, signal=signal, interval=spec, note=kind,
				))
			reports.extend(stability_reports(group, spread_limit, power))
	return reports


def verify_concluding(
	T: float,
	n_values: Iterable[int],
	l_values: Iterable[int],
	fx: Functionals,
	factor: float = 3.0,
) -> list[VerificationReport]:
	"""Reports for the four concluding formulae at height T."""
	n_values = list(n_values)
	l_values = list(l_values)
	return [
		*verify_eq_4_1(T, n_values, fx),
		*verify_eq_4_2(T, n_values, fx, factor),
		*verify_eq_4_3(T, n_values, l_values, fx, factor),
		*verify_eq_4_4(T, n_values, l_values, fx),
	]


# ------------------------------------------------------------------------------------------------ #
#                                               Suite                                              #
# ------------------------------------------------------------------------------------------------ #

ClaimRunner = Callable[[RunConfig, Functionals], list[VerificationReport]]

#: Functions computing the reports of each claim.
CLAIM_RUNNERS: dict[str, ClaimRunner] = dict()


_register_runner = make_registration_decorator(CLAIM_RUNNERS, 'claim_id')


def claim_runner(claim_id: str) -> Callable[[ClaimRunner], ClaimRunner]:
	"""Decorator registering a function as the runner of a claim, under its ``claim_id`` attribute."""
	if claim_id not in CLAIMS:
		raise ValueError(f'Unknown claim id {claim_id!r}')

	def register(func: ClaimRunner) -> ClaimRunner:
		func.claim_id = claim_id
		return _register_runner(func)

	return register


def _signals(config: RunConfig) -> list[SignalParams]:
	s = config.suite
	return [
		SignalParams.create(r=r, n=n, m=m, l=l)
		for r in s.r_values for n in s.n_values for m in s.m_values for l in s.l_values
	]


@claim_runner('eq-1.1')
def _run_eq_1_1(config, fx):
	return verify_eq_1_1(config.suite.ladder_pairs, fx, config.suite.ladder_band)


@claim_runner('eq-1.2')
def _run_eq_1_2(config, fx):
	return verify_eq_1_2(config.suite.base_T, config.suite.n_values, fx)


@claim_runner('eq-1.3')
def _run_eq_1_3(config, fx):
	return verify_eq_1_3(config.suite.base_T, config.suite.n_values, config.suite.r_values, fx)


@claim_runner('eq-1.5')
def _run_eq_1_5(config, fx):
	return verify_ramachandra(config.suite.heights, config.suite.r_values, fx, config.suite.spread_limit)


def _run_theorem(claim_id):
	def run(config, fx):
		return verify_theorem(claim_id, _signals(config), config.suite.heights, fx, config.suite.spread_limit)
	return run


for _claim_id in THEOREM_CLAIMS:
	claim_runner(_claim_id)(_run_theorem(_claim_id))


@claim_runner('eq-3.1')
def _run_eq_3_1(config, fx):
	return verify_transfer(config.suite.base_T, config.suite.transfer_width, config.suite.r_values, fx)


@claim_runner('eq-3.3')
def _run_eq_3_3(config, fx):
	T = config.suite.base_T
	widths = (T ** 0.4, T / math.log(T) ** 2)
	return verify_eq_3_3(
		T, config.suite.n_values, widths, fx, config.suite.ladder_band, config.suite.u_trend_points,
	)


@claim_runner('eq-4.1')
def _run_eq_4_1(config, fx):
	return verify_eq_4_1(config.suite.base_T, config.suite.n_values, fx)


@claim_runner('eq-4.2')
def _run_eq_4_2(config, fx):
	return verify_eq_4_2(config.suite.base_T, config.suite.n_values, fx, config.suite.factor_band)


@claim_runner('eq-4.3')
def _run_eq_4_3(config, fx):
	s = config.suite
	return verify_eq_4_3(s.base_T, s.n_values, s.l_values, fx, s.factor_band)


@claim_runner('eq-4.4')
def _run_eq_4_4(config, fx):
	s = config.suite
	return verify_eq_4_4(s.base_T, s.n_values, s.l_values, fx)


@claim_runner('rem-2')
def _run_rem_2(config, fx):
	return verify_remark2(config.suite.heights, _signals(config), fx, config.suite.spread_limit)


def functionals_for(config: RunConfig, table: LadderTable) -> Functionals:
	return Functionals(
		table, config.eval, config.quadrature, config.regime, tol=0.0, rtol=config.suite.rtol,
	)


def run_claims(config: RunConfig, table: LadderTable) -> list[VerificationReport]:
	"""Reports of all enabled claims, in the order of the claim registry."""
	fx = functionals_for(config, table)
	enabled = set(config.suite.claims)
	reports = []
	for claim_id in CLAIMS:
		if claim_id not in enabled:
			continue
		timer = _Timer()
		logger.info('Verifying claim', extra=dict(event='suite.claim', data=dict(claim_id=claim_id)))
		try:
			claim_reports = CLAIM_RUNNERS[claim_id](config, fx)
		except RegimeError as exc:
			claim_reports = [_skip(claim_id, exc)]
		for rep in claim_reports:
			logger.info(
				'Report',
				extra=dict(event='suite.report', data=dict(
					claim_id=rep.claim_id, status=rep.status, ratio=rep.ratio, note=rep.note,
				)),
			)
		logger.info(
			'Claim done',
			extra=dict(event='suite.claim_done', data=dict(claim_id=claim_id, runtime_s=timer.elapsed)),
		)
		reports.extend(claim_reports)
	return reports


@dataclass
class SuiteResult:
	"""Reports of a suite run and the bundle files written."""

	reports: list[VerificationReport]
	paths: list[Path]

	@property
	def failed(self) -> list[VerificationReport]:
		return [r for r in self.reports if r.status == 'fail']

	@property
	def exit_code(self) -> int:
		return EXIT_FAILED if self.failed else EXIT_OK


def run_suite(config: RunConfig, table: LadderTable | None = None) -> SuiteResult:
	"""Run all enabled claims and write the report bundle to ``config.out_dir``.

	The ladder table is loaded from (or built into) the configured cache file unless given.
	"""
	if config.suite.claims and table is None:
		table = load_or_build_table(config)
	reports = run_claims(config, table) if config.suite.claims else []
	paths = write_bundle(reports, config.out_dir, config.output_format, config.suite.record_timings)
	result = SuiteResult(reports, paths)
	logger.info(
		'Suite finished',
		extra=dict(event='suite.done', data=dict(reports=len(reports), failed=len(result.failed))),
	)
	return result
