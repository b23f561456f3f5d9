"""Integral functionals of signals built from ζ along the iterated ladder.

Every functional integrates over [T, T + U] (the preimage interval for Theorem 1) a product

	g(φ₁^{n+1}(t)) · ∏_{k=0}^n |ζ(½ + iφ₁^k(t))|^p

with some outer factor g and power p. Products are evaluated as exponentials of summed logarithms, with
|ζ| floored at :data:`LOG_FLOOR`, so that high powers do not overflow.
"""

from typing import Callable, Literal
from fractions import Fraction
import logging
import math

import numpy as np

from .config import EvalConfig, PanelPolicy, RegimeConfig
from .errors import DomainError
from .ladder import LadderTable
from .models import IntegralResult, IntervalSpec, Regime, SignalParams
from .quadrature import Integrand, integrate
from .riemann_siegel import theta_and_z
from .special_functions import s1_of_t, s_of_t, zeta_derivative_abs, zero_index


logger = logging.getLogger(__name__)

#: Smallest |ζ| entering a logarithm.
LOG_FLOOR = 1e-300

# Number of points F is sampled at to check that it has one sign
_SIGN_SAMPLES = 65

#: Regime each functional requires. Functionals not listed are not gated.
REQUIRED_REGIME: dict[str, Regime] = {
	'theorem1': Regime.SHORT,
	'theorem2': Regime.MACROSCOPIC,
	'corollary': Regime.MACROSCOPIC,
	'first_power': Regime.MACROSCOPIC,
	'arg': Regime.HALF_PLUS,
	's1': Regime.HALF_PLUS,
	'fourth': Regime.SEVEN_EIGHTHS,
}

PowerKind = Literal['product', 'fourth', 'arg', 's1']

#: Regimes of the four squared signals.
POWER_REGIME: dict[str, Regime] = {
	'product': Regime.MACROSCOPIC,
	'fourth': Regime.SEVEN_EIGHTHS,
	'arg': Regime.HALF_PLUS,
	's1': Regime.HALF_PLUS,
}


def moment_coefficient(l: int) -> Fraction:
	"""(2l)! / (l! 4^l) as an exact fraction, 1 ≤ l ≤ 20."""
	if not 1 <= l <= 20:
		raise DomainError(f'Moment order l={l} not supported (1 <= l <= 20)')
	return Fraction(math.factorial(2 * l), math.factorial(l) * 4 ** l)


class Functionals:
	"""Evaluates the integral functionals on a ladder table.

	Attributes
	----------
	table
		Ladder table used for φ₁ and its iterates.
	eval_config
		Settings for evaluating ζ on the critical line.
	policy
		Quadrature panel settings.
	regime
		Values of ε and c used when gating U.
	tol
		Absolute quadrature tolerance.
	rtol
		Relative quadrature tolerance.
	"""

	def __init__(
		self,
		table: LadderTable,
		eval_config: EvalConfig | None = None,
		policy: PanelPolicy | None = None,
		regime: RegimeConfig | None = None,
		*,
		tol: float = 0.0,
		rtol: float = 1e-6,
	):
		self.table = table
		self.eval_config = eval_config or EvalConfig()
		self.policy = policy or PanelPolicy()
		self.regime = regime or RegimeConfig()
		self.tol = tol
		self.rtol = rtol

	def interval(self, T: float, U: float | None = None, regime: Regime | str = Regime.MACROSCOPIC) -> IntervalSpec:
		"""Interval spec with this instance's ε and c (U defaults to the top of the regime range)."""
		return IntervalSpec.for_regime(T, regime, epsilon=self.regime.epsilon, c=self.regime.c, U=U)

	# -------------------------------------------------------------------------------------------- #
	#                                           Factors                                            #
	# -------------------------------------------------------------------------------------------- #

	def log_abs_zeta(self, t: np.ndarray) -> np.ndarray:
		"""ln max(|ζ(½ + it)|, LOG_FLOOR)."""
		z = theta_and_z(t, self.eval_config)[1]
		return np.log(np.maximum(np.abs(z), LOG_FLOOR))

	def log_abs_derivative(self, t: np.ndarray, r: int) -> np.ndarray:
		"""ln max(|ζ^(r)(½ + it)|, LOG_FLOOR)."""
		return np.log(np.maximum(zeta_derivative_abs(t, r, self.eval_config), LOG_FLOOR))

	def arg_zeta(self, t: np.ndarray) -> np.ndarray:
		"""arg ζ(½ + it) = π S(t)."""
		return math.pi * np.asarray(s_of_t(t, self.eval_config, strict=False))

	def log_product(self, levels: list[np.ndarray], n: int, power: float) -> np.ndarray:
		"""power · Σ_{k=0}^n ln |ζ(½ + iφ₁^k(t))| given the iterates ``levels``."""
		acc = np.zeros_like(levels[0])
		for k in range(n + 1):
			acc = acc + self.log_abs_zeta(levels[k])
		return power * acc

	# -------------------------------------------------------------------------------------------- #
	#                                          Integrands                                          #
	# -------------------------------------------------------------------------------------------- #

	def integrand(
		self,
		kind: str,
		signal: SignalParams,
		F: Callable[[np.ndarray], np.ndarray] | None = None,
	) -> Integrand:
		"""Integrand of a functional.

		Parameters
		----------
		kind
			One of ``ramachandra``, ``product``, ``weighted``, ``theorem1``, ``theorem2``, ``corollary``,
			``first_power``, ``arg``, ``s1``, ``fourth``, or ``power_<name>`` with a :data:`PowerKind` name.
		signal
			Exponents r, n, m, l.
		F
			Outer function of the ``weighted`` integrand.
		"""
		r, n, m, l = signal.r, signal.n, signal.m, signal.l

		if kind == 'ramachandra':
			return lambda t: zeta_derivative_abs(t, r, self.eval_config)

		if kind == 'theorem1':
			def f(t):
				outer = self.log_abs_derivative(self.table.iterate(t, 1), r)
				return np.exp(outer + 2 * self.log_abs_zeta(t))
			return f

		if kind == 'weighted':
			if F is None:
				raise TypeError('The weighted integrand requires F')

			def f(t):
				levels = self.table.iterates(t, n + 1)
				return np.asarray(F(levels[n + 1]), dtype=float) * np.exp(self.log_product(levels, n, 2))
			return f

		if kind == 'arg' or kind == 'power_arg':
			power, outer_power = (2, 2 * l) if kind == 'arg' else (2 ** (m + 1), l * 2 ** (m + 1))

			def f(t):
				levels = self.table.iterates(t, n + 1)
				outer = np.abs(self.arg_zeta(levels[n + 1])) ** outer_power
				return outer * np.exp(self.log_product(levels, n, power))
			return f

		if kind == 's1' or kind == 'power_s1':
			power, outer_power = (2, 2 * l) if kind == 's1' else (2 ** (m + 1), l * 2 ** (m + 1))

			def f(t):
				levels = self.table.iterates(t, n + 1)
				outer = np.abs(np.asarray(s1_of_t(levels[n + 1], self.eval_config))) ** outer_power
				return outer * np.exp(self.log_product(levels, n, power))
			return f

		# Remaining kinds are exp(outer log + product log)
		if kind == 'product':
			depth, outer, power = n, None, 2
		elif kind == 'first_power':
			depth, outer, power = n, None, 1
		elif kind == 'theorem2':
			depth, outer, power = n + 1, ('derivative', 1), 2
		elif kind == 'corollary':
			depth, outer, power = n + 1, ('derivative', 2 ** m), 2 ** (m + 1)
		elif kind == 'fourth':
			depth, outer, power = n + 1, ('zeta', 4), 2
		elif kind == 'power_product':
			depth, outer, power = n, None, 2 ** (m + 1)
		elif kind == 'power_fourth':
			depth, outer, power = n + 1, ('zeta', 2 ** (m + 2)), 2 ** (m + 1)
		else:
			raise ValueError(f'Unknown integrand kind {kind!r}')

		def f(t):
			levels = self.table.iterates(t, depth)
			log = self.log_product(levels, n, power)
			if outer is not None:
				which, p = outer
				if which == 'derivative':
					log = log + p * self.log_abs_derivative(levels[n + 1], r)
				else:
					log = log + p * self.log_abs_zeta(levels[n + 1])
			return np.exp(log)
		return f

	# -------------------------------------------------------------------------------------------- #
	#                                          Integration                                         #
	# -------------------------------------------------------------------------------------------- #

	def _integrate(self, f: Integrand, a: float, b: float, breakpoints=None) -> IntegralResult:
		res = integrate(f, a, b, self.tol, self.policy, rtol=self.rtol, breakpoints=breakpoints)
		if not res.converged:
			logger.warning(
				'Quadrature did not converge',
				extra=dict(event='functional.nonconvergence', data=dict(a=a, b=b, error=res.abs_error_est)),
			)
		return res

	def _zero_breakpoints(self, spec: IntervalSpec, depth: int) -> np.ndarray:
		"""Heights t in [T, T + U] where φ₁^depth(t) is a zero of Z."""
		lo = self.table.iterate(spec.T, depth)
		hi = self.table.iterate(spec.end, depth)
		index = zero_index(self.eval_config)
		index.extend_to(hi)
		zeros = index.zeros[(index.zeros > lo) & (index.zeros < hi)]
		return self.table.iterate_preimage(zeros, depth)

	def _gated(self, kind: str, spec: IntervalSpec, regime: Regime | None = None) -> bool:
		"""Whether the interval is degenerate; raises if U is outside the required regime."""
		if spec.U == 0:
			return True
		regime = REQUIRED_REGIME.get(kind) if regime is None else regime
		if regime is not None:
			spec.require(regime)
		return False

	# -------------------------------------------------------------------------------------------- #
	#                                          Functionals                                         #
	# -------------------------------------------------------------------------------------------- #

	def ramachandra_lhs(self, spec: IntervalSpec, r: int) -> IntegralResult:
		"""∫_T^{T+U} |ζ^(r)(½ + it)| dt."""
		if self._gated('ramachandra', spec):
			return IntegralResult.zero()
		return self._integrate(self.integrand('ramachandra', SignalParams(r=r)), spec.T, spec.end)

	def product_energy(self, spec: IntervalSpec, n: int) -> IntegralResult:
		"""∫_T^{T+U} ∏_{k=0}^n |ζ(½ + iφ₁^k(t))|² dt."""
		if self._gated('product', spec):
			return IntegralResult.zero()
		return self._integrate(self.integrand('product', SignalParams(n=n)), spec.T, spec.end)

	def weighted_product_energy(
		self,
		F: Callable[[np.ndarray], np.ndarray],
		spec: IntervalSpec,
		n: int,
	) -> IntegralResult:
		"""∫_T^{T+U} F(φ₁^{n+1}(t)) ∏_{k=0}^n |ζ(½ + iφ₁^k(t))|² dt.

		``F`` should have one sign on [φ₁^{n+1}(T), φ₁^{n+1}(T + U)]. It is sampled there and a warning
		is logged if it takes both signs.
		"""
		if self._gated('weighted', spec):
			return IntegralResult.zero()
		lo = self.table.iterate(spec.T, n + 1)
		hi = self.table.iterate(spec.end, n + 1)
		samples = np.asarray(F(np.linspace(lo, hi, _SIGN_SAMPLES)), dtype=float)
		if np.any(samples > 0) and np.any(samples < 0):
			logger.warning(
				'F takes both signs on the iterated interval',
				extra=dict(event='functional.sign_change', data=dict(lo=lo, hi=hi)),
			)
		return self._integrate(self.integrand('weighted', SignalParams(n=n), F), spec.T, spec.end)

	def theorem1_lhs(self, spec: IntervalSpec, r: int) -> IntegralResult:
		"""∫ |ζ^(r)(½ + iφ₁(t))| |ζ(½ + it)|² dt over the preimage of [T, T + U] under φ₁."""
		if self._gated('theorem1', spec):
			return IntegralResult.zero()
		a, b = self.table.preimage_interval(spec.T, spec.U)
		return self._integrate(self.integrand('theorem1', SignalParams(r=r)), a, b)

	def theorem2_lhs(self, spec: IntervalSpec, r: int, n: int) -> IntegralResult:
		"""∫_T^{T+U} |ζ^(r)(½ + iφ₁^{n+1}(t))| ∏_{k=0}^n |ζ(½ + iφ₁^k(t))|² dt."""
		if self._gated('theorem2', spec):
			return IntegralResult.zero()
		return self._integrate(self.integrand('theorem2', SignalParams(r=r, n=n)), spec.T, spec.end)

	def corollary_lhs(self, spec: IntervalSpec, r: int, n: int, m: int) -> IntegralResult:
		"""∫_T^{T+U} |ζ^(r)(½ + iφ₁^{n+1}(t))|^{2^m} ∏_{k=0}^n |ζ(½ + iφ₁^k(t))|^{2^{m+1}} dt, m ≥ 1."""
		if m < 1:
			raise DomainError(f'The corollary requires m >= 1 (got {m})')
		signal = SignalParams.create(r=r, n=n, m=m)
		if self._gated('corollary', spec):
			return IntegralResult.zero()
		return self._integrate(self.integrand('corollary', signal), spec.T, spec.end)

	def arg_moment(self, spec: IntervalSpec, n: int, l: int) -> IntegralResult:
		"""∫_T^{T+U} {arg ζ(½ + iφ₁^{n+1}(t))}^{2l} ∏_{k=0}^n |ζ(½ + iφ₁^k(t))|² dt."""
		signal = SignalParams.create(n=n, l=l)
		if self._gated('arg', spec):
			return IntegralResult.zero()
		bp = self._zero_breakpoints(spec, n + 1)
		return self._integrate(self.integrand('arg', signal), spec.T, spec.end, bp)

	def s1_moment(self, spec: IntervalSpec, n: int, l: int) -> IntegralResult:
		"""∫_T^{T+U} {S₁(φ₁^{n+1}(t))}^{2l} ∏_{k=0}^n |ζ(½ + iφ₁^k(t))|² dt."""
		signal = SignalParams.create(n=n, l=l)
		if self._gated('s1', spec):
			return IntegralResult.zero()
		bp = self._zero_breakpoints(spec, n + 1)
		return self._integrate(self.integrand('s1', signal), spec.T, spec.end, bp)

	def fourth_power_energy(self, spec: IntervalSpec, n: int) -> IntegralResult:
		"""∫_T^{T+U₁} |ζ(½ + iφ₁^{n+1}(t))|⁴ ∏_{k=0}^n |ζ(½ + iφ₁^k(t))|² dt."""
		if self._gated('fourth', spec):
			return IntegralResult.zero()
		return self._integrate(self.integrand('fourth', SignalParams(n=n)), spec.T, spec.end)

	def first_power_product(self, spec: IntervalSpec, n: int) -> IntegralResult:
		"""∫_T^{T+U} ∏_{k=0}^n |ζ(½ + iφ₁^k(t))| dt (first powers)."""
		if self._gated('first_power', spec):
			return IntegralResult.zero()
		return self._integrate(self.integrand('first_power', SignalParams(n=n)), spec.T, spec.end)

	def power_energy(self, kind: PowerKind, spec: IntervalSpec, signal: SignalParams) -> IntegralResult:
		"""Energy of one of the squared signals with exponents 2^{m+1}.

		``product``
			∏ |ζ(½ + iφ₁^k)|^{2^{m+1}}
		``fourth``
			|ζ(½ + iφ₁^{n+1})|^{2^{m+2}} ∏ |ζ(½ + iφ₁^k)|^{2^{m+1}}
		``arg``
			|arg ζ(½ + iφ₁^{n+1})|^{l 2^{m+1}} ∏ |ζ(½ + iφ₁^k)|^{2^{m+1}}
		``s1``
			|S₁(φ₁^{n+1})|^{l 2^{m+1}} ∏ |ζ(½ + iφ₁^k)|^{2^{m+1}}
		"""
		if kind not in POWER_REGIME:
			raise ValueError(f'Unknown signal {kind!r}')
		if self._gated('power_' + kind, spec, POWER_REGIME[kind]):
			return IntegralResult.zero()
		bp = self._zero_breakpoints(spec, signal.n + 1) if kind in ('arg', 's1') else None
		return self._integrate(self.integrand('power_' + kind, signal), spec.T, spec.end, bp)
