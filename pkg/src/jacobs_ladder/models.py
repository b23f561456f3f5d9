"""Data models shared between modules, and the pydantic adapter cache used to validate/serialize them."""

from typing import Annotated, Any, Callable, Literal, TypeAlias, TypeVar
from dataclasses import dataclass, field, replace
from enum import Enum
import math

from pydantic import Field, TypeAdapter

from .errors import RegimeError


T = TypeVar('T')
_T_registered = TypeVar('_T_registered')


def make_registration_decorator(
	registry: dict[Any, Any],
	attrname: str,
) -> Callable[[_T_registered], _T_registered]:
	"""Make a decorator that registers objects in ``registry`` under the value of one of their attributes."""

	def register(obj: _T_registered) -> _T_registered:
		key = getattr(obj, attrname)
		if key in registry:
			raise ValueError(f'Already registered for key {key!r}')
		registry[key] = obj
		return obj

	return register


class TypeAdapterCache:
	"""Caches Pydantic TypeAdapters.

	Enables using Pydantic to validate non-BaseModel types (including dataclasses), but avoids
	creating a new ``TypeAdapter`` instance each time.
	"""

	cache: dict[Any, TypeAdapter]

	def __init__(self):
		self.cache = dict()

	def get(self, typ: Any) -> TypeAdapter:
		if typ in self.cache:
			return self.cache[typ]
		adapter = TypeAdapter(typ)
		self.cache[typ] = adapter
		return adapter

	def validate_python(self, typ: type[T], value, **kw) -> T:
		adapter = self.get(typ)
		return adapter.validate_python(value, **kw)

	def validate_json(self, typ: type[T], data: str | bytes | bytearray, **kw) -> T:
		adapter = self.get(typ)
		return adapter.validate_json(data, **kw)

	def dump_python(self, value, astype: Any | None = None, **kw) -> Any:
		if astype is None:
			astype = type(value)
		adapter = self.get(astype)
		return adapter.dump_python(value, **kw)

	def dump_json(self, value, astype: Any | None = None, **kw) -> bytes:
		if astype is None:
			astype = type(value)
		adapter = self.get(astype)
		return adapter.dump_json(value, **kw)


adapter_cache = TypeAdapterCache()


# ------------------------------------------------------------------------------------------------ #
#                                            Quadrature                                            #
# ------------------------------------------------------------------------------------------------ #

@dataclass(frozen=True)
class IntegralResult:
	"""Value of a definite integral with its error estimate.

	Attributes
	----------
	value
		Approximate value of the integral.
	abs_error_est
		Estimate of the absolute error of ``value``.
	evaluations
		Number of integrand evaluations used.
	converged
		Whether ``abs_error_est`` is within the requested tolerance.
	"""

	value: float
	abs_error_est: float = 0.0
	evaluations: int = 0
	converged: bool = True

	@staticmethod
	def zero() -> 'IntegralResult':
		return IntegralResult(0.0, 0.0, 0, True)

	def __add__(self, other: 'IntegralResult') -> 'IntegralResult':
		return IntegralResult(
			self.value + other.value,
			self.abs_error_est + other.abs_error_est,
			self.evaluations + other.evaluations,
			self.converged and other.converged,
		)

	def scaled(self, factor: float) -> 'IntegralResult':
		return IntegralResult(self.value * factor, self.abs_error_est * abs(factor), self.evaluations, self.converged)


# ------------------------------------------------------------------------------------------------ #
#                                          Signal selection                                        #
# ------------------------------------------------------------------------------------------------ #

#: Largest supported derivative order of zeta.
MAX_DERIVATIVE = 4


@dataclass(frozen=True)
class SignalParams:
	"""Exponent bundle selecting which signal is evaluated.

	Attributes
	----------
	r
		Derivative order of zeta.
	n
		Iteration depth (the product runs over k = 0..n).
	m
		Cauchy squaring level of the corollary.
	l
		Moment order of the arg / S₁ formulas.
	"""

	r: Annotated[int, Field(ge=0, le=MAX_DERIVATIVE)] = 0
	n: Annotated[int, Field(ge=0, le=3)] = 0
	m: Annotated[int, Field(ge=0, le=2)] = 1
	l: Annotated[int, Field(ge=1, le=3)] = 1

	@classmethod
	def create(cls, **kw) -> 'SignalParams':
		"""Construct with range validation."""
		return adapter_cache.validate_python(cls, kw)


class Regime(str, Enum):
	"""Ranges of the interval width U for which the formulas are stated."""

	SHORT = 'short'
	MACROSCOPIC = 'macroscopic'
	HALF_PLUS = 'half_plus'
	SEVEN_EIGHTHS = 'seven_eighths'

	def __str__(self):
		return self.value


REGIME_RANGE_TEXT: dict[Regime, str] = {
	Regime.SHORT: 'U ∈ [3 ln^c T, T/ln T]',
	Regime.MACROSCOPIC: 'U ∈ [T^{1/3+2ε}, T/ln²T]',
	Regime.HALF_PLUS: 'U ∈ [T^{1/2+ε}, T/ln²T]',
	Regime.SEVEN_EIGHTHS: 'U₁ = T^{7/8+ε}',
}

# Relative slack when comparing U against the single admissible U₁
_SEVEN_EIGHTHS_RTOL = 1e-9


def regime_bounds(regime: Regime, T: float, epsilon: float, c: float) -> tuple[float, float]:
	"""Closed range of admissible U for a regime at height T."""
	lnT = math.log(T)
	if regime is Regime.SHORT:
		return 3 * lnT ** c, T / lnT
	if regime is Regime.MACROSCOPIC:
		return T ** (1 / 3 + 2 * epsilon), T / lnT ** 2
	if regime is Regime.HALF_PLUS:
		return T ** (1 / 2 + epsilon), T / lnT ** 2
	u1 = T ** (7 / 8 + epsilon)
	return u1, u1


@dataclass(frozen=True)
class IntervalSpec:
	"""Height/width pair (T, U) together with the regime it is meant to satisfy.

	Attributes
	----------
	T
		Left end of the interval [T, T + U].
	U
		Width of the interval.
	regime
		Which range of U the interval is meant to lie in.
	epsilon
		The ε of the range endpoints.
	c
		Exponent c of the short range 3 ln^c T.
	"""

	T: Annotated[float, Field(gt=math.e)]
	U: Annotated[float, Field(ge=0)]
	regime: Regime = Regime.MACROSCOPIC
	epsilon: Annotated[float, Field(gt=0, lt=0.5)] = 0.01
	c: Annotated[float, Field(gt=0)] = 1.5

	@classmethod
	def for_regime(
		cls,
		T: float,
		regime: Regime | str,
		*,
		epsilon: float = 0.01,
		c: float = 1.5,
		U: float | None = None,
	) -> 'IntervalSpec':
		"""Create a spec, defaulting U to the upper end of the regime's range."""
		regime = Regime(regime)
		if U is None:
			U = regime_bounds(regime, T, epsilon, c)[1]
		return adapter_cache.validate_python(cls, dict(T=T, U=U, regime=regime, epsilon=epsilon, c=c))

	@property
	def end(self) -> float:
		return self.T + self.U

	def bounds(self, regime: Regime | None = None) -> tuple[float, float]:
		return regime_bounds(self.regime if regime is None else regime, self.T, self.epsilon, self.c)

	def in_regime(self, regime: Regime | None = None) -> bool:
		regime = self.regime if regime is None else regime
		lo, hi = self.bounds(regime)
		if regime is Regime.SEVEN_EIGHTHS:
			return abs(self.U - lo) <= _SEVEN_EIGHTHS_RTOL * lo
		return lo <= self.U <= hi

	def require(self, regime: Regime | None = None) -> None:
		"""Raise :class:`RegimeError` unless U lies in the given regime's range (default: own regime)."""
		regime = self.regime if regime is None else regime
		if self.in_regime(regime):
			return
		lo, hi = self.bounds(regime)
		raise RegimeError(
			f'U={self.U:.6g} at T={self.T:.6g} violates {REGIME_RANGE_TEXT[regime]} '
			f'(= [{lo:.6g}, {hi:.6g}] with ε={self.epsilon}, c={self.c})'
		)


@dataclass(frozen=True)
class CriticalPoint:
	"""A point on the critical line with its Hardy Z and Riemann–Siegel theta values."""

	t: float
	z: float
	theta: float

	@property
	def zeta(self) -> complex:
		"""ζ(½ + it) reconstructed as e^{-iθ(t)} Z(t)."""
		return complex(math.cos(self.theta), -math.sin(self.theta)) * self.z


# ------------------------------------------------------------------------------------------------ #
#                                              Reports                                             #
# ------------------------------------------------------------------------------------------------ #

ReportStatus: TypeAlias = Literal['pass', 'fail', 'recorded', 'skipped']


@dataclass(frozen=True)
class ClaimInfo:
	"""A checkable formula of the ladder theory.

	Attributes
	----------
	claim_id
		Short identifier, e.g. ``eq-1.2``.
	display
		The formula this claim refers to.
	description
		One line describing what is checked.
	"""

	claim_id: str
	display: str
	description: str


#: Mapping from claim id to claim description.
CLAIMS: dict[str, ClaimInfo] = dict()

register_claim = make_registration_decorator(CLAIMS, 'claim_id')

for _info in [
	ClaimInfo('eq-1.1', 'Eq (1.1)', 'ladder increment (φ₁(T+U) − φ₁(T))·ln T against ∫Z²'),
	ClaimInfo('eq-1.2', 'Eq (1.2)', 'mean of the iterated |ζ|² product against the product of means'),
	ClaimInfo('eq-1.3', 'Eq (1.3)', 'weighted product energy against {∫F}·ln^{n+1}T'),
	ClaimInfo('eq-1.5', 'Eq (1.5)', 'Ramachandra lower bound, empirical B'),
	ClaimInfo('thm-1', 'Eq (2.2)', 'Theorem 1 energy on the preimage interval'),
	ClaimInfo('thm-2', 'Eq (2.4)', 'Theorem 2 energy of the iterated signal'),
	ClaimInfo('cor', 'Eq (2.5)', 'Corollary energy with exponents 2^m, 2^{m+1}'),
	ClaimInfo('eq-3.1', 'Eq (3.1)', 'transfer lemma ratio theorem1 / (ln T · Ramachandra integral)'),
	ClaimInfo('eq-3.3', 'Eq (3.3)', 'macroscopic increment φ₁^{n+1}(T+U) − φ₁^{n+1}(T) ∼ U'),
	ClaimInfo('eq-4.1', 'Eq (4.1)', 'first-power product energy (both readings reported)'),
	ClaimInfo('eq-4.2', 'Eq (4.2)', 'fourth-power energy against U₁ ln^{n+5}T / (2π²)'),
	ClaimInfo('eq-4.3', 'Eq (4.3)', 'arg moment against (2l)!/(l!4^l) U ln^{n+1}T (ln ln T)^l'),
	ClaimInfo('eq-4.4', 'Eq (4.4)', 'S₁ moment, empirical d_l'),
	ClaimInfo('rem-2', 'Remark 2', 'empirical D, D(l) of the squared signals'),
]:
	register_claim(_info)


@dataclass(frozen=True, kw_only=True)
class VerificationReport:
	"""Outcome of checking one claim at one parameter point.

	``ratio`` is always ``lhs / rhs_scale``; ``status`` is ``'pass'`` exactly when the ratio lies in
	``tolerance_band``. Reporting-only results have status ``'recorded'`` and regime-gated or degenerate
	inputs ``'skipped'`` (with the reason in ``note``).
	"""

	claim_id: str
	signal: SignalParams = field(default_factory=SignalParams)
	interval: IntervalSpec | None = None
	lhs: float | None = None
	rhs_scale: float | None = None
	ratio: float | None = None
	empirical_constant: float | None = None
	status: ReportStatus = 'recorded'
	tolerance_band: tuple[float, float] | None = None
	runtime_s: float | None = None
	eval_counts: int = 0
	note: str | None = None

	@property
	def passed(self) -> bool | None:
		if self.status in ('pass', 'fail'):
			return self.status == 'pass'
		return None

	@classmethod
	def measured(
		cls,
		claim_id: str,
		lhs: float,
		rhs_scale: float,
		*,
		band: tuple[float, float] | None,
		empirical_constant: float | None = None,
		**kw,
	) -> 'VerificationReport':
		"""Create a report from a computed LHS and RHS shape.

		With ``band=None`` the result is only recorded.
		"""
		ratio = lhs / rhs_scale
		if band is None:
			status: ReportStatus = 'recorded'
		else:
			status = 'pass' if band[0] <= ratio <= band[1] else 'fail'
		if empirical_constant is None:
			empirical_constant = ratio
		return cls(
			claim_id=claim_id,
			lhs=lhs,
			rhs_scale=rhs_scale,
			ratio=ratio,
			empirical_constant=empirical_constant,
			status=status,
			tolerance_band=band,
			**kw,
		)

	@classmethod
	def skipped(cls, claim_id: str, reason: str, **kw) -> 'VerificationReport':
		return cls(claim_id=claim_id, status='skipped', note=reason, **kw)

	def with_band(self, band: tuple[float, float]) -> 'VerificationReport':
		"""Copy with a new tolerance band, re-deriving the status from the ratio."""
		assert self.ratio is not None
		status: ReportStatus = 'pass' if band[0] <= self.ratio <= band[1] else 'fail'
		return replace(self, tolerance_band=band, status=status)
