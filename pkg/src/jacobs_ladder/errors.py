"""Exception types."""

from dataclasses import dataclass, fields


class LadderLabError(Exception):
	"""Base class for errors raised by this package."""


class DomainError(LadderLabError, ValueError):
	"""Argument outside the supported domain of an operation."""


class ConfigError(LadderLabError, ValueError):
	"""Configuration file could not be read or failed validation."""


class NonConvergenceError(LadderLabError):
	"""A numerical procedure did not reach its requested tolerance and the caller requires it."""


class _FieldsError(LadderLabError):
	"""Dataclass exception that pickles by its fields (needed across worker processes)."""

	def __reduce__(self):
		return (type(self), tuple(getattr(self, f.name) for f in fields(self)))


@dataclass
class ZeroCountAmbiguityError(_FieldsError):
	"""Sign pattern of Z on a grid cell that refinement could not resolve.

	Attributes
	----------
	a
		Left end of the unresolved cell.
	b
		Right end of the unresolved cell.
	min_abs
		Smallest value of ``|Z|`` found inside the cell.
	"""

	a: float
	b: float
	min_abs: float

	def __post_init__(self):
		super().__init__(
			f'Cannot resolve sign pattern of Z on [{self.a!r}, {self.b!r}] '
			f'(min |Z| = {self.min_abs:.3e})'
		)


@dataclass
class DerivativeToleranceError(_FieldsError):
	"""Finite differences at step h and h/2 disagree by more than the configured tolerance."""

	t: float
	r: int
	estimate: float
	tol: float

	def __post_init__(self):
		super().__init__(
			f'Finite differences for zeta^({self.r}) at t={self.t!r} disagree: '
			f'relative difference {self.estimate:.3e} > {self.tol:.3e}'
		)


@dataclass
class IntegrandError(_FieldsError):
	"""Integrand returned NaN or infinity."""

	abscissa: float
	value: float = float('nan')

	def __post_init__(self):
		super().__init__(f'Integrand returned {self.value!r} at t={self.abscissa!r}')


@dataclass
class LadderSolveError(_FieldsError):
	"""Root of the ladder integral equation could not be bracketed."""

	T: float
	bracket: tuple[float, float]
	msg: str = 'bracket expansion failed'

	def __post_init__(self):
		super().__init__(f'Cannot solve ladder equation at T={self.T!r}: {self.msg} (last bracket {self.bracket})')


class KernelMonotonicityError(LadderSolveError):
	"""Kernel energy was found to be non-monotone in x around the solution."""


@dataclass
class IterateDomainError(_FieldsError, DomainError):
	"""An iterate of the ladder left the table domain."""

	depth: int
	value: float
	t_min: float

	def __post_init__(self):
		super().__init__(
			f'Iterate at depth {self.depth} is {self.value!r}, below table domain start {self.t_min!r}'
		)


class TableFormatError(LadderLabError, ValueError):
	"""Ladder cache file has an unsupported format or is malformed."""


class TableInvariantError(LadderLabError, ValueError):
	"""Ladder table violates one of its invariants."""


class RegimeError(DomainError):
	"""Interval width U outside the range a functional requires."""


@dataclass
class ReportParseError(_FieldsError, ValueError):
	"""Malformed JSON in a report bundle or log file."""

	msg: str
	data: object = None
	start_line: int | None = None
	end_line: int | None = None

	def __post_init__(self):
		super().__init__(self.msg)
