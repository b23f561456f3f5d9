"""Functions on the critical line: θ, Z, ζ(½ + it), |ζ^(r)|, N, S and S₁.

All functions accept a scalar or an array of heights and return a value of the same shape.
"""

import functools
import logging
import math
import threading

import mpmath
import numpy as np
from scipy.optimize import minimize_scalar

from .config import EvalConfig
from .errors import DomainError, DerivativeToleranceError, ZeroCountAmbiguityError
from .models import CriticalPoint, MAX_DERIVATIVE
from .quadrature import integrate, zero_spacing
from .riemann_siegel import T_MAX, TWO_PI, theta_and_z, theta_values, check_domain


logger = logging.getLogger(__name__)

DEFAULT_EVAL = EvalConfig()

# Distance below which a height counts as lying on a zero
ZERO_TOL = 1e-9


def _shaped(t) -> tuple[np.ndarray, tuple[int, ...]]:
	arr = np.asarray(t, dtype=float)
	return np.atleast_1d(arr).ravel(), arr.shape


def _unshape(values: np.ndarray, shape: tuple[int, ...]):
	if shape == ():
		return values[0].item()
	return values.reshape(shape)


# ------------------------------------------------------------------------------------------------ #
#                                          Theta, Z, zeta                                          #
# ------------------------------------------------------------------------------------------------ #

def theta(t, config: EvalConfig | None = None):
	"""Riemann–Siegel theta function θ(t) = Im ln Γ(¼ + it/2) − (t/2) ln π.

	Raises
	------
	DomainError
		If t is negative or above ``T_MAX``.
	"""
	config = config or DEFAULT_EVAL
	arr, shape = _shaped(t)
	return _unshape(theta_values(check_domain(arr), config), shape)


def theta_antiderivative(t):
	"""Antiderivative of the asymptotic series of θ (valid for t ≥ 10).

	Term-by-term integral of (t/2) ln(t/2π) − t/2 − π/8 + 1/(48t) + 7/(5760t³) + ...
	"""
	arr, shape = _shaped(t)
	if np.any(arr < 10):
		raise DomainError('theta_antiderivative is only valid for t >= 10')
	u2 = 1 / (arr * arr)
	tail = u2 * (-7 / 11520 + u2 * (-31 / 322560 + u2 * (-127 / 2580480 + u2 * (-511 / 9732096))))
	value = (
		arr * arr / 4 * np.log(arr / TWO_PI)
		- 3 * arr * arr / 8
		- math.pi * arr / 8
		+ np.log(arr) / 48
		+ tail
	)
	return _unshape(value, shape)


def hardy_z(t, config: EvalConfig | None = None):
	"""Hardy's function Z(t) = e^{iθ(t)} ζ(½ + it)."""
	config = config or DEFAULT_EVAL
	arr, shape = _shaped(t)
	return _unshape(theta_and_z(arr, config)[1], shape)


def zeta_on_line(t, config: EvalConfig | None = None):
	"""ζ(½ + it), reconstructed as e^{−iθ(t)} Z(t)."""
	config = config or DEFAULT_EVAL
	arr, shape = _shaped(t)
	th, z = theta_and_z(arr, config)
	return _unshape(np.exp(-1j * th) * z, shape)


def critical_point(t: float, config: EvalConfig | None = None) -> CriticalPoint:
	config = config or DEFAULT_EVAL
	th, z = theta_and_z(np.array([t], dtype=float), config)
	return CriticalPoint(float(t), float(z[0]), float(th[0]))


@functools.cache
def fd_weights(r: int, order: int) -> np.ndarray:
	"""Weights of the central finite difference for the r-th derivative with the given accuracy order.

	Offsets run from −P to P, with P = ⌊(r+1)/2⌋ − 1 + order/2. Solved exactly at high precision.
	"""
	p = (r + 1) // 2 - 1 + order // 2
	offsets = range(-p, p + 1)
	with mpmath.workdps(50):
		a = mpmath.matrix([[mpmath.mpf(j) ** k for j in offsets] for k in range(2 * p + 1)])
		b = mpmath.matrix([math.factorial(r) if k == r else 0 for k in range(2 * p + 1)])
		w = mpmath.lu_solve(a, b)
		return np.array([float(w[i]) for i in range(2 * p + 1)])


def derivative_step(t):
	"""Finite difference step (2π/ln(t/2π)) / 64."""
	return TWO_PI / np.log(np.asarray(t) / TWO_PI) / 64


def zeta_derivative_abs(t, r: int, config: EvalConfig | None = None):
	"""|ζ^(r)(½ + it)|.

	Uses ζ^(r)(½ + it) = (−i)^r d^r/dt^r ζ(½ + it) with central finite differences at steps h and h/2,
	combined by one Richardson extrapolation step.

	Raises
	------
	DomainError
		For unsupported ``r`` or ``t < 10``.
	DerivativeToleranceError
		If the differences at h and h/2 disagree by more than ``config.fd_rel_check`` (relative to
		the larger of the estimate and the typical size (½ ln(t/2π))^r).
	"""
	config = config or DEFAULT_EVAL
	if not 0 <= r <= MAX_DERIVATIVE:
		raise DomainError(f'Derivative order r={r} not supported (0 <= r <= {MAX_DERIVATIVE})')
	arr, shape = _shaped(t)

	if r == 0:
		return _unshape(np.abs(theta_and_z(arr, config)[1]), shape)

	if np.any(arr < 10):
		raise DomainError('zeta_derivative_abs requires t >= 10 for r >= 1')

	q = config.fd_order
	w = fd_weights(r, q)
	p = (len(w) - 1) // 2
	h = derivative_step(arr)

	# Offsets in units of h/2; even columns form the stencil with step h
	k = np.arange(-2 * p, 2 * p + 1)
	pts = arr[:, None] + k[None, :] * (h[:, None] / 2)
	th, z = theta_and_z(pts.ravel(), config)
	vals = (np.exp(-1j * th) * z).reshape(pts.shape)

	d_h = (vals[:, ::2] @ w) / h ** r
	d_h2 = (vals[:, p:3 * p + 1] @ w) / (h / 2) ** r
	d = (2 ** q * d_h2 - d_h) / (2 ** q - 1)

	scale = np.maximum(np.abs(d_h2), (0.5 * np.log(arr / TWO_PI)) ** r)
	rel = np.abs(d_h - d_h2) / scale
	if np.any(rel > config.fd_rel_check):
		i = int(np.argmax(rel))
		raise DerivativeToleranceError(float(arr[i]), r, float(rel[i]), config.fd_rel_check)

	return _unshape(np.abs(d), shape)


# ------------------------------------------------------------------------------------------------ #
#                                             Zeros of Z                                           #
# ------------------------------------------------------------------------------------------------ #

def bisect_sign_change(f, a, b, iterations: int = 64) -> np.ndarray:
	"""Vectorized bisection for roots of ``f`` in intervals with a sign change.

	``f`` is called on arrays. Values ``< 0`` count as negative, all others as non-negative.
	"""
	a = np.array(a, dtype=float)
	b = np.array(b, dtype=float)
	if a.size == 0:
		return a
	a_neg = np.asarray(f(a)) < 0
	for _ in range(iterations):
		m = 0.5 * (a + b)
		m_neg = np.asarray(f(m)) < 0
		left = m_neg != a_neg
		b = np.where(left, m, b)
		a = np.where(left, a, m)
		a_neg = np.where(left, a_neg, m_neg)
		if np.all(b - a <= 2 * np.spacing(b)):
			break
	return 0.5 * (a + b)


def scan_step(t: float) -> float:
	"""Grid spacing used to scan for sign changes of Z below height t."""
	return min(0.1, zero_spacing(max(t, 20.0)) / 8)


class ZeroIndex:
	"""Sorted ordinates of the zeros of Z on (0, t_max], extended on demand.

	Zeros are found from sign changes of Z on a grid of spacing :func:`scan_step`, refined by bisection.
	Grid points where |Z| has a local minimum without a sign change are examined by bounded
	minimization of ±Z to catch pairs of close zeros inside one grid cell.

	Attributes
	----------
	config
		Evaluation settings used for Z.
	block
		Length of the height range scanned at once.
	"""

	config: EvalConfig
	block: float

	def __init__(self, config: EvalConfig | None = None, block: float = 256.0):
		self.config = config or DEFAULT_EVAL
		self.block = block
		self._zeros = np.empty(0)
		self._prefix = np.zeros(1)
		self._covered = 0.0
		self._prev: tuple[float, float] | None = None
		self._s1_start: float | None = None
		self._lock = threading.RLock()

	@property
	def zeros(self) -> np.ndarray:
		"""Zero ordinates found so far."""
		return self._zeros

	@property
	def covered_to(self) -> float:
		return self._covered

	def _z(self, t: np.ndarray) -> np.ndarray:
		return theta_and_z(t, self.config)[1]

	def extend_to(self, t_max: float) -> None:
		"""Make sure all zeros up to ``t_max`` are known."""
		if t_max > T_MAX:
			raise DomainError(f't={t_max!r} outside supported range [0, {T_MAX:g}]')
		with self._lock:
			added = 0
			while self._covered < t_max:
				end = min(self._covered + self.block, T_MAX)
				added += self._scan(self._covered, end)
				self._covered = end
			if added:
				self._prefix = np.concatenate([[0.0], np.cumsum(self._zeros)])
				logger.debug(
					'Zero index extended',
					extra=dict(event='zeros.extend', data=dict(covered_to=self._covered, count=int(self._zeros.size))),
				)

	def _scan(self, a: float, b: float) -> int:
		step = scan_step(b)
		n = max(1, math.ceil((b - a) / step))
		grid = np.linspace(a, b, n + 1)
		z = self._z(grid)

		skip = 0
		if self._prev is not None:
			grid = np.concatenate([[self._prev[0]], grid])
			z = np.concatenate([[self._prev[1]], z])
			skip = 1

		neg = z < 0
		change = np.nonzero(neg[:-1] != neg[1:])[0]
		change = change[change >= skip]
		roots = [bisect_sign_change(self._z, grid[change], grid[change + 1])]

		az = np.abs(z)
		inner = np.arange(1, z.size - 1)
		dip = (
			(az[1:-1] < az[:-2]) & (az[1:-1] < az[2:])
			& (neg[1:-1] == neg[:-2]) & (neg[1:-1] == neg[2:])
		)
		for i in inner[dip]:
			roots.append(self._refine_pair(grid[i - 1], grid[i + 1], -1.0 if neg[i] else 1.0))

		self._prev = (float(grid[-2]), float(z[-2]))
		new = np.concatenate(roots)
		if new.size:
			self._zeros = np.sort(np.concatenate([self._zeros, new]))
		return int(new.size)

	def _refine_pair(self, lo: float, hi: float, sign: float) -> np.ndarray:
		"""Look for two zeros in [lo, hi], where Z has constant sign ``sign`` at the grid points."""
		res = minimize_scalar(
			lambda x: sign * float(self._z(np.array([x]))[0]),
			bounds=(lo, hi),
			method='bounded',
			options=dict(xatol=1e-12),
		)
		if res.fun < 0:
			xm = float(res.x)
			logger.debug('Close pair of zeros', extra=dict(event='zeros.close_pair', data=dict(lo=lo, hi=hi)))
			return np.concatenate([
				bisect_sign_change(self._z, [lo], [xm]),
				bisect_sign_change(self._z, [xm], [hi]),
			])
		if res.fun < self.config.target_abs_tol:
			raise ZeroCountAmbiguityError(lo, hi, float(res.fun))
		return np.empty(0)

	def count(self, t) -> np.ndarray:
		"""N(t) for an array of heights."""
		t = np.asarray(t, dtype=float)
		if t.size:
			self.extend_to(float(np.max(t)))
		return np.searchsorted(self._zeros, t, side='right')

	def nearest_distance(self, t) -> np.ndarray:
		"""Distance from each height to the nearest known zero."""
		t = np.asarray(t, dtype=float)
		if self._zeros.size == 0:
			return np.full(t.shape, np.inf)
		i = np.searchsorted(self._zeros, t)
		left = self._zeros[np.clip(i - 1, 0, self._zeros.size - 1)]
		right = self._zeros[np.clip(i, 0, self._zeros.size - 1)]
		return np.minimum(np.abs(t - left), np.abs(t - right))

	def gap_sum(self, t) -> np.ndarray:
		"""Σ_{γ ≤ t} (t − γ), the integral of N over (0, t]."""
		t = np.asarray(t, dtype=float)
		n = self.count(t)
		return n * t - self._prefix[n]

	def s1_start(self) -> float:
		"""S₁(10) = ∫₀¹⁰ (−1 − θ(t)/π) dt (no zeros below 10)."""
		with self._lock:
			if self._s1_start is None:
				res = integrate(lambda x: -1 - theta_values(x, self.config) / math.pi, 0.0, 10.0, tol=1e-13)
				self._s1_start = res.value
			return self._s1_start


_ZERO_INDEXES: dict[EvalConfig, ZeroIndex] = dict()
_ZERO_INDEXES_LOCK = threading.Lock()


def zero_index(config: EvalConfig | None = None) -> ZeroIndex:
	"""Shared :class:`ZeroIndex` of the current process for an evaluation config."""
	config = config or DEFAULT_EVAL
	with _ZERO_INDEXES_LOCK:
		if config not in _ZERO_INDEXES:
			_ZERO_INDEXES[config] = ZeroIndex(config)
		return _ZERO_INDEXES[config]


def _check_off_zeros(index: ZeroIndex, arr: np.ndarray) -> None:
	dist = index.nearest_distance(arr)
	if np.any(dist <= ZERO_TOL):
		bad = arr[dist <= ZERO_TOL][0]
		raise DomainError(f't={bad!r} lies on a zero of Z, N(t) and S(t) are ambiguous there')


def zero_count(t, config: EvalConfig | None = None, *, strict: bool = True):
	"""N(t), the number of zeros of Z in (0, t].

	With ``strict`` (the default) heights within ``ZERO_TOL`` of a zero raise :class:`.DomainError`.
	"""
	index = zero_index(config)
	arr, shape = _shaped(check_domain(t))
	counts = index.count(arr)
	if strict:
		_check_off_zeros(index, arr)
	return _unshape(counts, shape)


def s_of_t(t, config: EvalConfig | None = None, *, strict: bool = True):
	"""S(t) = (1/π) arg ζ(½ + it) = N(t) − 1 − θ(t)/π, for t > 0.

	The argument is the continuous variation along the horizontal line from +∞ + it.
	"""
	config = config or DEFAULT_EVAL
	index = zero_index(config)
	arr, shape = _shaped(check_domain(t))
	if np.any(arr <= 0):
		raise DomainError('S(t) is defined for t > 0')
	counts = index.count(arr)
	if strict:
		_check_off_zeros(index, arr)
	return _unshape(counts - 1 - theta_values(arr, config) / math.pi, shape)


def s1_of_t(T, config: EvalConfig | None = None):
	"""S₁(T) = ∫₀^T S(t) dt.

	Integrated exactly between zero ordinates on [10, T]: ∫ (N − 1) is a sum over zeros and ∫ θ uses
	:func:`theta_antiderivative`. The piece over [0, 10] is a quadrature of −1 − θ/π.
	"""
	config = config or DEFAULT_EVAL
	index = zero_index(config)
	arr, shape = _shaped(check_domain(T))
	out = np.empty_like(arr)

	high = arr >= 10
	if np.any(high):
		th = arr[high]
		out[high] = (
			index.s1_start()
			+ index.gap_sum(th)
			- (th - 10)
			- (theta_antiderivative(th) - theta_antiderivative(10.0)) / math.pi
		)
	for i in np.nonzero(~high)[0]:
		out[i] = integrate(lambda x: -1 - theta_values(x, config) / math.pi, 0.0, float(arr[i]), tol=1e-13).value

	return _unshape(out, shape)
