"""Evaluation of θ(t) and Z(t) on float64 arrays.

Z(t) is computed from the Riemann–Siegel formula above a crossover height and from Euler–Maclaurin
summation of ζ(½ + it) below it. The Riemann–Siegel correction terms are expressed through derivatives of

	Ψ(p) = cos(2π(p² − p − 1/16)) / cos(2πp),

whose Taylor series in z = 2p − 1 is computed once at high precision with mpmath.
"""

import functools
import logging
import math

import mpmath
import numpy as np
from numpy.polynomial import polynomial as npoly
from scipy.special import bernoulli, loggamma

from .config import EvalConfig
from .errors import DomainError


logger = logging.getLogger(__name__)

#: Largest supported height.
T_MAX = 1e7

TWO_PI = 2 * math.pi

# Coefficients of 1/t, 1/t^3, ... in the asymptotic expansion of theta
THETA_SERIES = (1 / 48, 7 / 5760, 31 / 80640, 127 / 430080, 511 / 1216512)

# C_j(p) as combinations of coef * Psi^(k)(p), k = derivative order in p
RS_TERMS: tuple[tuple[tuple[float, int], ...], ...] = (
	((1.0, 0),),
	((-1 / (96 * math.pi ** 2), 3),),
	(
		(1 / (64 * math.pi ** 2), 2),
		(1 / (18432 * math.pi ** 4), 6),
	),
	(
		(-1 / (64 * math.pi ** 2), 1),
		(-1 / (3840 * math.pi ** 4), 5),
		(-1 / (5308416 * math.pi ** 6), 9),
	),
	(
		(1 / (128 * math.pi ** 2), 0),
		(19 / (24576 * math.pi ** 4), 4),
		(11 / (5898240 * math.pi ** 6), 8),
		(1 / (2038431744 * math.pi ** 8), 12),
	),
)

#: Number of Taylor coefficients kept for Psi.
PSI_TERMS = 100

# Working precision for the coefficient recursion. Dividing by the series of cos(pi z) cancels
# roughly PSI_TERMS bits on top of the decay of the coefficients.
_PSI_DPS = 150


def check_domain(t) -> np.ndarray:
	"""Convert to a float array, raising :class:`.DomainError` for values outside ``[0, T_MAX]``."""
	t = np.asarray(t, dtype=float)
	ok = (t >= 0) & (t <= T_MAX)
	if not np.all(ok):
		bad = t[~ok].flat[0]
		raise DomainError(f't={bad!r} outside supported range [0, {T_MAX:g}]')
	return t


# ------------------------------------------------------------------------------------------------ #
#                                               Theta                                              #
# ------------------------------------------------------------------------------------------------ #

def theta_asymptotic(t: np.ndarray) -> np.ndarray:
	"""Asymptotic series of θ(t), accurate to double precision for t ≥ 10."""
	u = 1 / t
	u2 = u * u
	series = 0.0
	for c in reversed(THETA_SERIES):
		series = c + u2 * series
	return t / 2 * np.log(t / TWO_PI) - t / 2 - math.pi / 8 + u * series


def theta_loggamma(t: np.ndarray) -> np.ndarray:
	"""θ(t) = Im ln Γ(¼ + it/2) − (t/2) ln π, using the principal branch of ln Γ."""
	return np.imag(loggamma(0.25 + 0.5j * t)) - t / 2 * math.log(math.pi)


def theta_values(t: np.ndarray, config: EvalConfig) -> np.ndarray:
	out = np.empty_like(t)
	high = t >= config.theta_crossover
	out[high] = theta_asymptotic(t[high])
	out[~high] = theta_loggamma(t[~high])
	return out


# ------------------------------------------------------------------------------------------------ #
#                                          Euler–Maclaurin                                         #
# ------------------------------------------------------------------------------------------------ #

@functools.cache
def _em_coefficients(terms: int) -> np.ndarray:
	"""B_{2k} / (2k)! for k = 1..terms."""
	b = bernoulli(2 * terms)
	return np.array([b[2 * k] / math.factorial(2 * k) for k in range(1, terms + 1)])


def euler_maclaurin_zeta(s: np.ndarray, cutoff: int, terms: int) -> np.ndarray:
	"""ζ(s) by Euler–Maclaurin summation with ``cutoff`` Dirichlet terms.

	Accurate where |s| is small compared to 2π·cutoff.
	"""
	s = np.asarray(s, dtype=complex)
	acc = np.zeros_like(s)
	for n in range(1, cutoff):
		acc += np.exp(-s * math.log(n))

	ln_n = math.log(cutoff)
	acc += np.exp((1 - s) * ln_n) / (s - 1) + 0.5 * np.exp(-s * ln_n)

	# s (s+1) ... (s+2k-2) N^{-s-2k+1}
	factor = s * np.exp(-(s + 1) * ln_n)
	for k, coef in enumerate(_em_coefficients(terms), 1):
		acc += coef * factor
		factor = factor * (s + 2 * k - 1) * (s + 2 * k) / cutoff ** 2

	return acc


def em_hardy_z(t: np.ndarray, theta: np.ndarray, config: EvalConfig) -> np.ndarray:
	zeta = euler_maclaurin_zeta(0.5 + 1j * t, config.em_cutoff, config.em_terms)
	return np.real(np.exp(1j * theta) * zeta)


# ------------------------------------------------------------------------------------------------ #
#                                          Riemann–Siegel                                          #
# ------------------------------------------------------------------------------------------------ #

@functools.cache
def psi_series() -> np.ndarray:
	"""Taylor coefficients of Ψ in z = 2p − 1.

	In terms of z, Ψ = −cos(πz²/2 − 5π/8) / cos(πz). Both numerator and denominator are expanded exactly
	and divided by the power series recursion.
	"""
	n = PSI_TERMS
	with mpmath.workdps(_PSI_DPS):
		pi = mpmath.pi
		a = 5 * pi / 8
		ca, sa = mpmath.cos(a), mpmath.sin(a)
		half_pi = pi / 2

		# cos(x - a) = cos(x) cos(a) + sin(x) sin(a), x = (pi/2) z^2
		num = [mpmath.mpf(0)] * n
		for j in range(n):
			if 4 * j < n:
				num[4 * j] += ca * (-1) ** j * half_pi ** (2 * j) / mpmath.factorial(2 * j)
			if 4 * j + 2 < n:
				num[4 * j + 2] += sa * (-1) ** j * half_pi ** (2 * j + 1) / mpmath.factorial(2 * j + 1)

		den = [mpmath.mpf(0)] * n
		for j in range(0, (n + 1) // 2):
			den[2 * j] = -(-1) ** j * pi ** (2 * j) / mpmath.factorial(2 * j)

		coeffs: list = []
		for k in range(n):
			acc = num[k]
			for j in range(2, k + 1, 2):
				acc -= den[j] * coeffs[k - j]
			coeffs.append(acc / den[0])

		return np.array([float(c) for c in coeffs])


@functools.cache
def psi_derivative_series(k: int) -> np.ndarray:
	"""Coefficients (in z) of the k-th derivative of Ψ with respect to p."""
	return npoly.polyder(psi_series(), k) * 2.0 ** k


def rs_coefficients(p: np.ndarray, terms: int) -> list[np.ndarray]:
	"""Values of C_0(p) ... C_{terms-1}(p)."""
	if not 0 <= terms <= len(RS_TERMS):
		raise ValueError(f'Between 0 and {len(RS_TERMS)} correction terms supported')
	z = 2 * p - 1
	derivs: dict[int, np.ndarray] = dict()
	out = []
	for combo in RS_TERMS[:terms]:
		c = np.zeros_like(p)
		for coef, k in combo:
			if k not in derivs:
				derivs[k] = npoly.polyval(z, psi_derivative_series(k))
			c = c + coef * derivs[k]
		out.append(c)
	return out


def rs_main_sum(t: np.ndarray, theta: np.ndarray) -> np.ndarray:
	"""2 Σ_{n ≤ N} n^{-1/2} cos(θ(t) − t ln n) with N = ⌊√(t/2π)⌋.

	Terms are accumulated in order of n for each t, so a value does not depend on what else is in the
	batch.
	"""
	big_n = np.floor(np.sqrt(t / TWO_PI)).astype(np.int64)
	order = np.argsort(big_n, kind='stable')
	n_sorted = big_n[order]
	ts = t[order]
	ths = theta[order]

	acc = np.zeros_like(ts)
	n_max = int(n_sorted[-1]) if n_sorted.size else 0
	for n in range(1, n_max + 1):
		start = np.searchsorted(n_sorted, n, side='left')
		acc[start:] += np.cos(ths[start:] - ts[start:] * math.log(n)) / math.sqrt(n)

	out = np.empty_like(acc)
	out[order] = 2 * acc
	return out


def rs_hardy_z(t: np.ndarray, theta: np.ndarray, terms: int) -> np.ndarray:
	"""Riemann–Siegel formula for Z(t), t ≥ 2π."""
	main = rs_main_sum(t, theta)
	if terms == 0:
		return main

	tau = np.sqrt(t / TWO_PI)
	big_n = np.floor(tau)
	p = tau - big_n
	sign = np.where(big_n % 2 == 1, 1.0, -1.0)  # (-1)^(N-1)

	remainder = np.zeros_like(t)
	for j, c in reversed(list(enumerate(rs_coefficients(p, terms)))):
		remainder = remainder + c * tau ** -j
	return main + sign * remainder / np.sqrt(tau)


def theta_and_z(t, config: EvalConfig) -> tuple[np.ndarray, np.ndarray]:
	"""θ(t) and Z(t) for an array of heights."""
	t = check_domain(t)
	theta = theta_values(t, config)
	z = np.empty_like(t)
	high = t >= max(config.rs_crossover, TWO_PI)
	z[high] = rs_hardy_z(t[high], theta[high], config.rs_correction_terms)
	low = ~high
	if np.any(low):
		z[low] = em_hardy_z(t[low], theta[low], config)
	return theta, z
