"""Construction, storage and evaluation of the ladder φ₁.

φ(T) is the root x of the integral equation

	∫₀^{μ(x)} Z²(t) e^{−2t/x} dt = ∫₀^T Z²(t) dt,   μ(y) = 7 y ln y,

and φ₁ = φ/2. Both sides are evaluated from an :class:`EnergyProfile`, a table of moments of Z² over the
unit cells [j, j + 1]. With the moments, the weighted integral on the left is a short sum over cells (or
blocks of cells) instead of a new oscillatory quadrature for every trial x.
"""

from typing import Any, Annotated, Callable
from concurrent.futures import ProcessPoolExecutor, ThreadPoolExecutor
from dataclasses import dataclass, field
import hashlib
import logging
import math
import os
import threading

import numpy as np
from pydantic import Field
from scipy.interpolate import PchipInterpolator
from scipy.optimize import brentq
from scipy.special import comb

from .config import EvalConfig, LadderConfig, PanelPolicy, RunConfig, default_cache_dir
from .errors import (
	DomainError, IterateDomainError, KernelMonotonicityError, LadderSolveError, TableFormatError,
	TableInvariantError,
)
from .models import IntegralResult, adapter_cache
from .quadrature import adaptive_panels, initial_width, integrate, integrate_cumulative, tree_sum
from .riemann_siegel import theta_and_z
from .special_functions import bisect_sign_change


logger = logging.getLogger(__name__)

#: Version of the ladder table cache file format.
TABLE_FORMAT_VERSION = 1

#: Version of the energy profile cache file format.
PROFILE_FORMAT_VERSION = 1

# Cells per worker task when building the profile
_PROFILE_CHUNK = 2048

# Kernel weights are expanded around block centers while (block size)/x stays below this
_BLOCK_RATIO = 0.03

# Below this x the kernel integral is computed directly
_KERNEL_DIRECT_BELOW = 30.0


def mu(y, coefficient: float = 7.0):
	"""μ(y) = 7 y ln y (the smallest admissible choice).

	Raises
	------
	DomainError
		If y ≤ e.
	"""
	arr = np.asarray(y, dtype=float)
	if np.any(arr <= math.e):
		raise DomainError(f'mu(y) requires y > e (got {y!r})')
	value = coefficient * arr * np.log(arr)
	return value.item() if value.ndim == 0 else value


def kernel_cutoff(x: float, config: LadderConfig) -> float:
	"""Height beyond which the weighted tail of the kernel integral is below the configured budget.

	Bounding Z² by ``z2_bound`` gives a tail of at most z2_bound·(x/2)·e^{−2t/x}.
	"""
	return x / 2 * (math.log(1 / config.tail_eps) + math.log(config.z2_bound))


def _z_squared(config: EvalConfig) -> Callable[[np.ndarray], np.ndarray]:
	def f(t):
		return theta_and_z(t, config)[1] ** 2
	return f


# ------------------------------------------------------------------------------------------------ #
#                                          Energy profile                                          #
# ------------------------------------------------------------------------------------------------ #

@dataclass(frozen=True)
class _ChunkTask:
	start: int
	stop: int
	eval_config: EvalConfig
	policy: PanelPolicy
	cell_tol: float
	order: int


def _cell_edges(start: int, stop: int, policy: PanelPolicy) -> np.ndarray:
	# Panel counts depend only on the cell, so cell values do not depend on how cells are chunked
	cells = np.arange(start, stop)
	counts = np.array([max(1, math.ceil(1 / initial_width(j + 1.0, policy))) for j in cells])
	owner = np.repeat(cells, counts)
	offset = np.arange(owner.size) - np.repeat(np.cumsum(counts) - counts, counts)
	edges = owner + offset / np.repeat(counts, counts)
	return np.append(edges, float(stop))


def _profile_chunk(task: _ChunkTask) -> tuple[np.ndarray, np.ndarray]:
	"""Moments ∫_j^{j+1} (t − j − ½)^p Z²(t) dt, p = 0..order, and error estimates for a range of cells."""
	ncells = task.stop - task.start
	edges = _cell_edges(task.start, task.stop, task.policy)
	panels = adaptive_panels(
		_z_squared(task.eval_config),
		edges,
		task.cell_tol * ncells,
		task.policy,
		total_width=float(ncells),
		keep_nodes=True,
	)
	cell = np.floor(panels.lo).astype(np.int64) - task.start
	d = panels.nodes - (task.start + cell + 0.5)[:, None]
	wf = panels.weights * panels.fvalues

	moments = np.empty((ncells, task.order + 1))
	power = np.ones_like(d)
	for p in range(task.order + 1):
		moments[:, p] = np.bincount(cell, weights=np.sum(wf * power, axis=1), minlength=ncells)
		power = power * d
	errors = np.bincount(cell, weights=panels.error, minlength=ncells)
	if not panels.converged:
		logger.warning(
			'Energy profile cells did not converge',
			extra=dict(event='profile.nonconvergence', data=dict(start=task.start, stop=task.stop)),
		)
	return moments, errors


def _expansion_weights(x: float, order: int) -> np.ndarray:
	"""Taylor coefficients (−2/x)^p / p! of e^{−2s/x} in s."""
	return np.array([(-2 / x) ** p / math.factorial(p) for p in range(order + 1)])


class EnergyProfile:
	"""Moments of Z² over the unit cells [j, j + 1] of [0, ``cells``).

	Attributes
	----------
	eval_config
		Settings for evaluating Z.
	policy
		Quadrature settings for the cells.
	config
		Ladder settings (cell tolerance, moment order, tail truncation).
	jobs
		Number of worker processes used to extend the profile.
	path
		File the profile is saved to after each extension, if any.
	"""

	def __init__(
		self,
		eval_config: EvalConfig | None = None,
		policy: PanelPolicy | None = None,
		config: LadderConfig | None = None,
		*,
		jobs: int = 1,
		path: str | os.PathLike | None = None,
	):
		self.eval_config = eval_config or EvalConfig()
		self.policy = policy or PanelPolicy()
		self.config = config or LadderConfig()
		self.jobs = jobs
		self.path = path
		order = self.config.moment_order
		self._moments = np.empty((0, order + 1))
		self._errors = np.empty(0)
		self._prefix = np.zeros(1)
		self._err_prefix = np.zeros(1)
		self._blocks: dict[int, np.ndarray] = dict()
		self._lock = threading.RLock()
		self._z2 = _z_squared(self.eval_config)

	@property
	def cells(self) -> int:
		return self._moments.shape[0]

	@property
	def order(self) -> int:
		return self.config.moment_order

	@property
	def moments(self) -> np.ndarray:
		"""Array of shape ``(cells, order + 1)``."""
		return self._moments

	def fingerprint(self) -> str:
		"""Hash of all settings the cell moments depend on."""
		data = adapter_cache.dump_json(dict(
			version=PROFILE_FORMAT_VERSION,
			eval=adapter_cache.dump_python(self.eval_config),
			policy=adapter_cache.dump_python(self.policy),
			cell_tol=self.config.cell_tol,
			order=self.config.moment_order,
		), astype=dict[str, Any])
		return hashlib.sha256(data).hexdigest()

	def _set_moments(self, moments: np.ndarray, errors: np.ndarray) -> None:
		self._moments = moments
		self._errors = errors
		self._prefix = np.concatenate([[0.0], np.cumsum(moments[:, 0])])
		self._err_prefix = np.concatenate([[0.0], np.cumsum(errors)])
		self._blocks.clear()

	def ensure(self, t_max: float) -> None:
		"""Extend the profile to cover [0, t_max]."""
		need = int(math.ceil(t_max))
		with self._lock:
			if need <= self.cells:
				return
			tasks = [
				_ChunkTask(j, min(j + _PROFILE_CHUNK, need), self.eval_config, self.policy,
				           self.config.cell_tol, self.order)
				for j in range(self.cells, need, _PROFILE_CHUNK)
			]
			logger.info(
				'Extending energy profile',
				extra=dict(event='profile.extend', data=dict(cells_from=self.cells, cells_to=need, jobs=self.jobs)),
			)
			if self.jobs > 1 and len(tasks) > 1:
				with ProcessPoolExecutor(max_workers=self.jobs) as executor:
					results = list(executor.map(_profile_chunk, tasks))
			else:
				results = [_profile_chunk(task) for task in tasks]

			moments = np.concatenate([self._moments] + [m for m, _ in results])
			errors = np.concatenate([self._errors] + [e for _, e in results])
			self._set_moments(moments, errors)
			if self.path is not None:
				self.save(self.path)

	def save(self, path: str | os.PathLike) -> None:
		path = os.fspath(path)
		dirname = os.path.dirname(path)
		if dirname:
			os.makedirs(dirname, exist_ok=True)
		with open(path, 'wb') as fh:
			np.savez(
				fh,
				version=np.array(PROFILE_FORMAT_VERSION),
				fingerprint=np.array(self.fingerprint()),
				moments=self._moments,
				errors=self._errors,
			)

	def load(self, path: str | os.PathLike) -> bool:
		"""Load moments saved with the same settings. Returns whether anything was loaded."""
		try:
			with np.load(path) as data:
				if int(data['version']) != PROFILE_FORMAT_VERSION or str(data['fingerprint']) != self.fingerprint():
					logger.info('Ignoring energy profile cache with different settings', extra=dict(event='profile.stale'))
					return False
				moments, errors = data['moments'], data['errors']
		except FileNotFoundError:
			return False
		if moments.shape[1] != self.order + 1:
			return False
		with self._lock:
			if moments.shape[0] > self.cells:
				self._set_moments(moments, errors)
		return True

	@classmethod
	def cached(
		cls,
		eval_config: EvalConfig,
		policy: PanelPolicy,
		config: LadderConfig,
		*,
		jobs: int = 1,
		cache_dir: str | os.PathLike | None = None,
	) -> 'EnergyProfile':
		"""Profile backed by a file in the cache directory."""
		profile = cls(eval_config, policy, config, jobs=jobs)
		cache_dir = default_cache_dir() if cache_dir is None else cache_dir
		profile.path = os.path.join(cache_dir, f'profile_{profile.fingerprint()[:16]}.npz')
		profile.load(profile.path)
		return profile

	# -------------------------------------------------------------------------------------------- #

	def _partial_cells(self, t: np.ndarray) -> np.ndarray:
		"""∫_{⌊t⌋}^t Z² for each element of ``t``, by one cumulative panel integral per occupied cell."""
		flat = t.reshape(-1)
		cells = np.floor(flat)
		values = np.zeros(flat.size)
		inside = flat > cells
		for j in np.unique(cells[inside]):
			idx = np.flatnonzero(inside & (cells == j))
			idx = idx[np.argsort(flat[idx], kind='stable')]
			grid = flat[idx]
			results = integrate_cumulative(
				self._z2, float(j), grid, self.config.cell_tol * float(grid[-1] - j), self.policy,
			)
			values[idx] = [r.value for r in results]
		return values.reshape(t.shape)

	def energy(self, t):
		"""E(t) = ∫₀^t Z²(s) ds, vectorized.

		Cell prefix sums plus an adaptive panel integral over the partial cell [⌊t⌋, t]. At integer t
		the value is the prefix sum itself. Points sharing a cell share one panel set, so values agree
		across calls only to within ``cell_tol``.
		"""
		arr = np.asarray(t, dtype=float)
		if np.any(arr < 0) or np.any(np.isnan(arr)):
			raise DomainError('Energy requires t >= 0')
		if arr.size:
			self.ensure(float(np.max(arr)))
		j = np.floor(arr).astype(np.int64)
		partial = self._partial_cells(arr)
		value = self._prefix[j] + partial
		return value.item() if value.ndim == 0 else value

	def cumulative_energy(self, T: float) -> IntegralResult:
		"""∫₀^T Z²(t) dt as an :class:`IntegralResult`.

		The error estimate is the sum of the cell estimates below ⌊T⌋ and the estimate of a fresh
		integral over [⌊T⌋, T].
		"""
		if T < 0:
			raise DomainError(f'T must be non-negative (got {T!r})')
		if T == 0:
			return IntegralResult.zero()
		self.ensure(T)
		j = int(math.floor(T))
		prefix = IntegralResult(float(self._prefix[j]), float(self._err_prefix[j]), 0, True)
		if T == j:
			return prefix
		return prefix + integrate(self._z2, float(j), float(T), self.config.cell_tol * (T - j), self.policy)

	def _block_moments(self, size: int) -> np.ndarray:
		"""Moments about the centers of the blocks [b·size, (b+1)·size) of complete blocks."""
		with self._lock:
			if size in self._blocks:
				return self._blocks[size]
			nblocks = self.cells // size
			m = self._moments[:nblocks * size].reshape(nblocks, size, self.order + 1)
			d = np.arange(size) + 0.5 - size / 2
			out = np.zeros((nblocks, self.order + 1))
			for p in range(self.order + 1):
				for q in range(p + 1):
					out[:, p] += comb(p, q, exact=True) * (m[:, :, q] @ d ** (p - q))
			self._blocks[size] = out
			return out

	def kernel_energy(self, x: float) -> IntegralResult:
		"""∫₀^{μ(x)} Z²(t) e^{−2t/x} dt.

		The upper limit is lowered to :func:`kernel_cutoff` when that is smaller. The bound on the
		dropped tail is added to the error estimate.
		"""
		upper_mu = mu(x, self.config.mu_coefficient)
		cutoff = kernel_cutoff(x, self.config)
		upper = min(upper_mu, cutoff)
		tail = self.config.z2_bound * x / 2 * math.exp(-2 * upper / x) if upper < upper_mu else 0.0

		def weighted(t):
			return self._z2(t) * np.exp(-2 * t / x)

		if x < _KERNEL_DIRECT_BELOW:
			res = integrate(weighted, 0.0, upper, self.config.cell_tol * upper, self.policy)
			return IntegralResult(res.value, res.abs_error_est + tail, res.evaluations, res.converged)

		self.ensure(upper)
		ncells = int(math.floor(upper))
		a = _expansion_weights(x, self.order)

		size = 1
		while 2 * size <= _BLOCK_RATIO * x:
			size *= 2
		nblocks = ncells // size
		parts = []
		if nblocks:
			bm = self._block_moments(size)[:nblocks]
			centers = (np.arange(nblocks) + 0.5) * size
			parts.append(np.exp(-2 * centers / x) * (bm @ a))
		j0 = nblocks * size
		if ncells > j0:
			centers = np.arange(j0, ncells) + 0.5
			parts.append(np.exp(-2 * centers / x) * (self._moments[j0:ncells] @ a))

		value = tree_sum(np.concatenate(parts)) if parts else 0.0
		result = IntegralResult(value, float(self._err_prefix[ncells]) + tail, 0, True)
		if upper > ncells:
			result = result + integrate(weighted, float(ncells), upper, self.config.cell_tol, self.policy)
		return result


# ------------------------------------------------------------------------------------------------ #
#                                              Solver                                              #
# ------------------------------------------------------------------------------------------------ #

# Maximum number of geometric bracket expansions
_MAX_EXPANSIONS = 30

# Relative offset of the monotonicity check around the root
_MONOTONE_OFFSET = 1e-6


@dataclass
class LadderSolver:
	"""Solves the integral equation for φ(T) on an energy profile."""

	profile: EnergyProfile
	kernel_evaluations: int = 0
	_lock: threading.Lock = field(default_factory=threading.Lock, init=False, repr=False, compare=False)

	@property
	def config(self) -> LadderConfig:
		return self.profile.config

	def cumulative_energy(self, T: float) -> IntegralResult:
		return self.profile.cumulative_energy(T)

	def kernel_energy(self, x: float) -> IntegralResult:
		# build_table solves from several threads
		with self._lock:
			self.kernel_evaluations += 1
		return self.profile.kernel_energy(x)

	def solve(self, T: float) -> float:
		"""φ(T), the root of kernel_energy(x) = cumulative_energy(T).

		Raises
		------
		LadderSolveError
			If the root cannot be bracketed.
		KernelMonotonicityError
			If the kernel energy is not increasing around the root.
		"""
		if T < self.config.t_start:
			raise DomainError(f'T={T!r} below t_start={self.config.t_start!r}')
		target = self.cumulative_energy(T).value

		def residual(x):
			return self.kernel_energy(x).value - target

		lo, hi = T / math.log(T), 2 * T
		r_lo = residual(lo)
		for _ in range(_MAX_EXPANSIONS):
			if r_lo < 0:
				break
			if lo / 2 <= math.e:
				raise LadderSolveError(T, (lo, hi), 'lower bracket end reached e')
			lo /= 2
			r_lo = residual(lo)
		else:
			raise LadderSolveError(T, (lo, hi))

		r_hi = residual(hi)
		for _ in range(_MAX_EXPANSIONS):
			if r_hi > 0:
				break
			lo, r_lo = hi, r_hi
			hi *= 2
			r_hi = residual(hi)
		else:
			raise LadderSolveError(T, (lo, hi))

		x = brentq(residual, lo, hi, xtol=1e-300, rtol=self.config.solve_tol)

		below = residual(x * (1 - _MONOTONE_OFFSET))
		above = residual(x * (1 + _MONOTONE_OFFSET))
		if not below < above:
			raise KernelMonotonicityError(T, (lo, hi), 'kernel energy not increasing around the root')

		logger.debug('Solved ladder equation', extra=dict(event='ladder.solve', data=dict(T=T, phi=float(x))))
		return float(x)


def solve_ladder(T: float, solver: LadderSolver) -> float:
	"""φ(T). The ladder value is φ₁(T) = φ(T)/2."""
	return solver.solve(T)


# ------------------------------------------------------------------------------------------------ #
#                                               Table                                              #
# ------------------------------------------------------------------------------------------------ #

@dataclass(frozen=True)
class IterateSpec:
	"""Iteration depth k of φ₁ (k = 0 is the identity)."""

	k: Annotated[int, Field(ge=0)] = 0

	def apply(self, table: 'LadderTable', t):
		return table.iterate(t, self.k)


class LadderTable:
	"""Sampled graph of φ₁ with monotone cubic interpolation.

	φ₁' is proportional to Z² and so oscillates on the scale of the zero spacing, while φ₁ as a function
	of the cumulative energy E(t) = ∫₀^t Z² is smooth (the kernel side of the defining equation is a
	weighted average). When the energies of the knots and a function computing E are available, φ₁ is
	interpolated in E. Otherwise it is interpolated in t, which only resolves its trend between knots.

	Attributes
	----------
	t_grid
		Strictly increasing heights.
	phi1
		φ₁ at the heights, strictly increasing and below the diagonal.
	energy
		E at the heights, strictly increasing (optional).
	energy_fn
		Vectorized function computing E(t), usually :meth:`EnergyProfile.energy`.
	t_start
		Validity threshold of the ladder (start of the construction grid).
	mu_coefficient
		Coefficient of μ(y) = a y ln y the table was built with.
	solve_tol
		Relative tolerance of the root solves.
	step
		Grid step of the construction.
	partial
		Whether some grid points failed to solve.
	provenance
		Construction metadata (settings, counts, failures).
	"""

	def __init__(
		self,
		t_grid,
		phi1,
		energy=None,
		*,
		energy_fn: Callable | None = None,
		t_start: float | None = None,
		mu_coefficient: float = 7.0,
		solve_tol: float = 1e-9,
		step: float | None = None,
		partial: bool = False,
		provenance: dict[str, Any] | None = None,
	):
		self.t_grid = np.array(t_grid, dtype=float)
		self.phi1 = np.array(phi1, dtype=float)
		self.energy = None if energy is None else np.array(energy, dtype=float)
		self.energy_fn = energy_fn
		self.t_start = float(self.t_grid[0]) if t_start is None and self.t_grid.size else t_start
		self.mu_coefficient = mu_coefficient
		self.solve_tol = solve_tol
		self.step = step
		self.partial = partial
		self.provenance = dict(provenance or {})
		self.validate()
		self._interp = None
		if len(self) > 1:
			x = self.energy if self.interpolates_energy else self.t_grid
			self._interp = PchipInterpolator(x, self.phi1, extrapolate=False)

	def __len__(self) -> int:
		return self.t_grid.size

	def validate(self) -> None:
		"""Check the table invariants.

		Raises
		------
		TableInvariantError
			Naming the violated invariant.
		"""
		t, p = self.t_grid, self.phi1
		if t.ndim != 1 or t.shape != p.shape or t.size == 0:
			raise TableInvariantError('t_grid and phi1 must be non-empty and of equal length')
		if not (np.all(np.isfinite(t)) and np.all(np.isfinite(p))):
			raise TableInvariantError('table contains non-finite values')
		if np.any(np.diff(t) <= 0):
			raise TableInvariantError('t_grid not strictly increasing')
		if np.any(np.diff(p) <= 0):
			i = int(np.argmax(np.diff(p) <= 0))
			raise TableInvariantError(f'phi1 not strictly increasing (at t={t[i + 1]!r})')
		above = (t >= self.t_start) & (p >= t)
		if np.any(above):
			raise TableInvariantError(f'phi1 not below the diagonal (at t={t[above][0]!r})')
		if self.energy is not None:
			if self.energy.shape != t.shape or not np.all(np.isfinite(self.energy)):
				raise TableInvariantError('energy column must be finite and match t_grid')
			if np.any(np.diff(self.energy) <= 0):
				raise TableInvariantError('energy not strictly increasing')

	@property
	def interpolates_energy(self) -> bool:
		"""Whether φ₁ is interpolated in the cumulative energy rather than in t."""
		return self.energy is not None and self.energy_fn is not None

	def with_energy_fn(self, energy_fn: Callable) -> 'LadderTable':
		"""Copy of the table interpolating in the energy computed by ``energy_fn``."""
		return LadderTable(
			self.t_grid, self.phi1, self.energy,
			energy_fn=energy_fn,
			t_start=self.t_start,
			mu_coefficient=self.mu_coefficient,
			solve_tol=self.solve_tol,
			step=self.step,
			partial=self.partial,
			provenance=self.provenance,
		)

	@property
	def t_min(self) -> float:
		return float(self.t_grid[0])

	@property
	def t_max(self) -> float:
		return float(self.t_grid[-1])

	@property
	def phi1_range(self) -> tuple[float, float]:
		return float(self.phi1[0]), float(self.phi1[-1])

	def _phi1(self, t: np.ndarray) -> np.ndarray:
		if self._interp is None:
			return np.full(t.shape, self.phi1[0])
		if self.interpolates_energy:
			e = np.clip(np.asarray(self.energy_fn(t), dtype=float), self.energy[0], self.energy[-1])
			return self._interp(e)
		return self._interp(t)

	def phi1_at(self, t):
		"""φ₁(t) by monotone cubic interpolation.

		Raises
		------
		DomainError
			If t is outside the table domain.
		"""
		arr = np.asarray(t, dtype=float)
		if np.any((arr < self.t_min) | (arr > self.t_max)) or np.any(np.isnan(arr)):
			raise DomainError(f't outside table domain [{self.t_min!r}, {self.t_max!r}]')
		value = self._phi1(arr)
		return value.item() if value.ndim == 0 else value

	def iterates(self, t, n: int) -> list[np.ndarray]:
		"""[t, φ₁(t), ..., φ₁ⁿ(t)] as arrays.

		Raises
		------
		DomainError
			If t is outside the table domain.
		IterateDomainError
			If an iterate falls below the table domain before depth n.
		"""
		if n < 0:
			raise DomainError(f'Iteration depth must be non-negative (got {n})')
		current = np.asarray(t, dtype=float)
		levels = [current]
		for depth in range(1, n + 1):
			if depth == 1:
				current = np.asarray(self.phi1_at(current), dtype=float)
			else:
				# current holds the iterate of depth − 1
				if np.any(current < self.t_min):
					raise IterateDomainError(depth - 1, float(np.min(current)), self.t_min)
				current = self._phi1(current)
			levels.append(current)
		return levels

	def iterate(self, t, k: int):
		"""φ₁^k(t), the k-fold composition of φ₁ (k = 0 gives t)."""
		value = self.iterates(t, k)[-1]
		return value.item() if value.ndim == 0 else value

	def inverse(self, v) -> np.ndarray:
		"""φ₁⁻¹ for an array of values in the attained range, by vectorized bisection."""
		v = np.asarray(v, dtype=float)
		lo_v, hi_v = self.phi1_range
		if np.any((v < lo_v) | (v > hi_v)):
			raise DomainError(f'Value outside attained range [{lo_v!r}, {hi_v!r}] of phi1')
		flat = np.atleast_1d(v).ravel()
		t = bisect_sign_change(
			lambda m: self._phi1(m) - flat,
			np.full(flat.shape, self.t_min),
			np.full(flat.shape, self.t_max),
		)
		t = np.where(flat <= lo_v, self.t_min, np.where(flat >= hi_v, self.t_max, t))
		return t.reshape(v.shape)

	def iterate_preimage(self, v, k: int) -> np.ndarray:
		"""Heights t with φ₁^k(t) = v."""
		t = np.asarray(v, dtype=float)
		for _ in range(k):
			t = self.inverse(t)
		return t

	def preimage(self, v: float) -> float:
		"""φ₁⁻¹(v) by bracketed root finding on the interpolant."""
		lo_v, hi_v = self.phi1_range
		if not lo_v <= v <= hi_v:
			raise DomainError(f'Value {v!r} outside attained range [{lo_v!r}, {hi_v!r}] of phi1')
		if v == lo_v:
			return self.t_min
		if v == hi_v:
			return self.t_max
		return float(brentq(lambda s: float(self._phi1(np.asarray(s))) - v, self.t_min, self.t_max, xtol=1e-300, rtol=4e-16))

	def preimage_interval(self, T: float, U: float) -> tuple[float, float]:
		"""Interval [a, b] mapped onto [T, T + U] by φ₁."""
		if U < 0:
			raise DomainError(f'U must be non-negative (got {U!r})')
		a = self.preimage(T)
		if U == 0:
			return a, a
		return a, self.preimage(T + U)


def eval_phi1(table: LadderTable, t):
	return table.phi1_at(t)


def eval_iterate(table: LadderTable, t, k: int):
	return table.iterate(t, k)


def preimage_interval(table: LadderTable, T: float, U: float) -> tuple[float, float]:
	return table.preimage_interval(T, U)


# ------------------------------------------------------------------------------------------------ #
#                                           Construction                                           #
# ------------------------------------------------------------------------------------------------ #

def table_grid(t_start: float, t_end: float, step: float) -> np.ndarray:
	n = int(math.floor((t_end - t_start) / step + 1e-9)) + 1
	return t_start + step * np.arange(n)


def build_table(
	t_start: float,
	t_end: float,
	step: float,
	solver: LadderSolver,
	*,
	jobs: int = 1,
) -> LadderTable:
	"""Solve for φ₁ on the grid t_start, t_start + step, ..., ≤ t_end.

	Grid points whose solve fails are left out and recorded in the provenance; the table is then
	marked partial.

	Raises
	------
	DomainError
		If t_start < 100, step > 10 or the range is empty.
	TableInvariantError
		If the solved values violate monotonicity or lie above the diagonal.
	"""
	if t_start < 100:
		raise DomainError(f't_start must be at least 100 (got {t_start!r})')
	if not 0 < step <= 10:
		raise DomainError(f'step must be in (0, 10] (got {step!r})')
	if t_end < t_start:
		raise DomainError('t_end must not be below t_start')

	grid = table_grid(t_start, t_end, step)
	config = solver.config
	top = 2 * float(grid[-1])
	solver.profile.ensure(min(kernel_cutoff(top, config), float(mu(top, config.mu_coefficient))))

	def solve_one(T: float) -> tuple[float, float | None, str | None]:
		try:
			return T, solver.solve(T) / 2, None
		except LadderSolveError as exc:
			logger.warning(str(exc), extra=dict(event='ladder.solve_failed', data=dict(T=T)))
			return T, None, str(exc)

	logger.info(
		'Building ladder table',
		extra=dict(event='ladder.build', data=dict(t_start=t_start, t_end=t_end, step=step, points=int(grid.size))),
	)
	if jobs > 1:
		with ThreadPoolExecutor(max_workers=jobs) as executor:
			results = list(executor.map(solve_one, (float(T) for T in grid)))
	else:
		results = [solve_one(float(T)) for T in grid]

	t_ok = [T for T, p, _ in results if p is not None]
	phi_ok = [p for _, p, _ in results if p is not None]
	failures = [dict(T=T, error=e) for T, p, e in results if p is None]
	if not t_ok:
		raise LadderSolveError(t_start, (t_start, t_end), 'no grid point could be solved')
	energy = np.atleast_1d(solver.profile.energy(np.array(t_ok)))

	provenance = dict(
		eval=adapter_cache.dump_python(solver.profile.eval_config),
		quadrature=adapter_cache.dump_python(solver.profile.policy),
		cell_tol=config.cell_tol,
		tail_eps=config.tail_eps,
		z2_bound=config.z2_bound,
		moment_order=config.moment_order,
		profile_cells=solver.profile.cells,
		failures=failures,
	)
	table = LadderTable(
		t_ok,
		phi_ok,
		energy,
		energy_fn=solver.profile.energy,
		t_start=t_start,
		mu_coefficient=config.mu_coefficient,
		solve_tol=config.solve_tol,
		step=step,
		partial=bool(failures),
		provenance=provenance,
	)
	logger.info(
		'Ladder table built',
		extra=dict(event='ladder.built', data=dict(rows=len(table), partial=table.partial)),
	)
	return table


# ------------------------------------------------------------------------------------------------ #
#                                            Cache file                                            #
# ------------------------------------------------------------------------------------------------ #

@dataclass(frozen=True, kw_only=True)
class TableHeader:
	"""First line of a ladder table file (after the ``#``)."""

	format_version: int = TABLE_FORMAT_VERSION
	t_start: float
	t_end: float
	step: float | None = None
	solve_tol: float
	mu_coefficient: float
	rows: int
	partial: bool = False
	provenance: dict[str, Any] = field(default_factory=dict)


#: Column line of tables with and without the cumulative energy column.
TABLE_COLUMNS = 't,phi1,energy'
TABLE_COLUMNS_NO_ENERGY = 't,phi1'


def format_table(table: LadderTable) -> str:
	"""Text of the cache file.

	A ``#``-prefixed JSON header line, then the column names, then one ``t,phi1,energy`` row per knot
	(``t,phi1`` for tables without energies). Floats are written with ``repr`` so that values are read
	back exactly.
	"""
	header = TableHeader(
		t_start=float(table.t_start),
		t_end=table.t_max,
		step=table.step,
		solve_tol=table.solve_tol,
		mu_coefficient=table.mu_coefficient,
		rows=len(table),
		partial=table.partial,
		provenance=table.provenance,
	)
	if table.energy is None:
		lines = ['#' + adapter_cache.dump_json(header).decode(), TABLE_COLUMNS_NO_ENERGY]
		lines.extend(f'{float(t)!r},{float(p)!r}' for t, p in zip(table.t_grid, table.phi1))
	else:
		lines = ['#' + adapter_cache.dump_json(header).decode(), TABLE_COLUMNS]
		lines.extend(
			f'{float(t)!r},{float(p)!r},{float(e)!r}' for t, p, e in zip(table.t_grid, table.phi1, table.energy)
		)
	return '\n'.join(lines) + '\n'


def save_table(table: LadderTable, path: str | os.PathLike) -> None:
	path = os.fspath(path)
	dirname = os.path.dirname(path)
	if dirname:
		os.makedirs(dirname, exist_ok=True)
	with open(path, 'w', encoding='utf-8') as fh:
		fh.write(format_table(table))


def parse_table(text: str, energy_fn: Callable | None = None) -> LadderTable:
	"""Parse the cache file format written by :func:`format_table`.

	``energy_fn`` is attached to the table (see :class:`LadderTable`).

	Raises
	------
	TableFormatError
		On an unsupported format version or malformed content.
	TableInvariantError
		If the rows violate the table invariants.
	"""
	lines = text.splitlines()
	if len(lines) < 2 or not lines[0].startswith('#'):
		raise TableFormatError('Missing header line')
	try:
		raw = adapter_cache.validate_json(dict[str, Any], lines[0][1:])
	except ValueError as exc:
		raise TableFormatError(f'Invalid header: {exc}') from exc
	if raw.get('format_version') != TABLE_FORMAT_VERSION:
		raise TableFormatError(
			f'Unsupported table format version {raw.get("format_version")!r} (expected {TABLE_FORMAT_VERSION})'
		)
	try:
		header = adapter_cache.validate_python(TableHeader, raw)
	except ValueError as exc:
		raise TableFormatError(f'Invalid header: {exc}') from exc
	columns = lines[1].strip()
	if columns not in (TABLE_COLUMNS, TABLE_COLUMNS_NO_ENERGY):
		raise TableFormatError(f'Expected column line {TABLE_COLUMNS!r}')
	ncols = columns.count(',') + 1

	rows = []
	for lineno, line in enumerate(lines[2:], 3):
		if not line.strip():
			continue
		values = line.split(',')
		try:
			if len(values) != ncols:
				raise ValueError(line)
			rows.append([float(v) for v in values])
		except ValueError as exc:
			raise TableFormatError(f'Malformed row on line {lineno}: {line!r}') from exc
	if len(rows) != header.rows:
		raise TableFormatError(f'Header announces {header.rows} rows, found {len(rows)}')

	data = np.array(rows, dtype=float).reshape(len(rows), ncols)
	return LadderTable(
		data[:, 0], data[:, 1], data[:, 2] if ncols == 3 else None,
		energy_fn=energy_fn,
		t_start=header.t_start,
		mu_coefficient=header.mu_coefficient,
		solve_tol=header.solve_tol,
		step=header.step,
		partial=header.partial,
		provenance=header.provenance,
	)


def load_table(path: str | os.PathLike, energy_fn: Callable | None = None) -> LadderTable:
	with open(path, encoding='utf-8') as fh:
		return parse_table(fh.read(), energy_fn)


def solver_for(config: RunConfig, *, cache_dir: str | os.PathLike | None = None) -> LadderSolver:
	"""Solver on the cached energy profile for a run configuration."""
	profile = EnergyProfile.cached(config.eval, config.quadrature, config.ladder, jobs=config.jobs, cache_dir=cache_dir)
	return LadderSolver(profile)


def table_matches(table: LadderTable, config: LadderConfig) -> bool:
	"""Whether a loaded table was built with the given construction parameters."""
	return (
		table.t_start == config.t_start
		and table.step == config.step
		and table.solve_tol == config.solve_tol
		and table.mu_coefficient == config.mu_coefficient
		and table.energy is not None
		and table.t_max >= table_grid(config.t_start, config.t_end, config.step)[-1]
	)


def load_or_build_table(config: RunConfig) -> LadderTable:
	"""Load the table from the configured cache file, building and saving it if missing or stale."""
	path = config.resolved_table_path()
	solver = solver_for(config)
	if path.exists():
		table = load_table(path, solver.profile.energy)
		if table_matches(table, config.ladder):
			return table
		logger.info('Cached ladder table does not match configuration, rebuilding', extra=dict(event='ladder.stale'))
	lc = config.ladder
	table = build_table(lc.t_start, lc.t_end, lc.step, solver, jobs=config.jobs)
	save_table(table, path)
	return table
