"""Adaptive quadrature for integrands built from values of ζ on the critical line.

Intervals are cut into panels whose width is tied to the local zero spacing 2π/ln(t/2π) of Z. Each
panel is integrated with a nested Fejér rule of the second kind (an open Clenshaw–Curtis type rule
whose odd-numbered nodes form the rule of half the order). The difference between the two gives the
panel's error estimate, and panels exceeding their share of the tolerance are bisected. All panels of
one refinement level are evaluated in a single vectorized call of the integrand.

Integrands take and return float arrays.
"""

from typing import Callable, Sequence
from dataclasses import dataclass
import functools
import math

import numpy as np

from .config import PanelPolicy
from .errors import DomainError, IntegrandError
from .models import IntegralResult


Integrand = Callable[[np.ndarray], np.ndarray]

DEFAULT_POLICY = PanelPolicy()


def zero_spacing(t: float) -> float:
	"""Mean spacing 2π/ln(t/2π) of the zeros of Z near height t (infinite below t = 2πe)."""
	if t <= 2 * math.pi * math.e:
		return math.inf
	return 2 * math.pi / math.log(t / (2 * math.pi))


def initial_width(b: float, policy: PanelPolicy) -> float:
	"""Width of the panels an interval ending at ``b`` is initially cut into."""
	return min(1.0, zero_spacing(b) * policy.points_per_oscillation / policy.rule_order)


@functools.cache
def fejer_rule(n: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
	"""Nested Fejér rule of the second kind on [-1, 1].

	Parameters
	----------
	n
		Number of nodes, one less than a power of two.

	Returns
	-------
	tuple
		Ascending nodes, their weights, and the weights of the embedded rule using ``nodes[1::2]``.
	"""
	big_n = n + 1
	if big_n < 4 or big_n & (big_n - 1):
		raise ValueError('Number of nodes must be one less than a power of two (at least 3)')

	def weights(m: int) -> tuple[np.ndarray, np.ndarray]:
		j = np.arange(1, m)
		th = np.pi * j / m
		k = np.arange(1, m // 2 + 1)
		s = np.sin(np.outer(th, 2 * k - 1)) / (2 * k - 1)
		return np.cos(th), 4 / m * np.sin(th) * s.sum(axis=1)

	x, w = weights(big_n)
	_, wc = weights(big_n // 2)
	return x[::-1].copy(), w[::-1].copy(), wc[::-1].copy()


def tree_sum(values) -> float:
	"""Sum by pairwise reduction with a fixed association order.

	The result depends only on the sequence of values, not on how it was produced.
	"""
	v = np.asarray(values, dtype=float).ravel()
	if v.size == 0:
		return 0.0
	while v.size > 1:
		if v.size % 2:
			v = np.append(v, 0.0)
		v = v[0::2] + v[1::2]
	return float(v[0])


@dataclass
class PanelSet:
	"""Accepted panels of an adaptive integration, sorted by left end.

	Attributes
	----------
	lo, hi
		Panel ends.
	value
		Integral over each panel.
	error
		Error estimate of each panel.
	ok
		Whether the panel met its share of the tolerance.
	evaluations
		Total number of integrand evaluations.
	nodes, fvalues, weights
		Abscissae, integrand values and scaled quadrature weights of each panel (shape
		``(panels, rule_order)``), only kept if requested.
	"""

	lo: np.ndarray
	hi: np.ndarray
	value: np.ndarray
	error: np.ndarray
	ok: np.ndarray
	evaluations: int
	nodes: np.ndarray | None = None
	fvalues: np.ndarray | None = None
	weights: np.ndarray | None = None

	@property
	def converged(self) -> bool:
		return bool(np.all(self.ok))

	def result(self) -> IntegralResult:
		return IntegralResult(tree_sum(self.value), tree_sum(self.error), self.evaluations, self.converged)


def _evaluate(f: Integrand, pts: np.ndarray) -> np.ndarray:
	fx = np.asarray(f(pts.ravel()), dtype=float)
	if fx.shape != (pts.size,):
		raise ValueError(f'Integrand returned shape {fx.shape} for {pts.size} abscissae')
	bad = ~np.isfinite(fx)
	if np.any(bad):
		i = int(np.argmax(bad))
		raise IntegrandError(float(pts.flat[i]), float(fx[i]))
	return fx.reshape(pts.shape)


def adaptive_panels(
	f: Integrand,
	edges: np.ndarray,
	tol: float,
	policy: PanelPolicy = DEFAULT_POLICY,
	*,
	rtol: float = 0.0,
	total_width: float | None = None,
	keep_nodes: bool = False,
) -> PanelSet:
	"""Integrate over consecutive initial panels with adaptive bisection.

	A panel of width w is accepted when its error estimate is at most
	``max(tol, rtol * |current total|) * w / total_width``.

	Parameters
	----------
	f
		Vectorized integrand.
	edges
		Ascending ends of the initial panels (zero-width panels are dropped).
	tol
		Absolute tolerance for the whole range.
	policy
		Rule and depth settings.
	rtol
		Relative tolerance for the whole range.
	total_width
		Width the tolerance refers to (defaults to ``edges[-1] - edges[0]``).
	keep_nodes
		Keep abscissae and integrand values of accepted panels.
	"""
	x, w, wc = fejer_rule(policy.rule_order)

	edges = np.asarray(edges, dtype=float)
	lo = edges[:-1]
	hi = edges[1:]
	keep = hi > lo
	lo, hi = lo[keep], hi[keep]
	depth = np.zeros(lo.shape, dtype=np.int64)
	if total_width is None:
		total_width = float(edges[-1] - edges[0]) if edges.size else 0.0

	parts: list[tuple] = []
	evaluations = 0
	accepted_total = 0.0

	while lo.size:
		mid = 0.5 * (lo + hi)
		half = 0.5 * (hi - lo)
		pts = mid[:, None] + half[:, None] * x
		fx = _evaluate(f, pts)
		evaluations += fx.size

		fine = half * (fx @ w)
		coarse = half * (fx[:, 1::2] @ wc)
		err = np.abs(fine - coarse)

		total = accepted_total + float(np.sum(fine))
		budget = max(tol, rtol * abs(total)) * (hi - lo) / total_width
		ok = err <= budget
		# Stop refining when the depth limit is hit or bisection no longer changes the panel
		stop = ok | (depth >= policy.max_depth) | (mid <= lo) | (mid >= hi)

		if np.any(stop):
			part = [lo[stop], hi[stop], fine[stop], err[stop], ok[stop]]
			if keep_nodes:
				part += [pts[stop], fx[stop], half[stop, None] * w]
			parts.append(tuple(part))
			accepted_total += float(np.sum(fine[stop]))

		split = ~stop
		lo, hi, mid, depth = lo[split], hi[split], mid[split], depth[split]
		lo, hi = np.concatenate([lo, mid]), np.concatenate([mid, hi])
		depth = np.concatenate([depth, depth]) + 1

	if not parts:
		empty = np.empty(0)
		return PanelSet(empty, empty, empty, empty, np.empty(0, dtype=bool), 0)

	cols = [np.concatenate(c) for c in zip(*parts)]
	order = np.argsort(cols[0], kind='stable')
	cols = [c[order] for c in cols]
	panels = PanelSet(*cols[:5], evaluations=evaluations)
	if keep_nodes:
		panels.nodes, panels.fvalues, panels.weights = cols[5:]
	return panels


def initial_edges(
	a: float,
	b: float,
	policy: PanelPolicy,
	breakpoints: Sequence[float] | np.ndarray | None = None,
) -> np.ndarray:
	"""Ends of the initial panels of [a, b], including all breakpoints inside the interval."""
	width = initial_width(b, policy)
	knots = np.array([a, b], dtype=float)
	if breakpoints is not None:
		bp = np.asarray(breakpoints, dtype=float)
		knots = np.concatenate([knots, bp[(bp > a) & (bp < b)]])
	knots = np.unique(knots)

	segments = []
	for lo, hi in zip(knots[:-1], knots[1:]):
		n = max(1, math.ceil((hi - lo) / width))
		segments.append(np.linspace(lo, hi, n + 1)[:-1])
	segments.append(knots[-1:])
	return np.concatenate(segments)


def integrate(
	f: Integrand,
	a: float,
	b: float,
	tol: float = 1e-10,
	policy: PanelPolicy | None = None,
	*,
	rtol: float = 0.0,
	breakpoints: Sequence[float] | np.ndarray | None = None,
) -> IntegralResult:
	"""Integrate ``f`` over [a, b].

	Parameters
	----------
	f
		Vectorized integrand.
	a, b
		Integration limits, ``a <= b``.
	tol
		Absolute error target.
	policy
		Panel sizing and refinement settings.
	rtol
		Relative error target. The effective target is ``max(tol, rtol * |value|)``.
	breakpoints
		Points where ``f`` or its derivatives jump. They become panel ends, and since the rule is open
		the integrand is never evaluated on them.

	Returns
	-------
	IntegralResult
		Value with error estimate. ``converged`` is false if some panel still missed its budget at the
		maximum depth; no exception is raised in that case.
	"""
	if policy is None:
		policy = DEFAULT_POLICY
	if not a <= b:
		raise DomainError(f'Invalid integration interval [{a!r}, {b!r}]')
	if a == b:
		return IntegralResult.zero()
	edges = initial_edges(a, b, policy, breakpoints)
	return adaptive_panels(f, edges, tol, policy, rtol=rtol).result()


def integrate_cumulative(
	f: Integrand,
	a: float,
	grid: Sequence[float] | np.ndarray,
	tol: float = 1e-10,
	policy: PanelPolicy | None = None,
) -> list[IntegralResult]:
	"""Prefix integrals ∫_a^{grid[i]} f.

	Each cell [grid[i-1], grid[i]] (with grid[-1] = a) is integrated on its own, with tolerance
	proportional to its width. Prefix values are accumulated sequentially, so
	``result[i + 1].value == result[i].value + cell`` holds exactly for the cell value.
	"""
	if policy is None:
		policy = DEFAULT_POLICY
	grid = np.asarray(grid, dtype=float)
	if grid.ndim != 1:
		raise ValueError('grid must be one-dimensional')
	if grid.size == 0:
		return []
	if grid[0] < a or np.any(np.diff(grid) < 0):
		raise DomainError('grid must be ascending and start at or after a')

	edges = np.concatenate([[a], grid])
	total = float(edges[-1] - a)
	ncells = grid.size
	cell_values = np.zeros(ncells)
	cell_errors = np.zeros(ncells)
	cell_ok = np.ones(ncells, dtype=bool)
	cell_evals = np.zeros(ncells, dtype=np.int64)

	if total > 0:
		width = initial_width(float(edges[-1]), policy)
		segments = []
		for lo, hi in zip(edges[:-1], edges[1:]):
			if hi > lo:
				n = max(1, math.ceil((hi - lo) / width))
				segments.append(np.linspace(lo, hi, n + 1)[:-1])
		segments.append(edges[-1:])
		panels = adaptive_panels(f, np.concatenate(segments), tol, policy, total_width=total)

		cell = np.searchsorted(edges, panels.lo, side='right') - 1
		bounds = np.searchsorted(cell, np.arange(ncells + 1), side='left')
		nodes_per_panel = policy.rule_order
		for i in range(ncells):
			s = slice(bounds[i], bounds[i + 1])
			if s.start == s.stop:
				continue
			cell_values[i] = tree_sum(panels.value[s])
			cell_errors[i] = tree_sum(panels.error[s])
			cell_ok[i] = bool(np.all(panels.ok[s]))
			cell_evals[i] = (s.stop - s.start) * nodes_per_panel

	results = []
	value = 0.0
	error = 0.0
	evaluations = 0
	converged = True
	for i in range(ncells):
		value = value + cell_values[i]
		error = error + cell_errors[i]
		evaluations += int(cell_evals[i])
		converged = converged and bool(cell_ok[i])
		results.append(IntegralResult(float(value), float(error), evaluations, converged))
	return results
