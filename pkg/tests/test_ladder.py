import math
from dataclasses import replace

import numpy as np
import pytest

from jacobs_ladder.config import CACHE_ENV_VAR, EvalConfig, LadderConfig, RunConfig
from jacobs_ladder.errors import DomainError, IterateDomainError, TableFormatError, TableInvariantError
from jacobs_ladder import ladder as lad
from jacobs_ladder.quadrature import integrate
from jacobs_ladder.special_functions import hardy_z

from .conftest import TABLE_END, TABLE_START, TABLE_STEP


def z_squared(t):
	return hardy_z(t) ** 2


def linear_table(slope: float = 0.9) -> lad.LadderTable:
	"""Synthetic table φ₁(t) = slope·t on [100, 200]."""
	t = np.arange(100.0, 201.0, 10.0)
	return lad.LadderTable(t, slope * t, step=10.0)


def test_mu():
	assert lad.mu(math.e ** 2) == pytest.approx(14 * math.e ** 2)
	assert lad.mu(1000.0) == pytest.approx(7000 * math.log(1000))
	assert lad.mu(1000.0, 8.0) == pytest.approx(8000 * math.log(1000))
	assert lad.mu(np.array([10.0, 100.0])).shape == (2,)

	for y in [math.e, 1.0, 0.0, -5.0]:
		with pytest.raises(DomainError):
			lad.mu(y)


def test_kernel_cutoff():
	config = LadderConfig(tail_eps=1e-12, z2_bound=1e3)
	x = 1000.0
	cutoff = lad.kernel_cutoff(x, config)
	# Bound on the dropped tail equals the budget
	assert config.z2_bound * x / 2 * math.exp(-2 * cutoff / x) == pytest.approx(config.tail_eps * x / 2)


# ------------------------------------------------------------------------------------------------ #
#                                          Energy profile                                          #
# ------------------------------------------------------------------------------------------------ #

def test_cumulative_energy(profile):
	assert profile.cumulative_energy(0).value == 0

	for T in [150.0, 150.5, 777.25]:
		expected = integrate(z_squared, 0.0, T, tol=1e-10)
		res = profile.cumulative_energy(T)
		assert res.converged
		assert res.value == pytest.approx(expected.value, rel=1e-9)

	with pytest.raises(DomainError):
		profile.cumulative_energy(-1.0)


def test_energy_vectorized(profile):
	t = np.array([[100.0, 100.25], [333.3, 1000.0]])
	e = profile.energy(t)
	assert e.shape == (2, 2)
	assert e[0, 0] == profile.cumulative_energy(100.0).value
	assert e[1, 1] == pytest.approx(profile.energy(1000.0), rel=1e-14)
	assert np.all(np.diff(profile.energy(np.linspace(0, 500, 1001))) >= 0)


def test_cumulative_energy_partial_cell(profile):
	"""The partial cell is a fresh adaptive integral whose error adds to the prefix error."""
	prefix = profile.cumulative_energy(1000.0)
	res = profile.cumulative_energy(1000.5)
	assert res.converged
	assert res.evaluations > prefix.evaluations
	assert res.abs_error_est > prefix.abs_error_est

	partial = integrate(z_squared, 1000.0, 1000.5, tol=1e-13)
	assert res.value == pytest.approx(prefix.value + partial.value, abs=1e-10)
	assert profile.energy(1000.5) == pytest.approx(res.value, abs=1e-10)

	# Points sharing a cell agree with points evaluated alone
	t = np.array([1000.9, 1000.2, 1000.5, 1001.0, 2.5])
	together = profile.energy(t)
	alone = np.array([profile.energy(x) for x in t])
	assert np.allclose(together, alone, rtol=0, atol=1e-9)


@pytest.mark.parametrize('x', [20.0, 50.0, 500.0])
def test_kernel_energy(profile, x):
	"""Cell and block sums agree with direct quadrature of the weighted integrand."""
	config = profile.config
	upper = min(lad.mu(x, config.mu_coefficient), lad.kernel_cutoff(x, config))
	expected = integrate(lambda t: z_squared(t) * np.exp(-2 * t / x), 0.0, upper, tol=1e-9)
	res = profile.kernel_energy(x)
	assert res.value == pytest.approx(expected.value, rel=1e-8)


def test_kernel_energy_increasing(profile):
	values = [profile.kernel_energy(x).value for x in np.linspace(400.0, 4000.0, 10)]
	assert np.all(np.diff(values) > 0)


def test_profile_save_load(profile, tmp_path):
	profile.ensure(300)
	path = tmp_path / 'profile.npz'
	profile.save(path)

	other = lad.EnergyProfile(profile.eval_config, profile.policy, profile.config)
	assert other.load(path)
	assert other.cells == profile.cells
	assert np.array_equal(other.moments, profile.moments)

	# Different evaluation settings do not match
	different = lad.EnergyProfile(EvalConfig(rs_correction_terms=3), profile.policy, profile.config)
	assert different.fingerprint() != profile.fingerprint()
	assert not different.load(path)
	assert different.cells == 0

	assert not other.load(tmp_path / 'missing.npz')


def test_profile_cached(profile, tmp_path):
	cached = lad.EnergyProfile.cached(profile.eval_config, profile.policy, profile.config, cache_dir=tmp_path)
	assert cached.path is not None
	assert cached.path.startswith(str(tmp_path))
	cached.ensure(50)
	again = lad.EnergyProfile.cached(profile.eval_config, profile.policy, profile.config, cache_dir=tmp_path)
	assert again.cells == 50
	assert np.array_equal(again.moments, cached.moments)


# ------------------------------------------------------------------------------------------------ #
#                                              Solver                                              #
# ------------------------------------------------------------------------------------------------ #

@pytest.mark.parametrize('T', [600.0, 1000.0, 1234.5])
def test_solve_residual(solver, T):
	"""The root satisfies the defining equation."""
	phi = lad.solve_ladder(T, solver)
	assert T / math.log(T) < phi < 2 * T
	kernel = solver.kernel_energy(phi).value
	target = solver.cumulative_energy(T).value
	assert kernel == pytest.approx(target, rel=1e-8)


def test_solve_below_start(solver):
	with pytest.raises(DomainError):
		solver.solve(TABLE_START - 1)


# ------------------------------------------------------------------------------------------------ #
#                                               Table                                              #
# ------------------------------------------------------------------------------------------------ #

def test_table_invariants(table):
	assert table.interpolates_energy
	assert not table.partial
	assert table.t_min == TABLE_START
	assert table.t_max == TABLE_END
	assert len(table) == int((TABLE_END - TABLE_START) / TABLE_STEP) + 1

	assert np.all(np.diff(table.phi1) > 0)
	assert np.all(table.phi1 < table.t_grid)
	assert np.all(np.diff(table.energy) > 0)
	table.validate()


def test_table_knots(table):
	"""At interior knots the interpolant returns the table value."""
	for i in [1, 40, len(table) // 2]:
		assert table.phi1_at(table.t_grid[i]) == pytest.approx(table.phi1[i], rel=1e-13)


@pytest.mark.parametrize('t', [1005.0, 1234.5, 1777.7])
def test_table_between_knots(table, solver, t):
	"""Interpolation in energy follows the oscillating ladder between knots."""
	direct = solver.solve(t) / 2
	assert table.phi1_at(t) == pytest.approx(direct, rel=1e-6)


def test_table_values(table):
	# Trend of the ladder near T = 1000, from mean values of Z²
	assert 900 < table.phi1_at(1000.0) < 960
	assert table.phi1_at(np.array([1000.0, 1500.0])).shape == (2,)


def test_table_domain(table):
	with pytest.raises(DomainError):
		table.phi1_at(TABLE_START - 1)
	with pytest.raises(DomainError):
		table.phi1_at(TABLE_END + 1)
	with pytest.raises(DomainError):
		table.phi1_at(np.array([1000.0, np.nan]))


def test_iterates(table):
	assert table.iterate(1000.0, 0) == 1000.0
	assert table.iterate(1000.0, 1) == table.phi1_at(1000.0)

	levels = table.iterates(np.array([1000.0, 1100.0]), 3)
	assert len(levels) == 4
	for a, b in zip(levels[:-1], levels[1:]):
		assert np.all(b < a)
	assert table.iterate(1000.0, 2) == pytest.approx(table.phi1_at(table.phi1_at(1000.0)), rel=1e-15)

	with pytest.raises(IterateDomainError) as excinfo:
		table.iterate(650.0, 3)
	assert excinfo.value.depth in (1, 2)
	assert excinfo.value.value == pytest.approx(table.iterate(650.0, excinfo.value.depth))
	assert excinfo.value.value < table.t_min

	with pytest.raises(DomainError):
		table.iterates(1000.0, -1)


def test_preimage(table):
	v = 1100.0
	t = table.preimage(v)
	assert table.phi1_at(t) == pytest.approx(v, rel=1e-12)

	a, b = table.preimage_interval(1000.0, 100.0)
	assert a < b
	assert table.phi1_at(a) == pytest.approx(1000.0, rel=1e-12)
	assert table.phi1_at(b) == pytest.approx(1100.0, rel=1e-12)
	assert lad.preimage_interval(table, 1000.0, 0.0) == (a, a)

	assert np.allclose(table.inverse(np.array([1000.0, 1100.0])), [a, b], rtol=1e-12)
	assert table.iterate_preimage(1000.0, 0) == 1000.0

	lo, hi = table.phi1_range
	with pytest.raises(DomainError):
		table.preimage(lo - 1)
	with pytest.raises(DomainError):
		table.preimage_interval(1000.0, -1.0)
	assert table.preimage(hi) == table.t_max


def test_iterate_spec(table):
	assert lad.IterateSpec(2).apply(table, 1000.0) == lad.eval_iterate(table, 1000.0, 2)
	assert lad.eval_phi1(table, 1000.0) == table.phi1_at(1000.0)


def test_linear_table():
	table = linear_table()
	assert not table.interpolates_energy
	assert table.phi1_at(155.0) == pytest.approx(139.5)
	assert table.preimage(135.0) == pytest.approx(150.0)
	assert table.iterate_preimage(np.array([121.5]), 2) == pytest.approx(150.0)

	# The first iterate 0.9·110 = 99 leaves the domain
	with pytest.raises(IterateDomainError) as excinfo:
		table.iterate(110.0, 2)
	assert excinfo.value.depth == 1
	assert excinfo.value.value == pytest.approx(99.0)
	assert 'depth 1' in str(excinfo.value)


def test_table_invariant_errors():
	with pytest.raises(TableInvariantError, match='phi1 not strictly increasing'):
		lad.LadderTable([100.0, 110.0], [90.0, 80.0])
	with pytest.raises(TableInvariantError, match='diagonal'):
		lad.LadderTable([100.0, 110.0], [100.0, 105.0])
	with pytest.raises(TableInvariantError, match='t_grid'):
		lad.LadderTable([110.0, 100.0], [80.0, 90.0])
	with pytest.raises(TableInvariantError):
		lad.LadderTable([100.0, 110.0], [80.0, np.inf])
	with pytest.raises(TableInvariantError, match='energy'):
		lad.LadderTable([100.0, 110.0], [80.0, 90.0], [5.0, 4.0])


# ------------------------------------------------------------------------------------------------ #
#                                           Construction                                           #
# ------------------------------------------------------------------------------------------------ #

def test_table_grid():
	grid = lad.table_grid(100.0, 200.0, 10.0)
	assert grid[0] == 100.0
	assert grid[-1] == 200.0
	assert grid.size == 11
	assert lad.table_grid(100.0, 205.0, 10.0)[-1] == 200.0


def test_build_table_arguments(solver):
	with pytest.raises(DomainError):
		lad.build_table(50.0, 200.0, 10.0, solver)
	with pytest.raises(DomainError):
		lad.build_table(100.0, 200.0, 20.0, solver)
	with pytest.raises(DomainError):
		lad.build_table(300.0, 200.0, 10.0, solver)


def test_build_table_jobs(solver, table):
	"""Solving in worker threads gives the same table."""
	small = lad.build_table(1000.0, 1050.0, 10.0, solver, jobs=2)
	assert np.array_equal(small.t_grid, table.t_grid[40:46])
	assert np.allclose(small.phi1, table.phi1[40:46], rtol=1e-15, atol=0)


def test_kernel_evaluation_count(profile):
	"""The evaluation count of a threaded build matches a sequential one."""
	sequential = lad.LadderSolver(profile)
	lad.build_table(1000.0, 1070.0, 10.0, sequential)
	threaded = lad.LadderSolver(profile)
	lad.build_table(1000.0, 1070.0, 10.0, threaded, jobs=4)
	assert sequential.kernel_evaluations > 0
	assert threaded.kernel_evaluations == sequential.kernel_evaluations


def test_rebuild_halved_solve_tol(profile, eval_config, ladder_config, table, tmp_path):
	"""Tightening the root tolerance moves φ₁ by at most 1e-6 relative."""
	path = tmp_path / 'profile.npz'
	profile.save(path)
	config = replace(ladder_config, solve_tol=ladder_config.solve_tol / 2)
	tighter = lad.EnergyProfile(eval_config, None, config)
	assert tighter.load(path)

	rebuilt = lad.build_table(1000.0, 1100.0, 10.0, lad.LadderSolver(tighter))
	assert rebuilt.solve_tol == table.solve_tol / 2
	i = int(np.searchsorted(table.t_grid, 1000.0))
	assert np.array_equal(rebuilt.t_grid, table.t_grid[i:i + 11])
	assert np.allclose(rebuilt.phi1, table.phi1[i:i + 11], rtol=1e-6, atol=0)


def test_load_or_build_idempotent(table, profile, monkeypatch, tmp_path):
	"""Building the same table twice writes the same file."""
	monkeypatch.setenv(CACHE_ENV_VAR, str(tmp_path / 'cache'))
	profile.save(tmp_path / 'cache' / f'profile_{profile.fingerprint()[:16]}.npz')

	path = tmp_path / 'ladder.csv'
	config = RunConfig().with_overrides({
		'ladder.t_start': 1000.0,
		'ladder.t_end': 1050.0,
		'table_path': str(path),
	})
	table = lad.load_or_build_table(config)
	first = path.read_bytes()
	assert len(table) == 6

	path.unlink()
	lad.load_or_build_table(config)
	assert path.read_bytes() == first

	# A matching cached file is loaded, not rebuilt
	loaded = lad.load_or_build_table(config)
	assert np.array_equal(loaded.phi1, table.phi1)
	assert path.read_bytes() == first


# ------------------------------------------------------------------------------------------------ #
#                                            Cache file                                            #
# ------------------------------------------------------------------------------------------------ #

def test_save_load(table, profile, tmp_path):
	path = tmp_path / 'sub' / 'ladder.csv'
	lad.save_table(table, path)
	loaded = lad.load_table(path, profile.energy)

	assert np.array_equal(loaded.t_grid, table.t_grid)
	assert np.array_equal(loaded.phi1, table.phi1)
	assert np.array_equal(loaded.energy, table.energy)
	assert loaded.t_start == table.t_start
	assert loaded.step == table.step
	assert loaded.solve_tol == table.solve_tol
	assert loaded.mu_coefficient == table.mu_coefficient
	assert loaded.partial == table.partial
	assert loaded.provenance == table.provenance
	assert loaded.phi1_at(1234.5) == table.phi1_at(1234.5)

	assert lad.table_matches(loaded, LadderConfig(t_start=TABLE_START, t_end=TABLE_END, step=TABLE_STEP))
	assert not lad.table_matches(loaded, LadderConfig(t_start=TABLE_START, t_end=3000.0, step=TABLE_STEP))
	assert not lad.table_matches(loaded, LadderConfig(t_start=TABLE_START, t_end=TABLE_END, step=5.0))


def test_load_without_energy_fn(table, tmp_path):
	path = tmp_path / 'ladder.csv'
	lad.save_table(table, path)
	loaded = lad.load_table(path)
	assert not loaded.interpolates_energy
	assert loaded.phi1_at(table.t_grid[7]) == pytest.approx(table.phi1[7], rel=1e-13)


def test_format_table():
	table = linear_table()
	text = lad.format_table(table)
	lines = text.splitlines()
	assert lines[0].startswith('#{')
	assert lines[1] == lad.TABLE_COLUMNS_NO_ENERGY
	assert lines[2] == '100.0,90.0'
	assert len(lines) == 2 + len(table)

	parsed = lad.parse_table(text)
	assert np.array_equal(parsed.phi1, table.phi1)
	assert parsed.energy is None


def test_parse_table_errors():
	text = lad.format_table(linear_table())
	header, columns, *rows = text.splitlines()

	with pytest.raises(TableFormatError, match='version'):
		lad.parse_table(text.replace('"format_version":1', '"format_version":2'))
	with pytest.raises(TableFormatError, match='header'):
		lad.parse_table('\n'.join([columns, *rows]))
	with pytest.raises(TableFormatError):
		lad.parse_table('\n'.join(['#{not json', columns, *rows]))
	with pytest.raises(TableFormatError, match='column'):
		lad.parse_table('\n'.join([header, 't,phi', *rows]))
	with pytest.raises(TableFormatError, match='rows'):
		lad.parse_table('\n'.join([header, columns, *rows[:-1]]))
	with pytest.raises(TableFormatError, match='line 4'):
		lad.parse_table('\n'.join([header, columns, rows[0], 'abc,1.0', *rows[2:]]))
	with pytest.raises(TableFormatError, match='line 3'):
		lad.parse_table('\n'.join([header, columns, '100.0,90.0,1.0', *rows[1:]]))


@pytest.mark.slow
def test_ladder_at_1e4(eval_config):
	"""φ₁(10⁴) from a table built around it."""
	config = LadderConfig(t_start=9900.0, t_end=10100.0, step=10.0)
	solver = lad.LadderSolver(lad.EnergyProfile(eval_config, None, config))
	table = lad.build_table(config.t_start, config.t_end, config.step, solver)
	value = table.phi1_at(1e4)
	assert value == pytest.approx(9526, rel=2e-3)
	assert value == pytest.approx(solver.solve(1e4) / 2, rel=1e-9)
