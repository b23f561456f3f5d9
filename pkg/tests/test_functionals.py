from fractions import Fraction
import logging
import math

import numpy as np
import pytest

from jacobs_ladder.errors import DomainError, RegimeError
from jacobs_ladder.functionals import moment_coefficient
from jacobs_ladder.models import Regime, SignalParams


def test_moment_coefficient():
	assert moment_coefficient(1) == Fraction(1, 2)
	assert moment_coefficient(2) == Fraction(3, 4)
	assert moment_coefficient(3) == Fraction(15, 8)

	for l in [0, 21]:
		with pytest.raises(DomainError):
			moment_coefficient(l)


def test_interval(functionals):
	spec = functionals.interval(1000.0)
	assert spec.regime is Regime.MACROSCOPIC
	assert spec.U == pytest.approx(1000 / math.log(1000) ** 2)

	spec = functionals.interval(1000.0, 100.0, 'short')
	assert spec.U == 100
	assert spec.in_regime()


def test_degenerate_interval(functionals):
	spec = functionals.interval(1000.0, 0.0)
	for res in [
		functionals.product_energy(spec, 1),
		functionals.theorem2_lhs(spec, 1, 0),
		functionals.arg_moment(spec, 0, 1),
	]:
		assert res.value == 0
		assert res.evaluations == 0
		assert res.converged


def test_regime_gating(functionals):
	with pytest.raises(RegimeError, match='1/3'):
		functionals.theorem2_lhs(functionals.interval(1000.0, 100.0), 0, 0)

	# The T^{1/2+ε} range is empty at T = 1000
	spec = functionals.interval(1000.0, 20.0)
	with pytest.raises(RegimeError):
		functionals.arg_moment(spec, 0, 1)
	with pytest.raises(RegimeError):
		functionals.s1_moment(spec, 0, 1)

	# Only the single width U₁ is admitted for the fourth power energy
	u1 = 1000.0 ** (7 / 8 + 0.01)
	with pytest.raises(RegimeError):
		functionals.fourth_power_energy(functionals.interval(1000.0, 1.01 * u1, Regime.SEVEN_EIGHTHS), 0)


def test_product_energy_base(functionals, profile):
	"""With n = 0 the product energy is the plain energy of Z."""
	spec = functionals.interval(1000.0, 20.0)
	res = functionals.product_energy(spec, 0)
	assert res.converged
	expected = profile.energy(1020.0) - profile.energy(1000.0)
	assert res.value == pytest.approx(expected, rel=1e-6)


def test_weighted_product_energy(functionals, caplog):
	spec = functionals.interval(1000.0, 20.0)
	plain = functionals.product_energy(spec, 0)

	res = functionals.weighted_product_energy(np.ones_like, spec, 0)
	assert res.value == pytest.approx(plain.value, rel=1e-12)

	# Sign change of F on the iterated interval is logged
	mid = functionals.table.iterate(1010.0, 1)
	with caplog.at_level(logging.WARNING, logger='jacobs_ladder.functionals'):
		functionals.weighted_product_energy(lambda x: x - mid, spec, 0)
	assert any(getattr(r, 'event', None) == 'functional.sign_change' for r in caplog.records)


def test_cauchy_schwarz(functionals):
	spec = functionals.interval(1000.0, 20.0)

	thm2 = functionals.theorem2_lhs(spec, 0, 0)
	cor = functionals.corollary_lhs(spec, 0, 0, 1)
	assert thm2.value > 0
	assert thm2.value ** 2 <= spec.U * cor.value * (1 + 1e-5)

	first = functionals.first_power_product(spec, 0)
	product = functionals.product_energy(spec, 0)
	assert first.value ** 2 <= spec.U * product.value * (1 + 1e-5)


def test_theorem1_transfer(functionals):
	"""The preimage energy is close to ln T times the plain integral of |ζ^(r)|."""
	spec = functionals.interval(1000.0, 100.0, Regime.SHORT)
	for r in [0, 1]:
		lhs = functionals.theorem1_lhs(spec, r)
		base = functionals.ramachandra_lhs(spec, r)
		assert 0.85 <= lhs.value / (math.log(1000.0) * base.value) <= 1.25


def test_ramachandra_ungated(functionals):
	spec = functionals.interval(1000.0, 5.0, Regime.SHORT)
	assert not spec.in_regime()
	assert functionals.ramachandra_lhs(spec, 0).value > 0


def test_power_energy(functionals):
	spec = functionals.interval(1000.0, 20.0)
	signal = SignalParams(n=0, m=0)
	res = functionals.power_energy('product', spec, signal)
	assert res.value == pytest.approx(functionals.product_energy(spec, 0).value, rel=1e-12)

	with pytest.raises(ValueError):
		functionals.power_energy('nope', spec, signal)
	with pytest.raises(RegimeError):
		functionals.power_energy('arg', spec, signal)


def test_corollary_invalid(functionals):
	spec = functionals.interval(1000.0, 20.0)
	with pytest.raises(DomainError):
		functionals.corollary_lhs(spec, 0, 0, 0)


def test_integrand_invalid(functionals):
	with pytest.raises(ValueError):
		functionals.integrand('bogus', SignalParams())
	with pytest.raises(TypeError):
		functionals.integrand('weighted', SignalParams())

