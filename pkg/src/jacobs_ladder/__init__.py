"""Numerical laboratory for Jacob's ladders and energies of zeta signals on the critical line."""

__author__ = 'Jared Lumpe'
__email__ = 'jared@jaredlumpe.com'


from .config import RunConfig, load_config
from .ladder import LadderTable, build_table, load_table, save_table
from .models import IntegralResult, IntervalSpec, Regime, SignalParams, VerificationReport
from .special_functions import hardy_z, theta, zeta_derivative_abs
