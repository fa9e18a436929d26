"""Gaussian approximation tooling for nonstationary time series.

Rate calculus, functional dependence measures, a process zoo, the
truncation/m-dependence/blocking Gaussian construction and inference
applications (kernel bands and covariance change points).
"""
__version__ = "0.1.0"

from .errors import *  # noqa: F401,F403
from .rates import MomentDecay, RatePlan, Regime, chi0, plan  # noqa: F401
