"""Closed-form theory and Monte Carlo for ridge-regularized denoising of rank-one data."""

from __future__ import annotations

from .spectral import FactorMoments, Regime, SpectralMoments, factor_moments, scale_moments
from .theory import OutOfScopeError, ProblemConfig, TheoryResult, evaluate, risk
from .simulate import McEstimate, RankOneFactors, run_trials

__all__ = [
    "FactorMoments",
    "McEstimate",
    "OutOfScopeError",
    "ProblemConfig",
    "RankOneFactors",
    "Regime",
    "SpectralMoments",
    "TheoryResult",
    "evaluate",
    "factor_moments",
    "risk",
    "run_trials",
    "scale_moments",
]

__version__ = "0.1.0"
