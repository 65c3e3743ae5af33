"""Marchenko-Pastur Stieltjes transform and moments of the augmented Wishart ensemble.

For a ``p x q`` noise matrix ``A`` with i.i.d. ``N(0, 1/p)`` entries and the
augmented matrix ``A_hat = [A  mu*I]``, the eigenvalues of ``A_hat A_hat^T`` are
``sigma_i(A)^2 + mu^2``.  Everything here is a closed form in the aspect ratio
``c = p/q`` and the ridge strength ``mu``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

__all__ = [
    "Regime",
    "SpectralMoments",
    "FactorMoments",
    "regime_for",
    "mp_stieltjes",
    "mp_stieltjes_prime",
    "aug_inv_moment1",
    "aug_inv_moment2",
    "scale_moments",
    "factor_moments",
    "radical",
]

BOUNDARY_TOL = 1e-9


class Regime(enum.Enum):
    UNDER = "under"
    OVER = "over"


def regime_for(c: float) -> Regime:
    """Regime implied by the aspect ratio; ``|c - 1| < 1e-9`` counts as under."""
    _check_positive(c, "c")
    if c < 1.0 or abs(c - 1.0) < BOUNDARY_TOL:
        return Regime.UNDER
    return Regime.OVER


@dataclass(frozen=True)
class SpectralMoments:
    """Expectations over the ``min(p, q)`` non-trivial eigenvalues.

    ``inv1``/``inv2`` are ``E[1/lam]`` and ``E[1/lam^2]`` with ``lam`` an
    eigenvalue of ``A_hat A_hat^T``; ``ratio1``/``ratio2`` are
    ``E[s/(s+mu^2)]`` and ``E[s/(s+mu^2)^2]`` with ``s`` an eigenvalue of ``A A^T``.
    """

    inv1: float
    inv2: float
    ratio1: float
    ratio2: float


@dataclass(frozen=True)
class FactorMoments:
    """Limiting means of the rank-one update factors (per unit of signal)."""

    h_norm_sq: float
    k_norm_sq: float
    t_norm_sq: float
    rho: float
    # E[tau]/sigma^2 without the 1/sigma^2 offset; see ``tau_over_sigma_sq``.
    tk: float

    def tau_over_sigma_sq(self, sigma_trn_sq: float) -> float:
        if sigma_trn_sq == 0:
            return math.inf
        return 1.0 / sigma_trn_sq + self.tk


def _check_finite(x: float, name: str) -> None:
    if not math.isfinite(x):
        raise ValueError(f"{name} must be finite, got {x!r}")


def _check_positive(x: float, name: str) -> None:
    _check_finite(x, name)
    if x <= 0:
        raise ValueError(f"{name} must be positive, got {x!r}")


def _resolve(c: float, regime: Regime | None) -> Regime:
    implied = regime_for(c)
    if regime is None:
        return implied
    if regime is not implied:
        # c == 1 sits on both sides; either branch is accepted there.
        if abs(c - 1.0) < BOUNDARY_TOL:
            return regime
        raise ValueError(f"regime {regime.value} inconsistent with c={c}")
    return regime


def _sqrt_sum_minus(x: float, eps: float) -> float:
    """``sqrt(x^2 + eps) - x`` for ``eps >= 0`` without cancellation."""
    r = math.sqrt(x * x + eps)
    if x > 0:
        return eps / (r + x)
    return r - x


def radical(c: float, mu: float, regime: Regime | None = None) -> float:
    """The shared square root term.

    Under: ``sqrt((1 - c + mu^2 c)^2 + 4 mu^2 c^2)``;
    over: ``sqrt((-1 + c + mu^2 c)^2 + 4 mu^2 c)``.
    """
    _check_finite(c, "c")
    _check_finite(mu, "mu")
    if c < 0:
        raise ValueError(f"c must be nonnegative, got {c!r}")
    m2 = mu * mu
    if c == 0 or _resolve(c, regime) is Regime.UNDER:
        return math.hypot(1.0 - c + m2 * c, 2.0 * mu * c)
    return math.hypot(-1.0 + c + m2 * c, 2.0 * mu * math.sqrt(c))


def mp_stieltjes(z: float, c: float) -> float:
    """Stieltjes transform ``E[1/(lam - z)]`` of the Marchenko-Pastur law, ``z < 0``.

    The root of ``c z m^2 + (z + c - 1) m + 1 = 0`` that is positive on the
    negative axis.  For ``c > 1`` the law carries an atom at zero, which the
    same root accounts for.
    """
    _check_finite(z, "z")
    _check_positive(c, "c")
    if z >= 0:
        raise ValueError(f"z must be negative, got {z!r}")
    b = 1.0 - z - c
    disc = math.sqrt(b * b - 4.0 * c * z)
    if b >= 0:
        return 2.0 / (b + disc)
    return (b - disc) / (2.0 * c * z)


def mp_stieltjes_prime(z: float, c: float) -> float:
    """Derivative ``E[1/(lam - z)^2]`` of :func:`mp_stieltjes`."""
    m = mp_stieltjes(z, c)
    b = 1.0 - z - c
    disc = math.sqrt(b * b - 4.0 * c * z)
    # Implicit differentiation of the quadratic; the denominator is -disc.
    return m * (c * m + 1.0) / disc


def aug_inv_moment1(c: float, mu: float, regime: Regime | None = None) -> float:
    """``E[1/lam]`` over the ``min(p, q)`` largest eigenvalues of ``A_hat A_hat^T``."""
    _check_positive(c, "c")
    _check_positive(mu, "mu")
    m2 = mu * mu
    if _resolve(c, regime) is Regime.UNDER:
        # (T - (1 + mu^2 c - c)) / (2 mu^2 c)
        return _sqrt_sum_minus(1.0 + m2 * c - c, 4.0 * m2 * c * c) / (2.0 * m2 * c)
    # (T_over - (c + mu^2 c - 1)) / (2 mu^2)
    return _sqrt_sum_minus(c + m2 * c - 1.0, 4.0 * m2 * c) / (2.0 * m2)


def aug_inv_moment2(c: float, mu: float, regime: Regime | None = None) -> float:
    """``E[1/lam^2]`` over the ``min(p, q)`` largest eigenvalues of ``A_hat A_hat^T``."""
    _check_positive(c, "c")
    _check_positive(mu, "mu")
    m2 = mu * mu
    # Factored form (T + x)(T - y) / (4 mu^4 c^k T); the expanded two-term
    # version cancels badly once mu is large.
    if _resolve(c, regime) is Regime.UNDER:
        t = radical(c, mu, Regime.UNDER)
        x = c + m2 * c - 1.0
        plus = t + x if x >= 0 else 4.0 * m2 * c / (t - x)
        minus = _sqrt_sum_minus(1.0 + m2 * c - c, 4.0 * m2 * c * c)
        return plus * minus / (4.0 * m2 * m2 * c * t)
    t = radical(c, mu, Regime.OVER)
    x = 1.0 + m2 * c - c
    plus = t + x if x >= 0 else 4.0 * m2 * c * c / (t - x)
    minus = _sqrt_sum_minus(m2 * c + c - 1.0, 4.0 * m2 * c)
    return plus * minus / (4.0 * m2 * m2 * t)


def scale_moments(c: float, mu: float, regime: Regime | None = None) -> SpectralMoments:
    reg = _resolve(c, regime)
    inv1 = aug_inv_moment1(c, mu, reg)
    inv2 = aug_inv_moment2(c, mu, reg)
    m2 = mu * mu
    # s/(s+mu^2) = 1 - mu^2/(s+mu^2) and s/(s+mu^2)^2 = 1/(s+mu^2) - mu^2/(s+mu^2)^2
    ratio1 = 1.0 - m2 * inv1
    ratio2 = inv1 - m2 * inv2
    return SpectralMoments(inv1=inv1, inv2=inv2, ratio1=ratio1, ratio2=ratio2)


def factor_moments(c: float, mu: float, regime: Regime | None = None) -> FactorMoments:
    """Limiting means of ``|h|^2, |k|^2, |t|^2, rho`` and ``|t|^2 |k|^2``.

    ``h`` and ``t`` see the right singular directions of the training noise
    (``q`` of them, uniformly weighted by ``v_trn``); ``k`` and ``rho`` see all
    ``p`` left directions, including the ``p - q`` eigenvalues equal to ``mu^2``
    when ``p > q``.
    """
    reg = _resolve(c, regime)
    sm = scale_moments(c, mu, reg)
    m2 = mu * mu
    if reg is Regime.UNDER:
        # v_trn puts mass p/q = c on the p active directions.
        h = c * sm.ratio2
        t = 1.0 - c * sm.ratio1
        k = sm.inv1
        rho = sm.inv2
    else:
        h = sm.ratio2
        t = 1.0 - sm.ratio1
        w = 1.0 / c
        k = w * sm.inv1 + (1.0 - w) / m2
        rho = w * sm.inv2 + (1.0 - w) / (m2 * m2)
    return FactorMoments(h_norm_sq=h, k_norm_sq=k, t_norm_sq=t, rho=rho, tk=t * k)
