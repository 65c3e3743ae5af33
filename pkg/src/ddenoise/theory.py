"""Closed-form risk, training error and estimator norm for the rank-one denoiser.

All quantities are leading-order asymptotics in ``d`` at fixed aspect ratio
``c = d / N_trn``.  Functions suffixed ``_at`` take ``c`` as a continuous
argument; the unsuffixed versions read it off a :class:`ProblemConfig`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import mpmath

from .spectral import BOUNDARY_TOL, Regime, radical, regime_for

__all__ = [
    "ProblemConfig",
    "TheoryResult",
    "OutOfScopeError",
    "discriminant_t",
    "tau_at",
    "tau_inverse",
    "risk",
    "risk_at",
    "training_error",
    "training_error_at",
    "training_error_per_sample",
    "training_t1",
    "training_t2",
    "training_t2_displayed",
    "w_norm_theory",
    "w_norm_at",
    "evaluate",
    "DerivativeEstimate",
    "risk_derivative_at",
    "risk_derivative_c",
    "peak_location_estimate",
    "p_mu",
    "p_mu_mp",
    "optimal_sigma_sq",
    "optimal_sigma_sq_displayed",
    "baseline_regression_risk",
    "baseline_beta_moments",
]


class OutOfScopeError(ValueError):
    """The requested closed form has not been derived for these inputs."""


@dataclass(frozen=True)
class ProblemConfig:
    """One experiment: dimensions, signal strengths, ridge strength and seed.

    ``sigma_trn`` and ``sigma_tst`` are the singular values of the clean
    rank-one train/test matrices (not their squares).
    """

    d: int
    n_trn: int
    n_tst: int
    sigma_trn: float
    sigma_tst: float
    mu: float
    seed: int = 0

    def __post_init__(self) -> None:
        for name in ("d", "n_trn", "n_tst"):
            v = getattr(self, name)
            if int(v) != v or v <= 0:
                raise ValueError(f"{name} must be a positive integer, got {v!r}")
        for name in ("sigma_trn", "sigma_tst", "mu"):
            v = getattr(self, name)
            if not math.isfinite(v) or v < 0:
                raise ValueError(f"{name} must be finite and nonnegative, got {v!r}")
        if not 0 <= self.seed < 2**64:
            raise ValueError(f"seed must fit in 64 unsigned bits, got {self.seed!r}")

    @property
    def c(self) -> float:
        return self.d / self.n_trn

    @property
    def regime(self) -> Regime:
        return regime_for(self.c)

    @property
    def sigma_trn_sq(self) -> float:
        return self.sigma_trn**2

    @property
    def sigma_tst_sq(self) -> float:
        return self.sigma_tst**2

    @classmethod
    def standard(cls, d: int, n_trn: int, mu: float, n_tst: int = 1000, seed: int = 0,
                 signal_scale: float = 1.0) -> "ProblemConfig":
        """``sigma_trn^2 = signal_scale * N_trn`` and ``sigma_tst^2 = N_tst``."""
        return cls(d=d, n_trn=n_trn, n_tst=n_tst, sigma_trn=math.sqrt(signal_scale * n_trn),
                   sigma_tst=math.sqrt(n_tst), mu=mu, seed=seed)

    def with_(self, **changes) -> "ProblemConfig":
        return replace(self, **changes)


@dataclass(frozen=True)
class TheoryResult:
    risk: float
    training_error: float | None
    w_norm_sq: float
    tau: float
    discriminant_t: float


def discriminant_t(c: float, mu: float, regime: Regime | None = None) -> float:
    """``T(c, mu)``; the over-parameterized variant replaces ``4 mu^2 c^2`` by ``4 mu^2 c``."""
    return radical(c, mu, regime)




def _regime(c: float, regime: Regime | None) -> Regime:
    if c == 0:
        return Regime.UNDER
    return regime if regime is not None else regime_for(c)


def _gap(c: float, mu: float, regime: Regime | None = None) -> tuple[float, float]:
    """Return ``(T, 1 + c + mu^2 c - T)``.

    On both branches ``(1 + c + mu^2 c)^2 - T^2 = 4c``, so the gap is
    ``4c / (1 + c + mu^2 c + T)`` with no subtraction.
    """
    t = radical(c, mu, _regime(c, regime))
    a = 1.0 + c + mu * mu * c
    return t, 4.0 * c / (a + t)


def _excess(c: float, mu: float, regime: Regime | None = None) -> float:
    """``(1 + c + mu^2 c) / T - 1``; infinite at the ``mu = 0, c = 1`` singularity."""
    t, gap = _gap(c, mu, regime)
    if t == 0:
        return math.inf
    return gap / t


def tau_at(c: float, mu: float, sigma_trn_sq: float, regime: Regime | None = None) -> float:
    _, gap = _gap(c, mu, regime)
    return 1.0 + 0.5 * sigma_trn_sq * gap


def tau_inverse(c: float, mu: float, sigma_trn: float, regime: Regime | None = None) -> float:
    """``1/tau`` with ``tau = 1 + sigma_trn^2 (1 + c + mu^2 c - T) / 2``."""
    if sigma_trn < 0:
        raise ValueError(f"sigma_trn must be nonnegative, got {sigma_trn!r}")
    return 1.0 / tau_at(c, mu, sigma_trn * sigma_trn, regime)


def risk_at(c: float, mu: float, sigma_trn_sq: float, d: float, sigma_tst_sq: float,
            n_tst: float, regime: Regime | None = None) -> float:
    """Asymptotic test risk at a continuous aspect ratio ``c``."""
    if d <= 0 or n_tst <= 0:
        raise ValueError("d and n_tst must be positive")
    if sigma_trn_sq < 0:
        raise ValueError("sigma_trn_sq must be nonnegative")
    tau = tau_at(c, mu, sigma_trn_sq, regime)
    x = _excess(c, mu, regime)
    var = c * sigma_trn_sq * (sigma_trn_sq + 1.0) / (2.0 * d) * x if sigma_trn_sq > 0 else 0.0
    return (sigma_tst_sq / n_tst + var) / (tau * tau)


def risk(config: ProblemConfig, regime: Regime | None = None) -> float:
    return risk_at(config.c, config.mu, config.sigma_trn_sq, config.d, config.sigma_tst_sq,
                   config.n_tst, regime)


def w_norm_at(c: float, mu: float, sigma_trn_sq: float, regime: Regime | None = None) -> float:
    """``E ||W_opt||_F^2``; exactly zero without signal."""
    if sigma_trn_sq == 0:
        return 0.0
    tau = tau_at(c, mu, sigma_trn_sq, regime)
    return c * sigma_trn_sq * (sigma_trn_sq + 1.0) / 2.0 * _excess(c, mu, regime) / (tau * tau)


def w_norm_theory(config: ProblemConfig, regime: Regime | None = None) -> float:
    return w_norm_at(config.c, config.mu, config.sigma_trn_sq, regime)


def _check_train_scope(c: float) -> None:
    if not c < 1.0 - BOUNDARY_TOL:
        raise OutOfScopeError(f"training error closed form needs c < 1, got c={c}")


def training_t1(c: float, mu: float) -> float:
    """The ``T_1`` coefficient; ``1 - c T_1`` is the mean of ``||t||^2`` plus a ``mu^2 h`` term."""
    _check_train_scope(c)
    t, gap = _gap(c, mu, Regime.UNDER)
    m2 = mu * mu
    # (1 + mu^2 c - T)/(2c) = (gap - c)/(2c)
    return 0.5 * m2 * gap / t + 0.5 + (gap - c) / (2.0 * c)


def training_t2_displayed(c: float, mu: float) -> float:
    """``(mu^2 c + c - 1 - T)^2 (mu^2 c + c + 1 - T) / (2T)``, the ``sigma^4`` coefficient as printed.

    It is four times the coefficient that matches simulation; see :func:`training_t2`.
    """
    _check_train_scope(c)
    t, gap = _gap(c, mu, Regime.UNDER)
    m2 = mu * mu
    return (m2 * c + c - 1.0 - t) ** 2 * gap / (2.0 * t)


def training_t2(c: float, mu: float) -> float:
    """``sigma^4`` coefficient of the training error, ``E||t||^4 * E[s/(s+mu^2)^2]`` in closed form.

    ``E||t||^2 = (T - (mu^2 c + c - 1)) / 2`` so its square carries a factor 1/4
    relative to the printed product.
    """
    return 0.25 * training_t2_displayed(c, mu)


def training_error_at(c: float, mu: float, sigma_trn_sq: float, *, displayed: bool = False) -> float:
    """Total training error ``E||X_trn - W_opt Y_trn||_F^2`` for ``c < 1``.

    ``displayed=True`` swaps in the printed ``T_2``; kept only for comparison.
    """
    _check_train_scope(c)
    if sigma_trn_sq == 0:
        return 0.0
    tau = tau_at(c, mu, sigma_trn_sq, Regime.UNDER)
    t2 = training_t2_displayed(c, mu) if displayed else training_t2(c, mu)
    inner = sigma_trn_sq * (1.0 - c * training_t1(c, mu)) + sigma_trn_sq**2 * t2
    return inner / (tau * tau)


def training_error(config: ProblemConfig, *, displayed: bool = False) -> float:
    return training_error_at(config.c, config.mu, config.sigma_trn_sq, displayed=displayed)


def training_error_per_sample(config: ProblemConfig, *, displayed: bool = False) -> float:
    return training_error(config, displayed=displayed) / config.n_trn


def evaluate(config: ProblemConfig) -> TheoryResult:
    c, mu = config.c, config.mu
    try:
        train: float | None = training_error(config)
    except OutOfScopeError:
        train = None
    return TheoryResult(
        risk=risk(config),
        training_error=train,
        w_norm_sq=w_norm_theory(config),
        tau=tau_at(c, mu, config.sigma_trn_sq),
        discriminant_t=discriminant_t(c, mu),
    )


def _central(f, x: float, h: float) -> float:
    return (f(x + h) - f(x - h)) / (2.0 * h)


@dataclass(frozen=True)
class DerivativeEstimate:
    value: float
    step: float
    # Successive Richardson-extrapolated central differences at h, h/2, ...
    table: tuple[float, ...]

    @property
    def rel_change(self) -> float:
        """``|D(h) - D(h/2)| / |D(h/2)|`` between the last two extrapolated levels."""
        a, b = self.table[-2], self.table[-1]
        return abs(a - b) / abs(b) if b != 0 else abs(a - b)


def risk_derivative_at(c: float, mu: float, d: float, sigma_tst_sq: float, n_tst: float,
                       step: float | None = None, *, sigma_trn_sq: float | None = None,
                       levels: int = 4) -> DerivativeEstimate:
    """``dR/dc`` by Richardson-extrapolated central differences on ``(0, 1)``.

    With ``sigma_trn_sq=None`` the signal is tied to the aspect ratio,
    ``sigma_trn^2 = d/c``, and re-evaluated at every stencil point.
    """
    if not 0.0 < c < 1.0:
        raise ValueError(f"c must lie in (0, 1), got {c}")
    if step is None:
        step = 1e-2 * min(c, 1.0 - c)
    if not step > 0:
        raise ValueError(f"step must be positive, got {step}")
    # Keep the widest stencil inside the open interval.
    step = min(step, 0.5 * c, 0.5 * (1.0 - c))
    if step < 1e-300:
        raise ArithmeticError("derivative step underflowed")

    def f(x: float) -> float:
        s = d / x if sigma_trn_sq is None else sigma_trn_sq
        return risk_at(x, mu, s, d, sigma_tst_sq, n_tst, Regime.UNDER)

    # Romberg table over halving steps; error terms are even powers of h.
    rows: list[list[float]] = []
    for i in range(levels):
        row = [_central(f, c, step / 2**i)]
        for j in range(1, i + 1):
            k = 4.0**j
            row.append((k * row[j - 1] - rows[i - 1][j - 1]) / (k - 1.0))
        rows.append(row)
    diag = tuple(r[-1] for r in rows)
    return DerivativeEstimate(value=diag[-1], step=step, table=diag)


def risk_derivative_c(config: ProblemConfig, step: float | None = None, *,
                      bind_sigma: bool = True) -> float:
    """``dR/dc`` at the config's aspect ratio; ``bind_sigma`` ties ``sigma_trn^2 = d/c``."""
    est = risk_derivative_at(config.c, config.mu, config.d, config.sigma_tst_sq, config.n_tst,
                             step, sigma_trn_sq=None if bind_sigma else config.sigma_trn_sq)
    return est.value


def peak_location_estimate(mu: float) -> float:
    if not mu >= 0 or not math.isfinite(mu):
        raise ValueError(f"mu must be finite and nonnegative, got {mu!r}")
    return 1.0 / (mu * mu + 1.0)


_P_ROOT = (4, 48, 204, 352, 192)  # mu^15, mu^13, ..., mu^7
_P_POLY = (4, 56, 292, 680, 640, 128)  # mu^16, mu^14, ..., mu^6


def p_mu_mp(mu: float | str, dps: int = 60) -> mpmath.mpf:
    """``p(mu)`` at ``dps`` decimal digits; the two halves nearly cancel for large ``mu``."""
    with mpmath.workdps(dps):
        m = mpmath.mpf(mu)
        if m < 0:
            raise ValueError(f"mu must be nonnegative, got {mu!r}")
        m2 = m * m
        root = mpmath.mpf(0)
        for coef in _P_ROOT:
            root = root * m2 + coef
        root *= m**7 * mpmath.sqrt(m2 + 4)
        poly = mpmath.mpf(0)
        for coef in _P_POLY:
            poly = poly * m2 + coef
        poly *= m**6
        return +(root - poly)


def p_mu(mu: float, dps: int = 60) -> float:
    return float(p_mu_mp(mu, dps))


def optimal_sigma_sq(c: float, mu: float, d: float, n_tst: float, sigma_tst: float) -> float | None:
    """Stationary point in ``sigma_trn^2`` of the risk, or ``None`` if it is not an interior minimum.

    Writing ``tau = 1 + alpha s`` and the variance term as ``B s (s + 1)`` the
    first-order condition is linear in ``s``:
    ``s* = (2 alpha sigma_tst^2/N_tst - B) / (B (2 - alpha))``.
    """
    if not c < 1.0 - BOUNDARY_TOL:
        raise OutOfScopeError(f"optimal sigma closed form needs c < 1, got c={c}")
    t, gap = _gap(c, mu, Regime.UNDER)
    alpha = 0.5 * gap
    b = c * (gap / t) / (2.0 * d)
    delta = sigma_tst * sigma_tst / n_tst
    num = 2.0 * alpha * delta - b
    den = b * (2.0 - alpha)
    if den <= 0 or num <= 0:
        return None
    s = num / den
    return s if math.isfinite(s) else None


def optimal_sigma_sq_displayed(c: float, mu: float, d: float, n_tst: float, sigma_tst: float) -> float:
    """The printed rational expression; kept for comparison, it is not a stationary point."""
    t = discriminant_t(c, mu, Regime.UNDER)
    m2 = mu * mu
    st2 = sigma_tst * sigma_tst
    num = st2 * d * (2 * c * (m2 + 1) ** 2 - 2 * t * (c * m2 + c + 1) + 2 * (c * m2 - 2 * c + 1)) \
        + n_tst * (m2 * c * c + c * c + 1 - t)
    den = n_tst * (c**3 * (m2 + 1) ** 2 - t * (m2 * c * c + c * c - 1) - 2 * c * c - 1)
    return num / den


def _check_not_one(c: float) -> None:
    if not math.isfinite(c) or c <= 0:
        raise ValueError(f"c must be positive and finite, got {c!r}")


def baseline_regression_risk(c: float) -> float:
    """Excess risk of min-norm least squares with isotropic Gaussian inputs; ``inf`` at ``c = 1``."""
    _check_not_one(c)
    if c == 1.0:
        return math.inf
    if c < 1.0:
        return c / (1.0 - c)
    return (c - 1.0) / c + 1.0 / (c - 1.0)


def baseline_beta_moments(c: float) -> tuple[float, float]:
    """``(E||beta_opt||^2, E<beta, beta_opt>)`` for a unit-norm ``beta``."""
    _check_not_one(c)
    if c == 1.0:
        return math.inf, 1.0
    if c < 1.0:
        return 1.0 + c / (1.0 - c), 1.0
    return 1.0 / c + 1.0 / (c - 1.0), 1.0 / c
