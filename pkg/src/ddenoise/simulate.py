"""Monte Carlo engine: sample rank-one data plus Gaussian noise, solve, and measure.

Each trial draws from its own Philox stream keyed by ``(seed, trial, attempt)``,
so a batch of trials gives the same numbers in any order and on any number of
threads.  Aggregation folds per-trial results in trial order.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .theory import ProblemConfig

__all__ = [
    "Instance",
    "RankOneFactors",
    "TrialResult",
    "McEstimate",
    "DegenerateInstanceError",
    "AggregationError",
    "trial_rng",
    "sample_instance",
    "solve_denoiser_direct",
    "solve_denoiser_rank_one",
    "empirical_risk",
    "empirical_training_error",
    "run_trial",
    "run_trials",
    "baseline_regression_trial",
    "augmented_svd",
    "pinv",
]

GAMMA_TOL = 1e-10
MAX_ATTEMPTS = 64


class DegenerateInstanceError(ArithmeticError):
    """The rank-one update does not apply (vanishing gamma or singular Gram matrix)."""


class AggregationError(RuntimeError):
    pass


@dataclass(frozen=True)
class Instance:
    u: np.ndarray
    v_trn: np.ndarray
    v_tst: np.ndarray
    a_trn: np.ndarray
    a_tst: np.ndarray

    def x_trn(self, sigma_trn: float) -> np.ndarray:
        return sigma_trn * np.outer(self.u, self.v_trn)

    def x_tst(self, sigma_tst: float) -> np.ndarray:
        return sigma_tst * np.outer(self.u, self.v_tst)


@dataclass(frozen=True)
class RankOneFactors:
    """Per-instance quantities of the rank-one pseudo-inverse update.

    ``h = v^T A_hat^+`` (length ``d``), ``k = A_hat^+ u`` (length ``N + d``),
    ``t_norm_sq = ||v^T (I - A_hat^+ A_hat)||^2``, ``gamma = 1 + sigma v^T A_hat^+ u``,
    ``tau = sigma^2 ||t||^2 ||k||^2 + gamma^2`` and ``rho = ||k^T A_hat^+||^2``.
    """

    h: np.ndarray
    k: np.ndarray
    t_norm_sq: float
    gamma: float
    tau: float
    rho: float

    @property
    def h_norm_sq(self) -> float:
        return float(self.h @ self.h)

    @property
    def k_norm_sq(self) -> float:
        return float(self.k @ self.k)


def trial_rng(seed: int, trial_index: int, attempt: int = 0) -> np.random.Generator:
    """Independent counter-based stream for one trial attempt."""
    if seed < 0 or trial_index < 0 or attempt < 0:
        raise ValueError("seed, trial_index and attempt must be nonnegative")
    ss = np.random.SeedSequence([seed, trial_index, attempt])
    return np.random.Generator(np.random.Philox(ss))


def _unit(rng: np.random.Generator, n: int) -> np.ndarray:
    while True:
        x = rng.standard_normal(n)
        nrm = np.linalg.norm(x)
        if nrm > 0:
            return x / nrm


def sample_instance(config: ProblemConfig, trial_index: int, attempt: int = 0) -> Instance:
    """Directions uniform on their spheres; noise i.i.d. ``N(0, 1/d)``."""
    rng = trial_rng(config.seed, trial_index, attempt)
    d, n, nt = config.d, config.n_trn, config.n_tst
    u = _unit(rng, d)
    v = _unit(rng, n)
    vt = _unit(rng, nt)
    scale = 1.0 / math.sqrt(d)
    a = rng.standard_normal((d, n))
    a *= scale
    at = rng.standard_normal((d, nt))
    at *= scale
    return Instance(u=u, v_trn=v, v_tst=vt, a_trn=a, a_tst=at)


def pinv(m: np.ndarray) -> np.ndarray:
    """Moore-Penrose inverse from a full SVD, cutting at ``max(shape) * eps * s_max``."""
    if not np.all(np.isfinite(m)):
        raise FloatingPointError("pseudo-inverse of a non-finite matrix")
    uu, s, vt = np.linalg.svd(m, full_matrices=False)
    if s.size == 0:
        return np.zeros(m.shape[::-1])
    cut = max(m.shape) * np.finfo(m.dtype).eps * s[0]
    keep = s > cut
    return (vt[keep].T / s[keep]) @ uu[:, keep].T


def solve_denoiser_direct(x_trn: np.ndarray, y_trn: np.ndarray, mu: float) -> np.ndarray:
    """``W = [X 0] [Y mu I]^+``, the ridge solution written as plain least squares."""
    x_trn = np.atleast_2d(np.asarray(x_trn, dtype=float))
    y_trn = np.atleast_2d(np.asarray(y_trn, dtype=float))
    if x_trn.shape != y_trn.shape:
        raise ValueError(f"shape mismatch {x_trn.shape} vs {y_trn.shape}")
    if mu < 0:
        raise ValueError("mu must be nonnegative")
    d = y_trn.shape[0]
    y_hat = np.hstack([y_trn, mu * np.eye(d)])
    x_hat = np.hstack([x_trn, np.zeros((d, d))])
    return x_hat @ pinv(y_hat)


def _factor_solve(instance: Instance, sigma: float, mu: float):
    """Cholesky of ``A A^T + mu^2 I`` and the two solves every quantity needs."""
    a, u, v = instance.a_trn, instance.u, instance.v_trn
    d, n = a.shape
    if mu == 0 and d > n:
        raise ValueError("the rank-one solver needs mu > 0 when d > N_trn")
    gram = sla.blas.dsyrk(1.0, a)  # upper triangle of A A^T
    gram[np.diag_indices(d)] += mu * mu
    try:
        chol = sla.cho_factor(gram, lower=False, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise DegenerateInstanceError("training noise Gram matrix is singular") from exc
    av = a @ v
    z = sla.cho_solve(chol, np.column_stack([u, av]), check_finite=False)
    m_u, m_av = z[:, 0], z[:, 1]
    k_sq = float(u @ m_u)
    t_sq = float(1.0 - av @ m_av)
    gamma = float(1.0 + sigma * (av @ m_u))
    if abs(gamma) < GAMMA_TOL * (1.0 + sigma * math.sqrt(max(k_sq, 0.0))):
        raise DegenerateInstanceError(f"gamma={gamma:.3e} too close to zero")
    tau = sigma * sigma * t_sq * k_sq + gamma * gamma
    return av, m_u, m_av, k_sq, t_sq, gamma, tau


def _w_vector(sigma: float, m_u: np.ndarray, m_av: np.ndarray, t_sq: float, gamma: float,
              tau: float) -> np.ndarray:
    # W = u w^T with w = (sigma gamma / tau) h + (sigma^2 ||t||^2 / tau) (k^T A_hat^+)
    return (sigma * gamma / tau) * m_av + (sigma * sigma * t_sq / tau) * m_u


def solve_denoiser_rank_one(instance: Instance, config: ProblemConfig):
    """Closed-form ``W`` through the rank-one pseudo-inverse update, plus its factors."""
    sigma, mu = config.sigma_trn, config.mu
    av, m_u, m_av, k_sq, t_sq, gamma, tau = _factor_solve(instance, sigma, mu)
    # k = A_hat^+ u = [A^T M^-1 u ; mu M^-1 u]
    k = np.concatenate([instance.a_trn.T @ m_u, mu * m_u])
    factors = RankOneFactors(h=m_av, k=k, t_norm_sq=t_sq, gamma=gamma, tau=tau,
                             rho=float(m_u @ m_u))
    w = _w_vector(sigma, m_u, m_av, t_sq, gamma, tau)
    return np.outer(instance.u, w), factors


def empirical_risk(w: np.ndarray, x_tst: np.ndarray, a_tst: np.ndarray) -> float:
    """``||X_tst - W (X_tst + A_tst)||_F^2 / N_tst``."""
    r = x_tst - w @ (x_tst + a_tst)
    return float(np.vdot(r, r)) / x_tst.shape[1]


def empirical_training_error(w: np.ndarray, x_trn: np.ndarray, y_trn: np.ndarray, *,
                             per_sample: bool = False) -> float:
    """``||X_trn - W Y_trn||_F^2``, optionally divided by ``N_trn``."""
    r = x_trn - w @ y_trn
    val = float(np.vdot(r, r))
    return val / x_trn.shape[1] if per_sample else val


@dataclass(frozen=True)
class TrialResult:
    risk: float
    train: float
    wnorm: float
    # ||W A_tst||_F^2 and its predicted mean (N_tst/d) ||W||_F^2
    noise_energy: float
    noise_proxy: float
    h_norm_sq: float
    k_norm_sq: float
    t_norm_sq: float
    rho: float
    gamma: float
    tau_over_sigma_sq: float
    attempts: int = 1


def run_trial(config: ProblemConfig, trial_index: int) -> TrialResult:
    """One trial on the factored path; degenerate draws are redrawn on a fresh stream."""
    sigma, sigma_t = config.sigma_trn, config.sigma_tst
    for attempt in range(MAX_ATTEMPTS):
        inst = sample_instance(config, trial_index, attempt)
        try:
            av, m_u, m_av, k_sq, t_sq, gamma, tau = _factor_solve(inst, sigma, config.mu)
        except DegenerateInstanceError:
            continue
        break
    else:
        raise DegenerateInstanceError(f"trial {trial_index}: {MAX_ATTEMPTS} degenerate draws")
    w = _w_vector(sigma, m_u, m_av, t_sq, gamma, tau)
    wu = float(w @ inst.u)
    wa_tst = inst.a_tst.T @ w
    r_tst = sigma_t * (1.0 - wu) * inst.v_tst - wa_tst
    r_trn = sigma * (1.0 - wu) * inst.v_trn - inst.a_trn.T @ w
    wn = float(w @ w)
    return TrialResult(
        risk=float(r_tst @ r_tst) / config.n_tst,
        train=float(r_trn @ r_trn),
        wnorm=wn,
        noise_energy=float(wa_tst @ wa_tst),
        noise_proxy=config.n_tst / config.d * wn,
        h_norm_sq=float(m_av @ m_av),
        k_norm_sq=k_sq,
        t_norm_sq=t_sq,
        rho=float(m_u @ m_u),
        gamma=gamma,
        tau_over_sigma_sq=tau / (sigma * sigma) if sigma > 0 else math.inf,
        attempts=attempt + 1,
    )


@dataclass(frozen=True)
class McEstimate:
    risk_mean: float
    risk_stderr: float
    train_mean: float
    train_stderr: float
    wnorm_mean: float
    wnorm_stderr: float
    n_trials: int
    n_degenerate: int
    # (mean, stderr) for the remaining per-trial columns of TrialResult
    extras: dict[str, tuple[float, float]] = field(default_factory=dict)

    def mean(self, name: str) -> float:
        return self.extras[name][0]

    def stderr(self, name: str) -> float:
        return self.extras[name][1]


_EXTRA_COLUMNS = ("noise_energy", "noise_proxy", "h_norm_sq", "k_norm_sq", "t_norm_sq", "rho",
                  "gamma", "tau_over_sigma_sq")


def _mean_stderr(xs: list[float]) -> tuple[float, float]:
    n = len(xs)
    m = math.fsum(xs) / n
    var = math.fsum((x - m) ** 2 for x in xs) / (n - 1)
    return m, math.sqrt(var / n)


def aggregate(results: list[TrialResult]) -> McEstimate:
    """Fold trial results in the given order with exactly rounded sums."""
    if len(results) < 2:
        raise AggregationError("need at least two completed trials")
    cols = {name: [getattr(r, name) for r in results]
            for name in ("risk", "train", "wnorm") + _EXTRA_COLUMNS}
    rm, rs = _mean_stderr(cols["risk"])
    tm, ts = _mean_stderr(cols["train"])
    wm, ws = _mean_stderr(cols["wnorm"])
    diff = [a - b for a, b in zip(cols["noise_energy"], cols["noise_proxy"])]
    extras = {name: _mean_stderr(cols[name]) for name in _EXTRA_COLUMNS}
    extras["noise_energy_minus_proxy"] = _mean_stderr(diff)
    return McEstimate(risk_mean=rm, risk_stderr=rs, train_mean=tm, train_stderr=ts,
                      wnorm_mean=wm, wnorm_stderr=ws, n_trials=len(results),
                      n_degenerate=sum(r.attempts - 1 for r in results), extras=extras)


def run_trials(config: ProblemConfig, n_trials: int, threads: int = 1,
               first_trial: int = 0) -> McEstimate:
    """Run trials ``first_trial, ..., first_trial + n_trials - 1`` and aggregate them."""
    if n_trials < 2:
        raise ValueError(f"n_trials must be at least 2, got {n_trials}")
    if threads < 1:
        raise ValueError(f"threads must be positive, got {threads}")
    idx = range(first_trial, first_trial + n_trials)
    if threads == 1:
        results = [run_trial(config, i) for i in idx]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda i: run_trial(config, i), idx))
    return aggregate(results)


def baseline_regression_trial(d: int, n_trn: int, seed: int, trial_index: int = 0, *,
                              noiseless: bool = False) -> float:
    """``||beta - beta_opt||^2`` for min-norm least squares on Gaussian inputs."""
    if d == n_trn:
        raise ValueError("d == n_trn is the divergence point")
    rng = trial_rng(seed, trial_index)
    beta = _unit(rng, d)
    x = rng.standard_normal((n_trn, d))
    xi = np.zeros(n_trn) if noiseless else rng.standard_normal(n_trn)
    y = x @ beta + xi
    beta_opt = np.linalg.lstsq(x, y, rcond=None)[0]
    r = beta - beta_opt
    return float(r @ r)


def augmented_svd(a: np.ndarray, mu: float):
    """Singular values of ``[A mu I]`` next to their predicted ``sqrt(s_i(A)^2 + mu^2)``.

    Returns ``(observed, predicted, subspace_gap)``; the gap is the spectral norm
    of the difference of the two left-singular projectors over the leading
    ``min(p, q)`` directions.
    """
    p, q = a.shape
    uu, s, _ = np.linalg.svd(a, full_matrices=True)
    ua, sa, _ = np.linalg.svd(np.hstack([a, mu * np.eye(p)]), full_matrices=False)
    pred = np.sqrt(np.concatenate([s, np.zeros(max(p - q, 0))]) ** 2 + mu * mu)
    r = min(p, q)
    proj_a = uu[:, :r] @ uu[:, :r].T
    proj_hat = ua[:, :r] @ ua[:, :r].T
    gap = float(np.linalg.norm(proj_a - proj_hat, 2))
    return sa, np.sort(pred)[::-1], gap
