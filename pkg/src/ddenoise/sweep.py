"""Grids over c, sigma^2 and mu; peak detection; the joint regularizer search."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from . import theory
from .simulate import McEstimate, run_trials
from .theory import OutOfScopeError, ProblemConfig

__all__ = [
    "Axis",
    "CurvePoint",
    "Curve",
    "PeakReport",
    "JointResult",
    "default_c_grid",
    "default_mu_grid",
    "default_sigma_grid",
    "data_scaling_sweep",
    "parameter_scaling_sweep",
    "find_peak",
    "local_maxima",
    "refine_peak",
    "sigma_sweep",
    "joint_grid_search",
    "joint_optimum_curve",
    "training_error_curve",
    "third_derivative",
    "with_mc",
]


class Axis(enum.Enum):
    C_DATA_SCALING = "c_data_scaling"
    C_PARAMETER_SCALING = "c_parameter_scaling"
    SIGMA_SQ = "sigma_sq"
    MU = "mu"


@dataclass(frozen=True)
class CurvePoint:
    coordinate: float
    n_trn: int | None
    d: int
    mu: float
    sigma_trn: float
    sigma_tst: float
    theory_risk: float
    theory_train: float | None = None
    theory_wnorm: float | None = None
    mc: McEstimate | None = None
    seed: int | None = None

    @property
    def mc_mean(self) -> float | None:
        return None if self.mc is None else self.mc.risk_mean

    @property
    def mc_stderr(self) -> float | None:
        return None if self.mc is None else self.mc.risk_stderr


@dataclass(frozen=True)
class Curve:
    axis: Axis
    points: tuple[CurvePoint, ...]
    config_snapshot: ProblemConfig
    # Optional named side columns aligned with ``points`` (e.g. a third derivative).
    columns: dict[str, tuple[float | None, ...]] = field(default_factory=dict)
    notes: dict[str, object] = field(default_factory=dict)

    def __post_init__(self) -> None:
        xs = [p.coordinate for p in self.points]
        if any(b <= a for a, b in zip(xs, xs[1:])):
            raise ValueError("curve coordinates must be strictly increasing")
        if any(not math.isfinite(p.theory_risk) for p in self.points):
            raise ValueError("theory values must be finite")

    def __len__(self) -> int:
        return len(self.points)

    @property
    def coordinates(self) -> np.ndarray:
        return np.array([p.coordinate for p in self.points])

    def values(self, kind: str = "theory_risk") -> np.ndarray:
        """Column as floats; missing entries become NaN."""
        out = []
        for p in self.points:
            v = getattr(p, kind)
            out.append(np.nan if v is None else v)
        return np.array(out, dtype=float)

    def agreement_fraction(self, k: float = 3.0) -> float | None:
        """Share of MC points with ``|theory - mean| <= k * stderr``."""
        pts = [p for p in self.points if p.mc is not None]
        if not pts:
            return None
        ok = sum(abs(p.theory_risk - p.mc.risk_mean) <= k * p.mc.risk_stderr for p in pts)
        return ok / len(pts)


@dataclass(frozen=True)
class PeakReport:
    location: float
    value: float
    interior: bool
    estimate: float | None
    grid_resolution: float
    index: int
    # Grid points sharing the maximal value; the smallest coordinate wins.
    n_tied: int = 1
    refined_location: float | None = None
    refined_value: float | None = None


def default_c_grid(points: int = 101, c_min: float = 0.05, c_max: float = 2.0) -> np.ndarray:
    if points < 1:
        raise ValueError("need at least one grid point")
    return np.linspace(c_min, c_max, points)


def _mc(cfg: ProblemConfig, trials: int | None, threads: int) -> McEstimate | None:
    if not trials:
        return None
    return run_trials(cfg, trials, threads=threads)


def _point(coord: float, cfg: ProblemConfig, trials: int | None, threads: int) -> CurvePoint:
    try:
        train = theory.training_error(cfg)
    except OutOfScopeError:
        train = None
    return CurvePoint(
        coordinate=coord, n_trn=cfg.n_trn, d=cfg.d, mu=cfg.mu, sigma_trn=cfg.sigma_trn,
        sigma_tst=cfg.sigma_tst, theory_risk=theory.risk(cfg), theory_train=train,
        theory_wnorm=theory.w_norm_theory(cfg), mc=_mc(cfg, trials, threads),
        seed=cfg.seed if trials else None,
    )


def _check_grid(grid: Sequence[float], name: str) -> np.ndarray:
    g = np.asarray(grid, dtype=float).ravel()
    if g.size == 0:
        raise ValueError(f"{name} is empty")
    if not np.all(np.isfinite(g)) or np.any(g <= 0):
        raise ValueError(f"{name} must be positive and finite")
    return np.sort(g)


def _continuous_point(c: float, d: int, mu: float, n_tst: int, signal_scale: float,
                      n_trn: float) -> CurvePoint:
    s2 = signal_scale * n_trn
    train = theory.training_error_at(c, mu, s2) if c < 1 - 1e-9 else None
    return CurvePoint(
        coordinate=c, n_trn=None, d=d, mu=mu, sigma_trn=math.sqrt(s2), sigma_tst=math.sqrt(n_tst),
        theory_risk=theory.risk_at(c, mu, s2, d, n_tst, n_tst),
        theory_train=train, theory_wnorm=theory.w_norm_at(c, mu, s2),
    )


def data_scaling_sweep(mu: float, d: int, c_grid: Sequence[float], *, n_tst: int = 1000,
                       signal_scale: float = 1.0, mc_trials: int | None = None, seed: int = 0,
                       threads: int = 1, snap: bool = True) -> Curve:
    """Fix ``d``, vary ``N_trn``; ``sigma_trn^2 = signal_scale * N_trn``, ``sigma_tst^2 = N_tst``.

    With ``snap`` each ``c`` becomes ``d / round(d / c)`` so theory and simulation
    share an integer sample count; repeated snapped values are dropped.  Without
    it the theory is evaluated on the raw grid (``N_trn = d / c`` real).
    """
    g = _check_grid(c_grid, "c_grid")
    template = ProblemConfig.standard(d, max(1, round(d / g[0])), mu, n_tst=n_tst, seed=seed,
                                      signal_scale=signal_scale)
    if not snap:
        if mc_trials:
            raise ValueError("Monte Carlo needs snapped grids")
        pts = [_continuous_point(float(c), d, mu, n_tst, signal_scale, d / c)
               for c in g]
        return Curve(Axis.C_DATA_SCALING, tuple(pts), template)
    pts: list[CurvePoint] = []
    seen: set[int] = set()
    for c in g:
        n = max(1, round(d / c))
        if n in seen:
            continue
        seen.add(n)
        cfg = ProblemConfig.standard(d, n, mu, n_tst=n_tst, seed=seed, signal_scale=signal_scale)
        pts.append(_point(cfg.c, cfg, mc_trials, threads))
    pts.sort(key=lambda p: p.coordinate)
    return Curve(Axis.C_DATA_SCALING, tuple(pts), template)


def parameter_scaling_sweep(mu: float, n_trn: int, c_grid: Sequence[float], *, n_tst: int = 1000,
                            signal_scale: float = 1.0, mc_trials: int | None = None,
                            seed: int = 0, threads: int = 1) -> Curve:
    """Fix ``N_trn``, vary ``d = round(c N_trn)``; signal conventions as in the data sweep."""
    g = _check_grid(c_grid, "c_grid")
    template = ProblemConfig.standard(max(1, round(g[0] * n_trn)), n_trn, mu, n_tst=n_tst,
                                      seed=seed, signal_scale=signal_scale)
    pts: list[CurvePoint] = []
    seen: set[int] = set()
    for c in g:
        d = max(1, round(c * n_trn))
        if d in seen:
            continue
        seen.add(d)
        cfg = ProblemConfig.standard(d, n_trn, mu, n_tst=n_tst, seed=seed, signal_scale=signal_scale)
        pts.append(_point(cfg.c, cfg, mc_trials, threads))
    return Curve(Axis.C_PARAMETER_SCALING, tuple(pts), template)


def local_maxima(curve: Curve, kind: str = "theory_risk") -> list[float]:
    """Coordinates of strict interior local maxima of a column."""
    ys = curve.values(kind)
    xs = curve.coordinates
    return [float(xs[i]) for i in range(1, len(ys) - 1) if ys[i - 1] < ys[i] > ys[i + 1]]


def refine_peak(objective: Callable[[float], float], left: float, mid: float, right: float,
                maximize: bool = True) -> tuple[float, float]:
    """Golden-section search inside a bracketing cell; returns ``(x, f(x))``."""
    sign = -1.0 if maximize else 1.0
    res = minimize_scalar(lambda x: sign * objective(x), bracket=(left, mid, right),
                          method="golden", tol=1e-10)
    x = float(res.x)
    return x, float(objective(x))


def find_peak(curve: Curve, kind: str = "theory_risk",
              objective: Callable[[float], float] | None = None) -> PeakReport | None:
    """Grid argmax of a column; ``None`` when the maximum sits on either end of the grid."""
    if len(curve) < 3:
        raise ValueError("peak detection needs at least three points")
    xs = curve.coordinates
    ys = curve.values(kind)
    if np.any(np.isnan(ys)):
        raise ValueError(f"column {kind} has missing values")
    i = int(np.argmax(ys))  # first maximal index, so ties go to the smaller coordinate
    if i == 0 or i == len(ys) - 1:
        return None
    n_tied = int(np.sum(ys == ys[i]))
    interior = bool(ys[i - 1] < ys[i] and ys[i + 1] < ys[i])
    est = None
    if curve.axis in (Axis.C_DATA_SCALING, Axis.C_PARAMETER_SCALING):
        est = theory.peak_location_estimate(curve.config_snapshot.mu)
    rx = rv = None
    if objective is not None and interior:
        rx, rv = refine_peak(objective, float(xs[i - 1]), float(xs[i]), float(xs[i + 1]))
    return PeakReport(location=float(xs[i]), value=float(ys[i]), interior=interior, estimate=est,
                      grid_resolution=float(0.5 * (xs[i + 1] - xs[i - 1])), index=i,
                      n_tied=n_tied, refined_location=rx, refined_value=rv)


def sigma_sweep(c: float, mu: float, d: int, sigma_sq_grid: Sequence[float], *,
                n_tst: int = 1000, sigma_tst_sq: float | None = None) -> Curve:
    """Risk against ``sigma_trn^2`` at fixed ``c``; ``sigma^2 = 0`` is allowed."""
    g = np.sort(np.asarray(sigma_sq_grid, dtype=float).ravel())
    if g.size == 0:
        raise ValueError("sigma_sq_grid is empty")
    if not np.all(np.isfinite(g)) or np.any(g < 0):
        raise ValueError("sigma_sq_grid must be nonnegative and finite")
    st2 = float(n_tst) if sigma_tst_sq is None else sigma_tst_sq
    n_trn = max(1, round(d / c))
    template = ProblemConfig(d=d, n_trn=n_trn, n_tst=n_tst, sigma_trn=math.sqrt(g[-1]),
                             sigma_tst=math.sqrt(st2), mu=mu)
    pts = []
    for s2 in g:
        s2 = float(s2)
        pts.append(CurvePoint(
            coordinate=s2, n_trn=n_trn, d=d, mu=mu, sigma_trn=math.sqrt(s2),
            sigma_tst=math.sqrt(st2), theory_risk=theory.risk_at(c, mu, s2, d, st2, n_tst),
            theory_wnorm=theory.w_norm_at(c, mu, s2),
        ))
    opt = theory.optimal_sigma_sq(c, mu, d, n_tst, math.sqrt(st2)) if c < 1 - 1e-9 else None
    return Curve(Axis.SIGMA_SQ, tuple(pts), template, notes={"optimal_sigma_sq": opt})


@dataclass(frozen=True)
class JointResult:
    mu_opt: float
    sigma_opt: float  # in units of sqrt(N_trn)
    risk_opt: float
    mu_grid: np.ndarray
    sigma_grid: np.ndarray
    risk_grid: np.ndarray  # shape (len(mu_grid), len(sigma_grid))

    @property
    def sigma_at_top(self) -> bool:
        return self.sigma_opt == self.sigma_grid[-1]


def default_mu_grid(points: int = 201) -> np.ndarray:
    return np.geomspace(1e-2, 100.0, points)


def default_sigma_grid(points: int = 200) -> np.ndarray:
    return np.linspace(10.0 / points, 10.0, points)


def joint_grid_search(c: float, d: int, mu_grid: Sequence[float] | None = None,
                      sigma_grid: Sequence[float] | None = None, *, n_tst: int = 1000,
                      sigma_tst_sq: float | None = None) -> JointResult:
    """Exhaustive argmin of the theory risk over ``mu x sigma_trn / sqrt(N_trn)``.

    ``N_trn = d / c`` is used as a real number here; ties go to the first cell in
    row-major order (smallest ``mu``, then smallest ``sigma``).
    """
    mus = np.asarray(default_mu_grid() if mu_grid is None else mu_grid, dtype=float).ravel()
    sig = np.asarray(default_sigma_grid() if sigma_grid is None else sigma_grid, dtype=float).ravel()
    if mus.size == 0 or sig.size == 0:
        raise ValueError("joint search grids must be nonempty")
    if np.any(mus <= 0) or np.any(mus > 100) or np.any(sig <= 0) or np.any(sig > 10):
        raise ValueError("mu must lie in (0, 100] and sigma/sqrt(N_trn) in (0, 10]")
    st2 = float(n_tst) if sigma_tst_sq is None else sigma_tst_sq
    n_trn = d / c
    grid = np.empty((mus.size, sig.size))
    for i, mu in enumerate(mus):
        for j, s in enumerate(sig):
            grid[i, j] = theory.risk_at(c, float(mu), float(s * s * n_trn), d, st2, n_tst)
    i, j = np.unravel_index(int(np.argmin(grid)), grid.shape)
    return JointResult(mu_opt=float(mus[i]), sigma_opt=float(sig[j]), risk_opt=float(grid[i, j]),
                       mu_grid=mus, sigma_grid=sig, risk_grid=grid)


def joint_optimum_curve(d: int, c_grid: Sequence[float], mu_grid: Sequence[float] | None = None,
                        sigma_grid: Sequence[float] | None = None, *,
                        n_tst: int = 1000) -> tuple[Curve, list[JointResult]]:
    """Optimal risk against ``c`` with both regularizers chosen per point."""
    g = _check_grid(c_grid, "c_grid")
    results = [joint_grid_search(float(c), d, mu_grid, sigma_grid, n_tst=n_tst) for c in g]
    pts = []
    for c, r in zip(g, results):
        n_trn = d / c
        pts.append(CurvePoint(coordinate=float(c), n_trn=None, d=d, mu=r.mu_opt,
                              sigma_trn=r.sigma_opt * math.sqrt(n_trn), sigma_tst=math.sqrt(n_tst),
                              theory_risk=r.risk_opt))
    template = ProblemConfig.standard(d, max(1, round(d / g[0])), results[0].mu_opt, n_tst=n_tst)
    return Curve(Axis.C_DATA_SCALING, tuple(pts), template), results


def third_derivative(f: Callable[[float], float], x: float, h: float) -> float:
    """Five-point central stencil for ``f'''(x)``."""
    return (f(x + 2 * h) - 2 * f(x + h) + 2 * f(x - h) - f(x - 2 * h)) / (2 * h**3)


def training_error_curve(mu: float, d: int, c_grid: Sequence[float], *, signal_scale: float = 1.0,
                         n_tst: int = 1000, refine: int = 4, per_sample: bool = True) -> Curve:
    """Theory training error along ``c`` with its third derivative.

    The derivative uses a stencil ``refine`` times finer than the grid spacing and
    is left blank where the stencil would leave ``(0, 1)``.  Local minima of the
    derivative are listed in ``notes['d3_minima']``.  With ``per_sample`` the
    error is divided by ``N_trn = d / c``; the total grows like ``1/c`` and its
    third derivative has no interior minimum.
    """
    g = _check_grid(c_grid, "c_grid")
    if g.size < 5:
        raise ValueError("third derivative needs at least five grid points")
    if np.any(g >= 1):
        raise OutOfScopeError("training error curve is defined for c < 1 only")
    h = float(np.min(np.diff(g))) / refine
    if not h > 0:
        raise ValueError("grid spacing too small for the stencil")

    def f(c: float) -> float:
        total = theory.training_error_at(c, mu, signal_scale * d / c)
        return total * c / d if per_sample else total

    pts = [replace(_continuous_point(float(c), d, mu, n_tst, signal_scale, d / c),
                   theory_train=f(float(c))) for c in g]
    d3: list[float | None] = []
    for c in g:
        d3.append(third_derivative(f, float(c), h) if 2 * h < c < 1 - 2 * h else None)
    minima = []
    for i in range(1, len(d3) - 1):
        a, b, e = d3[i - 1], d3[i], d3[i + 1]
        if a is not None and b is not None and e is not None and b < a and b < e:
            minima.append(float(g[i]))
    template = ProblemConfig.standard(d, max(1, round(d / g[0])), mu, n_tst=n_tst,
                                      signal_scale=signal_scale)
    return Curve(Axis.C_DATA_SCALING, tuple(pts), template, columns={"third_derivative": tuple(d3)},
                 notes={"d3_minima": minima, "peak_estimate": theory.peak_location_estimate(mu),
                        "stencil_h": h, "per_sample": per_sample})


def with_mc(curve: Curve, trials: int, threads: int = 1) -> Curve:
    """Attach Monte Carlo columns to a snapped curve."""
    pts = []
    for p in curve.points:
        if p.n_trn is None:
            raise ValueError("Monte Carlo needs integer sample counts")
        cfg = ProblemConfig(d=p.d, n_trn=p.n_trn, n_tst=curve.config_snapshot.n_tst,
                            sigma_trn=p.sigma_trn, sigma_tst=p.sigma_tst, mu=p.mu,
                            seed=curve.config_snapshot.seed)
        pts.append(replace(p, mc=run_trials(cfg, trials, threads=threads), seed=cfg.seed))
    return replace(curve, points=tuple(pts))
