"""Search for the displacements and squeezing that maximise Q - S*.

The objective is always evaluated with the closed-form model. The search
is a coarse grid scan over real ``alpha >= 0``, ``beta <= 0`` and the
pair-creation probability ``p`` (geometric grid), followed by a Nelder-Mead
refinement in ``(alpha, beta, log p)`` started from the best grid point.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np
from scipy.optimize import minimize, minimize_scalar
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from . import analytic
from ._validation import as_grid, check_conditions, check_scalar
from .exceptions import ConfigError, NumericalError
from .params import SystemParams
from .witness import difference, evaluate

DEFAULT_GRID = (21, 21, 11)
DEFAULT_P_MIN = 1e-6
FATOL = 1e-7
MAXITER = 200

SWEEP_COLUMNS = ("T", "eta", "n0", "alpha", "beta", "p", "Q", "S_star", "diff")


@dataclass(frozen=True)
class OptimizationResult:
    """Best setting found for one (T, eta, n0) condition.

    ``grid_diff`` is the best value on the coarse grid; ``diff`` is never
    below it.
    """

    alpha: float
    beta: float
    p: float
    diff: float
    q: float
    s_star: float
    grid_diff: float
    n_iterations: int
    converged: bool

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class SweepRow:
    T: float
    eta: float
    n0: float
    alpha: float
    beta: float
    p: float
    Q: float
    S_star: float
    diff: float

    def as_tuple(self):
        return tuple(getattr(self, c) for c in SWEEP_COLUMNS)

    def to_dict(self):
        return asdict(self)


def diff_surface(T, eta, n0, alpha, beta, p):
    """Q - S* on broadcastable arrays of (alpha, beta, p)."""
    alpha = np.asarray(alpha, dtype=float)
    beta = np.asarray(beta, dtype=float)
    probs = analytic.probability_set((p, T, eta, n0), alpha, beta)
    s = math.sqrt(eta)
    return difference(probs, s * np.abs(alpha), s * np.abs(beta))


def _check_brackets(alpha_max, beta_max, p_max, p_min):
    alpha_max = check_scalar(alpha_max, "alpha_max", lo=0.0)
    beta_max = check_scalar(beta_max, "beta_max", lo=0.0)
    p_max = check_scalar(p_max, "p_max", lo=0.0, hi=1.0, lo_open=True, hi_open=True)
    p_min = check_scalar(p_min, "p_min", lo=0.0, lo_open=True)
    if p_min > p_max:
        raise ConfigError(f"empty p bracket: p_min={p_min} > p_max={p_max}")
    return alpha_max, beta_max, p_max, p_min


def _check_grid(grid):
    try:
        n_a, n_b, n_p = (int(g) for g in grid)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"grid must be three positive integers, got {grid!r}") from exc
    if min(n_a, n_b, n_p) < 1:
        raise ConfigError(f"grid sizes must be positive, got {grid!r}")
    return n_a, n_b, n_p


def optimize_setting(
    T,
    eta,
    n0=0.0,
    alpha_max=6.0,
    beta_max=6.0,
    p_max=0.5,
    p_min=DEFAULT_P_MIN,
    grid=DEFAULT_GRID,
    refine=True,
):
    """Maximise Q - S* over alpha in [0, alpha_max], beta in [-beta_max, 0], p in [p_min, p_max].

    Parameters
    ----------
    T, eta, n0 : float
        Experimental condition.
    alpha_max, beta_max, p_max, p_min : float
        Search brackets.
    grid : tuple of int
        Coarse grid sizes for (alpha, beta, p).
    refine : bool
        Run the Nelder-Mead refinement after the grid scan.

    Returns
    -------
    OptimizationResult
    """
    SystemParams(p=p_max, T=T, eta=eta, n0=n0)  # validates the condition
    alpha_max, beta_max, p_max, p_min = _check_brackets(alpha_max, beta_max, p_max, p_min)
    n_a, n_b, n_p = _check_grid(grid)
    alphas = np.linspace(0.0, alpha_max, n_a)
    betas = np.linspace(-beta_max, 0.0, n_b)
    ps = np.geomspace(p_min, p_max, n_p)
    A, B, P = np.meshgrid(alphas, betas, ps, indexing="ij")
    surface = diff_surface(T, eta, n0, A, B, P)
    if not np.all(np.isfinite(surface)):
        raise NumericalError(f"objective is not finite on the grid at T={T}, eta={eta}, n0={n0}")
    i = np.unravel_index(np.argmax(surface), surface.shape)
    best = (float(A[i]), float(B[i]), float(P[i]))
    grid_diff = float(surface[i])
    n_iter, converged = 0, False

    if refine:
        lo = np.array([0.0, -beta_max, math.log(p_min)])
        hi = np.array([alpha_max, 0.0, math.log(p_max)])

        def to_p(lp):
            # exp(log(p)) can land one ulp outside the bracket
            return min(max(math.exp(lp), p_min), p_max)

        def objective(v):
            a, b, lp = np.clip(v, lo, hi)
            return -float(diff_surface(T, eta, n0, a, b, to_p(lp)))

        x0 = np.array([best[0], best[1], math.log(best[2])])
        res = minimize(
            objective,
            x0,
            method="Nelder-Mead",
            bounds=list(zip(lo, hi)),
            options={"fatol": FATOL, "xatol": 1e-6, "maxiter": MAXITER},
        )
        n_iter, converged = int(res.nit), bool(res.success)
        a, b, lp = np.clip(res.x, lo, hi)
        refined = -objective(res.x)
        if refined > grid_diff:
            best = (float(a), float(b), float(to_p(lp)))

    params = SystemParams(p=best[2], T=T, eta=eta, n0=n0)
    ev = evaluate(params, best[0], best[1])
    return OptimizationResult(
        alpha=best[0],
        beta=best[1],
        p=best[2],
        diff=ev.diff,
        q=ev.q,
        s_star=ev.s_star,
        grid_diff=grid_diff,
        n_iterations=n_iter,
        converged=converged,
    )


def optimize_p(T, eta, n0, alpha, beta, p_max=0.5, p_min=DEFAULT_P_MIN, n_grid=101):
    """Best p for fixed displacements: geometric grid scan, then bounded Brent refinement in log p."""
    _, _, p_max, p_min = _check_brackets(0.0, 0.0, p_max, p_min)
    ps = np.geomspace(p_min, p_max, int(n_grid))
    values = diff_surface(T, eta, n0, alpha, beta, ps)
    j = int(np.argmax(values))
    lo, hi = math.log(ps[max(j - 1, 0)]), math.log(ps[min(j + 1, ps.size - 1)])
    best_p, best_v = float(ps[j]), float(values[j])
    if hi > lo:
        res = minimize_scalar(
            lambda lp: -float(diff_surface(T, eta, n0, alpha, beta, math.exp(lp))),
            bounds=(lo, hi),
            method="bounded",
            options={"xatol": 1e-10},
        )
        if -res.fun > best_v:
            best_p, best_v = float(min(max(math.exp(res.x), p_min), p_max)), float(-res.fun)
    return best_p, best_v


def _row(T, eta, n0, res):
    return SweepRow(T=T, eta=eta, n0=n0, alpha=res.alpha, beta=res.beta, p=res.p, Q=res.q, S_star=res.s_star, diff=res.diff)


def _run(conditions, threads, options):
    def job(c):
        return _row(*c, optimize_setting(*c, **options))

    threads = int(threads)
    if threads < 1:
        raise ConfigError(f"threads must be >= 1, got {threads}")
    if threads == 1:
        return [job(c) for c in conditions]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        # map preserves input order, so the output does not depend on scheduling
        return list(pool.map(job, conditions))


def sweep_T(etas, n0, Ts, threads=1, **options):
    """One optimised row per (eta, T), eta-major."""
    etas = as_grid(etas, "eta")
    Ts = as_grid(Ts, "T")
    n0 = check_scalar(n0, "n0", lo=0.0)
    conditions = [(float(T), float(e), n0) for e in etas for T in Ts]
    return _run(conditions, threads, options)


def sweep_n0(eta, n0s, Ts, threads=1, **options):
    """One optimised row per (n0, T), n0-major."""
    n0s = as_grid(n0s, "n0")
    Ts = as_grid(Ts, "T")
    eta = check_scalar(eta, "eta", lo=0.0, hi=1.0, lo_open=True)
    conditions = [(float(T), eta, float(n)) for n in n0s for T in Ts]
    return _run(conditions, threads, options)


class WitnessOptimizer(TransformerMixin, BaseEstimator):
    """Estimator wrapper around :func:`optimize_setting`.

    Each input row is an experimental condition ``(T, eta, n0)``; the output
    row is ``(alpha, beta, p, Q, S_star, diff)`` at the optimum.

    Parameters
    ----------
    alpha_max, beta_max : float, default=6.0
    p_max : float, default=0.5
    p_min : float, default=1e-6
    grid : tuple of int, default=(21, 21, 11)
    refine : bool, default=True
    threads : int, default=1
    """

    def __init__(self, alpha_max=6.0, beta_max=6.0, p_max=0.5, p_min=DEFAULT_P_MIN, grid=DEFAULT_GRID, refine=True, threads=1):
        self.alpha_max = alpha_max
        self.beta_max = beta_max
        self.p_max = p_max
        self.p_min = p_min
        self.grid = grid
        self.refine = refine
        self.threads = threads

    def _options(self):
        return {
            "alpha_max": self.alpha_max,
            "beta_max": self.beta_max,
            "p_max": self.p_max,
            "p_min": self.p_min,
            "grid": self.grid,
            "refine": self.refine,
        }

    def fit(self, X, y=None):
        """Optimise every condition in ``X``; results are kept in ``results_``."""
        X = check_conditions(X)
        _check_brackets(self.alpha_max, self.beta_max, self.p_max, self.p_min)
        _check_grid(self.grid)
        self.rows_ = _run([tuple(float(v) for v in row) for row in X], self.threads, self._options())
        self.n_features_in_ = 3
        return self

    def transform(self, X):
        check_is_fitted(self, "rows_")
        X = check_conditions(X)
        rows = _run([tuple(float(v) for v in row) for row in X], self.threads, self._options())
        return np.array([[r.alpha, r.beta, r.p, r.Q, r.S_star, r.diff] for r in rows])

    def fit_transform(self, X, y=None):
        self.fit(X)
        return np.array([[r.alpha, r.beta, r.p, r.Q, r.S_star, r.diff] for r in self.rows_])
