"""Finite-sample planning for the witness.

Every square root in the separable bound is replaced by a tangent plane
``sqrt(A B) <= (k A + B / k) / 2``, which keeps the bound conservative and
turns ``Q - S*`` into a linear functional of ten independently estimated
probabilities. Runs are then split between them to minimise the variance
of that functional.

The probability vector is ordered as :data:`PROBABILITY_LABELS`: the four
displaced joint outcomes, the four joint outcomes without displacement,
then the two coincidence probabilities.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import analytic
from ._validation import check_scalar
from .exceptions import CalibrationDegenerateError, ConfigError, NoViolationError
from .params import ClickProbabilitySet, SystemParams
from .witness import DisplacementSetting, bound_coefficients, evaluate, min_term_branches

PROBABILITY_LABELS = (
    "P++|ab",
    "P+-|ab",
    "P-+|ab",
    "P--|ab",
    "P++|00",
    "P+-|00",
    "P-+|00",
    "P--|00",
    "Pc(A1)",
    "Pc(A2)",
)
N_PROBABILITIES = len(PROBABILITY_LABELS)
DEFAULT_N_CAL = 100_000
MAX_RUNS = 10**15


def probability_vector(probs):
    """The ten estimated probabilities, ordered as :data:`PROBABILITY_LABELS`."""
    return np.array(
        [
            *probs.displaced_joint_outcomes(),
            probs.p_pp,
            probs.p_pm,
            probs.p_mp,
            probs.p_mm,
            probs.pc_a1,
            probs.pc_a2,
        ],
        dtype=float,
    ).clip(0.0, 1.0)


@dataclass(frozen=True)
class LinearFunctional:
    """``offset + coefficients . P`` over the probability vector.

    ``branches`` records which candidate of each of the three min terms the
    functional was built with (0 for the first, 1 for the second).
    """

    coefficients: np.ndarray
    offset: float = 0.0
    branches: tuple = (0, 0, 0)

    def __post_init__(self):
        c = np.asarray(self.coefficients, dtype=float)
        if c.shape != (N_PROBABILITIES,):
            raise ConfigError(f"expected {N_PROBABILITIES} coefficients, got shape {c.shape}")
        if len(self.branches) != 3 or any(b not in (0, 1) for b in self.branches):
            raise ConfigError(f"branches must be three entries in {{0, 1}}, got {self.branches}")
        object.__setattr__(self, "coefficients", c)
        object.__setattr__(self, "branches", tuple(int(b) for b in self.branches))

    def __call__(self, values):
        values = np.asarray(values, dtype=float)
        return self.offset + values @ self.coefficients

    def __neg__(self):
        return LinearFunctional(-self.coefficients, -self.offset, self.branches)

    def __add__(self, other):
        return LinearFunctional(self.coefficients + other.coefficients, self.offset + other.offset, self.branches)

    def __sub__(self, other):
        return self + (-other)

    @property
    def support(self):
        return self.coefficients != 0.0

    def variance(self, values, counts):
        """Variance of the plug-in estimator with ``counts[i]`` independent runs per probability."""
        values = np.asarray(values, dtype=float)
        counts = np.asarray(counts, dtype=float)
        mask = self.support
        if np.any(counts[mask] <= 0):
            raise ConfigError("every probability with a non-zero coefficient needs at least one run")
        c = self.coefficients[mask]
        p = values[mask]
        return float(np.sum(c**2 * p * (1.0 - p) / counts[mask]))


@dataclass(frozen=True)
class CalibrationConstants:
    """Tangent-point ratios ``k1 ... k6`` of the linearised bound."""

    k1: float
    k2: float
    k3: float
    k4: float
    k5: float
    k6: float

    def __post_init__(self):
        for name in ("k1", "k2", "k3", "k4", "k5", "k6"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise CalibrationDegenerateError(f"{name} must be positive and finite, got {value}")
            object.__setattr__(self, name, float(value))

    def as_tuple(self):
        return (self.k1, self.k2, self.k3, self.k4, self.k5, self.k6)

    def scaled(self, factor):
        return CalibrationConstants(*(factor * k for k in self.as_tuple()))


@dataclass(frozen=True)
class RunPlan:
    """How many runs to spend on each probability, and what that buys.

    Attributes
    ----------
    counts : ndarray of int
        Runs per probability, ordered as :data:`PROBABILITY_LABELS`.
    n_total : int
    variance : float
        Predicted variance of the estimator.
    mean : float
        Asymptotic value of the estimator.
    functional : LinearFunctional
    """

    counts: np.ndarray
    n_total: int
    variance: float
    mean: float
    functional: LinearFunctional = field(repr=False, default=None)

    @property
    def significance(self):
        if self.variance == 0.0:
            return math.inf if self.mean > 0 else (-math.inf if self.mean < 0 else 0.0)
        return self.mean / math.sqrt(self.variance)

    def to_dict(self):
        return {
            "labels": list(PROBABILITY_LABELS),
            "counts": [int(n) for n in self.counts],
            "n_total": int(self.n_total),
            "variance": float(self.variance),
            "mean": float(self.mean),
            "significance": float(self.significance),
        }


def bernoulli_variance(p, n):
    """Variance ``P (1 - P) / N`` of a frequency estimated from ``N`` runs."""
    p = np.asarray(p, dtype=float)
    n = np.asarray(n)
    if np.any(p < 0) or np.any(p > 1):
        raise ConfigError("probability must lie in [0, 1]")
    if np.any(n < 1):
        raise ConfigError("run count must be at least 1")
    out = p * (1.0 - p) / n
    return float(out) if out.ndim == 0 else out


def _ratio(num, den, name, floor):
    if floor is not None:
        num = floor if num <= 0.0 else num
        den = floor if den <= 0.0 else den
    if not (num > 0.0 and den > 0.0):
        raise CalibrationDegenerateError(
            f"{name} needs non-zero calibration probabilities (got {num:g} / {den:g}); pass n_cal to regularise"
        )
    return math.sqrt(num / den)


def calibration_constants(cal, n_cal=None):
    """Tangent points from a calibration probability set.

    Parameters
    ----------
    cal : ClickProbabilitySet
    n_cal : int, optional
        Calibration run count. When given, probabilities that are exactly
        zero are replaced by ``1 / (2 n_cal)`` (what a calibration run of that
        size can resolve at best); otherwise a zero raises
        :class:`CalibrationDegenerateError`.
    """
    floor = None
    if n_cal is not None:
        n_cal = check_scalar(n_cal, "n_cal", lo=1.0)
        floor = 1.0 / (2.0 * n_cal)
    pp, pm, mp, mm = (float(v) for v in (cal.p_pp, cal.p_pm, cal.p_mp, cal.p_mm))
    c1, c2 = float(cal.pc_a1), float(cal.pc_a2)
    return CalibrationConstants(
        k1=_ratio(mm, pp, "k1", floor),
        k2=_ratio(mp, pm, "k2", floor),
        k3=_ratio(pm, c2, "k3", floor),
        k4=_ratio(mm, c2, "k4", floor),
        k5=_ratio(mp, c1, "k5", floor),
        k6=_ratio(mm, c1, "k6", floor),
    )


def _bound_functional(setting, k, branches):
    """S*_linear as a functional, with the given branch of each min term."""
    x, y = setting.moduli
    w = {key: float(v) for key, v in bound_coefficients(x, y).items()}
    c = np.zeros(N_PROBABILITIES)
    PP, PM, MP, MM, C1, C2 = 4, 5, 6, 7, 8, 9
    c[PP] += w["d_pp"]
    c[PM] += w["d_pm"]
    c[MP] += w["d_mp"]
    c[MM] += w["d_mm"]
    # coherence terms: w * sqrt(A B) -> (w / 2) (k A + B / k)
    terms = (
        (w["w1"], ((PP, MM, k.k1), (PM, MP, k.k2))),
        (w["w2"], ((C2, PM, k.k3), (C2, MM, k.k4))),
        (w["w3"], ((C1, MP, k.k5), (C1, MM, k.k6))),
    )
    for (weight, candidates), b in zip(terms, branches):
        a, bb, kk = candidates[b]
        c[a] += 0.5 * weight * kk
        c[bb] += 0.5 * weight / kk
    c[C1] += 2.0
    c[C2] += 2.0
    return LinearFunctional(c, 0.0, branches)


def linearized_bound(probs, setting, k):
    """Tangent-plane upper bound on S*.

    Each min term takes whichever linearised candidate is smaller at
    ``probs``.

    Returns
    -------
    (LinearFunctional, float)
        The bound as a functional of the probability vector, and its value at
        ``probs``.
    """
    values = probability_vector(probs)
    best = None
    for branches in np.ndindex(2, 2, 2):
        f = _bound_functional(setting, k, branches)
        v = f(values)
        if best is None or v < best[1]:
            best = (f, v)
    return best[0], float(best[1])


def selected_branches(probs, setting, k):
    """Branches of the three min terms chosen by :func:`linearized_bound`."""
    return linearized_bound(probs, setting, k)[0].branches


def q_functional():
    """Q as ``P++ - P+- - P-+ + P--`` over the displaced joint outcomes."""
    c = np.zeros(N_PROBABILITIES)
    c[:4] = (1.0, -1.0, -1.0, 1.0)
    return LinearFunctional(c)


def estimator_functional(setting, k, calibration):
    """Linear estimator of ``Q - S*_linear``.

    The min-term branches are frozen to those selected on the
    ``calibration`` probability set.
    """
    branches = selected_branches(calibration, setting, k)
    return q_functional() - _bound_functional(setting, k, branches)


def _largest_remainder(ideal, minimum, n_total):
    counts = np.maximum(np.floor(ideal).astype(np.int64), minimum)
    short = n_total - int(counts.sum())
    remainder = ideal - np.floor(ideal)
    if short > 0:
        # stable sort keeps ties in index order, so the result is deterministic
        order = np.argsort(-remainder, kind="stable")
        order = order[ideal[order] > 0] if np.any(ideal > 0) else order[minimum[order] > 0]
        reps = short // order.size + 1
        take = np.tile(order, reps)[:short]
        np.add.at(counts, take, 1)
    while short < 0:
        spare = np.flatnonzero(counts > minimum)
        order = spare[np.argsort(remainder[spare], kind="stable")]
        n = min(-short, order.size)
        counts[order[:n]] -= 1
        short += n
    return counts


def plan_runs(functional, values, n_total):
    """Split ``n_total`` runs to minimise the estimator variance.

    The continuous optimum is ``N_i ~ |c_i| sqrt(P_i (1 - P_i))``; it is
    rounded with the largest-remainder rule, and every probability with a
    non-zero coefficient gets at least one run.

    Parameters
    ----------
    functional : LinearFunctional
    values : array_like or ClickProbabilitySet
        Probabilities at which the variance is predicted.
    n_total : int
    """
    if isinstance(values, ClickProbabilitySet):
        values = probability_vector(values)
    values = np.asarray(values, dtype=float)
    mask = functional.support
    if not np.any(mask):
        raise ConfigError("functional has no non-zero coefficient; nothing to measure")
    n_total = int(n_total)
    if n_total < int(mask.sum()):
        raise ConfigError(f"n_total={n_total} is below the number of measured probabilities ({int(mask.sum())})")
    weights = np.abs(functional.coefficients) * np.sqrt(np.clip(values * (1.0 - values), 0.0, None))
    minimum = mask.astype(np.int64)
    if weights.sum() > 0:
        ideal = n_total * weights / weights.sum()
    else:
        ideal = n_total * minimum / minimum.sum()
    counts = _largest_remainder(ideal, minimum, n_total)
    return RunPlan(
        counts=counts,
        n_total=n_total,
        variance=functional.variance(values, counts),
        mean=float(functional(values)),
        functional=functional,
    )


def _prepare(params, alpha, beta, n_cal, probs):
    if probs is None:
        probs = analytic.probability_set(params, alpha, beta)
    ev = evaluate(params, alpha, beta, probs=probs)
    setting = DisplacementSetting.from_amplitudes(alpha, beta, params.eta)
    k = calibration_constants(probs, n_cal)
    return probs, ev, estimator_functional(setting, k, probs)


def required_runs(params, alpha, beta, significance=3.0, n_cal=DEFAULT_N_CAL, probs=None, return_plan=False):
    """Smallest run budget whose optimal plan satisfies ``sqrt(Var) <= (Q - S*) / significance``.

    Calibration is taken as accurate (the constants come from the same
    probabilities) and calibration runs are not counted. The budget is found
    by doubling followed by bisection.

    Raises
    ------
    NoViolationError
        If ``Q - S* <= 0``, when no budget suffices.
    """
    if not isinstance(params, SystemParams):
        raise ConfigError("params must be a SystemParams instance")
    significance = check_scalar(significance, "significance", lo=0.0, lo_open=True)
    probs, ev, functional = _prepare(params, alpha, beta, n_cal, probs)
    if not ev.diff > 0.0:
        raise NoViolationError(f"Q - S* = {ev.diff:.3g} is not positive; no run budget reveals entanglement")
    values = probability_vector(probs)
    target = (ev.diff / significance) ** 2

    def ok(n):
        return plan_runs(functional, values, n).variance <= target

    lo = int(functional.support.sum())
    if ok(lo):
        hi = lo
    else:
        hi = 2 * lo
        while not ok(hi):
            lo = hi
            hi *= 2
            if hi > MAX_RUNS:
                raise NoViolationError("required run budget exceeds any practical size")
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if ok(mid):
                hi = mid
            else:
                lo = mid
    if return_plan:
        return hi, plan_runs(functional, values, hi)
    return hi


def replication_rng(seed, index=0):
    """Counter-based generator for replication ``index``: Philox keyed by ``seed + index``."""
    return np.random.Generator(np.random.Philox(int(seed) + int(index)))


def simulate_experiment(params, alpha, beta, plan, seed, probs=None, index=0):
    """One simulated experiment: binomial counts per probability, plugged into the estimator.

    Each probability is estimated from its own ``plan.counts[i]`` runs,
    drawn with the generator from :func:`replication_rng`.
    """
    if probs is None:
        probs = analytic.probability_set(params, alpha, beta)
    values = probability_vector(probs)
    counts = np.asarray(plan.counts, dtype=np.int64)
    rng = replication_rng(seed, index)
    hits = rng.binomial(counts, values)
    freq = np.divide(hits, counts, out=np.zeros(N_PROBABILITIES), where=counts > 0)
    return float(plan.functional(freq))


def simulate_replications(params, alpha, beta, plan, seed, reps, probs=None):
    """``reps`` independent experiments; replication ``i`` uses seed ``seed + i``."""
    if int(reps) < 1:
        raise ConfigError("reps must be at least 1")
    if probs is None:
        probs = analytic.probability_set(params, alpha, beta)
    return np.array([simulate_experiment(params, alpha, beta, plan, seed, probs, i) for i in range(int(reps))])
