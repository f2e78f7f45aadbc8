"""Witness value Q, the separable bound S* and their difference.

Both sides of the inequality ``Q <= S*`` are evaluated from the same
:class:`~optomech_witness.params.ClickProbabilitySet`. The bound only needs
the effective displacements ``x = sqrt(eta) alpha`` and ``y = sqrt(eta) beta``;
complex displacements are reduced to their moduli, since every term of the
bound depends on ``|x|`` and ``|y|`` alone.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import analytic
from ._validation import check_scalar
from .exceptions import ConfigError, InconsistentProbabilitiesError
from .params import ClickProbabilitySet, SystemParams

Q_TOL = 1e-9
SQRT2 = math.sqrt(2.0)

_SUPPORTED_PAIRS = ((0, 0), (1, 1), (0, 1), (0, 2), (1, 2))


@dataclass(frozen=True)
class DisplacementSetting:
    """Effective displacements seen by the detectors.

    Parameters
    ----------
    x, y : complex
        ``sqrt(eta) * alpha`` and ``sqrt(eta) * beta``.
    """

    x: complex
    y: complex

    def __post_init__(self):
        for name in ("x", "y"):
            value = complex(getattr(self, name))
            if not (math.isfinite(value.real) and math.isfinite(value.imag)):
                raise ConfigError(f"displacement {name} must be finite, got {value}")
            object.__setattr__(self, name, value)

    @classmethod
    def from_amplitudes(cls, alpha, beta, eta):
        """Build from the applied amplitudes and the detection efficiency."""
        eta = check_scalar(eta, "eta", lo=0.0, hi=1.0, lo_open=True)
        s = math.sqrt(eta)
        return cls(s * complex(alpha), s * complex(beta))

    @property
    def moduli(self):
        return abs(self.x), abs(self.y)


@dataclass(frozen=True)
class WitnessEvaluation:
    """Result of one witness evaluation; ``diff`` is exactly ``q - s_star``."""

    q: float
    s_star: float
    diff: float
    setting: DisplacementSetting
    params: SystemParams = None

    @property
    def violated(self):
        return self.diff > 0.0


def sigma_element(i, j, x):
    """Matrix element ``<i| sigma_x |j>`` of the displaced click observable.

    ``sigma_x = D(x)^dag (2|0><0| - 1) D(x)`` restricted to the five pairs
    the bound needs (and their transposes, the matrix being real symmetric
    for real ``x``). Broadcasts over array ``x``.
    """
    pair = (int(i), int(j))
    if pair not in _SUPPORTED_PAIRS:
        pair = pair[::-1]
    if pair not in _SUPPORTED_PAIRS:
        raise ConfigError(f"matrix element ({i}, {j}) is not supported; use one of {_SUPPORTED_PAIRS}")
    x = np.asarray(x, dtype=float)
    g = np.exp(-(x**2))
    if pair == (0, 0):
        out = -1.0 + 2.0 * g
    elif pair == (1, 1):
        out = -1.0 + 2.0 * x**2 * g
    elif pair == (0, 1):
        out = -2.0 * x * g
    elif pair == (0, 2):
        out = SQRT2 * x**2 * g
    else:
        out = -SQRT2 * x**3 * g
    return float(out) if out.ndim == 0 else out


def q_value(p_a, p_b, p_ab):
    """Witness mean ``Q = 1 - 2 P(+1|alpha) - 2 P(+1|beta) + 4 P(+1+1|alpha,beta)``.

    Raises :class:`InconsistentProbabilitiesError` when the result leaves
    [-1, 1] by more than ``Q_TOL``, which only happens for inconsistent inputs.
    """
    q = 1.0 - 2.0 * np.asarray(p_a, dtype=float) - 2.0 * np.asarray(p_b, dtype=float) + 4.0 * np.asarray(p_ab, dtype=float)
    if np.any(np.abs(q) > 1.0 + Q_TOL):
        raise InconsistentProbabilitiesError(f"Q = {q} lies outside [-1, 1]; the probabilities are inconsistent")
    return float(q) if q.ndim == 0 else q


def bound_coefficients(x, y):
    """Non-negative weights of the bound for moduli ``x``, ``y``.

    Returns a dict with the four diagonal weights ``d_pp, d_pm, d_mp, d_mm``
    and the three coherence weights ``w1, w2, w3`` that multiply the min
    terms (the 2 and 2 sqrt(2) prefactors included).
    """
    x = np.abs(np.asarray(x, dtype=float))
    y = np.abs(np.asarray(y, dtype=float))
    s00x, s11x, s01x, s12x = (sigma_element(*ij, x) for ij in ((0, 0), (1, 1), (0, 1), (1, 2)))
    s00y, s11y, s01y, s12y = (sigma_element(*ij, y) for ij in ((0, 0), (1, 1), (0, 1), (1, 2)))
    return {
        "d_pp": s00x * s00y,
        "d_pm": s00x * s11y,
        "d_mp": s11x * s00y,
        "d_mm": s11x * s11y,
        "w1": 2.0 * np.abs(s01x * s01y),
        "w2": 2.0 * SQRT2 * np.abs(s01x * s12y),
        "w3": 2.0 * SQRT2 * np.abs(s12x * s01y),
    }


def min_term_branches(probs):
    """The two square-root candidates of each of the three min terms.

    Returns ``((a1, b1), (a2, b2), (a3, b3))``.
    """
    pp, pm, mp, mm = probs.p_pp, probs.p_pm, probs.p_mp, probs.p_mm
    c1, c2 = probs.pc_a1, probs.pc_a2
    return (
        (np.sqrt(pp * mm), np.sqrt(pm * mp)),
        (np.sqrt(c2 * pm), np.sqrt(c2 * mm)),
        (np.sqrt(c1 * mp), np.sqrt(c1 * mm)),
    )


def separable_bound(probs, setting):
    """Largest witness value any separable state compatible with ``probs`` can reach.

    Parameters
    ----------
    probs : ClickProbabilitySet
        Calibration probabilities (the displaced entries are not used).
    setting : DisplacementSetting

    Returns
    -------
    float
    """
    x, y = setting.moduli
    return bound_from_moduli(probs, x, y)


def bound_from_moduli(probs, x, y):
    """:func:`separable_bound` for effective displacements given as (array) moduli."""
    c = bound_coefficients(x, y)
    (a1, b1), (a2, b2), (a3, b3) = min_term_branches(probs)
    s = (
        c["d_pp"] * probs.p_pp
        + c["d_pm"] * probs.p_pm
        + c["d_mp"] * probs.p_mp
        + c["d_mm"] * probs.p_mm
        + c["w1"] * np.minimum(a1, b1)
        + c["w2"] * np.minimum(a2, b2)
        + c["w3"] * np.minimum(a3, b3)
        + 2.0 * probs.pc_a1
        + 2.0 * probs.pc_a2
    )
    s = np.asarray(s, dtype=float)
    if not np.all(np.isfinite(s)):
        raise InconsistentProbabilitiesError("separable bound is not finite")
    return float(s) if s.ndim == 0 else s


def evaluate(params, alpha, beta, probs=None):
    """Q, S* and Q - S* at one setting.

    Parameters
    ----------
    params : SystemParams
    alpha, beta : complex
        Applied displacement amplitudes.
    probs : ClickProbabilitySet, optional
        Measured or oracle probabilities; by default they come from the
        closed-form model.
    """
    if not isinstance(params, SystemParams):
        raise ConfigError("params must be a SystemParams instance")
    if probs is None:
        probs = analytic.probability_set(params, alpha, beta)
    elif not isinstance(probs, ClickProbabilitySet):
        raise ConfigError("probs must be a ClickProbabilitySet")
    setting = DisplacementSetting.from_amplitudes(alpha, beta, params.eta)
    q = q_value(probs.q_singles_a, probs.q_singles_b, probs.q_joint)
    s = separable_bound(probs, setting)
    return WitnessEvaluation(q=q, s_star=s, diff=q - s, setting=setting, params=params)


def difference(probs, x, y):
    """Vectorised ``Q - S*`` for a probability set computed on broadcastable arrays."""
    q = q_value(probs.q_singles_a, probs.q_singles_b, probs.q_joint)
    return q - bound_from_moduli(probs, x, y)
