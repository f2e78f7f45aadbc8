"""Closed-form click and coincidence probabilities, and the hardware-rate mapping.

All probability functions broadcast over numpy arrays in every argument,
which the optimizer relies on for its grid scans. Displacements may be
complex.
"""

import numpy as np

from .exceptions import ConfigError, InconsistentProbabilitiesError
from .params import ClickProbabilitySet, SystemParams

NEGATIVE_TOL = 1e-12


def effective_rate(g0, n_photons, kappa):
    """Effective opto-mechanical rate ``2 g0^2 n / kappa`` (rad/s)."""
    return 2.0 * g0**2 * n_photons / kappa


def hardware_to_params(hw, eta):
    """Map device rates and pulse durations to :class:`SystemParams`.

    ``p = 1 - exp(-2 g+ T1)`` and ``T = 1 - exp(-2 g- T2)`` with
    ``g+- = 2 g0^2 n+- / kappa``; the detection efficiency is supplied
    separately.
    """
    g_plus = effective_rate(hw.g0, hw.n_plus, hw.kappa)
    g_minus = effective_rate(hw.g0, hw.n_minus, hw.kappa)
    p = -np.expm1(-2.0 * g_plus * hw.t1)
    T = -np.expm1(-2.0 * g_minus * hw.t2)
    return SystemParams(p=float(p), T=float(T), eta=eta, n0=hw.n0)


def _unpack(params):
    if isinstance(params, SystemParams):
        return params.p, params.T, params.eta, params.n0
    p, T, eta, n0 = params
    p = np.asarray(p, dtype=float)
    if np.any(p >= 1.0):
        raise ConfigError("p must be strictly below 1")
    return p, np.asarray(T, dtype=float), np.asarray(eta, dtype=float), np.asarray(n0, dtype=float)


def _abs2(z):
    return np.real(z * np.conj(z))


def joint_click_prob(params, alpha, beta):
    """P(+1+1 | alpha, beta): no click on either mode.

    ``params`` is a :class:`SystemParams` or a ``(p, T, eta, n0)`` tuple of
    broadcastable arrays.
    """
    p, T, eta, n0 = _unpack(params)
    alpha = np.asarray(alpha)
    beta = np.asarray(beta)
    denom = 1.0 + n0 * eta * T - p * (-1.0 + eta + n0 * eta) * (-1.0 + eta * T)
    exponent = (
        eta * _abs2(alpha) * (1.0 + p * (-1.0 + eta * T) + n0 * eta * T)
        + eta * _abs2(beta) * (1.0 + p * (-1.0 + eta + n0 * eta))
        + eta**2 * 2.0 * np.real(alpha * beta) * (1.0 + n0) * np.sqrt(p * T)
    )
    return (1.0 - p) / denom * np.exp(-exponent / denom)


def local_click_prob_a1(params, alpha):
    """P(+1 | alpha): no click on A1."""
    p, T, eta, n0 = _unpack(params)
    denom = p * (eta + eta * n0 - 1.0) + 1.0
    return (1.0 - p) * np.exp(-eta * _abs2(np.asarray(alpha)) * (1.0 - p) / denom) / denom


def local_click_prob_a2(params, beta):
    """P(+1 | beta): no click on A2."""
    p, T, eta, n0 = _unpack(params)
    denom = eta * T * (n0 + p) - p + 1.0
    return (1.0 - p) * np.exp(-eta * _abs2(np.asarray(beta)) * (1.0 - p) / denom) / denom


def coincidence_probs(params):
    """Twofold-coincidence probabilities (P_c(A1), P_c(A2)) behind 50/50 splitters."""
    p, T, eta, n0 = _unpack(params)
    d1 = 1.0 - p * (1.0 - eta - n0 * eta)
    pc1 = (
        1.0
        - (1.0 - p) / d1
        - 2.0 * ((1.0 + n0) * (1.0 - p) * eta * p / ((2.0 - p * (2.0 - eta - eta * n0)) * (1.0 + p * (-1.0 + eta + n0 * eta))))
    )
    pc2 = (
        1.0
        - (1.0 - p) / (1.0 - p + (n0 + p) * T * eta)
        - 2.0 * ((1.0 - p) * (n0 + p) * T * eta / ((2.0 + n0 * T * eta + p * (-2.0 + T * eta)) * (1.0 + n0 * T * eta + p * (-1.0 + T * eta))))
    )
    # the closed forms cancel to ~1e-17 at p -> 0
    return _clamp(pc1, "P_c(A1)"), _clamp(pc2, "P_c(A2)")


def _clamp(value, what):
    value = np.asarray(value, dtype=float)
    if np.any(value < -NEGATIVE_TOL):
        raise InconsistentProbabilitiesError(f"{what} is negative beyond {NEGATIVE_TOL:g}: {value.min()}")
    out = np.clip(value, 0.0, None)
    return float(out) if out.ndim == 0 else out


def no_displacement_joint_probs(params):
    """P(++), P(+-), P(-+), P(--) at alpha = beta = 0, by inclusion-exclusion."""
    pa = local_click_prob_a1(params, 0.0)
    pb = local_click_prob_a2(params, 0.0)
    return joint_outcomes(pa, pb, joint_click_prob(params, 0.0, 0.0))


def joint_outcomes(single_a, single_b, joint):
    """Four joint outcome probabilities from the two no-click singles and the joint no-click."""
    return (
        _clamp(joint, "P(++)"),
        _clamp(single_a - joint, "P(+-)"),
        _clamp(single_b - joint, "P(-+)"),
        _clamp(1.0 - single_a - single_b + joint, "P(--)"),
    )


def probability_set(params, alpha, beta):
    """Every probability the witness and its bound consume, from the closed forms."""
    p_pp, p_pm, p_mp, p_mm = no_displacement_joint_probs(params)
    pc1, pc2 = coincidence_probs(params)
    probs = ClickProbabilitySet(
        p_pp=p_pp,
        p_pm=p_pm,
        p_mp=p_mp,
        p_mm=p_mm,
        pc_a1=pc1,
        pc_a2=pc2,
        q_singles_a=_clamp(local_click_prob_a1(params, alpha), "P(+1|alpha)"),
        q_singles_b=_clamp(local_click_prob_a2(params, beta), "P(+1|beta)"),
        q_joint=_clamp(joint_click_prob(params, alpha, beta), "P(+1+1|alpha,beta)"),
    )
    return probs.check_consistency()
