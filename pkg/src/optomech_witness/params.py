"""Parameter containers shared by the oracle, the closed-form model and the planner."""

import math
import warnings
from dataclasses import asdict, dataclass, fields

import numpy as np

from ._validation import check_probability_array, check_scalar
from .exceptions import ConfigError, InconsistentProbabilitiesError

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class SystemParams:
    """Dimensionless experiment knobs.

    Parameters
    ----------
    p : float
        Probability that the blue-detuned pulse creates at least one
        phonon-photon pair, in [0, 1).
    T : float
        Phonon-to-photon conversion efficiency of the red-detuned pulse, in [0, 1].
    eta : float
        Overall detection efficiency, in (0, 1].
    n0 : float
        Mean thermal phonon occupation before the pulses, >= 0.
    """

    p: float
    T: float
    eta: float
    n0: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "p", check_scalar(self.p, "p", lo=0.0, hi=1.0, hi_open=True))
        object.__setattr__(self, "T", check_scalar(self.T, "T", lo=0.0, hi=1.0))
        object.__setattr__(self, "eta", check_scalar(self.eta, "eta", lo=0.0, hi=1.0, lo_open=True))
        object.__setattr__(self, "n0", check_scalar(self.n0, "n0", lo=0.0))

    def replace(self, **changes):
        values = asdict(self)
        values.update(changes)
        return SystemParams(**values)

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class HardwareParams:
    """Physical rates of the opto-mechanical device.

    Rates are angular frequencies in rad/s; use :meth:`from_frequencies`
    to build from the usual ``rate / 2pi`` values in Hz.
    """

    g0: float
    kappa: float
    omega_m: float
    n_plus: float
    n_minus: float
    t1: float
    t2: float
    n0: float = 0.0

    def __post_init__(self):
        for name in ("g0", "kappa", "omega_m"):
            check_scalar(getattr(self, name), name, lo=0.0, lo_open=True)
        for name in ("n_plus", "n_minus", "t1", "t2", "n0"):
            check_scalar(getattr(self, name), name, lo=0.0)
        if not self.kappa < self.omega_m:
            warnings.warn(
                f"not in the resolved-sideband regime: kappa={self.kappa:.4g} >= omega_m={self.omega_m:.4g}",
                RuntimeWarning,
                stacklevel=3,
            )
        if not self.g0 < self.kappa:
            warnings.warn(
                f"not in the weak-coupling regime: g0={self.g0:.4g} >= kappa={self.kappa:.4g}",
                RuntimeWarning,
                stacklevel=3,
            )

    @classmethod
    def from_frequencies(cls, g0_hz, kappa_hz, omega_m_hz, n_plus, n_minus, t1, t2, n0=0.0):
        """Build from ``g0/2pi``, ``kappa/2pi`` and ``omega_m/2pi`` given in Hz."""
        return cls(
            g0=TWO_PI * g0_hz,
            kappa=TWO_PI * kappa_hz,
            omega_m=TWO_PI * omega_m_hz,
            n_plus=n_plus,
            n_minus=n_minus,
            t1=t1,
            t2=t2,
            n0=n0,
        )

    def to_dict(self):
        return asdict(self)


@dataclass
class ClickProbabilitySet:
    """The measured probabilities that feed the witness and its separable bound.

    ``p_pp``, ``p_pm``, ``p_mp``, ``p_mm`` are the joint outcome probabilities
    P(+-1, +-1 | 0, 0) without displacement (+1 = no click), ``pc_a1`` and
    ``pc_a2`` the twofold-coincidence probabilities behind a 50/50 splitter,
    and ``q_singles_a``, ``q_singles_b``, ``q_joint`` the no-click
    probabilities P(+1|alpha), P(+1|beta), P(+1+1|alpha, beta) at the chosen
    displacements.

    Fields may be scalars or broadcastable numpy arrays; only the [0, 1]
    range is enforced on construction. :meth:`check_consistency` enforces the
    normalisation and coincidence relations.
    """

    p_pp: float
    p_pm: float
    p_mp: float
    p_mm: float
    pc_a1: float
    pc_a2: float
    q_singles_a: float = 1.0
    q_singles_b: float = 1.0
    q_joint: float = 1.0

    def __post_init__(self):
        for f in fields(self):
            value = check_probability_array(getattr(self, f.name), f.name)
            setattr(self, f.name, float(value) if value.ndim == 0 else value)

    @property
    def click_a1(self):
        """Probability of a click on A1 without displacement."""
        return self.p_mp + self.p_mm

    @property
    def click_a2(self):
        return self.p_pm + self.p_mm

    def check_consistency(self, atol=1e-10):
        total = self.p_pp + self.p_pm + self.p_mp + self.p_mm
        if np.any(np.abs(total - 1.0) > atol):
            raise InconsistentProbabilitiesError(f"no-displacement joint probabilities sum to {total}, not 1")
        if np.any(self.pc_a1 > self.click_a1 + atol):
            raise InconsistentProbabilitiesError("coincidence probability on A1 exceeds the click probability on A1")
        if np.any(self.pc_a2 > self.click_a2 + atol):
            raise InconsistentProbabilitiesError("coincidence probability on A2 exceeds the click probability on A2")
        # q_joint <= min(singles) and inclusion-exclusion must stay non-negative
        neg = np.minimum(
            np.minimum(self.q_singles_a - self.q_joint, self.q_singles_b - self.q_joint),
            1.0 - self.q_singles_a - self.q_singles_b + self.q_joint,
        )
        if np.any(neg < -atol):
            raise InconsistentProbabilitiesError("displaced probabilities are not a valid joint distribution")
        return self

    def displaced_joint_outcomes(self):
        """P(++), P(+-), P(-+), P(--) at the chosen displacements."""
        qa, qb, qj = self.q_singles_a, self.q_singles_b, self.q_joint
        return (qj, qa - qj, qb - qj, 1.0 - qa - qb + qj)

    def to_dict(self):
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            out[f.name] = v.tolist() if isinstance(v, np.ndarray) else float(v)
        return out

    @classmethod
    def from_dict(cls, data):
        try:
            return cls(**{f.name: data[f.name] for f in fields(cls) if f.name in data})
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc
