"""Random separable two-mode states for the soundness checks."""

import numpy as np

from optomech_witness import fock
from optomech_witness.params import SystemParams
from optomech_witness.witness import evaluate

CUTOFF = 32
MAX_SETTING = 2.2


def _single_mode(rng, N):
    kind = rng.integers(3)
    if kind == 0:
        x = rng.uniform(0, 1.2) * np.exp(2j * np.pi * rng.uniform())
        v = fock.coherent_vector(x, N)
        return np.outer(v, v.conj())
    if kind == 1:
        return fock.thermal_state(rng.uniform(0, 0.6), N)
    w = np.zeros(N)
    w[:5] = rng.dirichlet(np.ones(5) * 0.5)
    return np.diag(w).astype(complex)


def random_separable_state(rng, N=CUTOFF, phase_averaged=True):
    """Mixture of 1-3 products of coherent, thermal and Fock-diagonal states."""
    k = rng.integers(1, 4)
    weights = rng.dirichlet(np.ones(k))
    rho = None
    for w in weights:
        term = fock.TwoModeState.product(_single_mode(rng, N), _single_mode(rng, N)).rho * w
        rho = term if rho is None else rho + term
    state = fock.TwoModeState(N, rho)
    return fock.phase_average(state) if phase_averaged else state


def witness_gap(state, alpha, beta):
    """Q - S* measured on ``state`` with an ideal detector."""
    probs = fock.probability_set_from_state(state, alpha, beta, 1.0)
    return evaluate(SystemParams(p=0.0, T=0.0, eta=1.0), alpha, beta, probs=probs).diff
