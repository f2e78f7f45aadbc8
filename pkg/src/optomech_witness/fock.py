"""Brute-force truncated Fock-space model of the two-pulse protocol.

The optical mode A1 and the mechanical mode are squeezed together by the
blue-detuned pulse, the phonon is swapped into the optical mode A2 by the
red-detuned pulse, and both optical modes suffer detection loss. Everything
is done with explicit matrices in a photon-number basis truncated at
``cutoff`` levels per mode, and the resulting probabilities serve as ground
truth for the closed-form model in :mod:`optomech_witness.analytic`.

Two-mode density operators are stored as ``scipy.sparse`` matrices over the
basis ``|n1, n2>`` with flat index ``n1 * cutoff + n2``. The protocol states
only populate a small fraction of the ``cutoff**4`` entries and the cutoffs
needed for 1e-10 tails reach ~100 levels, where a dense matrix would not fit
in memory.

Displacement convention: the no-click POVM element of a detector preceded by
``D(alpha)`` is ``D(alpha)^dag |0><0| D(alpha) = |-alpha><-alpha|``, so a
no-click probability is the coherent-state expectation at ``-sqrt(eta) alpha``
once the efficiency ``eta`` has been moved onto the state as loss.
"""

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components
from scipy.special import comb

from ._validation import check_cutoff, check_scalar
from .exceptions import ConfigError, NumericalError, UnderTruncationError
from .params import ClickProbabilitySet, SystemParams

TAIL_TOL = 1e-10
UNITARY_TOL = 1e-10
HERMITIAN_TOL = 1e-12
TRACE_TOL = 1e-10
EIGEN_TOL = 1e-9
MAX_CUTOFF = 256

# Phase of the pair-creation and state-swap couplings (the factor i in both
# propagators). Their product gives the two-mode amplitudes a (-1)^n sign.
PAIR_PHASE = math.pi / 2
SWAP_PHASE = math.pi / 2


def ladder_ops(cutoff):
    """Annihilation and creation matrices truncated at ``cutoff`` levels."""
    cutoff = check_cutoff(cutoff)
    a = np.diag(np.sqrt(np.arange(1, cutoff, dtype=float)), k=1).astype(complex)
    return a, a.conj().T


def _sparse_annihilation(cutoff):
    return sp.diags(np.sqrt(np.arange(1, cutoff, dtype=float)), 1, shape=(cutoff, cutoff), format="csr", dtype=complex)


def block_expm(generator):
    """Matrix exponential of a sparse matrix, one connected component at a time.

    The components of the sparsity graph are invariant subspaces of the
    generator, so the exponential factorises exactly over them. Returns a CSR
    matrix.
    """
    G = sp.csr_matrix(generator, dtype=complex)
    n = G.shape[0]
    pattern = G.copy()
    pattern.data = np.ones_like(pattern.data, dtype=float)
    _, labels = connected_components(pattern, directed=False)
    order = np.argsort(labels, kind="stable")
    splits = np.flatnonzero(np.diff(labels[order])) + 1
    rows, cols, vals = [], [], []
    for idx in np.split(order, splits):
        block = G[idx][:, idx].toarray()
        E = scipy.linalg.expm(block)
        r, c = np.meshgrid(idx, idx, indexing="ij")
        rows.append(r.ravel())
        cols.append(c.ravel())
        vals.append(E.ravel())
    U = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
    )
    U.eliminate_zeros()
    return U


def _check_unitary(U, what):
    if sp.issparse(U):
        err = abs(U.conj().T @ U - sp.identity(U.shape[0], format="csr")).max()
    else:
        err = np.abs(U.conj().T @ U - np.eye(U.shape[0])).max()
    if err >= UNITARY_TOL:
        raise NumericalError(f"{what} is not unitary to {UNITARY_TOL:g} (deviation {err:.3g})")


def _top_two_mass(populations):
    return float(np.sum(populations[-2:]))


def thermal_state(n0, cutoff):
    """Diagonal thermal density matrix with mean occupation ``n0``.

    Weights are ``(1/(1+n0)) (n0/(1+n0))**n``, renormalised over the
    truncation. Raises :class:`UnderTruncationError` if the two highest
    levels carry more than ``TAIL_TOL`` of the population.
    """
    n0 = check_scalar(n0, "n0", lo=0.0)
    cutoff = check_cutoff(cutoff)
    n = np.arange(cutoff)
    if n0 == 0.0:
        weights = (n == 0).astype(float)
    else:
        ratio = n0 / (1.0 + n0)
        weights = ratio**n / (1.0 + n0)
    tail = _top_two_mass(weights)
    if tail >= TAIL_TOL:
        raise UnderTruncationError(
            f"thermal state with n0={n0} needs more than {cutoff} levels (top-two tail {tail:.3g})",
            cutoff=cutoff,
        )
    return np.diag(weights / weights.sum()).astype(complex)


def coherent_vector(x, cutoff):
    """Coherent-state amplitudes <n|x> for n < cutoff."""
    x = complex(x)
    c = np.empty(cutoff, dtype=complex)
    c[0] = math.exp(-abs(x) ** 2 / 2)
    for n in range(1, cutoff):
        c[n] = c[n - 1] * x / math.sqrt(n)
    return c


def _required_levels(amplitude):
    a = abs(amplitude)
    return a * a + 6 * a + 10


def displacement_op(alpha, cutoff):
    """Displacement operator ``exp(alpha a^dag - alpha^* a)`` as a dense matrix."""
    cutoff = check_cutoff(cutoff)
    alpha = complex(alpha)
    if not cutoff > _required_levels(alpha):
        raise UnderTruncationError(
            f"displacement {alpha} needs a cutoff above {_required_levels(alpha):.1f}, got {cutoff}",
            cutoff=cutoff,
        )
    a, ad = ladder_ops(cutoff)
    D = scipy.linalg.expm(alpha * ad - np.conj(alpha) * a)
    _check_unitary(D, "displacement operator")
    return D


def _two_mode_ops(cutoffs):
    n1, n2 = cutoffs
    A = sp.kron(_sparse_annihilation(n1), sp.identity(n2, format="csr"), format="csr")
    B = sp.kron(sp.identity(n1, format="csr"), _sparse_annihilation(n2), format="csr")
    return A, B


def _as_cutoffs(cutoffs):
    if np.ndim(cutoffs) == 0:
        c = check_cutoff(cutoffs)
        return c, c
    c1, c2 = cutoffs
    return check_cutoff(c1), check_cutoff(c2)


def two_mode_squeeze_op(r, phase, cutoffs):
    """Two-mode squeezer ``exp(r (e^{i phase} a^dag b^dag - e^{-i phase} a b))``.

    Returns a sparse unitary over ``cutoffs[0] * cutoffs[1]`` levels.
    """
    r = check_scalar(r, "r", lo=0.0)
    phase = check_scalar(phase, "phase")
    n1, n2 = _as_cutoffs(cutoffs)
    levels = min(n1, n2)
    # pair-number distribution of the squeezed vacuum: tanh^{2n} r / cosh^2 r
    t2 = math.tanh(r) ** 2
    tail = (t2 ** (levels - 2) + t2 ** (levels - 1)) / math.cosh(r) ** 2 if r > 0 else 0.0
    if tail >= TAIL_TOL:
        raise UnderTruncationError(
            f"two-mode squeezing r={r:.4g} needs more than {levels} levels (tail {tail:.3g})", cutoff=levels
        )
    A, B = _two_mode_ops((n1, n2))
    G = r * (np.exp(1j * phase) * (A.T @ B.T) - np.exp(-1j * phase) * (A @ B))
    U = block_expm(G)
    _check_unitary(U, "two-mode squeezer")
    return U


def _vacuum(cutoff):
    v = np.zeros((cutoff, cutoff), dtype=complex)
    v[0, 0] = 1.0
    return v


@dataclass(frozen=True)
class TwoModeState:
    """Density operator of the optical modes A1 and A2 in a truncated Fock basis."""

    cutoff: int
    rho: sp.csr_matrix

    def __post_init__(self):
        dim = self.cutoff * self.cutoff
        rho = sp.csr_matrix(self.rho, dtype=complex)
        if rho.shape != (dim, dim):
            raise ConfigError(f"rho has shape {rho.shape}, expected {(dim, dim)} for cutoff {self.cutoff}")
        object.__setattr__(self, "rho", rho)

    @classmethod
    def from_dense(cls, rho, cutoff=None):
        rho = np.asarray(rho, dtype=complex)
        if cutoff is None:
            cutoff = math.isqrt(rho.shape[0])
        return cls(cutoff, sp.csr_matrix(rho))

    @classmethod
    def product(cls, rho_a, rho_b):
        rho_a = np.asarray(rho_a, dtype=complex)
        rho_b = np.asarray(rho_b, dtype=complex)
        if rho_a.shape != rho_b.shape:
            raise ConfigError("product states need equal single-mode cutoffs")
        return cls(rho_a.shape[0], sp.kron(sp.csr_matrix(rho_a), sp.csr_matrix(rho_b), format="csr"))

    def dense(self):
        return self.rho.toarray()

    def entries(self):
        """Non-zero entries as ``(n1, n2, m1, m2, value)`` for ``<n1 n2|rho|m1 m2>``."""
        coo = self.rho.tocoo()
        N = self.cutoff
        return coo.row // N, coo.row % N, coo.col // N, coo.col % N, coo.data

    @classmethod
    def from_entries(cls, cutoff, n1, n2, m1, m2, values):
        N = cutoff
        rho = sp.coo_matrix((values, (n1 * N + n2, m1 * N + m2)), shape=(N * N, N * N)).tocsr()
        rho.eliminate_zeros()
        return cls(cutoff, rho)

    def populations(self):
        """Joint photon-number distribution p(n1, n2) as a (cutoff, cutoff) array."""
        return self.rho.diagonal().real.reshape(self.cutoff, self.cutoff)

    def marginal(self, mode):
        """Reduced single-mode density matrix of ``mode`` (0 for A1, 1 for A2)."""
        if mode not in (0, 1):
            raise ConfigError(f"mode index must be 0 or 1, got {mode!r}")
        n1, n2, m1, m2, v = self.entries()
        keep, row, col = (n2 == m2, n1, m1) if mode == 0 else (n1 == m1, n2, m2)
        out = np.zeros((self.cutoff, self.cutoff), dtype=complex)
        np.add.at(out, (row[keep], col[keep]), v[keep])
        return out

    def tail_mass(self):
        """Population of the top two Fock levels of each mode."""
        pops = self.populations()
        return _top_two_mass(pops.sum(axis=1)), _top_two_mass(pops.sum(axis=0))

    def check_truncation(self, where="state"):
        t1, t2 = self.tail_mass()
        if max(t1, t2) >= TAIL_TOL:
            raise UnderTruncationError(
                f"{where} is under-truncated at cutoff {self.cutoff} (top-two tails {t1:.3g}, {t2:.3g})",
                cutoff=self.cutoff,
            )
        return self

    def check(self):
        """Assert the density-operator invariants; returns ``self``."""
        check_density_operator(self.rho)
        return self


def check_density_operator(rho):
    """Hermiticity, unit trace and positivity checks for a (sparse or dense) density matrix."""
    M = sp.csr_matrix(rho, dtype=complex)
    herm = abs(M - M.conj().T).max() if M.nnz else 0.0
    if herm > HERMITIAN_TOL:
        raise NumericalError(f"density matrix is not Hermitian (deviation {herm:.3g})")
    tr = M.diagonal().sum()
    if abs(tr - 1.0) > TRACE_TOL:
        raise NumericalError(f"density matrix has trace {tr}")
    pattern = M.copy()
    pattern.data = np.ones_like(pattern.data, dtype=float)
    _, labels = connected_components(pattern, directed=False)
    order = np.argsort(labels, kind="stable")
    splits = np.flatnonzero(np.diff(labels[order])) + 1
    lowest = min(np.linalg.eigvalsh(M[idx][:, idx].toarray()).min() for idx in np.split(order, splits))
    if lowest < -EIGEN_TOL:
        raise NumericalError(f"density matrix has a negative eigenvalue {lowest:.3g}")
    return True


def _lossy_entries(n, m, values, transmissivity, phase):
    """Apply a pure-loss channel to one mode of a list of matrix entries.

    ``n`` and ``m`` are the ket and bra photon numbers of the lossy mode.
    Yields, one Kraus operator at a time, the (ket, bra, value, source-index)
    produced by ``K_k = sum_n sqrt(C(n,k)) (sqrt(t) e^{i phase})^{n-k} sqrt(1-t)^k |n-k><n|``.
    """
    t = transmissivity
    values = values * np.exp(1j * phase * (n - m))
    if t == 1.0:
        yield n, m, values, np.arange(n.size)
        return
    if not n.size:
        return
    top = int(max(n.max(), m.max())) + 1
    # table[n, k] = sqrt(C(n, k)) sqrt(t)^(n-k) sqrt(1-t)^k
    levels = np.arange(top)
    kk = levels[None, :]
    nn_ = levels[:, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        table = np.sqrt(comb(nn_, kk)) * np.power(math.sqrt(t), np.clip(nn_ - kk, 0, None)) * np.power(math.sqrt(1.0 - t), kk)
    table = np.where(kk <= nn_, table, 0.0)
    kmax = int(min(n.max(), m.max()))
    for k in range(kmax + 1):
        sel = np.flatnonzero((n >= k) & (m >= k))
        nn, mm = n[sel], m[sel]
        w = table[nn, k] * table[mm, k]
        yield nn - k, mm - k, values[sel] * w, sel


# entries gathered before they are folded into the sparse accumulator
_BATCH_ENTRIES = 4_000_000


def loss_channel(state, mode, transmissivity, phase=0.0):
    """Pure-loss channel of the given transmissivity on one mode of a two-mode state.

    ``phase`` multiplies the transmitted amplitude: the surviving field is
    ``sqrt(t) e^{i phase} a``.
    """
    if mode not in (0, 1):
        raise ConfigError(f"mode index must be 0 or 1, got {mode!r}")
    t = check_scalar(transmissivity, "transmissivity", lo=0.0, hi=1.0)
    phase = check_scalar(phase, "phase")
    n1, n2, m1, m2, v = state.entries()
    N = state.cutoff
    dim = N * N
    if mode == 0:
        pieces = ((a * N + n2[s], b * N + m2[s], w) for a, b, w, s in _lossy_entries(n1, m1, v, t, phase))
    else:
        pieces = ((n1[s] * N + a, m1[s] * N + b, w) for a, b, w, s in _lossy_entries(n2, m2, v, t, phase))
    acc = sp.csr_matrix((dim, dim), dtype=complex)
    batch, size = [], 0

    def flush():
        rows, cols, vals = (np.concatenate(c) for c in zip(*batch))
        return acc + sp.coo_matrix((vals, (rows, cols)), shape=(dim, dim)).tocsr()

    for piece in pieces:
        batch.append(piece)
        size += piece[2].size
        if size >= _BATCH_ENTRIES:
            acc = flush()
            batch, size = [], 0
    if batch:
        acc = flush()
    acc.eliminate_zeros()
    return TwoModeState(N, acc)


def apply_loss(rho, transmissivity, phase=0.0):
    """Pure-loss channel on a dense single-mode density matrix."""
    rho = np.asarray(rho, dtype=complex)
    t = check_scalar(transmissivity, "transmissivity", lo=0.0, hi=1.0)
    n, m = np.nonzero(rho)
    out = np.zeros_like(rho)
    for a, b, w, _ in _lossy_entries(n, m, rho[n, m], t, phase):
        np.add.at(out, (a, b), w)
    return out


def squeeze_magnitude(p):
    """Squeezing r with ``sinh(r)**2 = p / (1 - p)``."""
    p = check_scalar(p, "p", lo=0.0, hi=1.0, hi_open=True)
    return math.asinh(math.sqrt(p / (1.0 - p)))


def simulate_protocol(params, cutoff):
    """Build the detected two-mode state of A1 and A2.

    A1 starts in vacuum and the phonon in a thermal state; the pair-creation
    pulse is a two-mode squeezer with ``sinh^2 r = p / (1 - p)``; the state
    swap is a pure-loss channel of transmissivity ``T`` whose transmitted
    output is relabelled A2 (the residual phonon is discarded); detection
    inefficiency is loss ``eta`` on both optical modes. On A2 the swap and
    the detection loss are applied together as one channel of transmissivity
    ``T * eta``, which is exactly their composition.
    """
    if not isinstance(params, SystemParams):
        raise ConfigError("params must be a SystemParams instance")
    N = check_cutoff(cutoff, minimum=3)
    phonon = thermal_state(params.n0, N)
    rho0 = sp.kron(sp.csr_matrix(_vacuum(N)), sp.csr_matrix(phonon), format="csr")
    U = two_mode_squeeze_op(squeeze_magnitude(params.p), PAIR_PHASE, (N, N))
    rho1 = (U @ rho0 @ U.conj().T).tocsr()
    rho1.eliminate_zeros()
    state = TwoModeState(N, rho1).check_truncation("state after pair creation")
    # swap then detection loss on A2 compose into a single pure-loss channel
    state = loss_channel(state, 1, params.T * params.eta, phase=SWAP_PHASE)
    state = loss_channel(state, 0, params.eta)
    return state.check_truncation("detected state")


def _expectation(rho, vec):
    return float(np.real(np.vdot(vec, rho @ vec)))


def _clip_probability(value, what):
    if value < -1e-12 or value > 1 + 1e-12:
        raise NumericalError(f"{what} = {value} is not a probability")
    return min(max(value, 0.0), 1.0)


def click_probabilities(state, alpha, beta, eta):
    """No-click probabilities ``(P(+1|alpha), P(+1|beta), P(+1+1|alpha, beta))``.

    ``state`` must already include the detection loss ``eta``; the
    displacements are rescaled to ``-sqrt(eta) alpha`` and ``-sqrt(eta) beta``.
    """
    eta = check_scalar(eta, "eta", lo=0.0, hi=1.0, lo_open=True)
    N = state.cutoff
    x = -math.sqrt(eta) * complex(alpha)
    y = -math.sqrt(eta) * complex(beta)
    for name, amp in (("alpha", x), ("beta", y)):
        if not N > _required_levels(amp):
            raise UnderTruncationError(
                f"effective displacement {name}={amp} needs a cutoff above {_required_levels(amp):.1f}, got {N}",
                cutoff=N,
            )
    cx, cy = coherent_vector(x, N), coherent_vector(y, N)
    pa = _clip_probability(_expectation(state.marginal(0), cx), "P(+1|alpha)")
    pb = _clip_probability(_expectation(state.marginal(1), cy), "P(+1|beta)")
    pab = _clip_probability(_expectation(state.rho, np.kron(cx, cy)), "P(+1+1|alpha,beta)")
    return pa, pb, pab


def split_distribution(populations):
    """Joint photon-number distribution behind a 50/50 splitter with a vacuum ancilla.

    Entry ``[k, l]`` is the probability of ``k`` photons in one output and ``l``
    in the other; each input photon leaves by either port with probability 1/2.
    """
    q = np.asarray(populations, dtype=float)
    N = q.size
    out = np.zeros((N, N))
    for n in range(N):
        k = np.arange(n + 1)
        out[k, n - k] += q[n] * comb(n, k) / 2.0**n
    return out


def coincidence_probability(state, mode):
    """Probability that both outputs of a 50/50 split of ``mode`` register a click."""
    rho = state.marginal(mode)
    dist = split_distribution(np.real(np.diag(rho)))
    p_out1_zero = dist[0, :].sum()
    p_out2_zero = dist[:, 0].sum()
    pc = 1.0 - p_out1_zero - p_out2_zero + dist[0, 0]
    return _clip_probability(float(pc), "coincidence probability")


def _phase_factor(state):
    n1, n2, m1, m2, v = state.entries()
    return n1, n2, m1, m2, v, (n1 - n2) - (m1 - m2)


def phase_rotate(state, phi):
    """Conjugate by ``exp(i phi n1) (x) exp(-i phi n2)``."""
    phi = check_scalar(phi, "phi")
    n1, n2, m1, m2, v, d = _phase_factor(state)
    return TwoModeState.from_entries(state.cutoff, n1, n2, m1, m2, v * np.exp(1j * phi * d))


def phase_average(state):
    """Average of :func:`phase_rotate` over a uniformly random phase.

    The average keeps exactly the entries with ``n1 - n2 == m1 - m2``.
    """
    n1, n2, m1, m2, v, d = _phase_factor(state)
    keep = d == 0
    return TwoModeState.from_entries(state.cutoff, n1[keep], n2[keep], m1[keep], m2[keep], v[keep])


def explicit_detector_no_click(rho, alpha, eta, work_cutoff=None):
    """No-click probability of an inefficient detector modelled with an ancilla.

    The single-mode state ``rho`` is displaced by ``D(alpha)``, mixed with a
    vacuum ancilla on a beamsplitter of transmission ``eta``
    (``exp(theta (a^dag c - a c^dag))`` with ``cos^2 theta = eta``), and the
    probability of finding the transmitted mode in vacuum is returned, the
    ancilla being traced out.
    """
    rho = np.asarray(rho, dtype=complex)
    k = rho.shape[0]
    W = work_cutoff or max(k + 30, int(math.ceil(_required_levels(alpha))) + k + 1)
    padded = np.zeros((W, W), dtype=complex)
    padded[:k, :k] = rho
    D = displacement_op(alpha, W)
    sigma = D @ padded @ D.conj().T
    theta = math.acos(math.sqrt(eta))
    A, C = _two_mode_ops((W, W))
    U = block_expm(theta * (A.T @ C - A @ C.T))
    _check_unitary(U, "detector beamsplitter")
    # rows with the detected mode in vacuum, columns with the ancilla in vacuum
    V0 = U[:W, :][:, ::W].toarray()
    return float(np.real(np.trace(V0 @ sigma @ V0.conj().T)))


def initial_cutoff(params, alpha=0.0, beta=0.0):
    """Starting cutoff for the adaptive search, from the largest relevant mean photon number."""
    p, n0, eta = params.p, params.n0, params.eta
    means = [
        n0,
        p / (1.0 - p),
        (n0 + p) / (1.0 - p),
        p * (1.0 + n0) / (1.0 - p),
        eta * abs(alpha) ** 2,
        eta * abs(beta) ** 2,
    ]
    m = max(means)
    return max(20, int(math.ceil(m + 6 * math.sqrt(m) + 10)) + 1)


def simulate_adaptive(params, alpha=0.0, beta=0.0, cutoff=None, max_cutoff=MAX_CUTOFF):
    """Simulate with a cutoff doubled until every truncation check passes.

    With an explicit ``cutoff`` no doubling takes place and truncation
    errors propagate. Returns ``(state, cutoff)``.
    """
    if cutoff is not None:
        state = simulate_protocol(params, cutoff)
        _probe_displacements(state, alpha, beta, params.eta)
        return state, cutoff
    N = initial_cutoff(params, alpha, beta)
    while True:
        try:
            state = simulate_protocol(params, N)
            _probe_displacements(state, alpha, beta, params.eta)
            return state, N
        except UnderTruncationError:
            if 2 * N > max_cutoff:
                raise
            N *= 2


def _probe_displacements(state, alpha, beta, eta):
    for amp in (alpha, beta):
        x = math.sqrt(eta) * abs(amp)
        if not state.cutoff > _required_levels(x):
            raise UnderTruncationError(f"cutoff {state.cutoff} too small for displacement {amp}", cutoff=state.cutoff)


def probability_set_from_state(state, alpha, beta, eta):
    """All witness probabilities measured on a detected two-mode state."""
    pops = state.populations()
    p_pp = pops[0, 0]
    p_pm = pops[0, 1:].sum()
    p_mp = pops[1:, 0].sum()
    p_mm = pops[1:, 1:].sum()
    pa, pb, pab = click_probabilities(state, alpha, beta, eta)
    return ClickProbabilitySet(
        p_pp=_clip_probability(p_pp, "P(++|0,0)"),
        p_pm=_clip_probability(p_pm, "P(+-|0,0)"),
        p_mp=_clip_probability(p_mp, "P(-+|0,0)"),
        p_mm=_clip_probability(p_mm, "P(--|0,0)"),
        pc_a1=coincidence_probability(state, 0),
        pc_a2=coincidence_probability(state, 1),
        q_singles_a=pa,
        q_singles_b=pb,
        q_joint=pab,
    )


def oracle_probability_set(params, alpha, beta, cutoff=None):
    """Oracle counterpart of :func:`optomech_witness.analytic.probability_set`.

    Returns ``(ClickProbabilitySet, cutoff_used)``.
    """
    state, used = simulate_adaptive(params, alpha, beta, cutoff=cutoff)
    return probability_set_from_state(state, alpha, beta, params.eta), used
