"""Transmit-signal construction for the multiuser MISO downlink.

All schemes share the symbol-perturbed zero-forcing form
``x = H^+ (D s + u)``: plain ZF uses ``u = 0``, symbol-level precoding
optimizes ``u`` inside the SEP box, and any linear beamformer whose columns
lie in the row space of ``H`` corresponds to ``u = (H W - D) s``.
"""
from dataclasses import dataclass
import logging

import numpy as np
import scipy.sparse as sp

from .constellation import QamSpec
from .errors import (ChannelError, ConvergenceError, InfeasibleGainsError,
                     InvalidInputError, PreconditionError, SolverError)
from .qp import BoxQp, IneqQp, MinMaxQp, Status, solve_box_qp, solve_ineq_qp, solve_minmax_qp
from .sep import GainConstants, build_bounds, gain_constants

__all__ = ["ChannelState", "PrecodeOutput", "BeamformerMatrix", "BlockDesign",
           "zf_precode", "slp_per_symbol", "slp_direct", "linear_bf_as_perturbed_zf",
           "sinr_beamforming", "heuristic_gains", "block_average_design",
           "block_peak_design", "precode_block", "zf_block", "linear_bf_block"]

logger = logging.getLogger(__name__)

COND_WARN = 1e8


def _readonly(a):
    a = np.array(a)
    a.setflags(write=False)
    return a


class ChannelState:
    """Channel matrix with its pseudo-inverse and inverse Gram matrix.

    Parameters
    ----------
    h : array_like, shape (K, N)
        Row ``i`` is ``h_i^H``, the conjugated channel of user ``i``.

    Attributes
    ----------
    pseudo_inverse : ndarray, shape (N, K)
        ``H^H (H H^H)^{-1}``.
    gram_inverse : ndarray, shape (K, K)
        ``R = (H H^H)^{-1}``.
    lifted_gram : ndarray, shape (2K, 2K)
        Real form of ``R``, shared by every per-slot problem on this channel.
    condition : float
        Condition number of ``H H^H``.
    """

    def __init__(self, h):
        H = np.atleast_2d(np.asarray(h, dtype=complex))
        K, N = H.shape
        if K > N:
            raise ChannelError(f"need K <= N, got K={K}, N={N}")
        if not np.all(np.isfinite(H)):
            raise ChannelError("channel has non-finite entries")
        U, sv, Vh = np.linalg.svd(H, full_matrices=False)
        if sv[-1] <= 1e-10 * sv[0]:
            raise ChannelError(f"channel is rank deficient (singular values {sv[0]:.3g} .. {sv[-1]:.3g})")
        pinv = (Vh.conj().T / sv) @ U.conj().T
        R = (U / sv ** 2) @ U.conj().T
        R = 0.5 * (R + R.conj().T)
        self.h_matrix = _readonly(H)
        self.pseudo_inverse = _readonly(pinv)
        self.gram_inverse = _readonly(R)
        self.lifted_gram = _readonly(np.block([[R.real, -R.imag], [R.imag, R.real]]))
        self.singular_values = _readonly(sv)
        self.condition = float((sv[0] / sv[-1]) ** 2)
        if self.condition > COND_WARN:
            logger.warning("ill-conditioned channel: cond(HH^H) = %.3g", self.condition)

    @property
    def n_users(self):
        return self.h_matrix.shape[0]

    @property
    def n_antennas(self):
        return self.h_matrix.shape[1]

    def row_space_residual(self, w):
        """``||(I - H^+ H) w||`` (Frobenius), zero iff ``w`` lies in the row space."""
        w = np.asarray(w, dtype=complex)
        return float(np.linalg.norm(w - self.pseudo_inverse @ (self.h_matrix @ w)))


@dataclass
class PrecodeOutput:
    """Transmit vector of one slot.

    ``residual`` is ``H x - D s``; ``u`` is the symbol perturbation (zero for ZF).
    """

    x: np.ndarray
    u: np.ndarray
    energy: float
    residual: np.ndarray
    report: object = None


@dataclass
class BeamformerMatrix:
    """Linear beamformer ``W = [w_1, ..., w_K]``.

    ``gains`` holds the effective amplitude ``h_i^H w_i`` (real, positive)
    that user ``i`` divides by before detection.
    """

    w: np.ndarray
    sinr_achieved: np.ndarray
    total_power: float
    gains: np.ndarray = None
    iterations: int = 0


@dataclass
class BlockDesign:
    """Gains and perturbations for a whole block of ``T`` slots."""

    gains: np.ndarray
    perturbations: np.ndarray    # K x T
    x: np.ndarray                # N x T
    avg_power: float
    peak_energy: float
    report: object = None

    @property
    def energies(self):
        return np.sum(np.abs(self.x) ** 2, axis=0)


def _as_gains(gains, K):
    d = np.broadcast_to(np.asarray(gains, dtype=float), (K,)).copy()
    if not np.all(np.isfinite(d)) or np.any(d <= 0):
        raise InvalidInputError("gains must be finite and positive")
    return d


def _as_symbols(s, K):
    s = np.asarray(s, dtype=complex).reshape(-1)
    if s.shape != (K,):
        raise InvalidInputError(f"expected {K} symbols, got {s.shape}")
    return s


def _output(ch, x, d, s, u, report=None):
    res = ch.h_matrix @ x - d * s
    return PrecodeOutput(x=x, u=u, energy=float(np.vdot(x, x).real), residual=res, report=report)


def zf_precode(ch, gains, s):
    """Zero-forcing: ``x = H^+ D s`` so that ``H x = D s`` exactly."""
    K = ch.n_users
    d = _as_gains(gains, K)
    s = _as_symbols(s, K)
    x = ch.pseudo_inverse @ (d * s)
    return _output(ch, x, d, s, np.zeros(K, dtype=complex))


def _box(bounds, d):
    lower, upper = bounds.interval(d)
    if np.any(lower > upper):
        bad = np.flatnonzero(lower > upper) % bounds.n_users
        raise InfeasibleGainsError(
            f"gains too small for users {sorted(set(bad.tolist()))}: need d_i >= alpha_i")
    return lower, upper


def slp_per_symbol(ch, bounds, gains, s, tol=1e-8):
    """SEP-constrained SLP for one slot, solved as a box QP in ``u``.

    The optimal transmit vector is ``x = H^+ (D s + u*)`` where ``u*``
    minimizes ``(D s + u)^H R (D s + u)`` over the SEP box.

    Raises
    ------
    InfeasibleGainsError
        If some interval ``[-d_i + a, d_i - c]`` is empty.
    SolverError
        If the box QP does not reach `tol`.
    """
    K = ch.n_users
    d = _as_gains(gains, K)
    s = _as_symbols(s, K)
    lower, upper = _box(bounds, d)
    P = ch.lifted_gram
    w0 = d * s
    cv = np.concatenate([w0.real, w0.imag])
    rep = solve_box_qp(BoxQp(P, 2.0 * (P @ cv), lower, upper), tol=tol)
    if rep.status is not Status.OPTIMAL:
        raise SolverError(f"per-symbol box QP ended with {rep.status.value}", rep)
    u = rep.x[:K] + 1j * rep.x[K:]
    x = ch.pseudo_inverse @ (w0 + u)
    return _output(ch, x, d, s, u, rep)


def _lifted_h(H):
    return np.block([[H.real, -H.imag], [H.imag, H.real]])


def slp_direct(ch, bounds, gains, s, tol=1e-10):
    """Solve the per-slot SLP problem directly over ``x`` (real-lifted).

    Minimizes ``||x||^2`` subject to the SEP box on ``H x - D s``.  Exists to
    cross-check :func:`slp_per_symbol`; both must return the same ``x``.
    """
    K, N = ch.n_users, ch.n_antennas
    d = _as_gains(gains, K)
    s = _as_symbols(s, K)
    lower, upper = _box(bounds, d)
    Hl = _lifted_h(ch.h_matrix)
    w0 = d * s
    cv = np.concatenate([w0.real, w0.imag])
    up = np.isfinite(upper)
    lo = np.isfinite(lower)
    A = np.vstack([Hl[up], -Hl[lo]])
    b = np.concatenate([upper[up] + cv[up], -(lower[lo] + cv[lo])])
    rep = solve_ineq_qp(IneqQp(np.eye(2 * N), np.zeros(2 * N), A, b), tol=tol)
    if rep.status is not Status.OPTIMAL:
        raise SolverError(f"direct SLP QP ended with {rep.status.value}", rep)
    x = rep.x[:N] + 1j * rep.x[N:]
    out = _output(ch, x, d, s, None, rep)
    out.u = out.residual.copy()
    return out


def linear_bf_as_perturbed_zf(ch, w, gains, s, tol=1e-8):
    """Rewrite the linear beamformer ``x = W s`` as ``H^+ (D s + u)``.

    Requires every column of ``W`` to lie in the row space of ``H``.

    Raises
    ------
    PreconditionError
        If ``||(I - H^+ H) W|| > tol * max(1, ||W||)``.
    """
    W = np.asarray(w.w if isinstance(w, BeamformerMatrix) else w, dtype=complex)
    K = ch.n_users
    d = _as_gains(gains, K)
    s = _as_symbols(s, K)
    if ch.row_space_residual(W) > tol * max(1.0, np.linalg.norm(W)):
        raise PreconditionError("beamformer has a component outside the row space of H")
    u = (ch.h_matrix @ W) @ s - d * s
    x = ch.pseudo_inverse @ (d * s + u)
    return _output(ch, x, d, s, u)


def _sinr(H, W, rho, noise_var):
    G = np.abs(H @ W) ** 2 * rho[None, :]
    sig = np.diag(G).copy()
    return sig / (G.sum(axis=1) - sig + noise_var)


def sinr_beamforming(ch, targets, rho, noise_var, tol=1e-10, max_iter=10_000):
    """Minimum-power linear beamforming under per-user SINR targets.

    Uses the uplink-downlink duality fixed point: dual uplink powers are
    iterated to convergence, the normalized MMSE receive filters give the
    beam directions, and downlink powers follow from a K x K linear system
    that makes every SINR constraint tight.

    Parameters
    ----------
    targets : array_like, shape (K,)
        SINR requirements ``gamma_i > 0``.
    rho : array_like, shape (K,)
        Symbol energies ``E|s_i|^2``.
    noise_var : float

    Returns
    -------
    BeamformerMatrix
        ``w`` has each column rotated so that ``h_i^H w_i`` is real positive.
    """
    H = ch.h_matrix
    K, N = H.shape
    gamma = np.broadcast_to(np.asarray(targets, dtype=float), (K,)).copy()
    rho = np.broadcast_to(np.asarray(rho, dtype=float), (K,)).copy()
    if np.any(gamma <= 0) or np.any(rho <= 0) or not noise_var > 0:
        raise InvalidInputError("targets, rho and noise_var must be positive")
    hs = H.conj()   # column i of hs.T is h_i
    lam = np.zeros(K)
    it = 0
    for it in range(1, max_iter + 1):
        S = noise_var * np.eye(N) + (H.conj().T * lam) @ H
        X = np.linalg.solve(S, hs.T)                   # S^-1 h_i in column i
        a = np.real(np.einsum("in,ni->i", H, X))
        lam_new = 1.0 / ((1.0 + 1.0 / gamma) * a)
        done = np.max(np.abs(lam_new - lam)) <= tol * np.max(np.abs(lam_new))
        lam = lam_new
        if done:
            break
    else:
        raise ConvergenceError(f"uplink power iteration did not converge in {max_iter} steps")
    S = noise_var * np.eye(N) + (H.conj().T * lam) @ H
    U = np.linalg.solve(S, hs.T)
    U = U / np.linalg.norm(U, axis=0)
    G = np.abs(H @ U) ** 2
    M = -G.copy()
    M[np.diag_indices(K)] = np.diag(G) / gamma
    p = np.linalg.solve(M, np.full(K, noise_var))
    if np.any(p <= 0):
        raise ConvergenceError("downlink power system gave non-positive powers")
    Wt = U * np.sqrt(p)
    ph = np.einsum("in,ni->i", H, Wt)
    Wt = Wt * np.exp(-1j * np.angle(ph))[None, :]
    W = Wt / np.sqrt(rho)
    return BeamformerMatrix(w=W, sinr_achieved=_sinr(H, W, rho, noise_var),
                            total_power=float(np.sum(rho * np.sum(np.abs(W) ** 2, axis=0))),
                            gains=np.real(np.einsum("in,ni->i", H, W)), iterations=it)


def heuristic_gains(gains_constants, zeta):
    """Gains ``d_i = zeta * alpha_i``; `zeta` must be at least 1."""
    if not zeta >= 1.0:
        raise InvalidInputError(f"zeta must be >= 1, got {zeta}")
    return zeta * np.atleast_1d(np.asarray(gains_constants.alpha, dtype=float))


# ---------------------------------------------------------------------------
# block designs


def _block_bounds(specs, symbol_block, gc):
    K, T = symbol_block.shape
    lows, ups = [], []
    for t in range(T):
        bd = build_bounds(specs, symbol_block[:, t], gc)
        lows.append(np.concatenate([bd.a_re, bd.a_im]))
        ups.append(np.concatenate([bd.c_re, bd.c_im]))
    # a (lower offsets) and c (upper offsets), each 2K x T
    return np.stack(lows, axis=1), np.stack(ups, axis=1)


def _block_structure(ch, specs, symbol_block, gc):
    """Selector ``E`` with ``E z = [M_t d + v_t]_t`` plus the SEP constraints.

    The variable is ``z = [v_1; ...; v_T; d]`` with ``v_t = [Re u_t; Im u_t]``.
    """
    S = np.asarray(symbol_block, dtype=complex)
    K, T = S.shape
    nv = 2 * K * T
    n = nv + K
    a, c = _block_bounds(specs, S, gc)
    rows, cols, vals = [], [], []
    for t in range(T):
        base = 2 * K * t
        rows.append(base + np.arange(2 * K))
        cols.append(base + np.arange(2 * K))
        vals.append(np.ones(2 * K))
        rows.append(base + np.arange(2 * K))
        cols.append(nv + np.tile(np.arange(K), 2))
        vals.append(np.concatenate([S[:, t].real, S[:, t].imag]))
    E = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(nv, n))
    E.eliminate_zeros()

    # lower: -v - d <= -a ; upper: v - d <= -c ; gains: -d <= 0
    var = np.arange(nv)
    user = nv + np.tile(np.arange(K), 2 * T)
    a_f, c_f = a.T.reshape(-1), c.T.reshape(-1)     # slot-major, matches var order
    lo = np.isfinite(a_f)
    up = np.isfinite(c_f)
    r_lo = np.arange(lo.sum())
    r_up = lo.sum() + np.arange(up.sum())
    r_d = lo.sum() + up.sum() + np.arange(K)
    m = r_d[-1] + 1
    A = sp.csr_matrix((np.concatenate([-np.ones(lo.sum()), -np.ones(lo.sum()),
                                       np.ones(up.sum()), -np.ones(up.sum()), -np.ones(K)]),
                       (np.concatenate([r_lo, r_lo, r_up, r_up, r_d]),
                        np.concatenate([var[lo], user[lo], var[up], user[up], nv + np.arange(K)]))),
                      shape=(m, n))
    b = np.concatenate([-a_f[lo], -c_f[up], np.zeros(K)])
    return E, A, b


def _finish_block(ch, S, z, report):
    K, T = S.shape
    nv = 2 * K * T
    d = z[nv:]
    V = z[:nv].reshape(T, 2 * K).T
    U = V[:K] + 1j * V[K:]
    X = ch.pseudo_inverse @ (d[:, None] * S + U)
    e = np.sum(np.abs(X) ** 2, axis=0)
    return BlockDesign(gains=d, perturbations=U, x=X, avg_power=float(e.mean()),
                       peak_energy=float(e.max()), report=report)


def _gc(noise_std, eps, K):
    gc = gain_constants(noise_std, eps)
    return GainConstants(alpha=np.broadcast_to(gc.alpha, (K,)).copy(),
                         beta=np.broadcast_to(gc.beta, (K,)).copy(), noise_std=gc.noise_std)


def block_average_design(ch, specs, symbol_block, noise_std, eps, tol=1e-9):
    """Jointly optimal gains and perturbations minimizing block-average power.

    Solved as one linear-inequality QP in ``z = [v_1; ...; v_T; d]``; the
    objective ``(1/T) sum_t (D s_t + u_t)^H R (D s_t + u_t)`` is quadratic
    in ``z`` because ``D s_t = Diag(s_t) d``.
    """
    S = np.atleast_2d(np.asarray(symbol_block, dtype=complex))
    K, T = S.shape
    if K != ch.n_users or T < 1:
        raise InvalidInputError("symbol block must be K x T with T >= 1")
    gc = _gc(noise_std, eps, K)
    E, A, b = _block_structure(ch, specs, S, gc)
    PR = sp.kron(sp.identity(T), sp.csr_matrix(ch.lifted_gram))
    Q = (E.T @ PR @ E) / T
    rep = solve_ineq_qp(IneqQp(sp.csr_matrix(Q), np.zeros(E.shape[1]), A, b), tol=tol)
    if rep.status is not Status.OPTIMAL:
        raise SolverError(f"block average design ended with {rep.status.value}", rep)
    return _finish_block(ch, S, rep.x, rep)


def block_peak_design(ch, specs, symbol_block, noise_std, eps, tol=1e-9):
    """Jointly optimal gains and perturbations minimizing the peak slot energy."""
    S = np.atleast_2d(np.asarray(symbol_block, dtype=complex))
    K, T = S.shape
    if K != ch.n_users or T < 1:
        raise InvalidInputError("symbol block must be K x T with T >= 1")
    gc = _gc(noise_std, eps, K)
    E, A, b = _block_structure(ch, specs, S, gc)
    PR = sp.csr_matrix(ch.lifted_gram)
    n = E.shape[1]
    quads = []
    for t in range(T):
        Et = E[2 * K * t:2 * K * (t + 1)]
        quads.append(sp.csr_matrix(Et.T @ PR @ Et))
    # start from v = 0 with gains comfortably above alpha (a feasible point)
    z0 = np.zeros(n)
    z0[2 * K * T:] = 1.5 * gc.alpha
    rep = solve_minmax_qp(MinMaxQp(quads, np.zeros((T, n)), np.zeros(T), A, b), tol=tol, x0=z0)
    if rep.status is not Status.OPTIMAL:
        raise SolverError(f"block peak design ended with {rep.status.value}", rep)
    return _finish_block(ch, S, rep.x, rep)


# ---------------------------------------------------------------------------
# per-slot schemes applied over a block


def _collect(ch, S, d, outs, reports=None):
    X = np.stack([o.x for o in outs], axis=1)
    U = np.stack([o.u for o in outs], axis=1)
    e = np.sum(np.abs(X) ** 2, axis=0)
    return BlockDesign(gains=d, perturbations=U, x=X, avg_power=float(e.mean()),
                       peak_energy=float(e.max()), report=reports)


def precode_block(ch, specs, symbol_block, gains, gc, tol=1e-8):
    """Per-symbol SLP with fixed gains on every slot of a block."""
    S = np.atleast_2d(np.asarray(symbol_block, dtype=complex))
    K, T = S.shape
    d = _as_gains(gains, K)
    outs = [slp_per_symbol(ch, build_bounds(specs, S[:, t], gc), d, S[:, t], tol=tol)
            for t in range(T)]
    return _collect(ch, S, d, outs, [o.report for o in outs])


def zf_block(ch, symbol_block, gains):
    S = np.atleast_2d(np.asarray(symbol_block, dtype=complex))
    d = _as_gains(gains, S.shape[0])
    return _collect(ch, S, d, [zf_precode(ch, d, S[:, t]) for t in range(S.shape[1])])


def linear_bf_block(ch, bf, symbol_block):
    """Linear beamforming ``x_t = W s_t``; receivers use ``d_i = h_i^H w_i``."""
    S = np.atleast_2d(np.asarray(symbol_block, dtype=complex))
    d = bf.gains
    outs = [linear_bf_as_perturbed_zf(ch, bf, d, S[:, t]) for t in range(S.shape[1])]
    return _collect(ch, S, d, outs)
