"""Gaussian tail functions and SEP bounds for square QAM.

A symbol coordinate survives detection when the residual plus noise stays
inside its decision cell.  This module turns a per-user SEP requirement into
the box on the residual ``b = h^H x - d s`` that guarantees it.
"""
from dataclasses import dataclass
import math

import numpy as np
from scipy import special

from .constellation import PartClass, QamSpec, classify_parts, is_member
from .errors import DomainError, InvalidInputError

__all__ = ["q_func", "q_inv", "per_part_eps", "GainConstants", "gain_constants",
           "SepBounds", "build_bounds", "analytic_sep_part", "analytic_sep_symbol",
           "sinr_target_from_sep"]

_SQRT2 = math.sqrt(2.0)


def q_func(x):
    """Standard Gaussian tail ``Q(x) = Pr(Z > x)``; accepts arrays and ``±inf``."""
    out = 0.5 * special.erfc(np.asarray(x, dtype=float) / _SQRT2)
    return out[()] if out.ndim == 0 else out


def _q_inv_scalar(p, tol):
    # Newton on Q(x) - p from a close start, kept inside a shrinking bracket
    x = -float(special.ndtri(p))
    lo, hi = -40.0, 40.0
    for _ in range(100):
        f = q_func(x) - p
        if f > 0:
            lo = x
        else:
            hi = x
        dens = math.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)
        step = f / dens if dens > 0 else math.inf
        x_new = x + step
        if not (lo < x_new < hi):
            x_new = 0.5 * (lo + hi)
        if abs(x_new - x) <= tol * max(1.0, abs(x)):
            return x_new
        x = x_new
    return x


def q_inv(p, tol=1e-12):
    """Inverse of :func:`q_func` on ``(0, 1)``.

    Raises
    ------
    DomainError
        If any ``p`` is not strictly inside ``(0, 1)``.
    """
    arr = np.asarray(p, dtype=float)
    if np.any(~(arr > 0.0)) or np.any(~(arr < 1.0)):
        raise DomainError(f"Q^-1 needs 0 < p < 1, got {p!r}; unattainable or vacuous SEP requirement")
    out = np.vectorize(lambda v: _q_inv_scalar(v, tol), otypes=[float])(arr)
    return out[()] if out.ndim == 0 else out


def per_part_eps(eps):
    """Per-axis budget ``1 - sqrt(1 - eps)``.

    Meeting it on both the real and the imaginary axis keeps the symbol SEP
    at or below `eps`.
    """
    eps = np.asarray(eps, dtype=float)
    if np.any((eps < 0) | (eps > 1)):
        raise InvalidInputError("eps must lie in [0, 1]")
    # eps / (1 + sqrt(1 - eps)) avoids cancellation for small eps
    out = eps / (1.0 + np.sqrt(1.0 - eps))
    return out[()] if out.ndim == 0 else out


@dataclass(frozen=True)
class GainConstants:
    """Bound constants for one user (or arrays of them, one entry per user).

    ``alpha`` is the smallest gain that leaves an interior coordinate any
    slack, ``beta`` is the distance an edge coordinate must keep from its
    single decision boundary.
    """

    alpha: object
    beta: object
    noise_std: float


def gain_constants(noise_std, eps):
    """Compute ``alpha`` and ``beta`` for noise std ``noise_std`` and SEP ``eps``.

    `eps` may be a scalar or an array of per-user requirements.
    """
    if not noise_std > 0:
        raise InvalidInputError("noise_std must be positive")
    eb = per_part_eps(eps)
    scale = noise_std / _SQRT2
    return GainConstants(alpha=scale * q_inv(eb / 2.0), beta=scale * q_inv(eb),
                         noise_std=float(noise_std))


@dataclass(frozen=True)
class SepBounds:
    """Residual bounds for one symbol slot.

    The SEP requirement holds whenever, per user ``i``::

        -d_i + a_re[i] <= Re(b_i) <= d_i - c_re[i]
        -d_i + a_im[i] <= Im(b_i) <= d_i - c_im[i]

    Unbounded sides carry ``-inf`` in ``a`` or ``c``; no finite sentinel is
    ever used.
    """

    a_re: np.ndarray
    a_im: np.ndarray
    c_re: np.ndarray
    c_im: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray

    @property
    def n_users(self):
        return self.a_re.shape[0]

    def interval(self, d):
        """Return ``(lower, upper)``, each stacked as ``[Re; Im]`` (length 2K)."""
        d = np.broadcast_to(np.asarray(d, dtype=float), self.a_re.shape)
        lower = np.concatenate([-d + self.a_re, -d + self.a_im])
        upper = np.concatenate([d - self.c_re, d - self.c_im])
        return lower, upper


def _as_specs(specs, K):
    if isinstance(specs, QamSpec):
        return [specs] * K
    specs = list(specs)
    if len(specs) != K:
        raise InvalidInputError(f"expected {K} QAM specs, got {len(specs)}")
    return specs


def _bound_pair(cls, alpha, beta):
    a = np.where(cls == PartClass.INTERIOR.value, alpha,
                 np.where(cls == PartClass.POS_EDGE.value, beta, -np.inf))
    c = np.where(cls == PartClass.INTERIOR.value, alpha,
                 np.where(cls == PartClass.POS_EDGE.value, -np.inf, beta))
    return a, c


def build_bounds(specs, symbols, gains):
    """Fill the four bound vectors for one slot of symbols.

    Parameters
    ----------
    specs : QamSpec or sequence of QamSpec
        One constellation per user (a single spec is shared).
    symbols : array_like, shape (K,)
        Current symbol of every user.
    gains : GainConstants
        ``alpha``/``beta`` as scalars or length-K arrays.
    """
    s = np.atleast_1d(np.asarray(symbols, dtype=complex))
    K = s.shape[0]
    specs = _as_specs(specs, K)
    alpha = np.broadcast_to(np.asarray(gains.alpha, dtype=float), (K,)).copy()
    beta = np.broadcast_to(np.asarray(gains.beta, dtype=float), (K,)).copy()
    cls_re = np.empty(K, dtype=np.int8)
    cls_im = np.empty(K, dtype=np.int8)
    for i, spec in enumerate(specs):
        if not is_member(spec, s[i]):
            raise InvalidInputError(f"symbol {s[i]} of user {i} is not a {spec.order}-QAM point")
        cls_re[i] = classify_parts(spec, s[i].real)
        cls_im[i] = classify_parts(spec, s[i].imag)
    a_re, c_re = _bound_pair(cls_re, alpha, beta)
    a_im, c_im = _bound_pair(cls_im, alpha, beta)
    return SepBounds(a_re=a_re, a_im=a_im, c_re=c_re, c_im=c_im, alpha=alpha, beta=beta)


def analytic_sep_part(d, b_part, noise_std, cls):
    """Exact error probability of one coordinate given gain, residual and class."""
    k = _SQRT2 / noise_std
    cls = PartClass(cls)
    if cls is PartClass.INTERIOR:
        return q_func(k * (d - b_part)) + q_func(k * (d + b_part))
    if cls is PartClass.POS_EDGE:
        return q_func(k * (d + b_part))
    return q_func(k * (d - b_part))


def analytic_sep_symbol(sep_re, sep_im):
    """Symbol SEP from independent per-axis error probabilities."""
    return 1.0 - (1.0 - sep_re) * (1.0 - sep_im)


def sinr_target_from_sep(avg_energy, eps):
    """SINR target that meets SEP `eps` when interference is treated as Gaussian."""
    if not np.all(np.asarray(avg_energy) > 0):
        raise InvalidInputError("avg_energy must be positive")
    eb = per_part_eps(eps)
    return 0.5 * np.asarray(avg_energy, dtype=float) * q_inv(eb / 2.0) ** 2
