"""Square QAM constellations with unit-spaced odd-integer levels.

Points are left unnormalized: each real and imaginary part lies in
``{±1, ±3, ..., ±(2L-1)}``.  Scaling to a received amplitude is the job of
the per-user gain factor, not of the constellation.
"""
from dataclasses import dataclass
import enum

import numpy as np

from .errors import InvalidInputError

__all__ = ["QamSpec", "PartClass", "enumerate_points", "decide",
           "classify_part", "classify_parts", "draw_symbols", "is_member"]


@dataclass(frozen=True)
class QamSpec:
    """Square ``4 L^2``-point QAM.

    Parameters
    ----------
    level_count : int
        Number of positive levels per axis, ``L >= 1``.
    """

    level_count: int

    def __post_init__(self):
        if isinstance(self.level_count, bool) or int(self.level_count) != self.level_count \
                or self.level_count < 1:
            raise InvalidInputError(f"level_count must be a positive integer, got {self.level_count!r}")
        object.__setattr__(self, "level_count", int(self.level_count))

    @property
    def order(self):
        return 4 * self.level_count ** 2

    @property
    def max_level(self):
        """Largest per-axis level, ``2L - 1``."""
        return 2 * self.level_count - 1

    @property
    def levels(self):
        return np.arange(-self.max_level, self.max_level + 1, 2, dtype=float)

    @property
    def avg_energy(self):
        """Mean of ``|s|^2`` over the constellation (10 for 16-QAM)."""
        L = self.level_count
        # 2 * mean of (2k-1)^2 for k = 1..L  ==  2 (4L^2 - 1) / 3
        return 2.0 * (4 * L * L - 1) / 3.0


class PartClass(enum.Enum):
    """Position of one real or imaginary symbol coordinate within its levels."""

    INTERIOR = 0
    POS_EDGE = 1
    NEG_EDGE = 2


def enumerate_points(spec):
    """All constellation points, sorted lexicographically by ``(Re, Im)``."""
    lv = spec.levels
    re, im = np.meshgrid(lv, lv, indexing="ij")
    return (re + 1j * im).ravel()


def _decide_axis(v, max_level):
    lo = 2.0 * np.floor((v - 1.0) / 2.0) + 1.0   # largest odd level <= v
    hi = lo + 2.0
    d_lo = v - lo
    d_hi = hi - v
    out = np.where(d_lo < d_hi, lo, hi)
    # exact midpoints (even integers) go toward the smaller magnitude
    tie = d_lo == d_hi
    out = np.where(tie & (np.abs(lo) < np.abs(hi)), lo, out)
    return np.clip(out, -max_level, max_level)


def decide(spec, z):
    """Minimum-distance decision onto the constellation.

    Works elementwise on scalars or arrays.  The decision is separable, so
    each axis is rounded to the nearest odd level and clipped to the
    outermost level.  Exact midpoints (even integers) resolve toward the
    level of smaller magnitude.

    Raises
    ------
    InvalidInputError
        If any entry of `z` is not finite.
    """
    z = np.asarray(z)
    if not np.all(np.isfinite(z)):
        raise InvalidInputError("decide() needs finite input")
    re = _decide_axis(np.real(z).astype(float), spec.max_level)
    im = _decide_axis(np.imag(z).astype(float), spec.max_level)
    out = re + 1j * im
    return out[()] if out.ndim == 0 else out


def _check_levels(spec, parts):
    parts = np.asarray(parts, dtype=float)
    ok = (np.mod(parts, 2.0) == 1.0) & (np.abs(parts) <= spec.max_level)
    if not np.all(ok):
        bad = parts[~ok] if parts.ndim else parts
        raise InvalidInputError(
            f"{np.ravel(bad)[:3]} not in the level set of {spec.order}-QAM")
    return parts


def classify_part(spec, part):
    """Classify a single odd-integer coordinate as interior or edge."""
    p = float(_check_levels(spec, part))
    if p == spec.max_level:
        return PartClass.POS_EDGE
    if p == -spec.max_level:
        return PartClass.NEG_EDGE
    return PartClass.INTERIOR


def classify_parts(spec, parts):
    """Vectorized :func:`classify_part`; returns integer ``PartClass`` values."""
    p = _check_levels(spec, parts)
    out = np.full(p.shape, PartClass.INTERIOR.value, dtype=np.int8)
    out[p == spec.max_level] = PartClass.POS_EDGE.value
    out[p == -spec.max_level] = PartClass.NEG_EDGE.value
    return out


def is_member(spec, s):
    s = np.asarray(s)
    parts = np.concatenate([np.ravel(np.real(s)), np.ravel(np.imag(s))])
    return bool(np.all((np.mod(parts, 2.0) == 1.0) & (np.abs(parts) <= spec.max_level)))


def draw_symbols(spec, seed, count):
    """Draw `count` i.i.d. uniform constellation points.

    The same `seed` always reproduces the same sequence.
    """
    if count < 0:
        raise InvalidInputError("count must be non-negative")
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, spec.order, size=int(count))
    return enumerate_points(spec)[idx]
