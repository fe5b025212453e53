"""Monte Carlo link simulation for the precoding schemes.

One *realization* is a channel draw plus one block of ``T`` symbols.  For
each SEP requirement ``eps`` in the grid the configured schemes design
their transmit block, and the received signal is simulated with fresh
noise to estimate each user's symbol error rate.

Seeding
-------
Everything derives from ``SimConfig.seed`` through
:class:`numpy.random.SeedSequence` spawn keys:

* ``(0, r)`` -- channel of realization ``r``
* ``(1, r)`` -- symbol block of realization ``r`` (shared by every ``eps``)
* ``(2, r, scheme_id, eps_index)`` -- detection noise of one cell

so any cell can be recomputed in isolation and results do not depend on
how cells are distributed over worker processes.
"""
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
import logging
import math
import re
import zlib

import numpy as np

from .constellation import QamSpec, decide, draw_symbols
from .errors import ChannelError, InvalidInputError, SlpError
from .precoders import (ChannelState, block_average_design, block_peak_design,
                        heuristic_gains, linear_bf_block, precode_block,
                        sinr_beamforming, zf_block)
from .sep import gain_constants, sinr_target_from_sep

__all__ = ["SimConfig", "TrialResult", "SepEstimate", "gen_channel", "transmit_receive",
           "estimate_sep", "run_experiment", "summarize", "scheme_name", "parse_scheme"]

logger = logging.getLogger(__name__)

DEFAULT_EPS_GRID = (0.10, 0.05, 0.02, 0.01, 0.005)
DEFAULT_SCHEMES = ("ZF", "LinearBF", "SlpHeuristic(1)", "SlpHeuristic(1.2)",
                   "SlpBlockAvg", "SlpBlockPeak")
_HEUR = re.compile(r"^SlpHeuristic\(\s*([^)]+?)\s*\)$")
_PLAIN = ("ZF", "LinearBF", "SlpBlockAvg", "SlpBlockPeak")


def scheme_name(kind, zeta=None):
    """Canonical scheme label, e.g. ``scheme_name("SlpHeuristic", 1.2)``."""
    if kind == "SlpHeuristic":
        return f"SlpHeuristic({float(zeta):g})"
    return kind


def parse_scheme(name):
    """Split a scheme label into ``(kind, zeta)``; `zeta` is None except for heuristics."""
    name = name.strip()
    if name in _PLAIN:
        return name, None
    m = _HEUR.match(name)
    if m:
        try:
            zeta = float(m.group(1))
        except ValueError:
            raise InvalidInputError(f"bad zeta in scheme {name!r}") from None
        if not zeta >= 1.0:
            raise InvalidInputError(f"zeta must be >= 1 in scheme {name!r}")
        return "SlpHeuristic", zeta
    raise InvalidInputError(f"unknown scheme {name!r}")


def _field_error(name, msg):
    exc = InvalidInputError(msg)
    exc.field = name
    return exc


@dataclass
class SimConfig:
    """Experiment parameters.

    Attributes
    ----------
    n_antennas, n_users : int
        ``N`` and ``K``; ``K <= N`` is required.
    block_len : int
        Slots per block ``T``.
    qam_level : int
        ``L`` of the square ``(2L)^2``-QAM alphabet; ``L = 2`` is 16-QAM.
    noise_var : float
        Receiver noise variance.
    eps_grid : sequence of float
        SEP requirements, each in (0, 1).
    n_channels : int
        Number of channel realizations.
    schemes : sequence of str
        Scheme labels, see :func:`parse_scheme`.
    seed : int
    sep_trials : int
        Noise trials per user per cell for the empirical SEP.
    failure_budget : int
        Number of degraded cells tolerated by the command-line runner.
    """

    n_antennas: int = 16
    n_users: int = 16
    block_len: int = 50
    qam_level: int = 2
    noise_var: float = 1.0
    eps_grid: tuple = DEFAULT_EPS_GRID
    n_channels: int = 100
    schemes: tuple = DEFAULT_SCHEMES
    seed: int = 0
    sep_trials: int = 200_000
    failure_budget: int = 0

    def __post_init__(self):
        try:
            self.eps_grid = tuple(float(e) for e in self.eps_grid)
        except (TypeError, ValueError):
            raise _field_error("eps_grid", f"eps_grid must be numbers, got {self.eps_grid!r}") from None
        try:
            self.schemes = tuple(scheme_name(*parse_scheme(s)) for s in self.schemes)
        except InvalidInputError as exc:
            raise _field_error("schemes", str(exc)) from None
        for name in ("n_antennas", "n_users", "block_len", "qam_level", "n_channels",
                     "sep_trials", "seed", "failure_budget"):
            v = getattr(self, name)
            try:
                ok = not isinstance(v, bool) and int(v) == v
            except (TypeError, ValueError):
                ok = False
            if not ok:
                raise _field_error(name, f"{name} must be an integer, got {v!r}")
            setattr(self, name, int(v))
        if self.n_users < 1 or self.n_users > self.n_antennas:
            raise _field_error("n_users", "need 1 <= n_users <= n_antennas, "
                               f"got K={self.n_users}, N={self.n_antennas}")
        for name in ("block_len", "qam_level", "n_channels", "sep_trials"):
            if getattr(self, name) < 1:
                raise _field_error(name, f"{name} must be >= 1")
        for name in ("seed", "failure_budget"):
            if getattr(self, name) < 0:
                raise _field_error(name, f"{name} must be non-negative")
        try:
            self.noise_var = float(self.noise_var)
        except (TypeError, ValueError):
            raise _field_error("noise_var", f"noise_var must be a number, got {self.noise_var!r}") from None
        if not (math.isfinite(self.noise_var) and self.noise_var > 0):
            raise _field_error("noise_var", "noise_var must be positive and finite")
        if not self.eps_grid:
            raise _field_error("eps_grid", "eps_grid is empty")
        for e in self.eps_grid:
            if not 0.0 < e < 1.0:
                raise _field_error("eps_grid",
                                   f"unattainable SEP requirement: eps={e!r} is not in (0, 1)")
        if not self.schemes:
            raise _field_error("schemes", "no schemes configured")
        if len(set(self.schemes)) != len(self.schemes):
            raise _field_error("schemes", "duplicate scheme")

    @property
    def spec(self):
        return QamSpec(self.qam_level)

    @property
    def noise_std(self):
        return math.sqrt(self.noise_var)

    def as_dict(self):
        return {
            "n_antennas": self.n_antennas, "n_users": self.n_users,
            "block_len": self.block_len, "qam_level": self.qam_level,
            "noise_var": self.noise_var, "eps_grid": list(self.eps_grid),
            "n_channels": self.n_channels, "schemes": list(self.schemes),
            "seed": self.seed, "sep_trials": self.sep_trials,
            "failure_budget": self.failure_budget,
        }


@dataclass
class SepEstimate:
    """Per-user empirical SEP with its binomial standard error."""

    sep: np.ndarray
    stderr: np.ndarray
    trials: int


@dataclass
class TrialResult:
    """Metrics of one (realization, eps, scheme) cell.

    Degraded cells carry NaN metrics and the failure in ``message``.
    """

    realization: int
    eps: float
    scheme: str
    avg_power: float
    peak_energy: float
    empirical_sep: np.ndarray
    sep_stderr: np.ndarray
    gains: np.ndarray
    degraded: bool = False
    message: str = ""
    solver: dict = field(default_factory=dict)

    @property
    def max_emp_sep(self):
        return float(np.max(self.empirical_sep)) if not self.degraded else math.nan


def _sub_seed(seed, *key):
    ss = np.random.SeedSequence(entropy=seed, spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(2, dtype=np.uint64)[0] >> np.uint64(1))


def _scheme_id(name):
    return zlib.crc32(name.encode("utf-8"))


def gen_channel(seed, K, N, max_attempts=20):
    """I.i.d. ``CN(0, 1)`` channel, resampled if numerically rank deficient.

    Attempt ``j`` uses seed ``seed + j``; each resample is logged.
    """
    if K > N:
        raise ChannelError(f"need K <= N, got K={K}, N={N}")
    for attempt in range(max_attempts):
        rng = np.random.default_rng(seed + attempt)
        H = (rng.standard_normal((K, N)) + 1j * rng.standard_normal((K, N))) / math.sqrt(2.0)
        try:
            return ChannelState(H)
        except ChannelError as exc:
            logger.warning("channel seed %d rejected (%s); resampling", seed + attempt, exc)
    raise ChannelError(f"no usable channel after {max_attempts} attempts")


def transmit_receive(ch, x_block, noise_std, seed):
    """``y_t = H x_t + v_t`` with ``v ~ CN(0, noise_std^2 I)``; returns K x T."""
    X = np.asarray(x_block, dtype=complex)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] != ch.n_antennas:
        raise InvalidInputError(f"x_block needs {ch.n_antennas} rows, got {X.shape[0]}")
    Y = ch.h_matrix @ X
    if noise_std > 0:
        rng = np.random.default_rng(seed)
        v = rng.standard_normal(Y.shape + (2,)) * (noise_std / math.sqrt(2.0))
        Y = Y + (v[..., 0] + 1j * v[..., 1])
    return Y


def estimate_sep(ch, x_block, symbols, gains, specs, noise_std, n_draws, seed,
                 chunk_elems=2_000_000):
    """Empirical per-user SEP of a transmitted block.

    Each of the ``T`` slots is received ``ceil(n_draws / T)`` times with
    independent noise, so every user sees at least `n_draws` detection
    trials conditioned on the transmitted symbols.  Receivers scale by
    their gain and apply minimum-distance detection.
    """
    if n_draws < 1:
        raise InvalidInputError("n_draws must be >= 1")
    S = np.atleast_2d(np.asarray(symbols, dtype=complex))
    K, T = S.shape
    X = np.asarray(x_block, dtype=complex).reshape(ch.n_antennas, T)
    d = np.broadcast_to(np.asarray(gains, dtype=float), (K,))
    if isinstance(specs, QamSpec):
        specs = [specs] * K
    reps = -(-int(n_draws) // T)
    clean = (ch.h_matrix @ X)[:, :, None]
    rng = np.random.default_rng(seed)
    errors = np.zeros(K, dtype=np.int64)
    per = max(1, chunk_elems // (K * T))
    done = 0
    while done < reps:
        c = min(per, reps - done)
        v = rng.standard_normal((K, T, c, 2)) * (noise_std / math.sqrt(2.0))
        y = (clean + (v[..., 0] + 1j * v[..., 1])) / d[:, None, None]
        for i in range(K):
            errors[i] += np.count_nonzero(decide(specs[i], y[i]) != S[i][:, None])
        done += c
    M = reps * T
    p = errors / M
    return SepEstimate(sep=p, stderr=np.sqrt(p * (1.0 - p) / M), trials=M)


def _report_stats(report):
    if report is None:
        return {}
    reps = report if isinstance(report, list) else [report]
    reps = [r for r in reps if r is not None]
    if not reps:
        return {}
    return {
        "status": sorted({r.status.value for r in reps}),
        "iterations": int(sum(r.iterations for r in reps)),
        "max_kkt": float(max(r.kkt_residual for r in reps)),
    }


def _design(cfg, ch, S, kind, zeta, eps):
    spec = cfg.spec
    gc = gain_constants(cfg.noise_std, eps)
    K = cfg.n_users
    if kind == "ZF":
        return zf_block(ch, S, np.full(K, gc.alpha)), {}
    if kind == "LinearBF":
        gamma = sinr_target_from_sep(spec.avg_energy, eps)
        bf = sinr_beamforming(ch, np.full(K, gamma), np.full(K, spec.avg_energy), cfg.noise_var)
        return linear_bf_block(ch, bf, S), {"iterations": bf.iterations}
    if kind == "SlpHeuristic":
        des = precode_block(ch, spec, S, heuristic_gains(gc, zeta) * np.ones(K), gc)
        return des, _report_stats(des.report)
    if kind == "SlpBlockAvg":
        des = block_average_design(ch, spec, S, cfg.noise_std, eps)
        return des, _report_stats(des.report)
    if kind == "SlpBlockPeak":
        des = block_peak_design(ch, spec, S, cfg.noise_std, eps)
        return des, _report_stats(des.report)
    raise InvalidInputError(f"unknown scheme kind {kind!r}")


def _run_realization(cfg, r):
    ch = gen_channel(_sub_seed(cfg.seed, 0, r), cfg.n_users, cfg.n_antennas)
    K, T = cfg.n_users, cfg.block_len
    S = draw_symbols(cfg.spec, _sub_seed(cfg.seed, 1, r), K * T).reshape(K, T)
    out = []
    for j, eps in enumerate(cfg.eps_grid):
        for name in cfg.schemes:
            kind, zeta = parse_scheme(name)
            try:
                des, stats = _design(cfg, ch, S, kind, zeta, eps)
                est = estimate_sep(ch, des.x, S, des.gains, cfg.spec, cfg.noise_std,
                                   cfg.sep_trials, _sub_seed(cfg.seed, 2, r, _scheme_id(name), j))
                out.append(TrialResult(r, eps, name, des.avg_power, des.peak_energy, est.sep,
                                       est.stderr, np.asarray(des.gains, dtype=float),
                                       solver=stats))
            except SlpError as exc:
                logger.warning("realization %d, eps=%g, %s degraded: %s", r, eps, name, exc)
                nan = np.full(K, np.nan)
                out.append(TrialResult(r, eps, name, math.nan, math.nan, nan, nan, nan,
                                       degraded=True, message=str(exc)))
    return out


def run_experiment(cfg, threads=1, progress=None):
    """Run every (realization, eps, scheme) cell of `cfg`.

    Parameters
    ----------
    cfg : SimConfig
    threads : int
        Worker processes; realizations are distributed over them.  Results
        are identical for any value.
    progress : callable, optional
        Called as ``progress(done, total)`` after each realization.

    Returns
    -------
    list of TrialResult
        Ordered by realization, then eps (grid order), then scheme (config order).
    """
    if threads < 1:
        raise InvalidInputError("threads must be >= 1")
    n = cfg.n_channels
    blocks = [None] * n
    if threads == 1 or n == 1:
        for r in range(n):
            blocks[r] = _run_realization(cfg, r)
            if progress:
                progress(r + 1, n)
    else:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            futs = {pool.submit(_run_realization, cfg, r): r for r in range(n)}
            done = 0
            for fut in futs:
                blocks[futs[fut]] = fut.result()
                done += 1
                if progress:
                    progress(done, n)
    return [row for blk in blocks for row in blk]


def summarize(results, cfg=None):
    """Means over realizations per (scheme, eps), skipping degraded cells.

    Returns a list of dicts with keys ``scheme, eps, mean_avg_power,
    mean_peak_energy, max_emp_sep, n_trials, n_degraded``.
    """
    schemes = list(cfg.schemes) if cfg else list(dict.fromkeys(r.scheme for r in results))
    grid = list(cfg.eps_grid) if cfg else list(dict.fromkeys(r.eps for r in results))
    rows = []
    for name in schemes:
        for eps in grid:
            cell = [r for r in results if r.scheme == name and r.eps == eps]
            ok = [r for r in cell if not r.degraded]
            rows.append({
                "scheme": name,
                "eps": eps,
                "mean_avg_power": float(np.mean([r.avg_power for r in ok])) if ok else math.nan,
                "mean_peak_energy": float(np.mean([r.peak_energy for r in ok])) if ok else math.nan,
                "max_emp_sep": float(max(r.max_emp_sep for r in ok)) if ok else math.nan,
                "n_trials": len(cell),
                "n_degraded": len(cell) - len(ok),
            })
    return rows
