"""Reference implementations used only by the tests.

Each oracle is deliberately naive and shares no code with the package:
brute-force active-set enumeration for the QPs, grid search for the
min-max problem, bisection on ``math.erfc`` for the Gaussian tail
inverse, and plain Monte Carlo with a hand-written slicer for the SEP.
"""
import itertools
import math

import numpy as np


def qfunc(x):
    return 0.5 * math.erfc(x / math.sqrt(2.0))


def qinv_bisect(p, lo=-40.0, hi=40.0, iters=200):
    """x with Q(x) = p by bisection; Q is decreasing."""
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if qfunc(mid) > p:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def quad_value(P, q, x, r=0.0):
    return float(x @ P @ x + q @ x + r)


def box_qp_bruteforce(P, q, lo, hi, tol=1e-9):
    """Minimize x^T P x + q^T x over a box by visiting all 3^n faces.

    For each face (every coordinate at its lower bound, upper bound, or
    free) the free coordinates solve the stationarity equations of that
    face; the best feasible candidate is the global minimizer of the
    convex problem.
    """
    n = len(q)
    best_x, best_f = None, math.inf
    for pattern in itertools.product((0, 1, 2), repeat=n):
        x = np.zeros(n)
        ok = True
        for i, c in enumerate(pattern):
            if c == 0:
                if not np.isfinite(lo[i]):
                    ok = False
                    break
                x[i] = lo[i]
            elif c == 1:
                if not np.isfinite(hi[i]):
                    ok = False
                    break
                x[i] = hi[i]
        if not ok:
            continue
        free = [i for i, c in enumerate(pattern) if c == 2]
        fixed = [i for i, c in enumerate(pattern) if c != 2]
        if free:
            Pff = P[np.ix_(free, free)]
            rhs = -q[free] - 2.0 * P[np.ix_(free, fixed)] @ x[fixed]
            xf, *_ = np.linalg.lstsq(2.0 * Pff, rhs, rcond=None)
            x[free] = xf
        if np.all(x >= lo - tol) and np.all(x <= hi + tol):
            f = quad_value(P, q, x)
            if f < best_f:
                best_x, best_f = x, f
    return best_x, best_f


def ineq_qp_bruteforce(P, q, A, b, tol=1e-9):
    """Minimize x^T P x + q^T x s.t. A x <= b by enumerating active sets.

    Returns ``(None, inf)`` if no candidate is feasible.
    """
    n = len(q)
    m = len(b)
    best_x, best_f = None, math.inf
    for k in range(0, min(m, n) + 1):
        for act in itertools.combinations(range(m), k):
            act = list(act)
            Aa = A[act]
            K = np.block([[2.0 * P, Aa.T], [Aa, np.zeros((k, k))]])
            rhs = np.concatenate([-q, b[act]])
            sol, *_ = np.linalg.lstsq(K, rhs, rcond=None)
            x = sol[:n]
            if np.abs(Aa @ x - b[act]).max(initial=0.0) > 1e-7:
                continue
            if np.all(A @ x <= b + tol):
                f = quad_value(P, q, x)
                if f < best_f:
                    best_x, best_f = x, f
    return best_x, best_f


def minmax_grid(quads, lins, consts, lo, hi, A=None, b=None, points=41, rounds=None):
    """Minimize max_t f_t(x) over a box (and optional A x <= b) by zooming grids.

    Each round evaluates a uniform grid, then shrinks the search window to
    a few cells around the best point (slowly, since the max of several
    quadratics has kinks along which a fast zoom can lose the optimum).
    Adequate for n <= 4.
    """
    n = len(lo)
    lo = np.asarray(lo, float).copy()
    hi = np.asarray(hi, float).copy()
    box_lo, box_hi = lo.copy(), hi.copy()
    best_x, best_f = None, math.inf
    pts = points if n <= 2 else (21 if n == 3 else 13)
    span = 5 if n <= 2 else 4
    if rounds is None:
        rounds = 12 if n <= 2 else 30
    for _ in range(rounds):
        axes = [np.linspace(lo[i], hi[i], pts) for i in range(n)]
        X = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, n)
        vals = np.full(X.shape[0], -np.inf)
        for P, q, r in zip(quads, lins, consts):
            vals = np.maximum(vals, np.einsum("ij,jk,ik->i", X, P, X) + X @ q + r)
        if A is not None:
            vals[np.any(X @ A.T > b + 1e-12, axis=1)] = np.inf
        k = int(np.argmin(vals))
        if vals[k] < best_f:
            best_x, best_f = X[k].copy(), float(vals[k])
        width = (hi - lo) / (pts - 1)
        lo = np.maximum(best_x - span * width, box_lo)
        hi = np.minimum(best_x + span * width, box_hi)
    return best_x, best_f


def slice_axis(v, max_level):
    """Nearest odd integer in [-max_level, max_level] (ties never matter here)."""
    k = np.round((v - 1.0) / 2.0)
    return np.clip(2.0 * k + 1.0, -max_level, max_level)


def mc_sep_part(d, b, noise_std, level, max_level, n, rng):
    """Monte Carlo error rate of one axis: receive d*level + b + noise, scale, slice."""
    noise = rng.standard_normal(n) * (noise_std / math.sqrt(2.0))
    y = (d * level + b + noise) / d
    p = float(np.mean(slice_axis(y, max_level) != level))
    return p, math.sqrt(max(p * (1.0 - p), 1e-300) / n)
