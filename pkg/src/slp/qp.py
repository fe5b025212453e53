"""Dense (and block-sparse) convex quadratic solvers.

Every quadratic here uses the convention ``f(x) = x^T P x + q^T x (+ r)``,
without the customary factor 1/2, so that lifted Hermitian forms
``w^H R w`` carry over unchanged.  The gradient is therefore ``2 P x + q``.

Three problem classes are supported:

* :class:`BoxQp` -- bounds only, solved by accelerated projected gradient
  with Newton steps on the current face;
* :class:`IneqQp` -- general ``A x <= b``, solved by a primal-dual interior
  point method (an ADMM variant is kept for comparison);
* :class:`MinMaxQp` -- minimize the largest of several quadratics, solved by
  a log-barrier method on the epigraph form.

Matrices may be dense ndarrays or ``scipy.sparse`` matrices wherever the
block problems benefit from sparsity.
"""
from dataclasses import dataclass, field
import enum
import logging

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import InvalidInputError

__all__ = ["Status", "SolveReport", "BoxQp", "IneqQp", "MinMaxQp",
           "lift_complex_quadratic", "solve_box_qp", "solve_ineq_qp",
           "solve_minmax_qp", "box_qp_objective"]

logger = logging.getLogger(__name__)

PSD_TOL = 1e-8
SYM_TOL = 1e-10


class Status(enum.Enum):
    OPTIMAL = "optimal"
    MAX_ITER = "max_iter"
    INFEASIBLE = "infeasible"


@dataclass
class SolveReport:
    """Outcome of a solver call.

    ``kkt_residual`` is the largest of the (scaled) stationarity, primal
    feasibility and complementarity residuals; ``status`` is ``OPTIMAL``
    only if it is at most the requested tolerance.
    """

    x: np.ndarray
    objective: float
    kkt_residual: float
    iterations: int
    status: Status
    dual: np.ndarray = None
    info: dict = field(default_factory=dict)

    @property
    def ok(self):
        return self.status is Status.OPTIMAL


def _norm_inf(v):
    return float(np.max(np.abs(v))) if np.size(v) else 0.0


def _check_psd(P, name="quad"):
    """Validate symmetry and PSD-ness; tiny negative eigenvalues are clipped."""
    if sp.issparse(P):
        P = sp.csr_matrix(P, dtype=float)
        asym = abs(P - P.T).max() if P.nnz else 0.0
        scale = abs(P).max() if P.nnz else 0.0
        if asym > SYM_TOL * max(1.0, scale):
            raise InvalidInputError(f"{name} is not symmetric (residual {asym:.3g})")
        # no eigen check for sparse input; block assemblers build PSD by construction
        return (P + P.T) * 0.5
    P = np.array(P, dtype=float, copy=True)
    if P.ndim != 2 or P.shape[0] != P.shape[1]:
        raise InvalidInputError(f"{name} must be square, got shape {P.shape}")
    if P.size == 0:
        return P
    scale = np.abs(P).max()
    asym = np.abs(P - P.T).max()
    if asym > SYM_TOL * max(1.0, scale):
        raise InvalidInputError(f"{name} is not symmetric (residual {asym:.3g})")
    P = 0.5 * (P + P.T)
    w, V = np.linalg.eigh(P)
    norm = max(np.abs(w).max(), 0.0)
    if w[0] < -PSD_TOL * max(norm, 1e-300):
        raise InvalidInputError(f"{name} is not positive semidefinite (min eigenvalue {w[0]:.3g})")
    if w[0] < 0:
        P = (V * np.maximum(w, 0.0)) @ V.T
        P = 0.5 * (P + P.T)
    return P


# ---------------------------------------------------------------------------
# problem descriptions


@dataclass(frozen=True)
class BoxQp:
    """``min x^T P x + q^T x`` subject to ``lower <= x <= upper``.

    Bounds may contain ``-inf``/``+inf``.
    """

    quad: np.ndarray
    lin: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        P = _check_psd(self.quad)
        n = P.shape[0]
        q = np.asarray(self.lin, dtype=float).reshape(-1)
        lo = np.broadcast_to(np.asarray(self.lower, dtype=float), (n,)).copy()
        hi = np.broadcast_to(np.asarray(self.upper, dtype=float), (n,)).copy()
        if q.shape != (n,):
            raise InvalidInputError("lin has the wrong length")
        if np.any(np.isnan(lo)) or np.any(np.isnan(hi)):
            raise InvalidInputError("bounds must not be NaN")
        object.__setattr__(self, "quad", P)
        object.__setattr__(self, "lin", q)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def n(self):
        return self.lin.shape[0]

    def objective(self, x):
        return float(x @ (self.quad @ x) + self.lin @ x)


@dataclass(frozen=True)
class IneqQp:
    """``min x^T P x + q^T x`` subject to ``A x <= b``."""

    quad: object
    lin: np.ndarray
    a: object
    b: np.ndarray

    def __post_init__(self):
        P = _check_psd(self.quad)
        n = P.shape[0]
        q = np.asarray(self.lin, dtype=float).reshape(-1)
        if q.shape != (n,):
            raise InvalidInputError("lin has the wrong length")
        A = self.a
        if A is None:
            A = np.zeros((0, n))
        A = sp.csr_matrix(A, dtype=float) if sp.issparse(A) else np.atleast_2d(np.asarray(A, dtype=float))
        if A.shape[0] == 0:
            A = np.zeros((0, n))
        b = np.asarray(self.b if self.b is not None else np.zeros(0), dtype=float).reshape(-1)
        if A.shape[1] != n or A.shape[0] != b.shape[0]:
            raise InvalidInputError(f"constraint shapes {A.shape} / {b.shape} do not match n={n}")
        if not np.all(np.isfinite(b)):
            raise InvalidInputError("rhs b must be finite; drop rows with infinite bounds")
        object.__setattr__(self, "quad", P)
        object.__setattr__(self, "lin", q)
        object.__setattr__(self, "a", A)
        object.__setattr__(self, "b", b)

    @property
    def n(self):
        return self.lin.shape[0]

    @property
    def m(self):
        return self.b.shape[0]

    def objective(self, x):
        return float(x @ (self.quad @ x) + self.lin @ x)


@dataclass(frozen=True)
class MinMaxQp:
    """``min max_t f_t(x)`` with ``f_t(x) = x^T P_t x + q_t^T x + r_t``, s.t. ``A x <= b``."""

    quads: tuple
    lins: np.ndarray
    consts: np.ndarray
    a: object = None
    b: np.ndarray = None

    def __post_init__(self):
        quads = tuple(_check_psd(P, name=f"quads[{t}]") for t, P in enumerate(self.quads))
        if not quads:
            raise InvalidInputError("need at least one quadratic")
        n = quads[0].shape[0]
        if any(P.shape != (n, n) for P in quads):
            raise InvalidInputError("all quadratics must share one dimension")
        T = len(quads)
        lins = np.asarray(self.lins, dtype=float).reshape(T, n)
        consts = np.broadcast_to(np.asarray(self.consts, dtype=float), (T,)).copy()
        base = IneqQp(np.zeros((0, 0)) if n == 0 else sp.csr_matrix((n, n)), np.zeros(n),
                      self.a, self.b)
        object.__setattr__(self, "quads", quads)
        object.__setattr__(self, "lins", lins)
        object.__setattr__(self, "consts", consts)
        object.__setattr__(self, "a", base.a)
        object.__setattr__(self, "b", base.b)

    @property
    def n(self):
        return self.lins.shape[1]

    def values(self, x):
        return np.array([x @ (P @ x) for P in self.quads]) + self.lins @ x + self.consts

    def objective(self, x):
        return float(np.max(self.values(x)))


# ---------------------------------------------------------------------------
# complex -> real lifting


def lift_complex_quadratic(R, shift):
    """Real form of ``(c + u)^H R (c + u)`` in ``v = [Re u; Im u]``.

    Returns ``(P, q, r)`` such that the complex form equals
    ``v^T P v + q^T v + r`` for every ``u``.

    Raises
    ------
    InvalidInputError
        If `R` is not Hermitian to within ``1e-8`` (relative).
    """
    R = np.asarray(R, dtype=complex)
    c = np.asarray(shift, dtype=complex).reshape(-1)
    if R.ndim != 2 or R.shape[0] != R.shape[1] or R.shape[0] != c.shape[0]:
        raise InvalidInputError("R must be K x K and shift length K")
    herm = np.abs(R - R.conj().T).max() if R.size else 0.0
    if herm > 1e-8 * max(1.0, np.abs(R).max() if R.size else 0.0):
        raise InvalidInputError(f"R is not Hermitian (residual {herm:.3g})")
    R = 0.5 * (R + R.conj().T)
    P = np.block([[R.real, -R.imag], [R.imag, R.real]])
    cv = np.concatenate([c.real, c.imag])
    Pc = P @ cv
    return P, 2.0 * Pc, float(cv @ Pc)


# ---------------------------------------------------------------------------
# box QP


def box_qp_objective(p, x):
    return p.objective(x)


def _pg_residual(P, q, lo, hi, x):
    g = 2.0 * (P @ x) + q
    return _norm_inf(x - np.clip(x - g, lo, hi))


def _infeasible_report(n, msg):
    return SolveReport(x=np.full(n, np.nan), objective=np.inf, kkt_residual=np.inf,
                       iterations=0, status=Status.INFEASIBLE, info={"message": msg})


def solve_box_qp(p, tol=1e-8, max_iter=100_000, x0=None, newton_every=10):
    """Solve a :class:`BoxQp` by accelerated projected gradient.

    The iteration runs in Jacobi-scaled coordinates (a diagonal change of
    variables keeps the feasible set a box), restarts its momentum whenever
    the objective would increase, and every `newton_every` steps tries a
    Newton step restricted to the current free variables.  Once the active
    set is identified that step lands on the exact minimizer.

    The stopping test is ``||x - clip(x - grad f(x))||_inf <= tol``.
    """
    P, q, lo, hi = p.quad, p.lin, p.lower, p.upper
    n = p.n
    if np.any(lo > hi):
        return _infeasible_report(n, "empty box")
    if n == 0:
        return SolveReport(np.zeros(0), 0.0, 0.0, 0, Status.OPTIMAL)

    dg = np.diag(P).copy()
    s = np.where(dg > 0, 1.0 / np.sqrt(np.where(dg > 0, dg, 1.0)), 1.0)
    Ps = P * s[:, None] * s[None, :]
    qs = q * s
    los, his = lo / s, hi / s
    lip = 2.0 * float(np.linalg.eigvalsh(Ps)[-1])
    if lip <= 0:
        lip = 1.0

    def f(y):
        return float(y @ (Ps @ y) + qs @ y)

    def grad(y):
        return 2.0 * (Ps @ y) + qs

    def residual(y):
        return _pg_residual(P, q, lo, hi, s * y)

    y = np.zeros(n) if x0 is None else np.asarray(x0, dtype=float) / s
    y = np.clip(y, los, his)
    fy = f(y)
    z = y.copy()
    theta = 1.0
    res = residual(y)
    it = 0
    n_newton = 0
    while res > tol and it < max_iter:
        it += 1
        g = grad(z)
        y_new = np.clip(z - g / lip, los, his)
        f_new = f(y_new)
        if f_new > fy:
            # monotone restart from the last accepted iterate
            theta = 1.0
            y_new = np.clip(y - grad(y) / lip, los, his)
            f_new = f(y_new)
            z = y_new.copy()
        else:
            theta_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * theta * theta))
            z = y_new + ((theta - 1.0) / theta_next) * (y_new - y)
            theta = theta_next
        if f_new <= fy:
            y, fy = y_new, f_new
        if it % newton_every == 0:
            y_nt = _face_newton(Ps, qs, los, his, y, fy, f, grad, residual)
            if y_nt is not None:
                n_newton += 1
                y = y_nt
                fy = f(y)
                z = y.copy()
                theta = 1.0
        res = residual(y)

    x = s * y
    status = Status.OPTIMAL if res <= tol else Status.MAX_ITER
    return SolveReport(x=x, objective=p.objective(x), kkt_residual=res, iterations=it,
                       status=status, info={"newton_steps": n_newton})


def _face_newton(Ps, qs, los, his, y, fy, f, grad, residual):
    g = grad(y)
    at_lo = (y <= los) & (g > 0)
    at_hi = (y >= his) & (g < 0)
    free = ~(at_lo | at_hi)
    if not np.any(free):
        return None
    H = 2.0 * Ps[np.ix_(free, free)]
    try:
        c, low = sla.cho_factor(H, check_finite=False)
        d_free = -sla.cho_solve((c, low), g[free], check_finite=False)
    except np.linalg.LinAlgError:
        d_free = -np.linalg.lstsq(H, g[free], rcond=None)[0]
    d = np.zeros_like(y)
    d[free] = d_free
    step = 1.0
    for _ in range(30):
        cand = np.clip(y + step * d, los, his)
        if f(cand) < fy:
            return cand
        step *= 0.5
    # near the optimum the decrease drowns in round-off; accept the full
    # step if the objective stays level and the optimality residual drops
    cand = np.clip(y + d, los, his)
    fc = f(cand)
    level = 1e-14 * (1.0 + abs(fy) + float(np.abs(qs * y).sum()))
    if fc <= fy + level and residual(cand) < residual(y):
        return cand
    return None


# ---------------------------------------------------------------------------
# linear-inequality QP


class _Factor:
    """Cholesky (dense) or sparse LU of a symmetric positive definite matrix."""

    def __init__(self, M):
        self.sparse = sp.issparse(M)
        if self.sparse:
            M = sp.csc_matrix(M)
            # symmetric positive definite: no pivoting needed, keep sparsity
            opts = dict(permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                        options=dict(SymmetricMode=True))
            try:
                self._lu = spla.splu(M, **opts)
            except RuntimeError:
                reg = 1e-12 * max(1.0, abs(M).max())
                self._lu = spla.splu(M + reg * sp.identity(M.shape[0], format="csc"), **opts)
        else:
            try:
                self._cho = sla.cho_factor(M, check_finite=False)
                self._lu = None
            except np.linalg.LinAlgError:
                self._cho = None
                self._lu = sla.lu_factor(M + 1e-12 * max(1.0, np.abs(M).max()) * np.eye(M.shape[0]),
                                         check_finite=False)

    def solve(self, rhs):
        if self.sparse:
            return self._lu.solve(rhs)
        if self._cho is not None:
            return sla.cho_solve(self._cho, rhs, check_finite=False)
        return sla.lu_solve(self._lu, rhs, check_finite=False)


def _scaled_kkt(p, x, z):
    """Scaled residuals ``(primal, dual, gap)`` of an IneqQp at ``(x, z)``."""
    P, q, A, b = p.quad, p.lin, p.a, p.b
    Px2 = 2.0 * (P @ x)
    Ax = A @ x
    Atz = A.T @ z if p.m else np.zeros_like(x)
    prim = _norm_inf(np.maximum(Ax - b, 0.0)) / (1.0 + max(_norm_inf(b), _norm_inf(Ax)))
    dual = _norm_inf(Px2 + q + Atz) / (1.0 + max(_norm_inf(Px2), _norm_inf(q), _norm_inf(Atz)))
    slack = np.maximum(b - Ax, 0.0)
    obj = float(x @ (0.5 * Px2) + q @ x)
    gap = float(np.abs(z) @ slack) / (1.0 + abs(obj)) if p.m else 0.0
    return prim, dual, gap


def _kkt_value(p, x, z):
    return max(_scaled_kkt(p, x, z))


def solve_ineq_qp(p, tol=1e-8, method="ipm", max_iter=None, polish=True):
    """Solve an :class:`IneqQp`.

    Parameters
    ----------
    p : IneqQp
    tol : float
        Bound on the scaled KKT residual (see :func:`_scaled_kkt`).
    method : {"ipm", "admm"}
        ``"ipm"`` is a Mehrotra predictor-corrector interior point method and
        is the default.  ``"admm"`` runs operator splitting with a cached
        factorization; it is accurate on well-conditioned problems but needs
        many thousands of iterations on the block designs.
    max_iter : int, optional
        Defaults to 200 (ipm) or 100000 (admm).
    polish : bool
        Re-solve the equality system on the detected active set and keep
        the result when its residual is smaller.
    """
    if method == "admm":
        rep = _solve_ineq_admm(p, tol=tol, max_iter=max_iter or 100_000)
    elif method == "ipm":
        rep = _solve_ineq_ipm(p, tol=tol, max_iter=max_iter or 200)
    else:
        raise InvalidInputError(f"unknown method {method!r}")
    if polish and rep.status is not Status.INFEASIBLE and p.m:
        pol = _polish(p, rep)
        if pol is not None:
            rep = pol
    if rep.status is not Status.INFEASIBLE:
        rep.status = Status.OPTIMAL if rep.kkt_residual <= tol else Status.MAX_ITER
    return rep


def _unconstrained(p, tol):
    P2 = 2.0 * p.quad
    if sp.issparse(P2):
        x = _Factor(P2).solve(-p.lin)
    else:
        x = np.linalg.lstsq(P2, -p.lin, rcond=None)[0]
    kkt = _kkt_value(p, x, np.zeros(0))
    return SolveReport(x=x, objective=p.objective(x), kkt_residual=kkt, iterations=1,
                       status=Status.OPTIMAL if kkt <= tol else Status.MAX_ITER, dual=np.zeros(0))


def _row_scale(A):
    if sp.issparse(A):
        r = np.asarray(abs(A).max(axis=1).todense()).reshape(-1)
    else:
        r = np.abs(A).max(axis=1)
    r = np.where(r > 0, r, 1.0)
    return 1.0 / r


def _normal_matrix(Q, A, w):
    """``Q + A^T diag(w) A`` for dense or sparse operands."""
    if sp.issparse(A):
        M = A.T @ sp.diags(w) @ A
        return (sp.csc_matrix(Q) + M).tocsc() if sp.issparse(Q) else Q + M.toarray()
    M = (A.T * w) @ A
    return (Q + sp.csc_matrix(M)).tocsc() if sp.issparse(Q) else Q + M


def _solve_ineq_ipm(p, tol, max_iter):
    n, m = p.n, p.m
    if m == 0:
        return _unconstrained(p, tol)
    rs = _row_scale(p.a)
    A = sp.diags(rs) @ p.a if sp.issparse(p.a) else p.a * rs[:, None]
    A = sp.csr_matrix(A) if sp.issparse(A) else A
    b = p.b * rs
    Q = 2.0 * p.quad
    q = p.lin

    # starting point: regularized least squares, then shift slacks positive
    M0 = _normal_matrix(Q, A, np.ones(m))
    if sp.issparse(M0):
        M0 = M0 + 1e-8 * sp.identity(n, format="csc")
    else:
        M0 = M0 + 1e-8 * np.eye(n)
    x = _Factor(M0).solve(-q + A.T @ b)
    s = b - A @ x
    z = np.ones(m)
    shift = max(0.0, 1.0 - s.min())
    s = s + shift
    z_scale = max(1.0, _norm_inf(q) / max(1.0, np.sqrt(m)))
    z = z * z_scale

    best = None
    status = Status.MAX_ITER
    stall = 0
    prev_rp = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        Ax = A @ x
        rd = Q @ x + q + A.T @ z
        rp = Ax + s - b
        mu = float(s @ z) / m

        zr = z * rs
        kkt = _kkt_value(p, x, zr)
        if best is None or kkt < best[0]:
            best = (kkt, x.copy(), zr.copy())
        if kkt <= tol:
            break

        # Farkas certificate: A^T z ~ 0 with b^T z < 0
        zn = z / max(_norm_inf(z), 1e-300)
        if it > 5 and b @ zn < -1e-7 and _norm_inf(A.T @ zn) <= 1e-9 * max(1.0, abs(b @ zn)):
            status = Status.INFEASIBLE
            break
        nrp = _norm_inf(rp)
        if nrp > 1e-3 * (1.0 + _norm_inf(b)) and nrp >= 0.999 * prev_rp and _norm_inf(z) > 1e8:
            stall += 1
            if stall >= 10:
                status = Status.INFEASIBLE
                break
        else:
            stall = 0
        prev_rp = nrp

        w = z / s
        fac = _Factor(_normal_matrix(Q, A, w))

        def direction(rc):
            # Q dx + A^T dz = -rd ; A dx + ds = -rp ; Z ds + S dz = -rc
            rhs = -rd + A.T @ ((rc - z * rp) / s)
            dx = fac.solve(rhs)
            ds = -rp - A @ dx
            dz = (-rc - z * ds) / s
            return dx, ds, dz

        dx, ds, dz = direction(s * z)
        a_aff = min(1.0, _max_step(s, ds), _max_step(z, dz))
        mu_aff = float((s + a_aff * ds) @ (z + a_aff * dz)) / m
        sigma = min(1.0, (mu_aff / mu) ** 3) if mu > 0 else 0.0
        dx, ds, dz = direction(s * z + ds * dz - sigma * mu)
        alpha = min(1.0, 0.99 * min(_max_step(s, ds), _max_step(z, dz)))
        x = x + alpha * dx
        s = s + alpha * ds
        z = z + alpha * dz
        s = np.maximum(s, 1e-300)
        z = np.maximum(z, 1e-300)

    if status is Status.INFEASIBLE:
        rep = _infeasible_report(n, "infeasibility detected")
        rep.iterations = it
        return rep
    kkt, x, zr = best
    return SolveReport(x=x, objective=p.objective(x), kkt_residual=kkt, iterations=it,
                       status=Status.OPTIMAL if kkt <= tol else Status.MAX_ITER, dual=zr)


def _max_step(v, dv):
    neg = dv < 0
    if not np.any(neg):
        return np.inf
    return float(np.min(-v[neg] / dv[neg]))


def _solve_kkt(H, B, r1, r2, sweeps=6):
    """Solve ``[[H, B^T], [B, 0]] [u; v] = [r1; r2]``.

    Factorizes the quasi-definite regularization ``[[H + dI, B^T], [B, -dI]]``
    and refines against the exact matrix, so dependent rows of ``B`` (a
    degenerate active set) or a singular ``H`` do not break the solve.
    """
    n, m = H.shape[0], B.shape[0]
    H = sp.csc_matrix(H)
    B = sp.csc_matrix(B)
    K = sp.bmat([[H, B.T], [B, None]], format="csc") if m else H
    scale = max(1.0, abs(K).max()) if K.nnz else 1.0
    delta = 1e-9 * scale
    reg = sp.diags(np.concatenate([np.full(n, delta), np.full(m, -delta)]), format="csc")
    lu = spla.splu(sp.csc_matrix(K + reg))
    rhs = np.concatenate([r1, r2])
    sol = lu.solve(rhs)
    for _ in range(sweeps):
        sol = sol + lu.solve(rhs - K @ sol)
    return sol[:n], sol[n:]


def _polish(p, rep):
    """Re-solve the equality-constrained problem on the active set of `rep`."""
    x, z = rep.x, rep.dual
    if z is None:
        return None
    slack = p.b - p.a @ x
    act = np.flatnonzero(z > np.maximum(slack, 0.0))
    Aa = p.a[act]
    try:
        # solve for a correction from x: where the objective is flat the
        # regularization then keeps the step short instead of drifting
        dx, za = _solve_kkt(2.0 * p.quad, Aa, -(2.0 * (p.quad @ x) + p.lin), p.b[act] - Aa @ x)
        xp = x + dx
        # With a degenerate active set the multipliers are not unique and
        # the minimum-norm ones can be negative.  The smallest change to the
        # interior-point multipliers that restores stationarity at the
        # polished point usually stays nonnegative.
        g = 2.0 * (p.quad @ xp) + p.lin
        r = -g - Aa.T @ z[act]
        dz, _ = _solve_kkt(sp.identity(act.size), Aa.T, np.zeros(act.size), r)
    except (RuntimeError, ValueError):
        return None
    if not np.all(np.isfinite(xp)):
        return None
    best = None
    for cand in (za, z[act] + dz):
        if not np.all(np.isfinite(cand)):
            continue
        zp = np.zeros(p.m)
        zp[act] = np.maximum(cand, 0.0)
        k = _kkt_value(p, xp, zp)
        if best is None or k < best[0]:
            best = (k, zp)
    if best is None or best[0] >= rep.kkt_residual:
        return None
    kkt, zp = best
    return SolveReport(x=xp, objective=p.objective(xp), kkt_residual=kkt,
                       iterations=rep.iterations, status=rep.status, dual=zp,
                       info={**rep.info, "polished": True})


def _solve_ineq_admm(p, tol=1e-8, rho=1.0, sigma=1e-6, max_iter=100_000, check_every=10):
    """Operator splitting on ``min f(x) s.t. A x + s = b, s >= 0``.

    Stops on the same scaled KKT residual as the interior point method.
    """
    n, m = p.n, p.m
    if m == 0:
        return _unconstrained(p, tol)
    rs = _row_scale(p.a)
    A = sp.csr_matrix(sp.diags(rs) @ p.a) if sp.issparse(p.a) else p.a * rs[:, None]
    b = p.b * rs
    Q = 2.0 * p.quad
    q = p.lin
    M = _normal_matrix(Q, A, np.full(m, rho))
    M = M + sigma * (sp.identity(n, format="csc") if sp.issparse(M) else np.eye(n))
    fac = _Factor(M)
    x = np.zeros(n)
    zc = np.minimum(A @ x, b)
    y = np.zeros(m)
    status = Status.MAX_ITER
    it = 0
    for it in range(1, max_iter + 1):
        x = fac.solve(sigma * x - q + A.T @ (rho * zc - y))
        Ax = A @ x
        z_new = np.minimum(Ax + y / rho, b)
        dy = rho * (Ax - z_new)
        y = y + dy
        zc = z_new
        if it % check_every:
            continue
        if _kkt_value(p, x, np.maximum(y, 0.0) * rs) <= tol:
            status = Status.OPTIMAL
            break
        ndy = _norm_inf(dy)
        if ndy > 0 and _norm_inf(A.T @ dy) <= 1e-8 * ndy and b @ np.maximum(dy, 0) < -1e-8 * ndy:
            status = Status.INFEASIBLE
            break
    if status is Status.INFEASIBLE:
        rep = _infeasible_report(n, "primal infeasibility certificate")
        rep.iterations = it
        return rep
    zr = np.maximum(y, 0.0) * rs
    kkt = _kkt_value(p, x, zr)
    return SolveReport(x=x, objective=p.objective(x), kkt_residual=kkt, iterations=it,
                       status=Status.OPTIMAL if kkt <= tol else Status.MAX_ITER, dual=zr,
                       info={"method": "admm"})


# ---------------------------------------------------------------------------
# min-max QP via epigraph + log barrier


class _QuadStack:
    """Evaluate values, gradients and weighted Hessian sums of T quadratics."""

    def __init__(self, quads, lins, consts):
        self.T = len(quads)
        self.n = lins.shape[1]
        self.lins = lins
        self.consts = consts
        self.sparse = any(sp.issparse(P) for P in quads)
        if self.sparse:
            coo = [sp.coo_matrix(P) for P in quads]
            self._rows = np.concatenate([c.row for c in coo])
            self._cols = np.concatenate([c.col for c in coo])
            self._data = np.concatenate([c.data for c in coo])
            self._owner = np.concatenate([np.full(c.nnz, t) for t, c in enumerate(coo)])
            self._big = sp.csr_matrix(sp.vstack([sp.csr_matrix(P) for P in quads]))
        else:
            self._stack = np.stack([np.asarray(P, dtype=float) for P in quads])

    def px(self, x):
        if self.sparse:
            return (self._big @ x).reshape(self.T, self.n)
        return self._stack @ x

    def values(self, x, Px=None):
        Px = self.px(x) if Px is None else Px
        return Px @ x + self.lins @ x + self.consts

    def weighted(self, w):
        """``sum_t w_t P_t``."""
        if self.sparse:
            return sp.csc_matrix((self._data * w[self._owner], (self._rows, self._cols)),
                                 shape=(self.n, self.n))
        return np.tensordot(w, self._stack, axes=1)


def _minmax_polish(stack, A, b, x, tau, lam, z, w, s, kkt_of, kkt, sweeps=3, passes=6):
    """Newton steps on the KKT equations of an estimated active set.

    Constraints whose multiplier exceeds their slack at the last interior
    iterate start out as equalities.  The set is then corrected a few
    times: constraints whose multipliers come out negative are dropped,
    violated linear constraints are added, and multipliers that are
    negative only at round-off level are clipped to zero (degenerate
    constraints).  Returns the improved ``(kkt, x, lam, z, obj, tau)`` or
    None if nothing beat `kkt`.
    """
    m_lin = b.shape[0]
    act_q = lam > w
    act_l = (z > s) if m_lin else np.zeros(0, dtype=bool)
    if not act_q.any():
        return None
    n = x.size
    A = sp.csr_matrix(A) if m_lin else sp.csr_matrix((0, n))
    x0, tau0 = x, tau
    lam0, z0 = lam / max(lam.sum(), 1e-300), z / max(lam.sum(), 1e-300)
    out = None
    for _ in range(passes):
        q_idx = np.flatnonzero(act_q)
        l_idx = np.flatnonzero(act_l)
        if q_idx.size == 0:
            break
        Aa = A[l_idx]
        x, tau = x0, tau0
        lam_a, z_a = lam0[q_idx].copy(), z0[l_idx].copy()
        change = None
        for _ in range(sweeps):
            Px = stack.px(x)
            f = stack.values(x, Px)
            G = 2.0 * Px[q_idx] + stack.lins[q_idx]
            lam_full = np.zeros(stack.T)
            lam_full[q_idx] = lam_a
            H = sp.block_diag([sp.csc_matrix(stack.weighted(2.0 * lam_full)),
                               sp.csc_matrix((1, 1))], format="csc")
            B = sp.vstack([sp.hstack([sp.csr_matrix(G), sp.csr_matrix(-np.ones((q_idx.size, 1)))]),
                           sp.hstack([Aa, sp.csr_matrix((l_idx.size, 1))])], format="csr")
            grad = np.concatenate([G.T @ lam_a + Aa.T @ z_a, [1.0 - lam_a.sum()]])
            cons = np.concatenate([f[q_idx] - tau, Aa @ x - b[l_idx]])
            try:
                dy, dm = _solve_kkt(H, B, -grad, -cons)
            except (RuntimeError, ValueError):
                return out
            if not (np.all(np.isfinite(dy)) and np.all(np.isfinite(dm))):
                return out
            x = x + dy[:n]
            tau = tau + dy[n]
            lam_a = lam_a + dm[:q_idx.size]
            z_a = z_a + dm[q_idx.size:]
            # round-off level negatives belong to degenerate constraints
            tiny = 1e-10 * max(1.0, float(np.abs(lam_a).max()))
            lam_a[(lam_a < 0) & (lam_a > -tiny)] = 0.0
            if z_a.size:
                tiny_l = 1e-10 * max(1.0, float(np.abs(z_a).max()))
                z_a[(z_a < 0) & (z_a > -tiny_l)] = 0.0
            if np.any(lam_a < 0) or np.any(z_a < 0):
                change = "drop"
                break
            lam_full = np.zeros(stack.T)
            lam_full[q_idx] = lam_a
            z_full = np.zeros(m_lin)
            z_full[l_idx] = z_a
            k2, obj = kkt_of(x, lam_full, z_full)
            if k2 < kkt:
                kkt = k2
                out = (k2, x.copy(), lam_full, z_full, obj, tau)
        if change == "drop":
            act_q[q_idx[lam_a < 0]] = False
            act_l[l_idx[z_a < 0]] = False
            continue
        # add linear constraints the Newton point violates
        if m_lin:
            viol = (A @ x - b) > 1e-12 * (1.0 + np.abs(b))
            if np.any(viol & ~act_l):
                act_l |= viol
                continue
        break
    return out


def solve_minmax_qp(p, tol=1e-6, x0=None, max_iter=200):
    """Minimize ``max_t f_t(x)`` subject to ``A x <= b``.

    Works on the epigraph form ``min tau  s.t.  f_t(x) <= tau,  A x <= b``
    with an infeasible-start primal-dual interior-point method
    (Mehrotra predictor-corrector, fraction-to-boundary steps).  All
    inequalities get explicit slacks, so no strictly feasible start is
    required; `x0` only seeds the iteration.

    The returned ``kkt_residual`` is the largest of the scaled
    stationarity, primal infeasibility and complementarity residuals at
    the returned point, and the status is OPTIMAL only when it is at most
    `tol`.
    """
    n, T = p.n, len(p.quads)
    A, b = p.a, p.b
    m_lin = b.shape[0]
    m = T + m_lin
    stack = _QuadStack(p.quads, p.lins, p.consts)
    sparse = stack.sparse or sp.issparse(A)
    if m_lin:
        rs = _row_scale(A)
        A = sp.diags(rs) @ A if sp.issparse(A) else A * rs[:, None]
        b = b * rs
    At = (A.T.tocsr() if sp.issparse(A) else A.T) if m_lin else None

    x = np.zeros(n) if x0 is None else np.asarray(x0, dtype=float).copy()
    Px = stack.px(x)
    fx = stack.values(x, Px)
    tau = float(fx.max()) + 1.0
    scale0 = max(1.0, abs(tau))
    w = np.maximum(tau - fx, 1e-2 * scale0)                 # quad slacks
    s = np.maximum(b - A @ x, 1e-2) if m_lin else np.zeros(0)
    lam = np.full(T, 1.0 / T)
    z = np.ones(m_lin) * (1.0 / max(1, m_lin)) if m_lin else np.zeros(0)
    z = np.maximum(z, 1e-2 / s) if m_lin else z

    def residuals(x, tau, Px, lam, z, w, s):
        G = 2.0 * Px + stack.lins
        rx = G.T @ lam + (At @ z if m_lin else 0.0)
        rt = 1.0 - lam.sum()
        rq = stack.values(x, Px) - tau + w
        rl = A @ x - b + s if m_lin else np.zeros(0)
        return G, rx, rt, rq, rl

    def kkt_of(x, lam, z):
        # the multipliers are determined up to the normalization sum(lam) = 1;
        # measure stationarity for the normalized pair
        tot = lam.sum()
        if tot > 0:
            lam, z = lam / tot, z / tot
        Px_ = stack.px(x)
        f = stack.values(x, Px_)
        obj = float(f.max())
        G = 2.0 * Px_ + stack.lins
        gl = G.T @ lam
        az = At @ z if m_lin else np.zeros(n)
        stat = _norm_inf(gl + az) / (1.0 + max(_norm_inf(np.abs(G).T @ lam), _norm_inf(az)))
        stat = max(stat, abs(1.0 - lam.sum()))
        if m_lin:
            Ax = A @ x
            prim = _norm_inf(np.maximum(Ax - b, 0.0)) / (1.0 + max(_norm_inf(b), _norm_inf(Ax)))
            comp_lin = float(z @ np.maximum(b - Ax, 0.0))
        else:
            prim, comp_lin = 0.0, 0.0
        gap = (float(lam @ (obj - f)) + comp_lin) / (1.0 + abs(obj))
        return max(stat, prim, gap), obj

    best = None
    stall = 0
    mu_prev = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        G, rx, rt, rq, rl = residuals(x, tau, Px, lam, z, w, s)
        mu = (lam @ w + z @ s) / m
        kkt, obj = kkt_of(x, lam, z)
        if best is None or kkt < 0.9 * best[0]:
            stall = 0
        elif mu > 0.9 * mu_prev:
            # the measure may rise while an infeasible start is pulled in;
            # only count iterations that no longer reduce complementarity
            stall += 1
        if best is None or kkt < best[0]:
            best = (kkt, x.copy(), lam.copy(), z.copy(), obj, tau)
            best_slacks = (w.copy(), s.copy())
        mu_prev = mu
        if kkt <= tol or stall >= 10:
            break

        dq = lam / w
        dl = z / s if m_lin else np.zeros(0)
        Wx = stack.weighted(2.0 * lam)
        if sparse:
            Gs = sp.csr_matrix(G)
            Hxx = sp.csc_matrix(Wx) + Gs.T @ sp.diags(dq) @ Gs
            if m_lin:
                Hxx = Hxx + At @ sp.diags(dl) @ A
            hxt = -(Gs.T @ dq)
            K = sp.bmat([[Hxx, sp.csc_matrix(hxt.reshape(-1, 1))],
                         [sp.csc_matrix(hxt.reshape(1, -1)), sp.csc_matrix([[dq.sum()]])]],
                        format="csc")
            reg = 1e-13 * max(1.0, abs(K).max())
            Kreg = K + reg * sp.identity(n + 1, format="csc")
        else:
            Hxx = Wx + (G.T * dq) @ G
            if m_lin:
                Hxx = Hxx + (A.T * dl) @ A
            hxt = -(G.T @ dq)
            K = np.block([[Hxx, hxt[:, None]], [hxt[None, :], np.array([[dq.sum()]])]])
            Kreg = K + 1e-13 * max(1.0, np.abs(K).max()) * np.eye(n + 1)
        fac = _Factor(Kreg)

        def ksolve(rhs):
            # a couple of refinement sweeps against the unregularized matrix
            y = fac.solve(rhs)
            for _ in range(2):
                y = y + fac.solve(rhs - K @ y)
            return y

        def direction(rc_q, rc_l):
            # eliminate slacks and multipliers; rc_* are complementarity residuals
            tq = rq - rc_q / lam
            rhs_x = -rx - G.T @ (dq * tq)
            rhs_t = -rt + (dq * tq).sum()
            if m_lin:
                tl = rl - rc_l / z
                rhs_x = rhs_x - At @ (dl * tl)
            dy = ksolve(np.concatenate([rhs_x, [rhs_t]]))
            dx, dt = dy[:n], dy[n]
            jq = G @ dx - dt
            dlam = dq * (jq + tq)
            dw = -(rc_q + w * dlam) / lam
            if m_lin:
                dz = dl * (A @ dx + tl)
                ds = -(rc_l + s * dz) / z
            else:
                dz = ds = np.zeros(0)
            return dx, dt, dlam, dz, dw, ds

        # predictor
        aff = direction(lam * w, z * s)
        if not all(np.all(np.isfinite(v)) for v in aff):
            break           # diverging (typically infeasible); keep the best iterate
        a_p = min(1.0, _max_step(w, aff[4]), _max_step(s, aff[5]) if m_lin else 1.0)
        a_d = min(1.0, _max_step(lam, aff[2]), _max_step(z, aff[3]) if m_lin else 1.0)
        mu_aff = ((lam + a_d * aff[2]) @ (w + a_p * aff[4])
                  + ((z + a_d * aff[3]) @ (s + a_p * aff[5]) if m_lin else 0.0)) / m
        sigma = min(1.0, (mu_aff / mu) ** 3) if mu > 0 else 0.0
        # do not let complementarity run far ahead of dual feasibility: once
        # mu collapses the iterates stick to the boundary and the remaining
        # stationarity error can no longer be removed
        dual_rel = _norm_inf(rx) / (1.0 + _norm_inf(np.abs(G).T @ lam)
                                    + (_norm_inf(At @ z) if m_lin else 0.0)) + abs(rt)
        mu_floor = 0.1 * dual_rel * (1.0 + abs(obj)) * lam.sum() / m
        if mu > 0:
            sigma = max(sigma, min(0.5, mu_floor / mu))
        # corrector
        rc_q = lam * w + aff[2] * aff[4] - sigma * mu
        rc_l = z * s + aff[3] * aff[5] - sigma * mu if m_lin else np.zeros(0)
        dx, dt, dlam, dz, dw, ds = direction(rc_q, rc_l)
        if not all(np.all(np.isfinite(v)) for v in (dx, dlam, dz, dw, ds)):
            break
        frac = 0.995
        a_p = min(1.0, frac * _max_step(w, dw), frac * _max_step(s, ds) if m_lin else 1.0)
        a_d = min(1.0, frac * _max_step(lam, dlam), frac * _max_step(z, dz) if m_lin else 1.0)
        x = x + a_p * dx
        tau = tau + a_p * dt
        Px = stack.px(x)
        w = w + a_p * dw
        s = s + a_p * ds if m_lin else s
        lam = lam + a_d * dlam
        z = z + a_d * dz if m_lin else z
        # the quadratic constraints are nonlinear: keep slacks consistent
        # with the primal point once the linearized step has been taken
        fq = stack.values(x, Px)
        w = np.where(tau - fq > 0, np.maximum(w, tau - fq), w)

    kkt, x, lam, z, obj, tau = best
    if kkt > 0:
        pol = _minmax_polish(stack, A, b, x, tau, lam, z, *best_slacks, kkt_of, kkt)
        if pol is not None:
            kkt, x, lam, z, obj, tau = pol
    tot = lam.sum()
    lam, z = lam / tot, z / tot
    status = Status.OPTIMAL if kkt <= tol else Status.MAX_ITER
    if status is not Status.OPTIMAL and m_lin:
        feas = solve_ineq_qp(IneqQp(np.zeros((n, n)), np.zeros(n), p.a, p.b), tol=1e-9)
        if feas.status is Status.INFEASIBLE:
            return _infeasible_report(n, "linear constraints are infeasible")
    if m_lin:
        z = z * rs
    return SolveReport(x=x, objective=obj, kkt_residual=kkt, iterations=it, status=status,
                       dual=np.concatenate([lam, z]), info={"tau": tau, "method": "pdipm"})
