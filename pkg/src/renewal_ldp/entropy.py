"""Entropy-minimisation oracle for finite-support laws.

For a law ``psi`` with atoms ``((u_k, w_k), p_k)`` and a sub-probability
``nu = (q_k)`` on the same atoms the rate of the empirical measure is

    I(nu) = nu(1/u) H(nubar | psi) + (1 - nu(X)) theta0,

where ``nubar_k`` is proportional to ``q_k / u_k``; the null measure has
rate ``theta0``.  Minimising ``I`` under ``sum_k q_k w_k / u_k = m`` gives
the rate function of ``Z_t / t`` by contraction, independently of any
Legendre transform.

With ``r_k = q_k / u_k`` the problem is convex and smooth inside the
positive orthant:

    minimise   sum_k r_k log(r_k / (s p_k)) + (1 - u.r) theta0,  s = sum_k r_k
    subject to w.r = m,  u.r <= 1 (= 1 when theta0 = inf),  r >= 0.

It is solved by a log-barrier Newton method with equality-constrained KKT
steps, started from several strictly feasible points.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from .exceptions import ParameterError
from .models import DiscreteJoint
from .seeding import derive_rng
from .xreal import INF, XReal

__all__ = ["SubMeasure", "OracleResult", "entropy_rate_i", "minimize_i"]

N_STARTS = 16
BACKTRACK = 0.5
KKT_TOL = 1e-9
MASS_TOL = 1e-12


@dataclass(frozen=True)
class SubMeasure:
    """Weights ``q_k >= 0`` with ``sum q_k <= 1`` on the atoms of a law."""

    q: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float)
        if q.ndim != 1:
            raise ParameterError("sub-measure weights must be a 1-d array")
        if np.any(q < 0) or not np.all(np.isfinite(q)):
            raise ParameterError("sub-measure weights must be finite and non-negative")
        if q.sum() > 1 + MASS_TOL:
            raise ParameterError(f"sub-measure mass {q.sum()!r} exceeds 1")
        object.__setattr__(self, "q", q)

    @property
    def mass(self) -> float:
        return math.fsum(self.q.tolist())

    @staticmethod
    def null(k: int) -> "SubMeasure":
        return SubMeasure(np.zeros(k))


def _atoms(psi):
    if isinstance(psi, DiscreteJoint):
        return psi.u, psi.w, psi.p
    u, w, p = (np.asarray(a, dtype=float) for a in psi)
    if not (u.shape == w.shape == p.shape) or u.ndim != 1:
        raise ParameterError("psi must be a DiscreteJoint or aligned (u, w, p) arrays")
    if np.any(u <= 0) or np.any(p < 0):
        raise ParameterError("psi needs u > 0 and p >= 0")
    return u, w, p


def entropy_rate_i(psi, nu: SubMeasure | np.ndarray, theta0: float) -> XReal:
    """``I(nu)`` for a sub-probability ``nu`` aligned with the atoms of ``psi``.

    ``psi`` may also be a triple of arrays ``(u, w, p)``, which allows atoms
    with ``p_k = 0``; charging such an atom gives ``+inf``.
    """
    u, _, p = _atoms(psi)
    q = nu.q if isinstance(nu, SubMeasure) else SubMeasure(np.asarray(nu, dtype=float)).q
    if q.shape != u.shape:
        raise ParameterError(f"sub-measure has {q.size} atoms, psi has {u.size}")
    theta0 = float(theta0)
    mass = math.fsum(q.tolist())
    deficit = max(1.0 - mass, 0.0)
    if theta0 == math.inf:
        tail = 0.0 if deficit <= MASS_TOL else math.inf
    else:
        tail = deficit * theta0
    r = q / u
    s = math.fsum(r.tolist())
    if s == 0.0:
        return XReal(theta0)
    if np.any((r > 0) & (p == 0)):
        return INF
    pos = r > 0
    rb = r[pos] / s
    h = math.fsum((rb * np.log(rb / p[pos])).tolist())
    val = s * h + tail
    return INF if val == math.inf else XReal(max(val, 0.0) if val > -1e-15 else val)


@dataclass
class OracleResult:
    value: XReal
    minimizer: SubMeasure | None
    mass: float
    diagnostics: dict = field(default_factory=dict)

    SCHEMA = "oracle-result/1"

    def to_dict(self):
        return {
            "schema": self.SCHEMA,
            "value": "inf" if self.value == math.inf else float(self.value),
            "minimizer": None if self.minimizer is None else [float(x) for x in self.minimizer.q],
            "mass": self.mass,
            "diagnostics": self.diagnostics,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


# ---------------------------------------------------------------------------
# feasibility analysis
# ---------------------------------------------------------------------------


def _lp(c, A_eq, b_eq, A_ub, b_ub, bounds):
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq, bounds=bounds, method="highs")
    return res


def _analyse(u, w, m, mass_eq):
    """Feasibility, atoms forced to zero and whether the mass bound is forced tight."""
    k = u.size
    A_eq = [w]
    b_eq = [m]
    if mass_eq:
        A_eq.append(u)
        b_eq.append(1.0)
        A_ub, b_ub = None, None
    else:
        A_ub, b_ub = [u], [1.0]
    bounds = [(0, None)] * k
    res = _lp(np.zeros(k), A_eq, b_eq, A_ub, b_ub, bounds)
    if res.status != 0:
        return False, None, None
    free = np.ones(k, dtype=bool)
    for j in range(k):
        c = np.zeros(k)
        c[j] = -1.0
        r = _lp(c, A_eq, b_eq, A_ub, b_ub, bounds)
        if r.status == 0 and -r.fun <= 1e-13:
            free[j] = False
    tight = mass_eq
    if not mass_eq:
        r = _lp(u, A_eq, b_eq, None, None, bounds)  # minimise the mass
        if r.status == 0 and r.fun >= 1.0 - 1e-13:
            tight = True
    return True, free, tight


def _interior_point(u, w, m, mass_eq):
    """Maximise the smallest slack to get a strictly feasible start."""
    k = u.size
    # variables (r_1..r_k, zeta); maximise zeta with r_j >= zeta, slack >= zeta
    c = np.zeros(k + 1)
    c[-1] = -1.0
    A_ub = [np.concatenate([-np.eye(k)[j], [1.0]]) for j in range(k)]
    b_ub = [0.0] * k
    A_eq = [np.concatenate([w, [0.0]])]
    b_eq = [m]
    if mass_eq:
        A_eq.append(np.concatenate([u, [0.0]]))
        b_eq.append(1.0)
    else:
        A_ub.append(np.concatenate([u, [1.0]]))
        b_ub.append(1.0)
    bounds = [(0, None)] * k + [(0, 1.0)]
    res = _lp(c, A_eq, b_eq, A_ub, b_ub, bounds)
    if res.status != 0 or res.x[-1] <= 0:
        return None
    return res.x[:k]


# ---------------------------------------------------------------------------
# barrier Newton
# ---------------------------------------------------------------------------


def _objective(r, u, p, theta0, mass_eq):
    s = r.sum()
    if s <= 0:
        return theta0
    val = float(np.sum(r * np.log(r / (s * p))))
    if not mass_eq:
        val += (1.0 - u @ r) * theta0
    return val


def _barrier_solve(r0, u, w, p, theta0, m, mass_eq, max_newton=200):
    """Log-barrier Newton method in null-space coordinates ``r = r_p + N z``.

    Working in ``z`` keeps the equality constraints exact, so rounding in the
    Newton system cannot push the iterate off the feasible affine set.
    """
    A = np.vstack([w, u]) if mass_eq else w[None, :]
    b = np.array([m, 1.0][: A.shape[0]])
    k = r0.size
    _, sv, vt = np.linalg.svd(A)
    N = vt[int(np.sum(sv > 1e-12)):].T
    r_p = r0 - N @ (N.T @ r0)
    if N.shape[1] == 0:
        return r0.copy(), 0
    # snap the particular solution onto the constraint set
    r_p = r_p - np.linalg.pinv(A) @ (A @ r_p - b)
    z = N.T @ r0
    tb = 1.0
    lin = -theta0 * u if not mass_eq else np.zeros(k)
    n_barrier = k + (0 if mass_eq else 1)

    def phi(z, tb):
        r = r_p + N @ z
        if np.any(r <= 0):
            return math.inf
        slack = 1.0 - u @ r
        if not mass_eq and slack <= 0:
            return math.inf
        s = r.sum()
        f = float(np.sum(r * np.log(r / (s * p)))) + lin @ r
        out = tb * f - float(np.sum(np.log(r)))
        if not mass_eq:
            out -= math.log(slack)
        return out

    newton_iters = 0
    while True:
        for _ in range(max_newton):
            r = r_p + N @ z
            s = r.sum()
            g = tb * (np.log(r / (s * p)) + lin) - 1.0 / r
            H = tb * (np.diag(1.0 / r) - 1.0 / s) + np.diag(1.0 / r**2)
            if not mass_eq:
                slack = 1.0 - u @ r
                g = g + u / slack
                H = H + np.outer(u, u) / slack**2
            gz = N.T @ g
            Hz = N.T @ H @ N
            try:
                dz = np.linalg.solve(Hz, -gz)
            except np.linalg.LinAlgError:
                dz = np.linalg.lstsq(Hz, -gz, rcond=None)[0]
            dec = float(-gz @ dz)
            newton_iters += 1
            if dec / 2 <= 1e-12 * tb or np.max(np.abs(N @ dz) / r) < 1e-14:
                break
            step = 1.0
            f0 = phi(z, tb)
            while step > 1e-20:
                cand = z + step * dz
                if phi(cand, tb) <= f0 - 0.25 * step * dec:
                    break
                step *= BACKTRACK
            if step <= 1e-20:
                break
            z = cand
        if n_barrier / tb < 1e-13:
            break
        tb *= 10.0
    return r_p + N @ z, newton_iters


def _kkt_residual(r, u, w, p, theta0, m, mass_eq):
    """Stationarity residual on the support, and complementary slackness off it."""
    s = r.sum()
    if s <= 0:
        return 0.0
    pos = r > 1e-10 * max(r.max(), 1e-300)
    g = np.log(np.where(pos, r, 1.0) / (s * p)) - (0.0 if mass_eq else theta0) * u
    cols = [w] + ([u] if mass_eq else [])
    slack = 1.0 - u @ r
    if not mass_eq and slack < 1e-9:
        cols.append(u)
    A = np.vstack(cols).T
    coef = np.linalg.lstsq(A[pos], -g[pos], rcond=None)[0]
    res = g + A @ coef
    return float(np.max(np.abs(res[pos])))


def _grid_check(u, w, p, theta0, m, mass_eq, free, n1=4001, n2=601):
    """Dense-grid minimum for supports with at most three free atoms."""
    idx = np.flatnonzero(free)
    k = idx.size
    uu, ww, pp = u[idx], w[idx], p[idx]
    neq = 2 if mass_eq else 1
    ndim = k - neq
    if ndim < 0:
        return None
    A = np.vstack([ww, uu]) if mass_eq else ww[None, :]
    b = np.array([m, 1.0])[:neq]
    best = math.inf
    for piv in itertools.combinations(range(k), neq):
        Ap = A[:, piv]
        if abs(np.linalg.det(Ap)) < 1e-12:
            continue
        rest = [j for j in range(k) if j not in piv]
        if ndim == 0:
            pts = np.zeros((1, 0))
        else:
            axes = [np.linspace(0.0, 1.0 / uu[j], n1 if ndim == 1 else n2) for j in rest]
            pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, ndim)
        R = np.zeros((pts.shape[0], k))
        R[:, rest] = pts
        rhs = b[None, :] - pts @ A[:, rest].T
        R[:, list(piv)] = np.linalg.solve(Ap, rhs.T).T
        ok = np.all(R >= -1e-15, axis=1) & (R @ uu <= 1 + 1e-12)
        R = np.maximum(R[ok], 0.0)
        if R.size == 0:
            continue
        s = R.sum(axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            terms = np.where(R > 0, R * np.log(R / (s[:, None] * pp[None, :])), 0.0)
        vals = terms.sum(axis=1)
        vals = np.where(s > 0, vals, theta0 if math.isfinite(theta0) else math.inf)
        if not mass_eq:
            vals = vals + (1 - R @ uu) * theta0
        best = min(best, float(vals.min()))
        break
    return best


def minimize_i(psi, m: float, theta0: float, n_starts: int = N_STARTS, seed: int = 0) -> OracleResult:
    """``inf {I(nu) : nu(phi) = m}`` with ``phi(u, w) = w / u``.

    Returns ``+inf`` with a feasibility note when no sub-probability meets
    the constraint.  At ``m = 0`` the null measure (value ``theta0``) is
    compared explicitly and the smaller value wins; a near tie is flagged.
    """
    u, w, p = _atoms(psi)
    m = float(m)
    theta0 = float(theta0)
    k = u.size
    mass_eq = theta0 == math.inf
    diag: dict = {"n_starts": 0}
    null_value = theta0 if m == 0.0 else None

    support = p > 0
    feasible, free, tight = _analyse(u, w, m, mass_eq) if support.all() else (None, None, None)
    if not support.all():
        # atoms without probability can never be charged
        sub = minimize_i((u[support], w[support], p[support]), m, theta0, n_starts, seed)
        if sub.minimizer is None:
            return sub
        q = np.zeros(k)
        q[support] = sub.minimizer.q
        return OracleResult(sub.value, SubMeasure(q), sub.mass, sub.diagnostics)

    if not feasible:
        diag["feasibility"] = (
            f"no sub-probability nu has nu(w/u) = {m}: m lies outside the range reachable with mass <= 1"
        )
        return OracleResult(INF, None, 0.0, diag)

    idx = np.flatnonzero(free)
    if idx.size == 0:
        # only the null measure is feasible
        diag["feasibility"] = "only the null measure satisfies the constraint"
        value = XReal(theta0) if math.isfinite(theta0) else INF
        return OracleResult(value, SubMeasure.null(k), 0.0, diag)

    uu, ww, pp = u[idx], w[idx], p[idx]
    eq = mass_eq or tight
    r_int = _interior_point(uu, ww, m, eq)
    if r_int is None:
        diag["feasibility"] = "no strictly feasible point after removing forced-zero atoms"
        return OracleResult(INF, None, 0.0, diag)

    A = np.vstack([ww, uu]) if eq else ww[None, :]
    # null space of the equality constraints, for perturbed starts
    _, sv, vt = np.linalg.svd(A)
    rank = int(np.sum(sv > 1e-12))
    N = vt[rank:].T
    best = None
    for i in range(n_starts if N.shape[1] > 0 else 1):
        r0 = r_int.copy()
        if i > 0 and N.shape[1] > 0:
            d = N @ derive_rng(seed, 99, i).normal(size=N.shape[1])
            # step towards the boundary, staying strictly inside
            lim = [(-r0[j] / d[j]) for j in range(r0.size) if d[j] < 0]
            if not eq and u[idx] @ d > 0:
                lim.append((1 - uu @ r0) / (uu @ d))
            tmax = min(lim) if lim else 1.0
            r0 = r0 + 0.9 * tmax * d
        r, iters = _barrier_solve(r0, uu, ww, pp, theta0, m, eq)
        val = _objective(r, uu, pp, theta0, eq)
        diag["n_starts"] += 1
        if best is None or val < best[0] - 1e-15:
            best = (val, r, i, iters)
    val, r, start, iters = best
    diag["best_start"] = start
    diag["newton_iterations"] = iters
    diag["kkt_residual"] = _kkt_residual(r, uu, ww, pp, theta0, m, eq)
    diag["constraint_residual"] = float(abs(ww @ r - m))
    if idx.size <= 3:
        g = _grid_check(u, w, p, theta0, m, eq, free)
        diag["grid_value"] = g
        if g is not None and g < val - 1e-7:
            diag["grid_disagrees"] = True
    q = np.zeros(k)
    q[idx] = r * uu
    mass = float(q.sum())
    if mass > 1.0:
        q = q / mass
        mass = 1.0
    minimizer = SubMeasure(q)
    value = float(entropy_rate_i((u, w, p), minimizer, theta0))
    if null_value is not None:
        diag["null_value"] = null_value
        diag["near_null_tie"] = bool(abs(value - null_value) <= 1e-6)
        if null_value < value:
            return OracleResult(XReal(null_value), SubMeasure.null(k), 0.0, diag)
    return OracleResult(XReal(max(value, 0.0)), minimizer, mass, diag)
