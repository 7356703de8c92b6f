"""Rate functions of cumulative processes by numerical Legendre transforms.

Notation
--------
``L(x, y) = log E exp(x tau + y W)`` is the joint log-MGF and

    Lam(m, beta, x, y) = x + m y - beta L(x, y),

so that ``beta * Lstar(1/beta, m/beta) = sup_{x,y} Lam(m, beta, x, y)`` and
``J(m) = inf_{beta > 0} beta * Lstar(1/beta, m/beta)``.

Two numerical routes compute ``J``:

``dual`` (default)
    By Lagrange duality ``J(m) = sup {x + m y : L(x, y) <= 0}``.  For fixed
    ``y`` the constraint is a one-dimensional root ``xhat(y)`` because
    ``L`` is increasing in ``x`` (``tau > 0``), and ``y -> xhat(y) + m y``
    is concave.  The multiplier ``beta* = 1 / dL/dx(x*, y*)`` recovers the
    optimal ``beta``.  This route stays well conditioned for degenerate laws
    (constant ``W``, deterministic ``tau``) where ``beta -> beta Lstar`` is
    finite at a single point.  Its value is the lower semicontinuous hull of
    ``J``, which is ``J`` away from ``m = 0``.
``beta``
    Golden-section search in ``log beta`` of ``sup_{x,y} Lam`` evaluated by
    :func:`cramer_transform`.  Used for ``J(0)`` when the dual value reaches
    ``theta0`` and as an independent cross-check.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ._optimize import ASYMPTOTE, INFEASIBLE, INFINITE, OK, golden_refine, maximize_concave, root_of_increasing
from .exceptions import HypothesisViolation, ParameterError
from .models import JointModel
from .xreal import INF, XReal

__all__ = [
    "Tolerances",
    "SaddleResult",
    "RateProfile",
    "DeviationBound",
    "lagrangian",
    "cramer_transform",
    "rate_function_j",
    "rate_function_jbar",
    "renewal_rate_jtau",
    "rate_profile",
    "deviation_bound",
]

CONVERGED = "Converged"
VALUE_INFINITE = "ValueInfinite"
UNBOUNDED = "Unbounded"

ESCAPE = 50.0


@dataclass(frozen=True)
class Tolerances:
    """Numerical tolerances; the defaults are used everywhere unless overridden."""

    value: float = 1e-8
    arg: float = 1e-10
    root: float = 1e-14
    beta_lo: float = 1e-4
    beta_hi: float = 1e4
    beta_iters: int = 60


DEFAULT_TOL = Tolerances()


@dataclass(frozen=True)
class SaddleResult:
    value: XReal
    beta_star: float | None
    x_star: float | None
    y_star: float | None
    status: str

    def to_dict(self):
        return {
            "value": _num(self.value),
            "beta_star": self.beta_star,
            "x_star": self.x_star,
            "y_star": self.y_star,
            "status": self.status,
        }


def _num(v):
    return "inf" if v == math.inf else float(v)


def _check_theta(model: JointModel):
    b = model.exp_moment_bounds()
    if not float(b.theta0) > 0:
        raise HypothesisViolation("theta0 = 0: tau has no exponential moment (hypothesis theta0 > 0 fails)")
    return b


def lagrangian(model: JointModel, m: float, beta: float, x: float, y: float) -> float:
    """``Lam(m, beta, x, y) = x + m y - beta log E exp(x tau + y W)``; ``-inf`` off the domain."""
    L = model.log_mgf(x, y)
    if L == math.inf:
        return -math.inf
    return x + m * y - beta * float(L)


# ---------------------------------------------------------------------------
# Cramér transform
# ---------------------------------------------------------------------------


def cramer_transform(model: JointModel, a: float, b: float, tol: Tolerances = DEFAULT_TOL) -> XReal:
    """``Lstar(a, b) = sup_{x,y} {a x + b y - log E exp(x tau + y W)}``.

    The supremum is taken as nested one-dimensional concave maximisations,
    inner in ``x`` and outer in ``y``; an ascent escaping past the radius
    ``50 / scale`` with non-vanishing gains is reported as ``+inf``.
    """
    return _cramer(model, a, b, tol)[0]


def _cramer(model, a, b, tol):
    sx, sy = model.scale_tau, model.scale_w
    state = {"x": 0.0}

    def inner(y):
        def fx(x):
            L = model.log_mgf(x, y)
            return -math.inf if L == math.inf else a * x + b * y - float(L)

        r = maximize_concave(fx, x0=state["x"], step=0.25 / sx, radius=ESCAPE / sx, xtol=tol.arg)
        if r.status == OK:
            state["x"] = r.arg
        return r

    def fy(y):
        return inner(y).value

    ry = maximize_concave(fy, x0=0.0, step=0.25 / sy, radius=ESCAPE / sy, xtol=tol.arg)
    if ry.status == INFINITE or ry.value == math.inf:
        return INF, None, None
    if ry.status == INFEASIBLE:
        return INF, None, None
    rx = inner(ry.arg)
    val = max(ry.value, 0.0) if abs(ry.value) < 1e-13 else ry.value
    return XReal(val), rx.arg, ry.arg


# ---------------------------------------------------------------------------
# J, Jbar
# ---------------------------------------------------------------------------


def _xhat(model, y, tol):
    """``sup {x : L(x, y) <= 0}``."""
    sx = model.scale_tau

    def f(x):
        return float(model.log_mgf(x, y))

    return root_of_increasing(f, 0.0, 1.0 / sx, xtol=tol.root)


def _dlam_dx(model, x, y):
    """Tilted mean of ``tau``, by central differences (one-sided at a boundary)."""
    h = 1e-5 / model.scale_tau
    up, mid, dn = model.log_mgf(x + h, y), model.log_mgf(x, y), model.log_mgf(x - h, y)
    if up != math.inf:
        return (float(up) - float(dn)) / (2 * h)
    if mid != math.inf:
        return (float(mid) - float(dn)) / h
    return math.nan


def _dual(model, m, tol, y0=0.0):
    sy = model.scale_w

    def fy(y):
        x = _xhat(model, y, tol)
        if x == -math.inf:
            return -math.inf
        if x == math.inf:
            return math.inf
        return x + m * y

    r = maximize_concave(fy, x0=y0, step=0.25 / sy, radius=ESCAPE / sy, xtol=tol.arg)
    if r.status in (INFINITE, INFEASIBLE) or r.value == math.inf or r.value == -math.inf:
        return SaddleResult(INF, None, None, None, VALUE_INFINITE)
    y = r.arg
    x = _xhat(model, y, tol)
    val = max(r.value, 0.0) if r.value > -1e-12 else r.value
    if r.status == ASYMPTOTE:
        return SaddleResult(XReal(val), None, x, y, UNBOUNDED)
    d = _dlam_dx(model, x, y)
    beta = 1.0 / d if d > 0 and math.isfinite(d) else None
    if beta is None:
        return SaddleResult(XReal(val), None, x, y, UNBOUNDED)
    return SaddleResult(XReal(val), beta, x, y, CONVERGED)


def _beta_route(model, m, tol):
    """``inf_beta sup_{x,y} Lam`` by a log-grid in ``beta`` plus golden section."""
    grid = np.linspace(math.log(tol.beta_lo), math.log(tol.beta_hi), 33)
    cache = {}

    def g(s):
        if s not in cache:
            beta = math.exp(s)
            v, x, y = _cramer(model, 1.0 / beta, m / beta, tol)
            cache[s] = (beta * float(v) if v != math.inf else math.inf, x, y)
        return cache[s][0]

    vals = [g(s) for s in grid]
    k = int(np.argmin(vals))
    if vals[k] == math.inf:
        return SaddleResult(INF, None, None, None, VALUE_INFINITE)
    lo, hi = grid[max(k - 1, 0)], grid[min(k + 1, len(grid) - 1)]
    s_best, neg = golden_refine(lambda s: -g(s), lo, grid[k], hi, -vals[k], xtol=1e-12, max_iter=tol.beta_iters)
    val, x, y = cache[s_best]
    val = max(val, 0.0) if abs(val) < 1e-12 else val
    if x is None:
        return SaddleResult(XReal(val), math.exp(s_best), None, None, UNBOUNDED)
    # Lam(m, beta, x, y) at the inner optimiser of beta*Lstar(1/beta, m/beta):
    # the inner variables of Lstar(1/beta, m/beta) are (x, y) scaled by beta
    return SaddleResult(XReal(val), math.exp(s_best), x, y, CONVERGED)


def rate_function_j(
    model: JointModel, m: float, method: str = "dual", tol: Tolerances = DEFAULT_TOL, _warm: float = 0.0
) -> SaddleResult:
    """``J(m) = inf_{beta>0} beta Lstar(1/beta, m/beta)``.

    Parameters
    ----------
    method : {"dual", "beta"}
        Numerical route; see the module docstring.

    Raises
    ------
    HypothesisViolation
        If ``theta0 = 0``.
    """
    bounds = _check_theta(model)
    m = float(m)
    if not math.isfinite(m):
        raise ParameterError("m must be finite")
    if method == "beta":
        return _beta_route(model, m, tol)
    if method != "dual":
        raise ParameterError(f"unknown method {method!r}")
    res = _dual(model, m, tol, _warm)
    if m == 0.0 and res.value != math.inf and float(res.value) >= float(bounds.theta0) - 1e-7:
        # the dual value at 0 is min(J(0), theta0); J(0) itself may be larger
        res = _beta_route(model, 0.0, tol)
    return res


def rate_function_jbar(model: JointModel, m: float, tol: Tolerances = DEFAULT_TOL) -> XReal:
    """``J(m)`` for ``m != 0`` and ``min(J(0), theta0)`` at ``m = 0``."""
    return _jbar(model, m, tol)[0]


def _jbar(model, m, tol, warm=0.0):
    res = rate_function_j(model, m, tol=tol, _warm=warm)
    if float(m) == 0.0:
        theta0 = model.exp_moment_bounds().theta0
        return (res.value if res.value <= theta0 else theta0), res
    return res.value, res


# ---------------------------------------------------------------------------
# renewal counting rate
# ---------------------------------------------------------------------------


def renewal_rate_jtau(model: JointModel, u: float, tol: Tolerances = DEFAULT_TOL) -> XReal:
    """``J_tau(u) = sup_lambda {lambda - u log E exp(lambda tau)}``; ``+inf`` for ``u < 0``.

    At ``u = 0`` the supremum runs over the domain of the MGF and equals
    ``theta0``.
    """
    u = float(u)
    if u < 0:
        return INF
    if u == 0:
        return model.exp_moment_bounds().theta0
    sx = model.scale_tau

    def f(lam):
        L = model.log_mgf(lam, 0.0)
        return -math.inf if L == math.inf else lam - u * float(L)

    r = maximize_concave(f, 0.0, step=0.25 / sx, radius=ESCAPE / sx, xtol=tol.arg)
    if r.status == INFINITE or r.value == math.inf:
        return INF
    return XReal(max(r.value, 0.0))


# ---------------------------------------------------------------------------
# profile
# ---------------------------------------------------------------------------


@dataclass
class RateProfile:
    m_grid: np.ndarray
    j_values: list
    jbar_values: list
    saddles: list
    model_digest: str
    convexity_violation: float = 0.0
    errors: dict = field(default_factory=dict)

    SCHEMA = "rate-profile/1"

    @property
    def is_convex(self) -> bool:
        return self.convexity_violation <= 1e-6

    def rows(self):
        for m, j, jb, s in zip(self.m_grid, self.j_values, self.jbar_values, self.saddles):
            yield {
                "m": float(m),
                "j": j,
                "jbar": jb,
                "beta_star": None if s is None else s.beta_star,
                "x_star": None if s is None else s.x_star,
                "y_star": None if s is None else s.y_star,
                "status": "Error" if s is None else s.status,
            }

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        cols = ["m", "j", "jbar", "beta_star", "x_star", "y_star", "status"]
        w.writerow(cols)
        for r in self.rows():
            w.writerow([fmt_real(r[c]) if c != "status" else r[c] for c in cols])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "schema": self.SCHEMA,
            "model_digest": self.model_digest,
            "convexity_violation": self.convexity_violation,
            "rows": [{k: (_json_real(v) if k != "status" else v) for k, v in r.items()} for r in self.rows()],
            "errors": {str(k): v for k, v in self.errors.items()},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def fmt_real(v) -> str:
    """17 significant digits, ``inf`` for +inf, empty for missing values."""
    if v is None:
        return ""
    v = float(v)
    if v == math.inf:
        return "inf"
    if v == -math.inf:
        return "-inf"
    return f"{v:.17g}"


def _json_real(v):
    if v is None:
        return None
    v = float(v)
    return "inf" if v == math.inf else ("-inf" if v == -math.inf else v)


def rate_profile(
    model: JointModel, m_lo: float, m_hi: float, n_points: int, tol: Tolerances = DEFAULT_TOL
) -> RateProfile:
    """Evaluate ``J`` and ``Jbar`` on a uniform grid, warm-starting each point."""
    if not m_lo < m_hi:
        raise ParameterError("m_lo must be < m_hi")
    if n_points < 2:
        raise ParameterError("n_points must be >= 2")
    _check_theta(model)
    grid = np.linspace(m_lo, m_hi, int(n_points))
    return profile_on_grid(model, grid, tol)


def profile_on_grid(model: JointModel, grid: Sequence[float], tol: Tolerances = DEFAULT_TOL) -> RateProfile:
    grid = np.asarray(sorted(float(g) for g in grid))
    j_vals, jb_vals, saddles, errors = [], [], [], {}
    warm = 0.0
    for i, m in enumerate(grid):
        try:
            jb, res = _jbar(model, float(m), tol, warm)
        except Exception as exc:  # recorded per point; the sweep goes on
            errors[i] = f"{type(exc).__name__}: {exc}"
            j_vals.append(None)
            jb_vals.append(None)
            saddles.append(None)
            continue
        if res.y_star is not None and res.status == CONVERGED:
            warm = res.y_star
        j_vals.append(res.value)
        jb_vals.append(jb)
        saddles.append(res)
    viol = _convexity_violation(grid, jb_vals)
    return RateProfile(grid, j_vals, jb_vals, saddles, model.digest, viol, errors)


def _convexity_violation(grid, vals):
    pts = [(m, float(v)) for m, v in zip(grid, vals) if v is not None and v != math.inf]
    worst = 0.0
    for (m0, v0), (m1, v1), (m2, v2) in zip(pts, pts[1:], pts[2:]):
        w = (m1 - m0) / (m2 - m0)
        worst = max(worst, v1 - ((1 - w) * v0 + w * v2))
    return worst


# ---------------------------------------------------------------------------
# deviation bounds
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DeviationBound:
    bound: XReal
    kappa_used: float | None
    branch: str  # "full-ldp" or "truncated"
    threshold: float
    ldp_term: XReal
    moment_term: float | None

    def __iter__(self):
        # unpacks as (bound, kappa_used)
        return iter((self.bound, self.kappa_used))

    def to_dict(self):
        return {
            "bound": _json_real(self.bound),
            "kappa_used": self.kappa_used,
            "branch": self.branch,
            "threshold": self.threshold,
            "ldp_term": _json_real(self.ldp_term),
            "moment_term": self.moment_term,
        }


def _tail_inf(model, z0, side, a, tol):
    """``inf_{z >= z0} Jbar(z)`` (Upper) or ``inf_{z <= z0} Jbar(z)`` (Lower).

    ``Jbar`` is convex with its zero at the mean, hence monotone beyond the
    threshold; a few grid points further out guard against a violation.
    """
    sign = 1.0 if side == "Upper" else -1.0
    best = rate_function_jbar(model, z0, tol)
    for k in (0.5, 2.0):
        v = rate_function_jbar(model, z0 + sign * k * a, tol)
        if v < best - 1e-9:
            best = v
    return best


def deviation_bound(
    model: JointModel,
    a: float,
    side: str = "Upper",
    kappa: float | None = None,
    tol: Tolerances = DEFAULT_TOL,
) -> DeviationBound:
    """Asymptotic exponential rate bound for ``P(Z_t/t >= m + a)`` (or ``<= m - a``).

    With ``m = E W / E tau``: if ``eta0 = inf`` the bound is
    ``inf_{z >= m + a} Jbar(z)``.  Otherwise it is
    ``min(inf_{z >= m + kappa a} Jbar(z), eta0 a (1 - kappa) / 4)``; without
    ``kappa`` the min is maximised over ``kappa`` in ``(0, 1)`` by a grid
    (ties go to the smallest ``kappa``) and a golden-section refinement.
    """
    a = float(a)
    if not a > 0:
        raise ParameterError("a must be positive")
    if side not in ("Upper", "Lower"):
        raise ParameterError("side must be 'Upper' or 'Lower'")
    b = model.exp_moment_bounds()
    if not float(b.theta0) > 0 or not float(b.eta0) > 0:
        raise HypothesisViolation(
            f"hypotheses eta0 > 0 and theta0 > 0 fail (theta0={float(b.theta0)}, eta0={float(b.eta0)})"
        )
    m = model.lln_rate
    sign = 1.0 if side == "Upper" else -1.0
    if b.eta0.is_inf:
        z0 = m + sign * a
        v = _tail_inf(model, z0, side, a, tol)
        return DeviationBound(v, None, "full-ldp", z0, v, None)

    eta0 = float(b.eta0)
    cache = {}

    def parts(k):
        if k not in cache:
            z0 = m + sign * k * a
            cache[k] = (_tail_inf(model, z0, side, k * a, tol), eta0 * a * (1 - k) / 4.0)
        return cache[k]

    def objective(k):
        j, mt = parts(k)
        return min(float(j), mt)

    if kappa is not None:
        k = float(kappa)
        if not 0 < k < 1:
            raise ParameterError("kappa must lie in (0, 1)")
    else:
        grid = [i / 20 for i in range(1, 20)]
        vals = [objective(k) for k in grid]
        i = int(np.argmax(vals))  # first maximiser: smallest kappa
        lo = grid[i - 1] if i > 0 else 1e-6
        hi = grid[i + 1] if i < len(grid) - 1 else 1 - 1e-6
        k, _ = golden_refine(objective, lo, grid[i], hi, vals[i], xtol=1e-6)
    j, mt = parts(k)
    bound = XReal(min(float(j), mt))
    return DeviationBound(bound, k, "truncated", m + sign * k * a, j, mt)
