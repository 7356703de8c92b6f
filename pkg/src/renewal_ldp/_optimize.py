"""One-dimensional concave maximisation over the extended reals.

The objectives met in this package are concave functions with values in
``[-inf, +inf]``: ``-inf`` outside an effective domain, ``+inf`` when an
inner supremum diverges.  :func:`maximize_concave` brackets the maximiser by
geometric expansion, refines it by golden-section search and classifies
suprema reached only at infinity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

GOLDEN = (3.0 - math.sqrt(5.0)) / 2.0  # 0.381966...

OK = "ok"  # maximiser attained inside a finite bracket
INFINITE = "inf"  # supremum is +inf
ASYMPTOTE = "asymptote"  # finite supremum approached as the argument escapes
INFEASIBLE = "infeasible"  # objective is -inf everywhere probed


@dataclass(frozen=True)
class Max1D:
    arg: float | None
    value: float
    status: str
    evals: int = 0


class _Counted:
    def __init__(self, f):
        self.f, self.n = f, 0

    def __call__(self, x):
        self.n += 1
        v = float(self.f(x))
        if math.isnan(v):
            raise ArithmeticError(f"objective returned nan at {x!r}")
        return v


def golden_refine(f, a, b, c, fb, xtol=1e-10, max_iter=200):
    """Golden-section refinement of a bracket ``a < b < c`` with ``f(b) >= f(a), f(c)``.

    Returns ``(b, f(b))``.  Ties keep the current best point, which makes the
    search settle on the leftmost of several equal maxima it sees.
    """
    if a > c:
        a, c = c, a
    for _ in range(max_iter):
        if c - a <= xtol * max(1.0, abs(b)):
            break
        if c - b > b - a:
            x = b + GOLDEN * (c - b)
        else:
            x = b - GOLDEN * (b - a)
        fx = f(x)
        if fx > fb:
            if x > b:
                a = b
            else:
                c = b
            b, fb = x, fx
        else:
            if x > b:
                c = x
            else:
                a = x
    return b, fb


def maximize_concave(
    f: Callable[[float], float],
    x0: float = 0.0,
    step: float = 1.0,
    radius: float = 50.0,
    xtol: float = 1e-10,
    ftol: float = 1e-12,
    max_doublings: int = 60,
) -> Max1D:
    """Maximise a concave extended-real function of one variable.

    Parameters
    ----------
    f : callable
        Concave objective; may return ``-inf`` (outside its domain) or
        ``+inf`` (which ends the search immediately).
    x0 : float
        Starting point.  If ``f(x0) = -inf`` a finite point is searched for
        by doubling steps on both sides.
    step : float
        Initial probing step.
    radius : float
        Escape radius around ``x0``.  Past it the search keeps doubling the
        step and classifies the tail: increments below ``ftol`` mean a
        finite asymptote, increments that fail to shrink (ratio >= 0.9 over
        three doublings) mean ``+inf``.
    xtol : float
        Relative argument tolerance of the golden-section refinement.

    Returns
    -------
    Max1D
    """
    g = _Counted(f)
    f0 = g(x0)
    if f0 == math.inf:
        return Max1D(x0, math.inf, INFINITE, g.n)
    if f0 == -math.inf:
        found = False
        h = step
        for _ in range(max_doublings):
            for cand in (x0 + h, x0 - h):
                v = g(cand)
                if v == math.inf:
                    return Max1D(cand, math.inf, INFINITE, g.n)
                if v > -math.inf:
                    x0, f0, found = cand, v, True
                    break
            if found:
                break
            h *= 2.0
        if not found:
            return Max1D(None, -math.inf, INFEASIBLE, g.n)
        step = min(step, h / 4.0) if h > step else step

    fp = g(x0 + step)
    if fp == math.inf:
        return Max1D(x0 + step, math.inf, INFINITE, g.n)
    if fp > f0:
        direction = 1.0
        b, fb = x0 + step, fp
    else:
        fm = g(x0 - step)
        if fm == math.inf:
            return Max1D(x0 - step, math.inf, INFINITE, g.n)
        if fm > f0:
            direction = -1.0
            b, fb = x0 - step, fm
        else:
            arg, val = golden_refine(g, x0 - step, x0, x0 + step, f0, xtol)
            return Max1D(arg, val, OK, g.n)

    a, fa = x0, f0
    h = step
    last_inc = None
    flat_streak = 0
    escaped = False
    for _ in range(10 * max_doublings):
        h *= 2.0
        c = b + direction * h
        fc = g(c)
        if fc == math.inf:
            return Max1D(c, math.inf, INFINITE, g.n)
        if fc <= fb:
            arg, val = golden_refine(g, a, b, c, fb, xtol)
            return Max1D(arg, val, OK, g.n)
        inc = fc - fb
        a, fa, b, fb = b, fb, c, fc
        if abs(c - x0) > radius:
            escaped = True
        if escaped:
            if inc <= ftol * max(1.0, abs(fc)):
                return Max1D(c, fc, ASYMPTOTE, g.n)
            if last_inc is not None and inc >= 0.9 * last_inc:
                flat_streak += 1
                if flat_streak >= 3:
                    return Max1D(c, math.inf, INFINITE, g.n)
            else:
                flat_streak = 0
            last_inc = inc
            max_doublings -= 1
            if max_doublings <= 0:
                return Max1D(c, fc, ASYMPTOTE, g.n)
    return Max1D(b, fb, ASYMPTOTE, g.n)


def root_of_increasing(
    f: Callable[[float], float],
    x_start: float = 0.0,
    step: float = 1.0,
    xtol: float = 1e-14,
    max_doublings: int = 80,
) -> float:
    """``sup {x : f(x) <= 0}`` for nondecreasing ``f`` with values in ``(-inf, +inf]``.

    Returns ``-inf`` when ``f > 0`` everywhere probed on the left and
    ``+inf`` when ``f <= 0`` everywhere probed on the right.
    """
    from scipy.optimize import brentq

    v = f(x_start)
    if v <= 0:
        lo, hi = x_start, None
        h = step
        for _ in range(max_doublings):
            x = x_start + h
            if f(x) > 0:
                hi = x
                break
            lo = x
            h *= 2.0
        if hi is None:
            return math.inf
    else:
        hi, lo = x_start, None
        h = step
        for _ in range(max_doublings):
            x = x_start - h
            if f(x) <= 0:
                lo = x
                break
            hi = x
            h *= 2.0
        if lo is None:
            return -math.inf
    # bisect on the predicate until the upper end is finite, then brentq
    fhi = f(hi)
    while fhi == math.inf and hi - lo > xtol * max(1.0, abs(lo)):
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if fm <= 0:
            lo = mid
        else:
            hi, fhi = mid, fm
    if fhi == math.inf:
        return lo
    flo = f(lo)
    if flo == 0:
        return lo
    return brentq(f, lo, hi, xtol=xtol * max(1.0, abs(lo)), rtol=1e-15, maxiter=200)
