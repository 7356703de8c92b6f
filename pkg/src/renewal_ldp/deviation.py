"""Monte Carlo estimates of large-deviation slopes.

For each horizon ``t`` the probability of the event ``Z_t / t >= m + a`` (or
``<= m - a``) is estimated by plain Monte Carlo.  The slope of
``log p_hat`` against ``t`` estimates the exponential rate.  Points with no
hit are censored: excluded from the fit and never imputed.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .exceptions import HypothesisViolation, ParameterError
from .legendre import deviation_bound, fmt_real
from .models import JointModel
from .seeding import STREAM_APPROX, STREAM_TAIL, STREAM_TIGHTNESS
from .simulation import ShiftTau, TruncateW, Variant, simulate_ensemble

__all__ = [
    "SlopeFit",
    "DeviationReport",
    "ApproxRateReport",
    "TightnessRow",
    "wilson_interval",
    "fit_slope",
    "estimate_tail",
    "estimate_approx_rate",
    "shift_rate_sequence",
    "exponential_tightness_probe",
]

Z95 = 1.959963984540054
MIN_REPLICATIONS = 1000


def wilson_interval(count: int, n: int, z: float = Z95) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if n <= 0:
        raise ParameterError("n must be positive")
    p = count / n
    z2 = z * z
    denom = 1.0 + z2 / n
    centre = (p + z2 / (2 * n)) / denom
    half = z / denom * math.sqrt(p * (1 - p) / n + z2 / (4 * n * n))
    return max(centre - half, 0.0), min(centre + half, 1.0)


@dataclass(frozen=True)
class SlopeFit:
    slope: float
    intercept: float
    stderr: float
    n_points: int

    def to_dict(self):
        return {"slope": self.slope, "intercept": self.intercept, "stderr": self.stderr, "n_points": self.n_points}


def fit_slope(t: Sequence[float], log_p: Sequence[float], sd: Sequence[float]) -> SlopeFit | None:
    """Weighted least squares of ``log_p`` on ``t``.

    Residual weights are the inverse half-widths of the log-scale confidence
    bands (``sd`` is proportional to them).  The standard error propagates
    those per-point variances; it is not rescaled by the residuals.
    Returns ``None`` with fewer than three points.
    """
    t = np.asarray(t, float)
    y = np.asarray(log_p, float)
    s = np.asarray(sd, float)
    if t.size < 3:
        return None
    w = 1.0 / np.maximum(s, 1e-300) ** 2
    sw = w.sum()
    tb = (w * t).sum() / sw
    yb = (w * y).sum() / sw
    stt = (w * (t - tb) ** 2).sum()
    slope = float((w * (t - tb) * (y - yb)).sum() / stt)
    intercept = float(yb - slope * tb)
    return SlopeFit(slope, intercept, float(math.sqrt(1.0 / stt)), int(t.size))


@dataclass
class _Points:
    """Per-horizon hit counts shared by the report types."""

    t_grid: list[float]
    counts: list[int]
    n_replications: list[int]

    @property
    def censored(self) -> list[bool]:
        return [c == 0 for c in self.counts]

    @property
    def log_prob(self) -> list[float | None]:
        return [None if c == 0 else math.log(c / n) for c, n in zip(self.counts, self.n_replications)]

    @property
    def rate(self) -> list[float | None]:
        """``(1/t) log p_hat``, the finite-t estimate of the LDP limit."""
        return [None if lp is None else lp / t for lp, t in zip(self.log_prob, self.t_grid)]

    @property
    def bands(self) -> list[tuple[float, float] | None]:
        out = []
        for c, n in zip(self.counts, self.n_replications):
            if c == 0:
                out.append(None)
                continue
            lo, hi = wilson_interval(c, n)
            out.append((math.log(lo), math.log(hi)))
        return out

    def fit(self) -> SlopeFit | None:
        ts, ys, sds = [], [], []
        for t, lp, b in zip(self.t_grid, self.log_prob, self.bands):
            if lp is None:
                continue
            ts.append(t)
            ys.append(lp)
            sds.append((b[1] - b[0]) / (2 * Z95))
        return fit_slope(ts, ys, sds)

    def table_csv(self) -> str:
        buf = io.StringIO()
        out = csv.writer(buf, lineterminator="\n")
        out.writerow(["t", "count", "n", "log_prob", "ci_lo", "ci_hi"])
        for t, c, n, lp, b in zip(self.t_grid, self.counts, self.n_replications, self.log_prob, self.bands):
            out.writerow(
                [fmt_real(t), c, n, fmt_real(lp), fmt_real(None if b is None else b[0]), fmt_real(None if b is None else b[1])]
            )
        return buf.getvalue()

    def points_dict(self) -> list[dict]:
        rows = []
        for t, c, n, lp, r, b in zip(
            self.t_grid, self.counts, self.n_replications, self.log_prob, self.rate, self.bands
        ):
            rows.append(
                {
                    "t": t,
                    "count": c,
                    "n": n,
                    "log_prob": lp,
                    "rate": r,
                    "ci_lo": None if b is None else b[0],
                    "ci_hi": None if b is None else b[1],
                    "censored": c == 0,
                }
            )
        return rows


@dataclass
class DeviationReport(_Points):
    model_digest: str = ""
    side: str = "Upper"
    a: float = 0.0
    threshold: float = 0.0
    theory_bound: float | None = None
    kappa_used: float | None = None
    estimate_based: bool = False
    notes: list[str] = field(default_factory=list)

    SCHEMA = "deviation-report/1"

    @property
    def slope_fit(self) -> SlopeFit | None:
        return self.fit()

    @property
    def insufficient_events(self) -> bool:
        return self.slope_fit is None

    @property
    def trend_monotone(self) -> bool | None:
        """Whether ``(1/t) log p_hat`` moves monotonically with ``t`` over uncensored points."""
        r = [x for x in self.rate if x is not None]
        if len(r) < 2:
            return None
        d = np.diff(r)
        return bool(np.all(d >= 0) or np.all(d <= 0))

    def one_sided_consistent(self) -> bool | None:
        """``slope <= -bound + 2 stderr``: the limsup inequality, checked one-sidedly."""
        fit = self.slope_fit
        if fit is None or self.theory_bound is None:
            return None
        return fit.slope <= -self.theory_bound + 2 * fit.stderr

    def to_csv(self) -> str:
        return self.table_csv()

    def to_dict(self) -> dict:
        fit = self.slope_fit
        return {
            "schema": self.SCHEMA,
            "model_digest": self.model_digest,
            "side": self.side,
            "a": self.a,
            "threshold": self.threshold,
            "points": self.points_dict(),
            "slope_fit": None if fit is None else fit.to_dict(),
            "insufficient_events": self.insufficient_events,
            "trend_monotone": self.trend_monotone,
            "theory_bound": self.theory_bound,
            "kappa_used": self.kappa_used,
            "one_sided_consistent": self.one_sided_consistent(),
            "estimate_based": self.estimate_based,
            "notes": self.notes,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _check_grid(t_grid, n_replications):
    t_grid = [float(t) for t in t_grid]
    if not t_grid or any(t <= 0 for t in t_grid) or any(b <= a for a, b in zip(t_grid, t_grid[1:])):
        raise ParameterError("t_grid must be a non-empty increasing list of positive horizons")
    if int(n_replications) < MIN_REPLICATIONS:
        raise ParameterError(f"n_replications must be >= {MIN_REPLICATIONS}")
    return t_grid, int(n_replications)


def estimate_tail(
    model: JointModel,
    side: str,
    a: float,
    t_grid: Sequence[float],
    n_replications: int,
    seed: int,
    workers: int | None = None,
    with_bound: bool = True,
) -> DeviationReport:
    """Monte Carlo estimate of ``P(Z_t/t >= m + a)`` (``Upper``) or ``P(Z_t/t <= m - a)`` (``Lower``)."""
    if side not in ("Upper", "Lower"):
        raise ParameterError("side must be 'Upper' or 'Lower'")
    a = float(a)
    if not a > 0:
        raise ParameterError("a must be positive")
    t_grid, n = _check_grid(t_grid, n_replications)
    m = model.lln_rate
    thr = m + a if side == "Upper" else m - a
    counts = []
    for i, t in enumerate(t_grid):
        ens = simulate_ensemble(model, t, n, seed, stream=STREAM_TAIL, t_index=i, workers=workers)
        x = ens.Z / t
        counts.append(int(np.count_nonzero(x >= thr if side == "Upper" else x <= thr)))
    rep = DeviationReport(t_grid, counts, [n] * len(t_grid), model.digest, side, a, thr)
    if with_bound:
        try:
            db = deviation_bound(model, a, side)
            rep.theory_bound = float(db.bound)
            rep.kappa_used = db.kappa_used
        except HypothesisViolation as exc:
            rep.notes.append(f"no theory bound: {exc}")
    if rep.insufficient_events:
        rep.notes.append("insufficient events: fewer than 3 uncensored horizons, no slope fitted")
    return rep


@dataclass
class ApproxRateReport(_Points):
    variant: dict = field(default_factory=dict)
    delta: float = 0.0
    reference_bound: float | None = None
    model_digest: str = ""

    SCHEMA = "approx-rate-report/1"

    @property
    def slope_fit(self) -> SlopeFit | None:
        return self.fit()

    def to_csv(self) -> str:
        return self.table_csv()

    def to_dict(self) -> dict:
        fit = self.slope_fit
        return {
            "schema": self.SCHEMA,
            "model_digest": self.model_digest,
            "variant": self.variant,
            "delta": self.delta,
            "points": self.points_dict(),
            "slope_fit": None if fit is None else fit.to_dict(),
            "reference_bound": self.reference_bound if self.reference_bound is None or math.isfinite(self.reference_bound) else "-inf",
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def estimate_approx_rate(
    model: JointModel,
    variant: Variant,
    delta: float,
    t_grid: Sequence[float],
    n_replications: int,
    seed: int,
    workers: int | None = None,
) -> ApproxRateReport:
    """Probability that a coupled variant strays from the parent process.

    ``TruncateW(n)``: the event is ``|Z_t - Z_t^n| / t > 2 delta``; the
    reference slope is ``-eta0 delta / 2``.  ``ShiftTau(eps)``: the event is
    ``|M_t - M_t^eps| > delta t``, whose rate should grow without bound as
    ``eps -> 0``.
    """
    delta = float(delta)
    if not delta > 0:
        raise ParameterError("delta must be positive")
    t_grid, n = _check_grid(t_grid, n_replications)
    counts = []
    for i, t in enumerate(t_grid):
        ens = simulate_ensemble(model, t, n, seed, variants=[variant], stream=STREAM_APPROX, t_index=i, workers=workers)
        if isinstance(variant, TruncateW):
            hit = np.abs(ens.Z - ens.variant_Z[0]) / t > 2 * delta
        else:
            hit = np.abs(ens.M - ens.variant_M[0]) > delta * t
        counts.append(int(np.count_nonzero(hit)))
    if isinstance(variant, TruncateW):
        eta0 = float(model.exp_moment_bounds().eta0)
        bound = -eta0 * delta / 2
    else:
        bound = -math.inf
    return ApproxRateReport(t_grid, counts, [n] * len(t_grid), variant.to_dict(), delta, bound, model.digest)


def shift_rate_sequence(
    model: JointModel,
    eps_seq: Sequence[float],
    delta: float,
    t_grid: Sequence[float],
    n_replications: int,
    seed: int,
    workers: int | None = None,
) -> tuple[list[ApproxRateReport], bool]:
    """Reports for a decreasing ``eps`` sequence and whether the fitted slopes decrease.

    A censored report (no slope) counts as steeper than any fitted one.
    """
    reps = [estimate_approx_rate(model, ShiftTau(e), delta, t_grid, n_replications, seed, workers) for e in eps_seq]
    slopes = [(-math.inf if r.slope_fit is None else r.slope_fit.slope) for r in reps]
    mono = all(b < a or (a == b == -math.inf) for a, b in zip(slopes, slopes[1:]))
    return reps, mono


@dataclass(frozen=True)
class TightnessRow:
    alpha: float
    A: float | None
    slope: float | None
    censored: bool

    def to_dict(self):
        return {"alpha": self.alpha, "A": self.A, "slope": self.slope, "censored": self.censored}


def exponential_tightness_probe(
    model: JointModel,
    alpha_grid: Sequence[float],
    t_grid: Sequence[float],
    n_replications: int,
    seed: int,
    A_grid: Sequence[float] | None = None,
    workers: int | None = None,
) -> list[TightnessRow]:
    """Smallest half-width ``A`` with ``slope of log P(|Z_t/t - m| > A)`` below ``-alpha``.

    One ensemble per horizon serves every ``A``.  When the exceedance becomes
    unobservable (fewer than three uncensored horizons) before the slope
    drops below ``-alpha``, the row is censored.
    """
    t_grid, n = _check_grid(t_grid, n_replications)
    if A_grid is None:
        A_grid = np.round(np.arange(0.05, 3.0001, 0.05), 10)
    A_grid = sorted(float(x) for x in A_grid)
    m = model.lln_rate
    dev = []
    for i, t in enumerate(t_grid):
        ens = simulate_ensemble(model, t, n, seed, stream=STREAM_TIGHTNESS, t_index=i, workers=workers)
        dev.append(np.abs(ens.Z / t - m))
    fits = []
    for A in A_grid:
        pts = _Points(t_grid, [int(np.count_nonzero(d > A)) for d in dev], [n] * len(t_grid))
        fits.append(pts.fit())
    rows = []
    for alpha in alpha_grid:
        row = TightnessRow(float(alpha), None, None, True)
        for A, fit in zip(A_grid, fits):
            if fit is None:
                break
            if fit.slope < -alpha:
                row = TightnessRow(float(alpha), A, fit.slope, False)
                break
        rows.append(row)
    return rows
