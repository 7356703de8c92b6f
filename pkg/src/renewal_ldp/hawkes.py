"""Hawkes processes with signed, compactly supported kernels.

The conditional intensity is ``f(lambda + sum_{t_j < s} h(s - t_j))`` with
``f(u) = max(0, u)`` and an empty initial history.  The kernel is piecewise
constant: ``h(r) = values[k]`` for ``breakpoints[k] <= r < breakpoints[k+1]``
and ``h(r) = 0`` for ``r >= L`` (the support length, the last breakpoint).

Once no event has occurred for a time ``L`` every kernel term has expired,
the intensity is back to ``lambda`` and the process starts afresh.  Those
instants are regeneration times; the cycles between them give i.i.d. pairs
``(tau_i, W_i)`` = (cycle length, events in the cycle), which makes the
event count a cumulative process.
"""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path as FsPath
from typing import Sequence

import numpy as np

from .deviation import DeviationReport, estimate_tail
from .exceptions import InsufficientCyclesError, ModelError, ModelPathologyError, ParameterError
from .models import EmpiricalSample
from .seeding import STREAM_HAWKES, derive_rng, map_ordered

__all__ = [
    "PiecewiseKernel",
    "HawkesConfig",
    "HawkesPath",
    "simulate_hawkes",
    "simulate_hawkes_ensemble",
    "extract_renewal_pairs",
    "hawkes_deviation_pipeline",
    "load_hawkes_config",
    "hawkes_moment_term",
]

MAX_EVENTS = 10**7


@dataclass(frozen=True)
class PiecewiseKernel:
    """``h(r) = values[k]`` on ``[breakpoints[k], breakpoints[k+1])``, zero beyond."""

    breakpoints: tuple[float, ...]
    values: tuple[float, ...]

    def __post_init__(self):
        b = tuple(float(x) for x in self.breakpoints)
        v = tuple(float(x) for x in self.values)
        if len(b) != len(v) + 1:
            raise ModelError("kernel needs len(breakpoints) == len(values) + 1")
        if b[0] != 0.0:
            raise ModelError("kernel breakpoints must start at 0")
        if any(y <= x for x, y in zip(b, b[1:])):
            raise ModelError("kernel breakpoints must be strictly increasing")
        if not all(math.isfinite(x) for x in b + v):
            raise ModelError("kernel breakpoints and values must be finite")
        object.__setattr__(self, "breakpoints", b)
        object.__setattr__(self, "values", v)
        # suffix maxima of the positive part, for the thinning envelope
        sm, acc = [], 0.0
        for x in reversed(v):
            acc = max(acc, x, 0.0)
            sm.append(acc)
        object.__setattr__(self, "_suffix_pos", tuple(reversed(sm)))

    @staticmethod
    def zero() -> "PiecewiseKernel":
        return PiecewiseKernel((0.0,), ())

    @property
    def support(self) -> float:
        return self.breakpoints[-1]

    @property
    def integral(self) -> float:
        return math.fsum((b1 - b0) * v for b0, b1, v in zip(self.breakpoints, self.breakpoints[1:], self.values))

    def _piece(self, r: float) -> int:
        """Index ``k`` with ``breakpoints[k] <= r < breakpoints[k+1]``, or -1."""
        b = self.breakpoints
        if r < 0 or r >= b[-1]:
            return -1
        lo, hi = 0, len(b) - 1
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if b[mid] <= r:
                lo = mid
            else:
                hi = mid
        return lo

    def __call__(self, r: float) -> float:
        k = self._piece(r)
        return 0.0 if k < 0 else self.values[k]

    def sup_positive_from(self, r: float) -> float:
        """``sup_{r' >= r} max(h(r'), 0)``."""
        k = self._piece(max(r, 0.0))
        return 0.0 if k < 0 else self._suffix_pos[k]

    def to_dict(self):
        return {"breakpoints": list(self.breakpoints), "values": list(self.values), "support": self.support}


@dataclass(frozen=True)
class HawkesConfig:
    baseline: float
    kernel: PiecewiseKernel
    horizon: float
    seed: int = 0

    def __post_init__(self):
        if not (self.baseline > 0 and math.isfinite(self.baseline)):
            raise ModelError(f"baseline intensity must be positive, got {self.baseline}")
        if not (self.horizon > 0 and math.isfinite(self.horizon)):
            raise ModelError("horizon T must be positive and finite")

    @property
    def L(self) -> float:
        return self.kernel.support

    def to_dict(self):
        return {
            "baseline": self.baseline,
            "kernel": self.kernel.to_dict(),
            "horizon": self.horizon,
            "seed": self.seed,
        }


def hawkes_config_from_dict(d: dict) -> HawkesConfig:
    try:
        k = d["kernel"]
        bps = [float(x) for x in k["breakpoints"]]
        vals = [float(x) for x in k["values"]]
        if "support" in k and bps and abs(float(k["support"]) - bps[-1]) > 0:
            raise ModelError("kernel support must equal the last breakpoint")
        if not bps:
            bps = [0.0]
        return HawkesConfig(float(d["baseline"]), PiecewiseKernel(tuple(bps), tuple(vals)), float(d["horizon"]), int(d.get("seed", 0)))
    except KeyError as exc:
        raise ModelError(f"Hawkes config is missing field {exc}") from None


def load_hawkes_config(path: str | FsPath) -> HawkesConfig:
    try:
        d = json.loads(FsPath(path).read_text())
    except json.JSONDecodeError as exc:
        raise ModelError(f"{path}: not valid JSON ({exc})") from None
    return hawkes_config_from_dict(d)


@dataclass
class HawkesPath:
    T: float
    L: float
    events: np.ndarray
    intensities: np.ndarray
    regenerations: np.ndarray
    pairs: np.ndarray  # shape (n_cycles, 2): (tau_i, W_i)
    trailing_events: int
    candidates: list | None = None

    @property
    def n_events(self) -> int:
        return int(self.events.size)

    def summary(self) -> dict:
        return {
            "T": self.T,
            "L": self.L,
            "n_events": self.n_events,
            "n_regenerations": int(self.regenerations.size),
            "n_cycles": int(self.pairs.shape[0]),
            "trailing_events": self.trailing_events,
        }


def _kernel_sum(kernel: PiecewiseKernel, s: float, recent) -> float:
    acc = 0.0
    for tj in recent:
        acc += kernel(s - tj)
    return acc


def simulate_hawkes(config: HawkesConfig, path_index: int = 0, trace: bool = False) -> HawkesPath:
    """Ogata thinning on ``(0, T]``; deterministic given ``(config.seed, path_index)``.

    Between events the intensity is bounded by
    ``lambda + sum_j sup_{r >= s - t_j} max(h(r), 0)``, which stays valid up
    to the next accepted event.  With ``trace=True`` every candidate is
    recorded as ``(time, bound, intensity, uniform, accepted)``.
    """
    rng = derive_rng(config.seed, STREAM_HAWKES, path_index)
    lam, h, T, L = config.baseline, config.kernel, config.horizon, config.L
    recent: deque = deque()  # events within the kernel support
    events, intens = [], []
    cand = [] if trace else None
    s = 0.0
    while True:
        while recent and s - recent[0] >= L:
            recent.popleft()
        bound = lam + sum(h.sup_positive_from(s - tj) for tj in recent)
        s = s + rng.exponential(1.0 / bound)
        if s > T:
            break
        while recent and s - recent[0] >= L:
            recent.popleft()
        val = max(0.0, lam + _kernel_sum(h, s, recent))
        uni = rng.random()
        accept = uni * bound < val
        if trace:
            cand.append((s, bound, val, uni, accept))
        if accept:
            events.append(s)
            intens.append(val)
            if L > 0:
                recent.append(s)
            if len(events) > MAX_EVENTS:
                raise ModelPathologyError(f"more than {MAX_EVENTS} events before T={T}")
    ev = np.asarray(events)
    regen, pairs, trailing = _cycles(ev, L, T)
    return HawkesPath(T, L, ev, np.asarray(intens), regen, pairs, trailing, cand)


def _cycles(ev: np.ndarray, L: float, T: float):
    """Regeneration times, complete-cycle pairs and the trailing event count.

    ``s`` is a regeneration time when ``(s - L, s]`` holds no event: the start
    ``0`` and every ``t_j + L <= T`` not followed by another event within
    ``L``.  With ``L = 0`` every event time regenerates.
    """
    regen = [0.0]
    for j, tj in enumerate(ev):
        nxt = ev[j + 1] if j + 1 < ev.size else math.inf
        s = tj + L
        while s - tj < L:  # rounding must not leave the last kernel piece active
            s = math.nextafter(s, math.inf)
        if s <= T and nxt > s:
            regen.append(float(s))
    regen_arr = np.asarray(regen)
    counts = np.searchsorted(ev, regen_arr, side="right")  # events in (0, R_i]
    taus = np.diff(regen_arr)
    ws = np.diff(counts).astype(float)
    pairs = np.column_stack([taus, ws]) if taus.size else np.zeros((0, 2))
    trailing = int(ev.size - counts[-1])
    return regen_arr, pairs, trailing


def extract_renewal_pairs(path: HawkesPath, L: float | None = None) -> np.ndarray:
    """Complete-cycle pairs ``(tau_i, W_i)``; the trailing incomplete cycle is dropped.

    Raises
    ------
    InsufficientCyclesError
        When fewer than two regeneration times were observed.
    """
    if L is not None and float(L) != path.L:
        regen, pairs, trailing = _cycles(path.events, float(L), path.T)
    else:
        regen, pairs = path.regenerations, path.pairs
    if regen.size < 2:
        raise InsufficientCyclesError(
            f"only {regen.size} regeneration time(s) on (0, {path.T}]; no complete cycle to extract"
        )
    return pairs


def simulate_hawkes_ensemble(config: HawkesConfig, n_paths: int, workers: int | None = None) -> list[HawkesPath]:
    return map_ordered(lambda i: simulate_hawkes(config, i), list(range(int(n_paths))), workers)


def hawkes_deviation_pipeline(
    config: HawkesConfig,
    t_grid: Sequence[float],
    a: float,
    n_replications: int,
    seed: int | None = None,
    workers: int | None = None,
    with_bound: bool = True,
) -> tuple[DeviationReport, EmpiricalSample]:
    """Tail slopes of the cumulative process built from Hawkes regeneration cycles.

    The pairs extracted from one long path define an :class:`EmpiricalSample`
    law; renewal-reward paths are resimulated from it and the deviation bound
    uses its estimated (lower-bound) moment boundaries, so the report is
    flagged as estimate based.
    """
    path = simulate_hawkes(config)
    pairs = extract_renewal_pairs(path)
    model = EmpiricalSample(pairs[:, 0], pairs[:, 1])
    rep = estimate_tail(model, "Upper", a, t_grid, n_replications, config.seed if seed is None else seed, workers, with_bound)
    rep.estimate_based = True
    b = model.exp_moment_bounds()
    rep.notes.append(
        f"law estimated from {pairs.shape[0]} cycles; theta0 >= {float(b.theta0):.6g}, eta0 >= {float(b.eta0):.6g} "
        "(estimated lower bounds)"
    )
    return rep, model


def hawkes_moment_term(theta0: float, a: float, kappa: float) -> float:
    """Moment term ``(1 - kappa) theta0 a / 4`` of the Hawkes deviation bound.

    For the event count the exponential-moment boundary of the cycle length
    plays the role of ``eta0``, so this equals the truncated-branch moment term
    of :func:`deviation_bound` with ``eta0 = theta0``.
    """
    theta0, a, kappa = float(theta0), float(a), float(kappa)
    if not a > 0:
        raise ParameterError("a must be positive")
    if not 0 < kappa < 1:
        raise ParameterError("kappa must lie in (0, 1)")
    if not theta0 > 0:
        raise ParameterError("theta0 must be positive")
    return (1.0 - kappa) * theta0 * a / 4.0
