"""Simulation of cumulative processes ``Z_t = sum_{i <= M_t} W_i``.

Single trajectories (:func:`simulate_path`, :func:`simulate_coupled`) keep
every renewal and are meant for inspection and invariant checks.  Ensembles
(:func:`simulate_ensemble`) only keep ``(M_t, Z_t)`` per replication and are
vectorised over fixed-size chunks of paths; every chunk owns a random stream
addressed by ``(seed, stream, t_index, chunk_index)``, so results do not
depend on the number of workers.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import stats

from .exceptions import ModelPathologyError, ParameterError, UnsupportedMomentError
from .models import JointModel
from .seeding import STREAM_ENSEMBLE, STREAM_PATH, derive_rng, map_ordered

__all__ = [
    "Path",
    "TruncateW",
    "ShiftTau",
    "EnsembleResult",
    "EnsembleStats",
    "simulate_path",
    "simulate_coupled",
    "simulate_ensemble",
    "lln_clt_check",
    "empirical_measure_histogram",
]

MAX_RENEWALS = 10**9
# upper bound on pair draws held in memory by one ensemble chunk
CHUNK_BUDGET = 1 << 22
MAX_CHUNK_PATHS = 8192


# ---------------------------------------------------------------------------
# variants
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TruncateW:
    """Clamp rewards to ``[-n, n]``."""

    n: float

    def __post_init__(self):
        if not self.n > 0:
            raise ParameterError("truncation level n must be positive")

    def apply(self, tau, w):
        return tau, np.clip(w, -self.n, self.n)

    def model(self, model: JointModel) -> JointModel:
        return model.truncate_w(self.n)

    def to_dict(self):
        return {"variant": "TruncateW", "n": self.n}


@dataclass(frozen=True)
class ShiftTau:
    """Lengthen every waiting time by ``eps``."""

    eps: float

    def __post_init__(self):
        if not self.eps > 0:
            raise ParameterError("shift eps must be positive")

    def apply(self, tau, w):
        return tau + self.eps, w

    def model(self, model: JointModel) -> JointModel:
        return model.shift_tau(self.eps)

    def to_dict(self):
        return {"variant": "ShiftTau", "eps": self.eps}


Variant = TruncateW | ShiftTau


def variant_from_dict(d: dict) -> Variant:
    if d.get("variant") == "TruncateW":
        return TruncateW(float(d["n"]))
    if d.get("variant") == "ShiftTau":
        return ShiftTau(float(d["eps"]))
    raise ParameterError(f"unknown variant {d!r}")


# ---------------------------------------------------------------------------
# single paths
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Path:
    """One trajectory on ``[0, t]`` with ``S_0 = 0``.

    ``S`` and ``W`` hold the ``M_t`` completed renewals; ``overshoot`` is the
    pair ``(tau_{M_t+1}, W_{M_t+1})`` straddling ``t``.
    """

    t: float
    S: np.ndarray
    W: np.ndarray
    M_t: int
    Z_t: float
    mu_phi: float
    overshoot: tuple[float, float]
    S_last: float = 0.0  # S_{M_t}, 0 when no renewal happened

    @staticmethod
    def build(t: float, S: np.ndarray, W: np.ndarray, overshoot: tuple[float, float]) -> "Path":
        """Derive ``M_t``, ``Z_t`` and ``mu_t(phi)`` from renewal data."""
        M = int(S.size)
        Z = math.fsum(W.tolist()) if M else 0.0
        S_last = float(S[-1]) if M else 0.0
        tau_next, w_next = overshoot
        mu = Z / t + ((t - S_last) / t) * (w_next / tau_next)
        return Path(float(t), S, W, M, Z, mu, (float(tau_next), float(w_next)), S_last)

    def recompute(self) -> "Path":
        return Path.build(self.t, self.S, self.W, self.overshoot)

    def same_as(self, other: "Path") -> bool:
        return (
            self.t == other.t
            and np.array_equal(self.S, other.S)
            and np.array_equal(self.W, other.W)
            and self.M_t == other.M_t
            and self.Z_t == other.Z_t
            and self.mu_phi == other.mu_phi
            and self.overshoot == other.overshoot
        )

    def summary(self) -> dict:
        return {
            "t": self.t,
            "M_t": self.M_t,
            "Z_t": self.Z_t,
            "mu_phi": self.mu_phi,
            "S_last": self.S_last,
            "overshoot_tau": self.overshoot[0],
            "overshoot_w": self.overshoot[1],
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        out = csv.writer(buf, lineterminator="\n")
        out.writerow(["i", "S_i", "W_i"])
        for i, (s, w) in enumerate(zip(self.S, self.W), start=1):
            out.writerow([i, f"{s:.17g}", f"{w:.17g}"])
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps({"schema": "path/1", **self.summary()}, indent=2, sort_keys=True)


def _block_size(model: JointModel, t: float) -> int:
    """Draws per path covering ``[0, t]`` with high probability."""
    try:
        mom = model.moments()
        et, vt = mom.mean_tau, mom.var_tau
        k = t / et + 6.0 * math.sqrt(t * vt / et**3 + 1.0) + 8.0
    except Exception:
        k = 64.0
    return int(min(max(k, 8.0), 1e7))


def _draw_until(model: JointModel, t: float, rng: np.random.Generator):
    """All pairs up to and including the first renewal past ``t``."""
    k = _block_size(model, t)
    taus, ws = [], []
    offset = 0.0
    total = 0
    while True:
        tau, w = model.sample_pairs(rng, k)
        S = offset + np.cumsum(tau)
        taus.append(tau)
        ws.append(w)
        total += k
        if S[-1] > t:
            break
        offset = float(S[-1])
        if total > MAX_RENEWALS:
            raise ModelPathologyError(f"more than {MAX_RENEWALS} renewals before t={t}; is tau nearly 0?")
        k = max(16, k // 4)
    return np.concatenate(taus), np.concatenate(ws)


def _path_from_pairs(t: float, tau: np.ndarray, w: np.ndarray) -> Path:
    S_all = np.cumsum(tau)
    M = int(np.searchsorted(S_all, t, side="right"))
    if M >= S_all.size:
        raise ModelPathologyError("pair sequence does not cover [0, t]")
    S = S_all[:M].copy()
    W = np.asarray(w[:M], dtype=float).copy()
    return Path.build(t, S, W, (float(tau[M]), float(w[M])))


def _check_t(t):
    t = float(t)
    if not (t > 0 and math.isfinite(t)):
        raise ParameterError(f"horizon t must be positive and finite, got {t}")
    return t


def simulate_path(model: JointModel, t: float, seed: int) -> Path:
    """Simulate one trajectory on ``[0, t]``; deterministic given ``seed``.

    One pair past ``t`` is always drawn so that the overshoot pair, and hence
    ``mu_t(phi)``, is available.
    """
    t = _check_t(t)
    tau, w = _draw_until(model, t, derive_rng(seed, STREAM_PATH))
    return _path_from_pairs(t, tau, w)


def simulate_coupled(model: JointModel, variants: Sequence[Variant], t: float, seed: int) -> list[Path]:
    """Parent path followed by one path per variant, all on common draws.

    The variant paths apply their transform to the parent's pair sequence,
    which is exactly what sampling the transformed model from the same
    generator state yields.  ``ShiftTau`` lengthens waiting times, so the
    parent sequence always covers the variant paths.
    """
    if not variants:
        raise ParameterError("variants must be non-empty")
    t = _check_t(t)
    tau, w = _draw_until(model, t, derive_rng(seed, STREAM_PATH))
    out = [_path_from_pairs(t, tau, w)]
    for v in variants:
        vt, vw = v.apply(tau, w)
        out.append(_path_from_pairs(t, vt, vw))
    return out


# ---------------------------------------------------------------------------
# ensembles
# ---------------------------------------------------------------------------


@dataclass
class EnsembleResult:
    """``M_t`` and ``Z_t`` per replication, for the parent and each variant."""

    t: float
    M: np.ndarray
    Z: np.ndarray
    variant_M: list[np.ndarray] = field(default_factory=list)
    variant_Z: list[np.ndarray] = field(default_factory=list)

    @property
    def n_paths(self) -> int:
        return int(self.Z.size)


def chunk_layout(model: JointModel, t: float, n_paths: int) -> list[int]:
    """Chunk sizes used by :func:`simulate_ensemble` (depends on model and t only)."""
    k = _block_size(model, t)
    per = int(max(64, min(MAX_CHUNK_PATHS, CHUNK_BUDGET // k)))
    full, rest = divmod(int(n_paths), per)
    return [per] * full + ([rest] if rest else [])


def _simulate_chunk(model, t, size, rng, variants):
    k0 = _block_size(model, t)
    nv = len(variants)
    M = np.zeros((nv + 1, size), dtype=np.int64)
    Z = np.zeros((nv + 1, size))
    Ssum = np.zeros((nv + 1, size))
    active = np.arange(size)
    k = k0
    drawn = 0
    while active.size:
        tau, w = model.sample_pairs(rng, active.size * k)
        tau = tau.reshape(active.size, k)
        w = w.reshape(active.size, k)
        base_done = None
        for j, v in enumerate((None, *variants)):
            vt, vw = (tau, w) if v is None else v.apply(tau, w)
            S = Ssum[j, active, None] + np.cumsum(vt, axis=1)
            inside = S <= t
            M[j, active] += inside.sum(axis=1)
            Z[j, active] += np.where(inside, vw, 0.0).sum(axis=1)
            Ssum[j, active] = S[:, -1]
            if v is None:
                base_done = S[:, -1] > t
        # variants stop no later than the parent (shifts only lengthen tau)
        active = active[~base_done]
        drawn += k
        if drawn > MAX_RENEWALS:
            raise ModelPathologyError(f"more than {MAX_RENEWALS} renewals before t={t}")
        k = max(16, k0 // 4)
    return M, Z


def simulate_ensemble(
    model: JointModel,
    t: float,
    n_paths: int,
    seed: int,
    variants: Sequence[Variant] = (),
    stream: int = STREAM_ENSEMBLE,
    t_index: int = 0,
    workers: int | None = None,
) -> EnsembleResult:
    """Simulate ``n_paths`` independent replications of ``(M_t, Z_t)``."""
    t = _check_t(t)
    if n_paths < 1:
        raise ParameterError("n_paths must be >= 1")
    sizes = chunk_layout(model, t, n_paths)

    def run(ci):
        rng = derive_rng(seed, stream, t_index, ci)
        return _simulate_chunk(model, t, sizes[ci], rng, variants)

    parts = map_ordered(run, list(range(len(sizes))), workers)
    M = np.concatenate([p[0] for p in parts], axis=1)
    Z = np.concatenate([p[1] for p in parts], axis=1)
    return EnsembleResult(t, M[0], Z[0], list(M[1:]), list(Z[1:]))


@dataclass
class EnsembleStats:
    n_paths: int
    t: float
    mean_zt_over_t: float
    clt_statistic: np.ndarray | None
    ks_distance: float | None
    ks_pvalue: float | None
    degenerate: bool
    lln_target: float
    clt_sigma2: float

    def to_dict(self) -> dict:
        return {
            "schema": "ensemble-stats/1",
            "n_paths": self.n_paths,
            "t": self.t,
            "mean_zt_over_t": self.mean_zt_over_t,
            "ks_distance": self.ks_distance,
            "ks_pvalue": self.ks_pvalue,
            "degenerate": self.degenerate,
            "lln_target": self.lln_target,
            "clt_sigma2": self.clt_sigma2,
        }


def lln_clt_check(model: JointModel, t: float, n_paths: int, seed: int, workers: int | None = None) -> EnsembleStats:
    """LLN and CLT diagnostics for ``Z_t``.

    The statistic ``(Z_t - t m) / sqrt(t sigma^2)`` with ``m = E W / E tau``
    and ``sigma^2 = Var(W - m tau) / E tau`` is compared with the standard
    normal by the Kolmogorov-Smirnov distance.  A law with ``sigma^2 = 0``
    is flagged degenerate and gets no KS distance.
    """
    try:
        mom = model.moments()
    except UnsupportedMomentError:
        raise
    m = mom.mean_w / mom.mean_tau
    ens = simulate_ensemble(model, t, n_paths, seed, workers=workers)
    mean = math.fsum((ens.Z / t).tolist()) / ens.n_paths
    if mom.clt_sigma2 <= 0:
        return EnsembleStats(ens.n_paths, float(t), mean, None, None, None, True, m, 0.0)
    z = (ens.Z - t * m) / math.sqrt(t * mom.clt_sigma2)
    ks = stats.kstest(z, "norm")
    return EnsembleStats(
        ens.n_paths, float(t), mean, z, float(ks.statistic), float(ks.pvalue), False, m, mom.clt_sigma2
    )


def empirical_measure_histogram(path: Path, u_edges, w_edges) -> np.ndarray:
    """Cell masses of the empirical measure ``mu_t`` on a ``(u, w)`` grid.

    ``mu_t`` gives mass ``tau_i / t`` to each completed pair and
    ``(t - S_{M_t}) / t`` to the overshoot pair; its total mass is 1 and its
    integral of ``w / u`` is ``mu_t(phi)``.  Diagnostic only.
    """
    taus = np.diff(np.concatenate([[0.0], path.S]))
    us = np.concatenate([taus, [path.overshoot[0]]])
    ws = np.concatenate([path.W, [path.overshoot[1]]])
    mass = np.concatenate([taus, [path.t - path.S_last]]) / path.t
    h, _, _ = np.histogram2d(us, ws, bins=[u_edges, w_edges], weights=mass)
    return h
