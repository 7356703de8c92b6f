"""Joint laws of a waiting time ``tau > 0`` and a reward ``W``.

Four kinds of law are supported:

* :class:`IndependentProduct` -- ``tau`` and ``W`` drawn from independent
  marginal families;
* :class:`DeterministicReward` -- ``W = F(tau)`` for a named reward map ``F``;
* :class:`DiscreteJoint` -- finitely many weighted atoms ``((u, w), p)``;
* :class:`EmpiricalSample` -- the uniform law on observed pairs.

Every model exposes the joint log-moment-generating function
``log E exp(x tau + y W)``, the exponential-moment boundaries ``theta0`` and
``eta0``, the first two moments, vectorised sampling, and the two transforms
used by the approximation arguments: clamping ``W`` to ``[-n, n]`` and
shifting ``tau`` by ``eps``.  Transformed models consume the random stream
exactly like their parent, so sampling a model and its transform with the
same generator state gives coupled draws.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Any, Callable, NamedTuple

import numpy as np
from scipy import integrate, special, stats

from .exceptions import ModelError, ParameterError, UnsupportedMomentError
from .seeding import as_generator
from .xreal import INF, XReal

__all__ = [
    "Exponential",
    "Gamma",
    "Uniform",
    "Deterministic",
    "Constant",
    "Gaussian",
    "ShiftedBy",
    "TruncatedTo",
    "RewardMap",
    "IndependentProduct",
    "DeterministicReward",
    "DiscreteJoint",
    "EmpiricalSample",
    "JointModel",
    "ExpMomentBounds",
    "Moments",
    "log_mgf",
    "exp_moment_bounds",
    "moments",
    "truncate_w",
    "shift_tau",
    "sample_pair",
    "sample_pairs",
    "tail_rate_lower_bound",
    "model_from_dict",
    "load_model",
    "read_pairs_csv",
    "write_pairs_csv",
]

# log E e^{...} above this is reported as +inf
LOG_OVERFLOW = 700.0
QUAD_EPSABS = 1e-10
QUAD_EPSREL = 1e-10


def _logsumexp_exact(v: np.ndarray, logw: np.ndarray | None = None) -> float:
    """log(sum(exp(v))) with a correctly rounded sum (order independent)."""
    if logw is not None:
        v = v + logw
    vmax = float(np.max(v))
    if not math.isfinite(vmax):
        return vmax
    return vmax + math.log(math.fsum(np.exp(v - vmax).tolist()))


# ---------------------------------------------------------------------------
# one-dimensional families
# ---------------------------------------------------------------------------


class Family(ABC):
    """A law on the real line with a closed-form log-MGF of its clamped form."""

    name: str = ""

    @abstractmethod
    def support(self) -> tuple[float, float]: ...

    @abstractmethod
    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray: ...

    @abstractmethod
    def clip_log_mgf(self, s: float, lo: float = -math.inf, hi: float = math.inf) -> float:
        """``log E exp(s * clip(X, lo, hi))``; ``+inf`` when divergent."""

    @abstractmethod
    def clip_moment(self, k: int, lo: float = -math.inf, hi: float = math.inf) -> float:
        """``E clip(X, lo, hi) ** k`` for ``k`` in ``{1, 2}``."""

    @abstractmethod
    def exp_bound(self) -> float:
        """``sup {s >= 0 : E exp(s * X) < inf}``."""

    @abstractmethod
    def abs_exp_bound(self) -> float:
        """``sup {s >= 0 : E exp(s * |X|) < inf}``."""

    @abstractmethod
    def to_dict(self) -> dict: ...

    def log_mgf(self, s: float) -> float:
        return self.clip_log_mgf(s)

    @property
    def mean(self) -> float:
        return self.clip_moment(1)

    @property
    def var(self) -> float:
        m = self.clip_moment(1)
        return max(self.clip_moment(2) - m * m, 0.0)

    def frozen(self):
        """scipy.stats frozen law, for densities in quadrature; ``None`` for atoms."""
        return None


class _ContinuousFamily(Family):
    """Families with a scipy.stats backing for clamp moments."""

    def clip_moment(self, k, lo=-math.inf, hi=math.inf):
        d = self.frozen()
        a, b = self.support()
        lo_eff, hi_eff = max(lo, a), min(hi, b)
        if lo_eff >= hi_eff:
            # the whole law sits at one end of the clamp
            c = lo if lo > a else hi
            return c**k
        mass_lo = d.cdf(lo) if lo > a else 0.0
        mass_hi = d.sf(hi) if hi < b else 0.0
        inner = d.expect(lambda x: x**k, lb=lo_eff, ub=hi_eff, epsabs=1e-13, epsrel=1e-12)
        out = inner
        if mass_lo:
            out += mass_lo * lo**k
        if mass_hi:
            out += mass_hi * hi**k
        return float(out)

    def _clip_atoms(self, s, lo, hi):
        """log-weights of the two clamp atoms (``-inf`` when absent)."""
        a, b = self.support()
        if lo <= a and hi >= b:
            return []
        d = self.frozen()
        terms = []
        if lo > a:
            terms.append(s * lo + d.logcdf(lo))
        if hi < b:
            terms.append(s * hi + d.logsf(hi))
        return terms


def _combine(terms: list[float]) -> float:
    terms = [t for t in terms if t > -math.inf]
    if not terms:
        return -math.inf
    if any(t == math.inf for t in terms):
        return math.inf
    out = float(special.logsumexp(terms))
    return math.inf if out > LOG_OVERFLOW else out


@dataclass(frozen=True)
class Exponential(_ContinuousFamily):
    rate: float
    name = "Exponential"

    def __post_init__(self):
        if not (self.rate > 0 and math.isfinite(self.rate)):
            raise ModelError(f"Exponential rate must be positive and finite, got {self.rate}")

    def support(self):
        return (0.0, math.inf)

    def frozen(self):
        return stats.expon(scale=1.0 / self.rate)

    def sample(self, rng, size):
        return rng.exponential(1.0 / self.rate, size)

    def log_mgf(self, s):
        return math.inf if s >= self.rate else math.log(self.rate / (self.rate - s))

    def _log_partial(self, s, a, b):
        """log of int_a^b rate * exp((s - rate) x) dx, 0 <= a < b <= inf."""
        r = self.rate
        c = s - r
        if b == math.inf:
            if c >= 0:
                return math.inf
            return math.log(r / -c) + c * a
        if c == 0:
            return math.log(r * (b - a))
        # r/c (e^{cb} - e^{ca}), computed stably
        if c > 0:
            return math.log(r / c) + c * b + math.log(-math.expm1(c * (a - b)))
        return math.log(r / -c) + c * a + math.log(-math.expm1(c * (b - a)))

    def clip_log_mgf(self, s, lo=-math.inf, hi=math.inf):
        if lo >= hi:
            return s * lo
        a, b = max(lo, 0.0), hi
        if a >= b:
            return s * lo
        terms = [self._log_partial(s, a, b)]
        terms += self._clip_atoms(s, lo, hi)
        return _combine(terms)

    def clip_moment(self, k, lo=-math.inf, hi=math.inf):
        if lo == -math.inf and hi == math.inf:
            return 1.0 / self.rate if k == 1 else 2.0 / self.rate**2
        return super().clip_moment(k, lo, hi)

    def exp_bound(self):
        return self.rate

    def abs_exp_bound(self):
        return self.rate

    def to_dict(self):
        return {"family": self.name, "rate": self.rate}


@dataclass(frozen=True)
class Gamma(_ContinuousFamily):
    shape: float
    rate: float
    name = "Gamma"

    def __post_init__(self):
        if not (self.shape > 0 and self.rate > 0):
            raise ModelError("Gamma shape and rate must be positive")

    def support(self):
        return (0.0, math.inf)

    def frozen(self):
        return stats.gamma(self.shape, scale=1.0 / self.rate)

    def sample(self, rng, size):
        return rng.gamma(self.shape, 1.0 / self.rate, size)

    def log_mgf(self, s):
        return math.inf if s >= self.rate else -self.shape * math.log1p(-s / self.rate)

    def clip_log_mgf(self, s, lo=-math.inf, hi=math.inf):
        k, r = self.shape, self.rate
        if lo >= hi:
            return s * lo
        a, b = max(lo, 0.0), hi
        if a >= b:
            return s * lo
        if s < r:
            # (r/(r-s))^k P(a < G' < b) with G' ~ Gamma(k, r - s)
            g = stats.gamma(k, scale=1.0 / (r - s))
            mass = g.cdf(b) - g.cdf(a) if b < math.inf else g.sf(a)
            if mass <= 0:
                inner = -math.inf
            else:
                inner = k * math.log(r / (r - s)) + math.log(mass)
        elif b == math.inf:
            return math.inf
        else:
            d = self.frozen()
            c = s * b
            val, _ = integrate.quad(
                lambda x: math.exp(s * x - c) * d.pdf(x), a, b, epsabs=QUAD_EPSABS, epsrel=QUAD_EPSREL
            )
            inner = c + math.log(val) if val > 0 else -math.inf
        return _combine([inner] + self._clip_atoms(s, lo, hi))

    def clip_moment(self, k, lo=-math.inf, hi=math.inf):
        if lo == -math.inf and hi == math.inf:
            m = self.shape / self.rate
            return m if k == 1 else self.shape * (self.shape + 1) / self.rate**2
        return super().clip_moment(k, lo, hi)

    def exp_bound(self):
        return self.rate

    def abs_exp_bound(self):
        return self.rate

    def to_dict(self):
        return {"family": self.name, "shape": self.shape, "rate": self.rate}


@dataclass(frozen=True)
class Uniform(_ContinuousFamily):
    lo: float
    hi: float
    name = "Uniform"

    def __post_init__(self):
        if not (math.isfinite(self.lo) and math.isfinite(self.hi) and self.lo < self.hi):
            raise ModelError(f"Uniform needs finite lo < hi, got ({self.lo}, {self.hi})")

    def support(self):
        return (self.lo, self.hi)

    def frozen(self):
        return stats.uniform(loc=self.lo, scale=self.hi - self.lo)

    def sample(self, rng, size):
        return rng.uniform(self.lo, self.hi, size)

    def clip_log_mgf(self, s, lo=-math.inf, hi=math.inf):
        if lo >= hi:
            return s * lo
        a, b = max(lo, self.lo), min(hi, self.hi)
        if a >= b:
            return s * (lo if lo >= self.hi else hi)
        width = self.hi - self.lo
        if s == 0:
            inner = math.log((b - a) / width)
        elif s > 0:
            inner = s * b + math.log(-math.expm1(-s * (b - a)) / (s * width))
        else:
            inner = s * a + math.log(math.expm1(s * (b - a)) / (s * width))
        terms = [inner]
        if lo > self.lo:
            terms.append(s * lo + math.log((lo - self.lo) / width))
        if hi < self.hi:
            terms.append(s * hi + math.log((self.hi - hi) / width))
        return _combine(terms)

    def clip_moment(self, k, lo=-math.inf, hi=math.inf):
        if lo <= self.lo and hi >= self.hi:
            a, b = self.lo, self.hi
            return (b ** (k + 1) - a ** (k + 1)) / ((k + 1) * (b - a))
        return super().clip_moment(k, lo, hi)

    def exp_bound(self):
        return math.inf

    def abs_exp_bound(self):
        return math.inf

    def to_dict(self):
        return {"family": self.name, "lo": self.lo, "hi": self.hi}


@dataclass(frozen=True)
class Gaussian(_ContinuousFamily):
    mean_: float
    sd: float
    name = "Gaussian"

    def __post_init__(self):
        if not (self.sd > 0 and math.isfinite(self.mean_)):
            raise ModelError("Gaussian needs finite mean and sd > 0")

    def support(self):
        return (-math.inf, math.inf)

    def frozen(self):
        return stats.norm(loc=self.mean_, scale=self.sd)

    def sample(self, rng, size):
        return rng.normal(self.mean_, self.sd, size)

    def log_mgf(self, s):
        v = s * self.mean_ + 0.5 * (s * self.sd) ** 2
        return math.inf if v > LOG_OVERFLOW else v

    def clip_log_mgf(self, s, lo=-math.inf, hi=math.inf):
        if lo >= hi:
            return s * lo
        mu, sd = self.mean_, self.sd
        shift = mu + s * sd * sd
        za, zb = (lo - shift) / sd, (hi - shift) / sd
        if zb <= 0:
            lmass = special.log_ndtr(zb) + math.log(-math.expm1(special.log_ndtr(za) - special.log_ndtr(zb))) if za > -math.inf else special.log_ndtr(zb)
        else:
            # upper tail form is more accurate for large z
            lmass = special.log_ndtr(-za) + math.log(-math.expm1(special.log_ndtr(-zb) - special.log_ndtr(-za))) if zb < math.inf else special.log_ndtr(-za)
        inner = s * mu + 0.5 * (s * sd) ** 2 + lmass
        return _combine([inner] + self._clip_atoms(s, lo, hi))

    def clip_moment(self, k, lo=-math.inf, hi=math.inf):
        if lo == -math.inf and hi == math.inf:
            return self.mean_ if k == 1 else self.mean_**2 + self.sd**2
        return super().clip_moment(k, lo, hi)

    def exp_bound(self):
        return math.inf

    def abs_exp_bound(self):
        return math.inf

    def to_dict(self):
        return {"family": self.name, "mean": self.mean_, "sd": self.sd}


@dataclass(frozen=True)
class Constant(Family):
    value: float
    name = "Constant"

    def __post_init__(self):
        object.__setattr__(self, "value", float(self.value))
        if not math.isfinite(self.value):
            raise ModelError("Constant value must be finite")

    def support(self):
        return (self.value, self.value)

    def sample(self, rng, size):
        return np.full(size, float(self.value))

    def log_mgf(self, s):
        return s * self.value

    def clip_log_mgf(self, s, lo=-math.inf, hi=math.inf):
        return s * min(max(self.value, lo), hi)

    def clip_moment(self, k, lo=-math.inf, hi=math.inf):
        return min(max(self.value, lo), hi) ** k

    def exp_bound(self):
        return math.inf

    def abs_exp_bound(self):
        return math.inf

    def to_dict(self):
        return {"family": self.name, "value": self.value}


@dataclass(frozen=True)
class Deterministic(Constant):
    """Point mass used as a waiting-time law; ``value`` must be positive."""

    name = "Deterministic"

    def __post_init__(self):
        super().__post_init__()
        if not self.value > 0:
            raise ModelError("Deterministic waiting time must be positive")


@dataclass(frozen=True)
class ShiftedBy(Family):
    """``inner + eps``.  Draws consume the stream exactly like ``inner``."""

    inner: Family
    eps: float
    name = "ShiftedBy"

    def __post_init__(self):
        if not (self.eps >= 0 and math.isfinite(self.eps)):
            raise ModelError("ShiftedBy eps must be finite and >= 0")

    def support(self):
        a, b = self.inner.support()
        return (a + self.eps, b + self.eps)

    def sample(self, rng, size):
        return self.inner.sample(rng, size) + self.eps

    def log_mgf(self, s):
        inner = self.inner.log_mgf(s)
        return inner if inner == math.inf else s * self.eps + inner

    def clip_log_mgf(self, s, lo=-math.inf, hi=math.inf):
        if lo == -math.inf and hi == math.inf:
            inner = self.inner.clip_log_mgf(s)
            return inner if inner == math.inf else s * self.eps + inner
        return s * self.eps + self.inner.clip_log_mgf(s, lo - self.eps, hi - self.eps)

    def clip_moment(self, k, lo=-math.inf, hi=math.inf):
        if k == 1:
            return self.inner.clip_moment(1, lo - self.eps, hi - self.eps) + self.eps
        m1 = self.inner.clip_moment(1, lo - self.eps, hi - self.eps)
        m2 = self.inner.clip_moment(2, lo - self.eps, hi - self.eps)
        return m2 + 2 * self.eps * m1 + self.eps**2

    def exp_bound(self):
        return self.inner.exp_bound()

    def abs_exp_bound(self):
        return self.inner.abs_exp_bound()

    def frozen(self):
        d = self.inner.frozen()
        if d is None:
            return None
        return _Shifted(d, self.eps)

    @property
    def base(self) -> Family:
        return self.inner.base if isinstance(self.inner, ShiftedBy) else self.inner

    @property
    def total_shift(self) -> float:
        return self.eps + (self.inner.total_shift if isinstance(self.inner, ShiftedBy) else 0.0)

    def to_dict(self):
        return {"family": self.name, "inner": self.inner.to_dict(), "eps": self.eps}


class _Shifted:
    """Minimal shifted wrapper around a frozen scipy law."""

    def __init__(self, d, eps):
        self.d, self.eps = d, eps

    def pdf(self, x):
        return self.d.pdf(x - self.eps)

    def logpdf(self, x):
        return self.d.logpdf(x - self.eps)

    def cdf(self, x):
        return self.d.cdf(x - self.eps)

    def sf(self, x):
        return self.d.sf(x - self.eps)

    def ppf(self, q):
        return self.d.ppf(q) + self.eps


@dataclass(frozen=True)
class TruncatedTo(Family):
    """``clip(inner, -n, n)``, the clamped reward ``W v (-n) ^ n``."""

    inner: Family
    n: float
    name = "TruncatedTo"

    def __post_init__(self):
        if not self.n > 0:
            raise ParameterError(f"truncation level must be positive, got {self.n}")

    def _compose(self, lo, hi):
        # clip(clip(X, -n, n), lo, hi) == clip(X, clip(-n, lo, hi), clip(n, lo, hi))
        return min(max(-self.n, lo), hi), min(max(self.n, lo), hi)

    def support(self):
        a, b = self.inner.support()
        return (min(max(a, -self.n), self.n), min(max(b, -self.n), self.n))

    def sample(self, rng, size):
        return np.clip(self.inner.sample(rng, size), -self.n, self.n)

    def clip_log_mgf(self, s, lo=-math.inf, hi=math.inf):
        return self.inner.clip_log_mgf(s, *self._compose(lo, hi))

    def clip_moment(self, k, lo=-math.inf, hi=math.inf):
        return self.inner.clip_moment(k, *self._compose(lo, hi))

    def exp_bound(self):
        return math.inf

    def abs_exp_bound(self):
        return math.inf

    def to_dict(self):
        return {"family": self.name, "inner": self.inner.to_dict(), "n": self.n}


TAU_FAMILIES = ("Exponential", "Gamma", "Uniform", "Deterministic", "ShiftedBy")
W_FAMILIES = ("Constant", "Exponential", "Uniform", "Gaussian", "TruncatedTo")


def family_from_dict(d: dict, role: str) -> Family:
    try:
        name = d["family"]
        if role == "tau" and name not in TAU_FAMILIES:
            raise ModelError(f"{name!r} is not a waiting-time family; choose from {TAU_FAMILIES}")
        if role == "w" and name not in W_FAMILIES:
            raise ModelError(f"{name!r} is not a reward family; choose from {W_FAMILIES}")
        if name == "Exponential":
            return Exponential(float(d["rate"]))
        if name == "Gamma":
            return Gamma(float(d["shape"]), float(d["rate"]))
        if name == "Uniform":
            return Uniform(float(d["lo"]), float(d["hi"]))
        if name == "Deterministic":
            return Deterministic(float(d["value"]))
        if name == "Constant":
            return Constant(float(d["value"]))
        if name == "Gaussian":
            return Gaussian(float(d["mean"]), float(d["sd"]))
        if name == "ShiftedBy":
            return ShiftedBy(family_from_dict(d["inner"], role), float(d["eps"]))
        if name == "TruncatedTo":
            return TruncatedTo(family_from_dict(d["inner"], role), float(d["n"]))
    except KeyError as exc:
        raise ModelError(f"missing field {exc} in family description {d}") from None
    raise ModelError(f"unknown family {d.get('family')!r}")


def _check_tau_family(f: Family) -> None:
    lo, hi = f.support()
    if isinstance(f, Uniform) and f.lo <= 0:
        raise ModelError(
            "tau must be strictly positive and finite: the law may put no mass at "
            "tau = 0 or tau = +inf (Uniform lo must be > 0)"
        )
    if lo < 0 or hi <= 0 or (isinstance(f, Constant) and not lo > 0):
        raise ModelError(
            "tau must be strictly positive and finite: the law may put no mass at tau = 0 or tau = +inf"
        )


# ---------------------------------------------------------------------------
# reward maps
# ---------------------------------------------------------------------------

_MAPS: dict[str, tuple[Callable[..., Callable[[np.ndarray], np.ndarray]], str]] = {
    "identity": (lambda: (lambda s: s), "linear"),
    "affine": (lambda intercept, slope: (lambda s: intercept + slope * s), "linear"),
    "sqrt": (lambda: np.sqrt, "sublinear"),
    "log1p": (lambda: np.log1p, "sublinear"),
    "square": (lambda: np.square, "superlinear"),
    "cap": (lambda level: (lambda s: np.minimum(s, level)), "bounded"),
}


@dataclass(frozen=True)
class RewardMap:
    """A named deterministic map ``tau -> W``.

    ``name`` is one of ``identity``, ``affine`` (``intercept``, ``slope``),
    ``sqrt``, ``log1p``, ``square``, ``cap`` (``level``).
    """

    name: str
    params: tuple[tuple[str, float], ...] = ()

    def __post_init__(self):
        if self.name not in _MAPS:
            raise ModelError(f"unknown reward map {self.name!r}; choose from {sorted(_MAPS)}")
        try:
            self.fn
        except TypeError as exc:
            raise ModelError(f"bad parameters for reward map {self.name!r}: {exc}") from None

    @cached_property
    def fn(self):
        return _MAPS[self.name][0](**dict(self.params))

    @property
    def growth(self) -> str:
        return _MAPS[self.name][1]

    def affine_coefficients(self) -> tuple[float, float] | None:
        if self.name == "identity":
            return 0.0, 1.0
        if self.name == "affine":
            p = dict(self.params)
            return p["intercept"], p["slope"]
        return None

    def __call__(self, s):
        return self.fn(np.asarray(s, dtype=float))

    def to_dict(self):
        return {"map": self.name, **dict(self.params)}


# ---------------------------------------------------------------------------
# joint models
# ---------------------------------------------------------------------------


class Moments(NamedTuple):
    mean_tau: float
    mean_w: float
    var_w: float
    cov_tau_w: float
    clt_sigma2: float
    var_tau: float


@dataclass(frozen=True)
class ExpMomentBounds:
    theta0: XReal
    eta0: XReal
    provenance: str  # "Analytic" or "EstimatedLowerBound"


class JointModel(ABC):
    """Common interface of the four kinds of joint law."""

    kind: str = ""

    @abstractmethod
    def log_mgf(self, x: float, y: float) -> XReal: ...

    @abstractmethod
    def sample_pairs(self, rng: np.random.Generator, size: int) -> tuple[np.ndarray, np.ndarray]: ...

    @abstractmethod
    def exp_moment_bounds(self) -> ExpMomentBounds: ...

    @abstractmethod
    def _raw_moments(self) -> tuple[float, float, float, float, float]:
        """``(E tau, E W, E tau^2, E W^2, E tau W)``."""

    @abstractmethod
    def truncate_w(self, n: float) -> "JointModel": ...

    @abstractmethod
    def shift_tau(self, eps: float) -> "JointModel": ...

    @abstractmethod
    def to_dict(self) -> dict: ...

    def moments(self) -> Moments:
        et, ew, et2, ew2, etw = self._raw_moments()
        vals = (et, ew, et2, ew2, etw)
        if not all(math.isfinite(v) for v in vals):
            raise UnsupportedMomentError("second moments of (tau, W) are not finite")
        var_t = max(et2 - et * et, 0.0)
        var_w = max(ew2 - ew * ew, 0.0)
        cov = etw - et * ew
        m = ew / et
        # Var(W - m tau) / E tau
        sigma2 = max(var_w - 2 * m * cov + m * m * var_t, 0.0) / et
        return Moments(et, ew, var_w, cov, sigma2, var_t)

    @cached_property
    def lln_rate(self) -> float:
        """``E W / E tau``, the almost-sure limit of ``Z_t / t``."""
        et, ew, *_ = self._raw_moments()
        return ew / et

    @cached_property
    def scale_tau(self) -> float:
        return _scale(self._raw_moments()[2])

    @cached_property
    def scale_w(self) -> float:
        return _scale(self._raw_moments()[3])

    @cached_property
    def digest(self) -> str:
        blob = json.dumps(self._digest_payload(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def _digest_payload(self):
        return self.to_dict()

    def sample_pair(self, rng_state) -> tuple[float, float]:
        tau, w = self.sample_pairs(as_generator(rng_state), 1)
        return float(tau[0]), float(w[0])


def _scale(second_moment: float) -> float:
    s = math.sqrt(second_moment) if second_moment > 0 and math.isfinite(second_moment) else 0.0
    return s if s > 1e-12 else 1.0


def _check_level(n: float) -> float:
    n = float(n)
    if not (n > 0):
        raise ParameterError(f"truncation level n must be positive, got {n}")
    return n


def _check_eps(eps: float) -> float:
    eps = float(eps)
    if not (eps > 0 and math.isfinite(eps)):
        raise ParameterError(f"shift eps must be positive, got {eps}")
    return eps


@dataclass(frozen=True)
class IndependentProduct(JointModel):
    tau: Family
    w: Family
    kind = "IndependentProduct"

    def __post_init__(self):
        _check_tau_family(self.tau)

    def log_mgf(self, x, y):
        a = self.tau.log_mgf(x)
        if a == math.inf:
            return INF
        b = self.w.log_mgf(y)
        if b == math.inf:
            return INF
        v = a + b
        return INF if v > LOG_OVERFLOW else XReal(v)

    def sample_pairs(self, rng, size):
        tau = self.tau.sample(rng, size)
        w = self.w.sample(rng, size)
        return tau, w

    def exp_moment_bounds(self):
        return ExpMomentBounds(XReal(self.tau.exp_bound()), XReal(self.w.abs_exp_bound()), "Analytic")

    def _raw_moments(self):
        et, ew = self.tau.clip_moment(1), self.w.clip_moment(1)
        return et, ew, self.tau.clip_moment(2), self.w.clip_moment(2), et * ew

    def truncate_w(self, n):
        return IndependentProduct(self.tau, TruncatedTo(self.w, _check_level(n)))

    def shift_tau(self, eps):
        return IndependentProduct(ShiftedBy(self.tau, _check_eps(eps)), self.w)

    def to_dict(self):
        return {"kind": self.kind, "tau": self.tau.to_dict(), "w": self.w.to_dict()}


@dataclass(frozen=True)
class DeterministicReward(JointModel):
    """``W = clip(F(T), -n, n)`` and ``tau = T + shift`` with ``T`` drawn from ``tau``.

    The reward map sees the draw ``T`` of the waiting-time family before the
    extra shift applied by :meth:`shift_tau`, so shifting keeps the pair
    coupled.  ``w_clip`` is set by :meth:`truncate_w`.
    """

    tau: Family
    reward: RewardMap
    tau_shift: float = 0.0
    w_clip: float | None = None
    kind = "DeterministicReward"

    def __post_init__(self):
        _check_tau_family(self.tau)

    def _g(self, s):
        v = self.reward(s)
        if self.w_clip is not None:
            v = np.clip(v, -self.w_clip, self.w_clip)
        return v

    def _base_log_mgf(self, x, y):
        lo, hi = self.tau.support()
        if lo == hi:
            return x * lo + y * float(self._g(lo))
        coef = self.reward.affine_coefficients()
        if coef is not None and self.w_clip is None:
            a, b = coef
            inner = self.tau.log_mgf(x + y * b)
            return math.inf if inner == math.inf else y * a + inner
        theta = self.tau.exp_bound()
        if hi == math.inf:
            growth = "bounded" if self.w_clip is not None else self.reward.growth
            if growth == "superlinear" and y > 0:
                return math.inf
            if growth != "superlinear" or y == 0:
                if x >= theta:
                    return math.inf
        return _quad_log_expect(self.tau, lambda s: x * s + y * self._g(s))

    def log_mgf(self, x, y):
        v = self._base_log_mgf(x, y)
        if v == math.inf:
            return INF
        v = x * self.tau_shift + v if self.tau_shift else v
        return INF if v > LOG_OVERFLOW else XReal(v)

    def sample_pairs(self, rng, size):
        base = self.tau.sample(rng, size)
        return base + self.tau_shift, self._g(base)

    def exp_moment_bounds(self):
        theta = self.tau.exp_bound()
        lo, hi = self.tau.support()
        if self.w_clip is not None or hi < math.inf or self.reward.growth in ("bounded",):
            eta = math.inf
        elif self.reward.growth == "sublinear":
            eta = math.inf
        elif self.reward.growth == "linear":
            slope = abs(self.reward.affine_coefficients()[1])
            eta = math.inf if slope == 0 else theta / slope
        else:
            eta = 0.0
        return ExpMomentBounds(XReal(theta), XReal(eta), "Analytic")

    def _raw_moments(self):
        lo, hi = self.tau.support()
        sh = self.tau_shift
        if lo == hi:
            g = float(self._g(lo))
            t = lo + sh
            return t, g, t * t, g * g, t * g

        def e(fn):
            return _quad_expect(self.tau, fn)

        et = self.tau.clip_moment(1)
        et2 = self.tau.clip_moment(2)
        ew = e(lambda s: self._g(s))
        ew2 = e(lambda s: self._g(s) ** 2)
        etw = e(lambda s: s * self._g(s))
        return (et + sh, ew, et2 + 2 * sh * et + sh * sh, ew2, etw + sh * ew)

    def truncate_w(self, n):
        n = _check_level(n)
        new = n if self.w_clip is None else min(n, self.w_clip)
        return DeterministicReward(self.tau, self.reward, self.tau_shift, new)

    def shift_tau(self, eps):
        return DeterministicReward(self.tau, self.reward, self.tau_shift + _check_eps(eps), self.w_clip)

    def to_dict(self):
        d = {"kind": self.kind, "tau": self.tau.to_dict(), "reward": self.reward.to_dict()}
        if self.tau_shift:
            d["tau_shift"] = self.tau_shift
        if self.w_clip is not None:
            d["w_clip"] = self.w_clip
        return d


def _density_grid(fam: Family):
    d = fam.frozen()
    lo, hi = fam.support()
    q = np.concatenate([[1e-14, 1e-10, 1e-6], np.linspace(1e-3, 1 - 1e-3, 41), [1 - 1e-6, 1 - 1e-10, 1 - 1e-14]])
    pts = np.asarray(d.ppf(q), dtype=float)
    pts = pts[np.isfinite(pts)]
    return d, lo, hi, pts


def _quad_log_expect(fam: Family, exponent: Callable[[Any], Any]) -> float:
    """``log E exp(exponent(T))`` for a continuous family, in log space."""
    d, lo, hi, pts = _density_grid(fam)

    def g(s):
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            return float(exponent(s)) + float(d.logpdf(s))

    vals = np.array([g(s) for s in pts])
    vals = vals[np.isfinite(vals)]
    c = float(vals.max()) if vals.size else 0.0

    def integrand(s):
        v = g(s) - c
        return math.exp(v) if v > -745 else 0.0

    mid = float(pts[-1]) if hi == math.inf else hi
    total, _ = integrate.quad(integrand, lo, mid, epsabs=QUAD_EPSABS, epsrel=QUAD_EPSREL, limit=200)
    if hi == math.inf:
        tail, _ = integrate.quad(integrand, mid, math.inf, epsabs=QUAD_EPSABS, epsrel=QUAD_EPSREL, limit=200)
        total += tail
    if not total > 0:
        return -math.inf
    out = c + math.log(total)
    return math.inf if out > LOG_OVERFLOW or not math.isfinite(out) else out


def _quad_expect(fam: Family, fn: Callable) -> float:
    d, lo, hi, _ = _density_grid(fam)
    val, _ = integrate.quad(
        lambda s: float(fn(s)) * float(d.pdf(s)), lo, hi, epsabs=1e-12, epsrel=1e-11, limit=200
    )
    return val


@dataclass(frozen=True, eq=False)
class DiscreteJoint(JointModel):
    """Finitely many atoms ``((u_k, w_k), p_k)`` with ``u_k > 0`` and ``sum p_k = 1``."""

    u: np.ndarray
    w: np.ndarray
    p: np.ndarray
    kind = "DiscreteJoint"

    def __init__(self, atoms):
        rows = []
        for a in atoms:
            if len(a) == 2:
                (uk, wk), pk = a
            else:
                uk, wk, pk = a
            rows.append((float(uk), float(wk), float(pk)))
        if not rows:
            raise ModelError("DiscreteJoint needs at least one atom")
        arr = np.array(rows, dtype=float)
        u, w, p = arr[:, 0].copy(), arr[:, 1].copy(), arr[:, 2].copy()
        if not np.all(np.isfinite(u)) or np.any(u <= 0):
            raise ModelError(
                "tau must be strictly positive and finite: the law may put no mass at "
                "tau = 0 or tau = +inf (found a tau atom <= 0)"
            )
        if not np.all(np.isfinite(w)):
            raise ModelError("reward atoms must be finite")
        if np.any(p <= 0):
            raise ModelError("atom probabilities must be positive")
        if abs(math.fsum(p) - 1.0) > 1e-12:
            raise ModelError(f"atom probabilities must sum to 1 (got {math.fsum(p)!r})")
        for a in (u, w, p):
            a.setflags(write=False)
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "p", p)

    @property
    def atoms(self) -> list[tuple[tuple[float, float], float]]:
        return [((float(a), float(b)), float(c)) for a, b, c in zip(self.u, self.w, self.p)]

    @cached_property
    def _logp(self):
        return np.log(self.p)

    def __len__(self):
        return len(self.p)

    def __eq__(self, other):
        return (
            isinstance(other, DiscreteJoint)
            and np.array_equal(self.u, other.u)
            and np.array_equal(self.w, other.w)
            and np.array_equal(self.p, other.p)
        )

    def __hash__(self):
        return hash(self.digest)

    def log_mgf(self, x, y):
        v = _logsumexp_exact(x * self.u + y * self.w, self._logp)
        return INF if v > LOG_OVERFLOW else XReal(v)

    @cached_property
    def _cum(self):
        c = np.cumsum(self.p)
        c[-1] = 1.0
        return c

    def sample_pairs(self, rng, size):
        idx = np.searchsorted(self._cum, rng.random(size), side="right")
        idx = np.minimum(idx, len(self.p) - 1)
        return self.u[idx], self.w[idx]

    def exp_moment_bounds(self):
        return ExpMomentBounds(INF, INF, "Analytic")

    def _raw_moments(self):
        p = self.p

        def e(v):
            return math.fsum(p * v)

        return e(self.u), e(self.w), e(self.u**2), e(self.w**2), e(self.u * self.w)

    def truncate_w(self, n):
        n = _check_level(n)
        return DiscreteJoint(list(zip(self.u, np.clip(self.w, -n, n), self.p)))

    def shift_tau(self, eps):
        eps = _check_eps(eps)
        return DiscreteJoint(list(zip(self.u + eps, self.w, self.p)))

    def to_dict(self):
        return {"kind": self.kind, "atoms": [[[a, b], c] for (a, b), c in self.atoms]}


@dataclass(frozen=True, eq=False)
class EmpiricalSample(JointModel):
    """The uniform law on observed pairs ``(tau_i, w_i)``."""

    tau: np.ndarray
    w: np.ndarray
    source: str | None = field(default=None, compare=False)
    kind = "EmpiricalSample"

    def __init__(self, tau, w=None, source=None):
        if w is None:
            arr = np.asarray(tau, dtype=float)
            if arr.ndim != 2 or arr.shape[1] != 2:
                raise ModelError("pairs must have shape (n, 2)")
            tau, w = arr[:, 0], arr[:, 1]
        tau = np.array(tau, dtype=float)
        w = np.array(w, dtype=float)
        if tau.shape != w.shape or tau.ndim != 1 or tau.size == 0:
            raise ModelError("EmpiricalSample needs two aligned, non-empty 1-d arrays")
        if not np.all(np.isfinite(tau)) or np.any(tau <= 0):
            raise ModelError(
                "tau must be strictly positive and finite: the law may put no mass at "
                "tau = 0 or tau = +inf (found a sample tau <= 0)"
            )
        if not np.all(np.isfinite(w)):
            raise ModelError("reward samples must be finite")
        # canonical order: the law, its digest and every sum are permutation invariant
        order = np.lexsort((w, tau))
        tau, w = tau[order], w[order]
        tau.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "tau", tau)
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "source", source)

    def __len__(self):
        return self.tau.size

    def __eq__(self, other):
        return isinstance(other, EmpiricalSample) and self.digest == other.digest

    def __hash__(self):
        return hash(self.digest)

    @property
    def pairs(self) -> np.ndarray:
        return np.column_stack([self.tau, self.w])

    def log_mgf(self, x, y):
        # samples are stored sorted, so the plain pairwise sum is already order independent
        v = float(special.logsumexp(x * self.tau + y * self.w)) - math.log(self.tau.size)
        return INF if v > LOG_OVERFLOW else XReal(v)

    def sample_pairs(self, rng, size):
        idx = rng.integers(0, self.tau.size, size)
        return self.tau[idx], self.w[idx]

    def exp_moment_bounds(self):
        return ExpMomentBounds(
            XReal(tail_rate_lower_bound(self.tau)),
            XReal(tail_rate_lower_bound(np.abs(self.w))),
            "EstimatedLowerBound",
        )

    def _raw_moments(self):
        t, w = self.tau, self.w

        def e(v):
            return math.fsum(v.tolist()) / v.size

        return e(t), e(w), e(t * t), e(w * w), e(t * w)

    def truncate_w(self, n):
        n = _check_level(n)
        return EmpiricalSample(self.tau, np.clip(self.w, -n, n))

    def shift_tau(self, eps):
        return EmpiricalSample(self.tau + _check_eps(eps), self.w)

    def to_dict(self):
        d = {"kind": self.kind, "n": int(self.tau.size)}
        if self.source:
            d["samples_path"] = self.source
        return d

    def _digest_payload(self):
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.tau).tobytes())
        h.update(np.ascontiguousarray(self.w).tobytes())
        return {"kind": self.kind, "data": h.hexdigest()}


def tail_rate_lower_bound(values: np.ndarray, k: int | None = None, z: float = 1.645) -> float:
    """Lower confidence bound for ``sup{s : E exp(s X) < inf}`` from a sample.

    This is the Hill estimator applied to ``exp(X)``: for an exponential-type
    tail ``P(X > x) ~ C exp(-s0 x)`` the excesses of the ``k`` largest values
    over the ``(k+1)``-th largest are approximately ``Exp(s0)``, so ``s0`` is
    estimated by the reciprocal mean excess.  The returned value is the
    one-sided normal lower bound ``s0_hat * (1 - z / sqrt(k))``.  Samples whose
    top ``k + 1`` values coincide (bounded or degenerate data) give ``inf``.
    The estimate is a heuristic; it is not an exact moment boundary.
    """
    x = np.sort(np.asarray(values, dtype=float))
    n = x.size
    if n < 2:
        return math.inf
    if k is None:
        k = max(10, int(math.sqrt(n)))
    k = min(k, n - 1)
    top = x[n - k :]
    thresh = x[n - k - 1]
    excess = math.fsum((top - thresh).tolist()) / k
    if excess <= 0:
        return math.inf
    rate = 1.0 / excess
    return rate * max(1.0 - z / math.sqrt(k), 0.0)


# ---------------------------------------------------------------------------
# functional interface
# ---------------------------------------------------------------------------


def log_mgf(model: JointModel, x: float, y: float) -> XReal:
    """``log E exp(x tau + y W)``, ``+inf`` where the expectation diverges."""
    if not (math.isfinite(x) and math.isfinite(y)):
        raise ParameterError("log_mgf needs finite (x, y)")
    if x == 0.0 and y == 0.0:
        return XReal(0.0)
    return model.log_mgf(float(x), float(y))


def exp_moment_bounds(model: JointModel) -> ExpMomentBounds:
    return model.exp_moment_bounds()


def moments(model: JointModel) -> Moments:
    return model.moments()


def truncate_w(model: JointModel, n: float) -> JointModel:
    return model.truncate_w(n)


def shift_tau(model: JointModel, eps: float) -> JointModel:
    return model.shift_tau(eps)


def sample_pair(model: JointModel, rng_state) -> tuple[float, float]:
    return model.sample_pair(rng_state)


def sample_pairs(model: JointModel, rng_state, size: int) -> tuple[np.ndarray, np.ndarray]:
    return model.sample_pairs(as_generator(rng_state), int(size))


# ---------------------------------------------------------------------------
# JSON / CSV
# ---------------------------------------------------------------------------

_OUT_OF_SCOPE_KEYS = {"delay", "S0", "s0", "initial_delay", "remainder", "r_t"}
_KNOWN_KEYS = {"kind", "tau", "w", "reward", "atoms", "samples_path", "pairs", "tau_shift", "w_clip", "name", "description", "n"}


def model_from_dict(d: dict, base_dir: str | Path | None = None) -> JointModel:
    """Build a model from its JSON description."""
    if not isinstance(d, dict):
        raise ModelError("model description must be a JSON object")
    bad = _OUT_OF_SCOPE_KEYS & set(d)
    if bad:
        raise ModelError(
            f"delayed renewal starts and remainder terms are not supported (found {sorted(bad)}); "
            "the process always starts with S_0 = 0 and no remainder"
        )
    unknown = set(d) - _KNOWN_KEYS
    if unknown:
        raise ModelError(f"unknown model fields {sorted(unknown)}")
    kind = d.get("kind")
    if kind == "IndependentProduct":
        return IndependentProduct(family_from_dict(d["tau"], "tau"), family_from_dict(d["w"], "w"))
    if kind == "DeterministicReward":
        r = dict(d["reward"])
        name = r.pop("map")
        return DeterministicReward(
            family_from_dict(d["tau"], "tau"),
            RewardMap(name, tuple(sorted((k, float(v)) for k, v in r.items()))),
            float(d.get("tau_shift", 0.0)),
            None if d.get("w_clip") is None else float(d["w_clip"]),
        )
    if kind == "DiscreteJoint":
        atoms = []
        for a in d["atoms"]:
            if isinstance(a, dict):
                atoms.append((a["tau"], a["w"], a["p"]))
            else:
                atoms.append(a)
        return DiscreteJoint(atoms)
    if kind == "EmpiricalSample":
        if "pairs" in d:
            return EmpiricalSample(np.asarray(d["pairs"], dtype=float))
        if "samples_path" not in d:
            raise ModelError("EmpiricalSample needs samples_path or pairs")
        p = Path(d["samples_path"])
        if not p.is_absolute() and base_dir is not None:
            p = Path(base_dir) / p
        tau, w = read_pairs_csv(p)
        return EmpiricalSample(tau, w, source=str(d["samples_path"]))
    raise ModelError(
        f"unknown model kind {kind!r}; expected IndependentProduct, DeterministicReward, "
        "DiscreteJoint or EmpiricalSample"
    )


def load_model(path: str | Path) -> JointModel:
    path = Path(path)
    try:
        d = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ModelError(f"{path}: not valid JSON ({exc})") from None
    return model_from_dict(d, base_dir=path.parent)


def read_pairs_csv(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    """Read the two-column ``tau,w`` CSV (with header) of an empirical sample."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:2]] != ["tau", "w"]:
            raise ModelError(f"{path}: expected a header row 'tau,w'")
        rows = [(float(r[0]), float(r[1])) for r in reader if r]
    if not rows:
        raise ModelError(f"{path}: no samples")
    arr = np.array(rows)
    return arr[:, 0], arr[:, 1]


def write_pairs_csv(path: str | Path, tau, w) -> None:
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["tau", "w"])
        for a, b in zip(np.asarray(tau, float), np.asarray(w, float)):
            out.writerow([f"{a:.17g}", f"{b:.17g}"])
