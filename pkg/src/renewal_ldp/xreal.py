"""Extended reals restricted to ``(-inf, +inf]``.

Log-moment-generating functions and rate functions are either finite or
``+inf``.  :class:`XReal` is a ``float`` subclass, so it drops into numpy and
``math`` code unchanged, but the arithmetic that could produce ``inf - inf``
raises instead of returning ``nan``.
"""

from __future__ import annotations

import math

__all__ = ["XReal", "INF", "xreal", "IndeterminateFormError"]


class IndeterminateFormError(ArithmeticError):
    """Raised for ``inf - inf`` or ``0 * inf`` in extended-real arithmetic."""


class XReal(float):
    """A finite real or ``+inf``.

    ``-inf`` and ``nan`` are rejected at construction.  Addition of ``+inf``
    absorbs any finite value, ``a * inf = inf`` for ``a > 0`` and ``0 * inf``
    as well as ``inf - inf`` raise :class:`IndeterminateFormError`.
    """

    __slots__ = ()

    def __new__(cls, value=0.0):
        v = float(value)
        if math.isnan(v):
            raise IndeterminateFormError("nan is not an extended real")
        if v == -math.inf:
            raise ValueError("XReal only represents finite values and +inf")
        return super().__new__(cls, v)

    @property
    def is_finite(self) -> bool:
        return math.isfinite(self)

    @property
    def is_inf(self) -> bool:
        return self == math.inf

    def __repr__(self) -> str:
        return "XReal(+inf)" if self.is_inf else f"XReal({float(self)!r})"

    def __add__(self, other):
        o = float(other)
        if o == -math.inf:
            if self.is_inf:
                raise IndeterminateFormError("inf - inf")
            raise ValueError("adding -inf leaves the extended half-line")
        return XReal(float(self) + o)

    __radd__ = __add__

    def __sub__(self, other):
        o = float(other)
        if self.is_inf and o == math.inf:
            raise IndeterminateFormError("inf - inf")
        if o == math.inf:
            raise ValueError("finite - inf leaves the extended half-line")
        return XReal(float(self) - o)

    def __rsub__(self, other):
        o = float(other)
        if self.is_inf:
            raise IndeterminateFormError("inf - inf") if o == math.inf else ValueError(
                "finite - inf leaves the extended half-line"
            )
        return XReal(o - float(self))

    def __mul__(self, other):
        o = float(other)
        if (self.is_inf and o == 0.0) or (o == math.inf and float(self) == 0.0):
            raise IndeterminateFormError("0 * inf")
        if (self.is_inf and o < 0) or (o == math.inf and float(self) < 0):
            raise ValueError("negative multiple of inf leaves the extended half-line")
        return XReal(float(self) * o)

    __rmul__ = __mul__

    def __truediv__(self, other):
        o = float(other)
        if o <= 0 and self.is_inf:
            raise ValueError("inf divided by a non-positive number")
        return XReal(float(self) / o)

    def __neg__(self):
        # leaves XReal: -x is an ordinary float
        return -float(self)


INF = XReal(math.inf)


def xreal(value) -> XReal:
    """Coerce ``value`` to :class:`XReal`; ``nan`` and ``-inf`` raise."""
    return value if isinstance(value, XReal) else XReal(value)
