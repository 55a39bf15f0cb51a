"""Step functions on (0, 1] with exact breakpoints.

A :class:`StepFunction` holds a strictly increasing tuple of exact rational
breakpoints ``0 = t_0 < ... < t_K = 1`` and one value per half-open block
``(t_{i-1}, t_i]``.  Values are floats, or :class:`ExactScalar` when a value
falls outside the float exponent range.

Integrals are accumulated as exact rationals; the norm engines work on the
log-domain view returned by :meth:`StepFunction.log_grid`.
"""

from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property, total_ordering
from typing import Iterable, Sequence

import numpy as np

LN2 = math.log(2.0)

_MIN_NORMAL_EXP = -1021  # frexp exponent of the smallest normal float
_MAX_EXP = 1024


class OverlapError(ValueError):
    """Parts passed to :func:`disjoint_sum` share support of positive measure."""


def dyadic(e: int) -> Fraction:
    """The exact point 2**-e."""
    if e < 0:
        raise ValueError("dyadic exponent must be nonnegative")
    return Fraction(1, 1 << e)


def dyadic_exponent(q: Fraction) -> int | None:
    """Return e when q == 2**-e, else None."""
    if q.numerator != 1:
        return None
    d = q.denominator
    if d & (d - 1):
        return None
    return d.bit_length() - 1


def log_fraction(q: Fraction) -> float:
    """Natural log of a positive rational, safe far outside the float range."""
    if q <= 0:
        return -math.inf
    return math.log(q.numerator) - math.log(q.denominator)


@total_ordering
@dataclass(frozen=True, eq=False)
class ExactScalar:
    """The number ``mantissa * 2**exp2`` with ``1 <= |mantissa| < 2`` (or zero).

    Used for magnitudes like ``2**-900`` or ``2**1200`` that would underflow or
    overflow as plain floats.
    """

    mantissa: float
    exp2: int

    def __post_init__(self):
        m = self.mantissa
        if not math.isfinite(m):
            raise ValueError("mantissa must be finite")
        if m == 0.0:
            if self.exp2 != 0:
                object.__setattr__(self, "exp2", 0)
        elif not 1.0 <= abs(m) < 2.0:
            raise ValueError(f"mantissa {m!r} not normalised to [1, 2)")

    # construction -------------------------------------------------------

    @classmethod
    def normalise(cls, m: float, e: int) -> "ExactScalar":
        if m == 0.0:
            return cls(0.0, 0)
        f, k = math.frexp(m)
        return cls(2.0 * f, e + k - 1)

    @classmethod
    def of(cls, x) -> "ExactScalar":
        if isinstance(x, ExactScalar):
            return x
        if isinstance(x, Fraction):
            return cls.from_fraction(x)
        if isinstance(x, int):
            return cls.from_fraction(Fraction(x))
        return cls.normalise(float(x), 0)

    @classmethod
    def from_fraction(cls, q: Fraction) -> "ExactScalar":
        if q == 0:
            return cls(0.0, 0)
        sign = -1.0 if q < 0 else 1.0
        p, d = abs(q.numerator), q.denominator
        e = p.bit_length() - d.bit_length()
        r = Fraction(p, d << e) if e >= 0 else Fraction(p << -e, d)
        if r < 1:
            r *= 2
            e -= 1
        m = float(r)
        if m >= 2.0:
            m, e = 1.0, e + 1
        return cls(sign * m, e)

    @classmethod
    def pow2(cls, y: float) -> "ExactScalar":
        """2**y for real y of any magnitude."""
        n = math.floor(y)
        return cls.normalise(2.0 ** (y - n), n)

    @classmethod
    def from_log(cls, y: float) -> "ExactScalar":
        """exp(y) for real y of any magnitude."""
        return cls.pow2(y / LN2)

    # conversion ---------------------------------------------------------

    def __float__(self) -> float:
        try:
            return math.ldexp(self.mantissa, self.exp2)
        except OverflowError:
            return math.copysign(math.inf, self.mantissa)

    def to_fraction(self) -> Fraction:
        f = Fraction(self.mantissa)
        return f * (1 << self.exp2) if self.exp2 >= 0 else f / (1 << -self.exp2)

    def log(self) -> float:
        """Natural log of the absolute value."""
        if self.mantissa == 0.0:
            return -math.inf
        return math.log(abs(self.mantissa)) + self.exp2 * LN2

    def fits_float(self) -> bool:
        return self.mantissa == 0.0 or _MIN_NORMAL_EXP - 1 <= self.exp2 < _MAX_EXP

    # arithmetic ---------------------------------------------------------

    def __mul__(self, other):
        try:
            o = ExactScalar.of(other)
        except (TypeError, ValueError):
            return NotImplemented
        return ExactScalar.normalise(self.mantissa * o.mantissa, self.exp2 + o.exp2)

    __rmul__ = __mul__

    def __truediv__(self, other):
        o = ExactScalar.of(other)
        if o.mantissa == 0.0:
            raise ZeroDivisionError("ExactScalar division by zero")
        return ExactScalar.normalise(self.mantissa / o.mantissa, self.exp2 - o.exp2)

    def __rtruediv__(self, other):
        return ExactScalar.of(other) / self

    def __add__(self, other):
        try:
            o = ExactScalar.of(other)
        except (TypeError, ValueError):
            return NotImplemented
        return ExactScalar.from_fraction(self.to_fraction() + o.to_fraction())

    __radd__ = __add__

    def __sub__(self, other):
        return self + (-ExactScalar.of(other))

    def __rsub__(self, other):
        return ExactScalar.of(other) + (-self)

    def __neg__(self):
        return ExactScalar(-self.mantissa, self.exp2)

    def __abs__(self):
        return ExactScalar(abs(self.mantissa), self.exp2)

    def __bool__(self):
        return self.mantissa != 0.0

    def __pow__(self, p: float):
        if self.mantissa < 0:
            raise ValueError("real power of a negative ExactScalar")
        if self.mantissa == 0.0:
            return ExactScalar(0.0, 0) if p > 0 else ExactScalar(1.0, 0)
        y = p * self.exp2
        n = math.floor(y)
        return ExactScalar.normalise(2.0 ** (y - n) * self.mantissa**p, n)

    def sqrt(self) -> "ExactScalar":
        if self.mantissa < 0:
            raise ValueError("sqrt of a negative ExactScalar")
        if self.exp2 % 2:
            return ExactScalar.normalise(math.sqrt(2.0 * self.mantissa), (self.exp2 - 1) // 2)
        return ExactScalar.normalise(math.sqrt(self.mantissa), self.exp2 // 2)

    # comparison ---------------------------------------------------------

    def __eq__(self, other):
        if isinstance(other, ExactScalar):
            return self.mantissa == other.mantissa and self.exp2 == other.exp2
        if isinstance(other, (int, float, Fraction)):
            if isinstance(other, float) and not math.isfinite(other):
                return False
            return self.to_fraction() == Fraction(other)
        return NotImplemented

    def __lt__(self, other):
        if isinstance(other, ExactScalar):
            return self.to_fraction() < other.to_fraction()
        if isinstance(other, (int, float, Fraction)):
            if isinstance(other, float) and math.isinf(other):
                return other > 0
            return self.to_fraction() < Fraction(other)
        return NotImplemented

    def __hash__(self):
        return hash(self.to_fraction())

    def __repr__(self):
        return f"ExactScalar({self.mantissa!r}, {self.exp2})"


def as_value(v):
    """Canonical block value: a float when representable, else ExactScalar."""
    if isinstance(v, ExactScalar):
        return float(v) if v.fits_float() else v
    if isinstance(v, (Fraction, int)) and not isinstance(v, bool):
        try:
            f = float(v)
        except OverflowError:
            f = math.inf
        if math.isfinite(f) and (f == 0.0 or abs(f) >= 2.0**-1022):
            if Fraction(f) == v:
                return f
        es = ExactScalar.of(Fraction(v))
        return float(es) if es.fits_float() else es
    f = float(v)
    if not math.isfinite(f):
        raise ValueError(f"step function values must be finite, got {v!r}")
    return f + 0.0  # normalise -0.0


def abs_key(v) -> tuple:
    """Exact sort key for |v|."""
    if isinstance(v, ExactScalar):
        if v.mantissa == 0.0:
            return (-math.inf, 0.0)
        return (v.exp2 + 1, abs(v.mantissa) / 2.0)
    if v == 0:
        return (-math.inf, 0.0)
    m, e = math.frexp(abs(v))
    return (e, m)


def log_abs(v) -> float:
    if isinstance(v, ExactScalar):
        return v.log()
    if isinstance(v, Fraction):
        return log_fraction(abs(v))
    return math.log(abs(v)) if v else -math.inf


def _exact(v) -> Fraction:
    return v.to_fraction() if isinstance(v, ExactScalar) else Fraction(v)


def _as_point(t) -> Fraction:
    if isinstance(t, Fraction):
        return t
    if isinstance(t, int):
        return Fraction(t)
    if isinstance(t, ExactScalar):
        return t.to_fraction()
    return Fraction(float(t))


@dataclass(frozen=True)
class StepFunction:
    breakpoints: tuple
    values: tuple

    def __post_init__(self):
        bps = tuple(_as_point(t) for t in self.breakpoints)
        vals = tuple(as_value(v) for v in self.values)
        if len(bps) < 2 or bps[0] != 0 or bps[-1] != 1:
            raise ValueError("breakpoints must start at 0 and end at 1")
        if len(vals) != len(bps) - 1:
            raise ValueError("need exactly one value per block")
        for a, b in zip(bps, bps[1:]):
            if not a < b:
                raise ValueError("breakpoints must be strictly increasing")
        # merge equal neighbours
        nb, nv = [bps[0]], []
        for t, v in zip(bps[1:], vals):
            if nv and nv[-1] == v and type(nv[-1]) is type(v):
                nb[-1] = t
            else:
                nb.append(t)
                nv.append(v)
        object.__setattr__(self, "breakpoints", tuple(nb))
        object.__setattr__(self, "values", tuple(nv))

    # constructors -------------------------------------------------------

    @classmethod
    def _trusted(cls, bps: tuple, vals: tuple) -> "StepFunction":
        """Skip validation for canonical data built inside this module."""
        obj = object.__new__(cls)
        object.__setattr__(obj, "breakpoints", bps)
        object.__setattr__(obj, "values", vals)
        return obj

    @classmethod
    def from_lengths(cls, lengths: Iterable, values: Iterable) -> "StepFunction":
        bps = [Fraction(0)]
        for ln in lengths:
            bps.append(bps[-1] + _as_point(ln))
        return cls(tuple(bps), tuple(values))

    @classmethod
    def constant(cls, c) -> "StepFunction":
        return cls((0, 1), (c,))

    @classmethod
    def indicator(cls, a, b=None, value=1.0) -> "StepFunction":
        """``value * chi_(0,a]``, or ``value * chi_(a,b]`` when b is given."""
        lo, hi = (Fraction(0), _as_point(a)) if b is None else (_as_point(a), _as_point(b))
        if not 0 <= lo < hi <= 1:
            raise ValueError("indicator interval must satisfy 0 <= a < b <= 1")
        bps, vals = [Fraction(0)], []
        if lo > 0:
            bps.append(lo)
            vals.append(0.0)
        bps.append(hi)
        vals.append(value)
        if hi < 1:
            bps.append(Fraction(1))
            vals.append(0.0)
        return cls(tuple(bps), tuple(vals))

    # views --------------------------------------------------------------

    @cached_property
    def lengths(self) -> tuple:
        b = self.breakpoints
        return tuple(r - l for l, r in zip(b, b[1:]))

    def blocks(self):
        """Iterate over ``(left, right, value)``."""
        b = self.breakpoints
        return zip(b, b[1:], self.values)

    def __len__(self):
        return len(self.values)

    def __call__(self, t):
        t = _as_point(t)
        if not 0 < t <= 1:
            raise ValueError("step functions live on (0, 1]")
        lo, hi = 1, len(self.breakpoints) - 1
        while lo < hi:
            mid = (lo + hi) // 2
            if self.breakpoints[mid] < t:
                lo = mid + 1
            else:
                hi = mid
        return self.values[lo - 1]

    def max_abs(self):
        return max((abs(v) for v in self.values), key=abs_key)

    def is_zero(self) -> bool:
        return all(v == 0 for v in self.values)

    def is_nonincreasing(self) -> bool:
        keys = [(1 if v >= 0 else -1, abs_key(v)) for v in self.values]
        for (s0, k0), (s1, k1) in zip(keys, keys[1:]):
            if s0 < s1 or (s0 == s1 == 1 and k1 > k0) or (s0 == s1 == -1 and k1 < k0):
                return False
        return True

    def support(self) -> list:
        """Blocks of nonzero value, as ``(left, right)`` pairs."""
        return [(l, r) for l, r, v in self.blocks() if v != 0]

    @cached_property
    def _ints(self):
        """Common denominator L and the integer numerators t_i * L."""
        L = math.lcm(*(t.denominator for t in self.breakpoints))
        return L, [t.numerator * (L // t.denominator) for t in self.breakpoints]

    @cached_property
    def _log_grid(self):
        L, nums = self._ints
        lens = [b - a for a, b in zip(nums, nums[1:])]
        logL = math.log(L)
        lr = np.array([math.log(q) - logL for q in nums[1:]])
        llen = np.array([math.log(q) - logL for q in lens])
        lv = np.array([log_abs(v) for v in self.values])
        ratio = np.empty(len(self.values))
        ratio[0] = math.inf
        for i in range(1, len(lens)):
            try:
                ratio[i] = math.log1p(lens[i] / nums[i])
            except OverflowError:
                ratio[i] = math.log(lens[i] + nums[i]) - math.log(nums[i])
        return lr, llen, lv, ratio

    def log_grid(self):
        """Arrays ``(log t_i, log len_i, log |v_i|, log(t_i / t_{i-1}))``.

        The last array holds +inf for the first block.  Zero values map to -inf.
        """
        return self._log_grid

    # pointwise algebra --------------------------------------------------

    def map(self, fn) -> "StepFunction":
        return StepFunction(self.breakpoints, tuple(fn(v) for v in self.values))

    def __abs__(self):
        return self.map(abs)

    def __neg__(self):
        return self.map(lambda v: -v)

    def scale(self, c) -> "StepFunction":
        if isinstance(c, ExactScalar) or any(isinstance(v, ExactScalar) for v in self.values):
            c = ExactScalar.of(c)
            return self.map(lambda v: c * v if v != 0 else 0.0)
        return self.map(lambda v: c * v)

    def __mul__(self, c):
        if isinstance(c, StepFunction):
            return self.combine(c, lambda a, b: a * b)
        return self.scale(c)

    __rmul__ = __mul__

    def combine(self, other: "StepFunction", op) -> "StepFunction":
        """Pointwise ``op(self, other)`` on the common refinement."""
        grid = sorted(set(self.breakpoints) | set(other.breakpoints))
        out, i, j = [], 0, 0
        for r in grid[1:]:
            while self.breakpoints[i + 1] < r:
                i += 1
            while other.breakpoints[j + 1] < r:
                j += 1
            out.append(op(self.values[i], other.values[j]))
        return StepFunction(tuple(grid), tuple(out))

    def __add__(self, other):
        if isinstance(other, StepFunction):
            return self.combine(other, lambda a, b: a + b)
        return self.map(lambda v: v + other)

    def __sub__(self, other):
        return self + (-other)

    def maximum(self, other: "StepFunction") -> "StepFunction":
        return self.combine(other, max)

    def restrict(self, a, b) -> "StepFunction":
        """Multiply by the indicator of (a, b]."""
        return self.combine(StepFunction.indicator(a, b), lambda v, c: v if c else 0.0)

    def permute(self, order: Sequence[int]) -> "StepFunction":
        """Rearrange the blocks in the given order (a measure-preserving shuffle)."""
        if sorted(order) != list(range(len(self.values))):
            raise ValueError("order must be a permutation of the block indices")
        return StepFunction.from_lengths(
            [self.lengths[i] for i in order], [self.values[i] for i in order]
        )


def distribution(x: StepFunction, tau) -> Fraction:
    """Exact measure of ``{t : |x(t)| > tau}``."""
    if not tau > 0:
        raise ValueError("distribution needs tau > 0")
    kt = abs_key(as_value(tau)) if not isinstance(tau, ExactScalar) else abs_key(tau)
    return sum((q for q, v in zip(x.lengths, x.values) if abs_key(v) > kt), Fraction(0))


def rearrange(x: StepFunction) -> StepFunction:
    """Decreasing rearrangement x* of |x| (cached on x)."""
    star = x.__dict__.get("_star")
    if star is None:
        star = _rearrange(x)
        object.__setattr__(x, "_star", star)
        object.__setattr__(star, "_star", star)
    return star


def _rearrange(x: StepFunction) -> StepFunction:
    L, nums = x._ints
    key = abs if all(type(v) is float for v in x.values) else abs_key
    pairs = sorted(
        ((abs(v), b - a) for v, a, b in zip(x.values, nums, nums[1:])),
        key=lambda p: key(p[0]),
        reverse=True,
    )
    ends, values = [], []
    acc = 0
    for v, q in pairs:
        acc += q
        if values and values[-1] == v:
            ends[-1] = acc
        else:
            values.append(v)
            ends.append(acc)
    bps = (Fraction(0),) + tuple(Fraction(e, L) for e in ends)
    star = StepFunction._trusted(bps, tuple(values))
    star.__dict__["_ints"] = (L, [0] + ends)
    return star


def integrate(x: StepFunction, a=0, b=1) -> float:
    """Exact integral of x over (a, b], rounded once to float."""
    a, b = _as_point(a), _as_point(b)
    if not 0 <= a <= b <= 1:
        raise ValueError("need 0 <= a <= b <= 1")
    total = Fraction(0)
    for l, r, v in x.blocks():
        lo, hi = max(l, a), min(r, b)
        if hi > lo and v != 0:
            total += _exact(v) * (hi - lo)
    return _to_float(total)


def _to_float(q: Fraction) -> float:
    try:
        return float(q)
    except OverflowError:
        return math.copysign(math.inf, q)


def lp_norm(x: StepFunction, p=2) -> float:
    """L_p norm for p >= 1 or p = inf."""
    if p == math.inf:
        return float(x.max_abs())
    if p < 1:
        raise ValueError("lp_norm needs p >= 1")
    if p in (1, 2):
        total = sum(
            (abs(_exact(v)) ** int(p) * q for v, q in zip(x.values, x.lengths) if v != 0),
            Fraction(0),
        )
        s = ExactScalar.from_fraction(total)
        return float(s if p == 1 else s.sqrt())
    _, llen, lv, _ = x.log_grid()
    terms = p * lv + llen
    terms = terms[np.isfinite(terms)]
    if terms.size == 0:
        return 0.0
    top = terms.max()
    return math.exp((top + math.log(np.exp(terms - top).sum())) / p)


def _scaled(c, v):
    if isinstance(c, ExactScalar) or isinstance(v, ExactScalar):
        return ExactScalar.of(c) * v
    return c * v


def disjoint_sum(coeffs: Sequence, parts: Sequence[StepFunction]) -> StepFunction:
    """``sum_i coeffs[i] * parts[i]`` for parts with pairwise disjoint supports."""
    if len(coeffs) != len(parts):
        raise ValueError("coeffs and parts differ in length")
    if all(isinstance(c, float) for c in coeffs):
        fast = _concat_disjoint(coeffs, parts)
        if fast is not None:
            return fast
    supports = [[(l, r, idx) for l, r in x.support()] for idx, x in enumerate(parts)]
    hulls = sorted((s[0][0], s[-1][1], idx) for idx, s in enumerate(supports) if s)
    tangled = any(b[0] < a[1] for a, b in zip(hulls, hulls[1:]))
    if tangled:
        reach, owner = Fraction(0), None
        for l, r, idx in heapq.merge(*supports):
            if l < reach and idx != owner:
                raise OverlapError(f"parts {owner} and {idx} overlap near {float(l):.6g}")
            if r > reach:
                reach, owner = r, idx
    streams = {
        idx: [(l, r, _scaled(coeffs[idx], v)) for l, r, v in parts[idx].blocks() if v != 0]
        for _, _, idx in hulls
        if coeffs[idx] != 0
    }
    if tangled:
        blocks = heapq.merge(*streams.values(), key=lambda blk: blk[0])
    else:
        blocks = (blk for _, _, idx in hulls if idx in streams for blk in streams[idx])
    bps, vals = [Fraction(0)], []
    for l, r, v in blocks:
        if l > bps[-1]:
            bps.append(l)
            vals.append(0.0)
        bps.append(r)
        vals.append(v)
    if bps[-1] < 1:
        bps.append(Fraction(1))
        vals.append(0.0)
    return _canonical(bps, [as_value(v) for v in vals])


def _hull(x: StepFunction):
    """Indices (i, j) with the support of x inside (t_i, t_j], or None when x = 0."""
    nz = [i for i, v in enumerate(x.values) if v != 0]
    return (nz[0], nz[-1] + 1) if nz else None


def _concat_disjoint(coeffs, parts):
    """Float-coefficient sum of parts whose support hulls do not interleave."""
    spans = []
    for c, x in zip(coeffs, parts):
        h = _hull(x)
        if h is not None and c != 0.0:
            spans.append((x.breakpoints[h[0]], x.breakpoints[h[1]], c, x, h))
    spans.sort(key=lambda s: s[0])
    if any(b[0] < a[1] for a, b in zip(spans, spans[1:])):
        return None
    bps, vals = [Fraction(0)], []
    for lo, hi, c, x, (i, j) in spans:
        if lo > bps[-1]:
            bps.append(lo)
            vals.append(0.0)
        bps.extend(x.breakpoints[i + 1 : j + 1])
        vals.extend(as_value(_scaled(c, v)) if v != 0 else 0.0 for v in x.values[i:j])
    if bps[-1] < 1:
        bps.append(Fraction(1))
        vals.append(0.0)
    return _canonical(bps, vals)


def _canonical(bps: list, vals: list) -> StepFunction:
    """Merge equal neighbours of already validated data."""
    nb, nv = [bps[0]], []
    for t, v in zip(bps[1:], vals):
        if nv and nv[-1] == v and type(nv[-1]) is type(v):
            nb[-1] = t
        else:
            nb.append(t)
            nv.append(v)
    return StepFunction._trusted(tuple(nb), tuple(nv))


# JSON file format ----------------------------------------------------------


def _point_to_json(t: Fraction):
    e = dyadic_exponent(t)
    if e is not None:
        return {"dyadic": e}
    return {"rational": [t.numerator, t.denominator]}


def _point_from_json(obj) -> Fraction:
    if isinstance(obj, dict):
        if "dyadic" in obj:
            return dyadic(int(obj["dyadic"]))
        if "rational" in obj:
            p, q = obj["rational"]
            return Fraction(int(p), int(q))
        raise ValueError(f"unknown breakpoint object {obj!r}")
    if isinstance(obj, (int, float)) and not isinstance(obj, bool):
        return Fraction(obj)
    raise ValueError(f"unknown breakpoint {obj!r}")


def _value_to_json(v):
    if isinstance(v, ExactScalar):
        return {"mantissa": v.mantissa, "exp2": v.exp2}
    return v


def _value_from_json(obj):
    if isinstance(obj, dict):
        return ExactScalar.normalise(float(obj["mantissa"]), int(obj["exp2"]))
    return float(obj)


def to_json(x: StepFunction) -> dict:
    return {
        "breakpoints": [_point_to_json(t) for t in x.breakpoints[1:]],
        "values": [_value_to_json(v) for v in x.values],
    }


def from_json(obj: dict) -> StepFunction:
    bps = [Fraction(0)] + [_point_from_json(t) for t in obj["breakpoints"]]
    return StepFunction(tuple(bps), tuple(_value_from_json(v) for v in obj["values"]))


def load(path) -> StepFunction:
    with open(path) as fh:
        return from_json(json.load(fh))


def dump(x: StepFunction, path) -> None:
    with open(path, "w") as fh:
        json.dump(to_json(x), fh)
