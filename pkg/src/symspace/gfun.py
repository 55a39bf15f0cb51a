"""Class-G weight functions, dilation indices and the (A)/(B) gap conditions.

Every function here knows its own logarithm on a log-scale argument
(:meth:`PositiveFunction.log_at`), so probes at ``t = 2**-k`` stay finite for
``k`` in the thousands.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache

import numpy as np

from .stepfn import LN2, ExactScalar, dyadic_exponent, log_fraction

PROBE_DEPTH = 50
_G_TOL = 1e-12


class DomainError(ValueError):
    """Argument outside (0, 1]."""


class NotInClassG(ValueError):
    """The function is not positive, increasing and quasiconcave on the probe grid."""


class FitUnstable(RuntimeError):
    """Index slopes disagree across nested fit windows."""


class EmbedOrderError(ValueError):
    """psi/phi is unbounded, so psi is not dominated by phi."""


class SpecError(ValueError):
    """Malformed function spec string."""


def _log_arg(t) -> float:
    if isinstance(t, ExactScalar):
        if t.mantissa <= 0:
            raise DomainError(f"argument must lie in (0, 1], got {t!r}")
        lt = t.log()
    elif isinstance(t, Fraction):
        if t <= 0:
            raise DomainError(f"argument must lie in (0, 1], got {t}")
        lt = log_fraction(t)
    else:
        t = float(t)
        if not t > 0:
            raise DomainError(f"argument must lie in (0, 1], got {t}")
        lt = math.log(t)
    if lt > 1e-15:
        raise DomainError(f"argument must lie in (0, 1], got {float(math.exp(lt))}")
    return min(lt, 0.0)


def _pow2_mantissa(frac: float, base: float, b: float) -> float:
    """``2**frac * base**b`` with a single rounding when b == +-1/2."""
    if b == 0.5:
        return math.sqrt(2.0 ** (2 * frac) * base)
    if b == -0.5:
        return math.sqrt(2.0 ** (2 * frac) / base)
    return 2.0**frac * base**b


class PositiveFunction:
    """A positive function on (0, 1] evaluated through its logarithm."""

    nondecreasing = False

    def log_at(self, logt):
        raise NotImplementedError

    def log_dyadic(self, k):
        """log f(2**-k), vectorised over integer k."""
        return self.log_at(-np.asarray(k, dtype=float) * LN2)

    def power_exponent(self) -> float | None:
        """a when the function is c * t**a, else None."""
        return None

    def exact_dyadic(self, k: int) -> ExactScalar:
        return ExactScalar.from_log(float(self.log_dyadic(k)))

    def exact_at(self, t: Fraction) -> ExactScalar:
        """f(t) for a rational t, kept accurate far below the float range."""
        e = dyadic_exponent(t)
        if e is not None:
            return self.exact_dyadic(e)
        return ExactScalar.from_log(float(self.log_at(np.float64(log_fraction(t)))))

    def __call__(self, t):
        if isinstance(t, Fraction):
            e = dyadic_exponent(t)
            if e is not None:
                return self.dyadic_value(e)
        lt = _log_arg(t)
        val = float(np.exp(self.log_at(np.float64(lt))))
        if isinstance(t, ExactScalar):
            return ExactScalar.from_log(float(self.log_at(np.float64(lt))))
        return val

    def dyadic_value(self, k: int) -> float:
        return float(np.exp(self.log_dyadic(k)))


class GFun(PositiveFunction):
    """Positive, increasing, concave on (0, 1]; membership is probed on 2**-j."""

    nondecreasing = True

    def _check(self):
        k = np.arange(PROBE_DEPTH + 1)
        L = np.asarray(self.log_dyadic(k), dtype=float)
        if not np.all(np.isfinite(L)):
            raise NotInClassG(f"{self} is not positive and finite on the probe grid")
        tol = _G_TOL * np.maximum(1.0, np.abs(L[1:]))
        if np.any(L[1:] > L[:-1] + tol):
            raise NotInClassG(f"{self} is not increasing on the probe grid")
        q = L + k * LN2  # log f(t)/t
        if np.any(q[1:] < q[:-1] - tol):
            raise NotInClassG(f"{self}: f(t)/t is not decreasing on the probe grid")


@dataclass(frozen=True)
class Pow(GFun):
    """t**a."""

    a: float

    def __post_init__(self):
        if not self.a > 0:
            raise NotInClassG(f"pow exponent must be positive, got {self.a}")
        self._check()

    def log_at(self, logt):
        return self.a * np.asarray(logt, dtype=float)

    def power_exponent(self):
        return self.a

    def dyadic_value(self, k):
        return 2.0 ** (-self.a * k)

    def exact_dyadic(self, k):
        y = -self.a * k
        n = math.floor(y)
        return ExactScalar.normalise(2.0 ** (y - n), n)

    def exact_at(self, t):
        if dyadic_exponent(t) is not None:
            return self.exact_dyadic(dyadic_exponent(t))
        return ExactScalar.from_fraction(t) ** self.a

    def __call__(self, t):
        if isinstance(t, float | int) and not isinstance(t, bool):
            if not 0 < t <= 1:
                raise DomainError(f"argument must lie in (0, 1], got {t}")
            return float(t) ** self.a
        return super().__call__(t)


@lru_cache(maxsize=8192)
def _powlog_dyadic(a: float, b: float, k: int) -> ExactScalar:
    y = -a * k
    n = math.floor(y)
    return ExactScalar.normalise(_pow2_mantissa(y - n, k + 2.0, b), n)


@dataclass(frozen=True)
class PowLog(GFun):
    """t**a * log2(4/t)**b."""

    a: float
    b: float

    def __post_init__(self):
        self._check()

    def log_at(self, logt):
        logt = np.asarray(logt, dtype=float)
        with np.errstate(invalid="ignore"):
            out = self.a * logt + self.b * np.log(2.0 - logt / LN2)
        return np.where(np.isneginf(logt), -np.inf, out)  # f(0+) = 0

    def power_exponent(self):
        return self.a if self.b == 0 else None

    def dyadic_value(self, k):
        return 2.0 ** (-self.a * k) * (k + 2.0) ** self.b

    def exact_dyadic(self, k):
        return _powlog_dyadic(self.a, self.b, k)

    def exact_at(self, t):
        if dyadic_exponent(t) is not None:
            return self.exact_dyadic(dyadic_exponent(t))
        ts = ExactScalar.from_fraction(t)
        lg = 2.0 - (ts.exp2 + math.log2(ts.mantissa))
        return ts**self.a * ExactScalar.of(lg**self.b)

    def __call__(self, t):
        if isinstance(t, float | int) and not isinstance(t, bool):
            if not 0 < t <= 1:
                raise DomainError(f"argument must lie in (0, 1], got {t}")
            t = float(t)
            return t**self.a * (2.0 - math.log2(t)) ** self.b
        return super().__call__(t)


@dataclass(frozen=True)
class Constant(GFun):
    """The constant c (the fundamental function of L_infinity when c = 1)."""

    c: float = 1.0

    def __post_init__(self):
        if not self.c > 0:
            raise NotInClassG("constant must be positive")

    def log_at(self, logt):
        return math.log(self.c) + 0.0 * np.asarray(logt, dtype=float)

    def power_exponent(self):
        return 0.0


@dataclass(frozen=True)
class Scaled(GFun):
    """c * inner."""

    c: float
    inner: PositiveFunction

    def __post_init__(self):
        if not self.c > 0:
            raise NotInClassG("scale must be positive")
        self._check()

    def log_at(self, logt):
        return math.log(self.c) + self.inner.log_at(logt)

    def power_exponent(self):
        return self.inner.power_exponent()

    def dyadic_value(self, k):
        return self.c * self.inner.dyadic_value(k)

    def exact_dyadic(self, k):
        return ExactScalar.of(self.c) * self.inner.exact_dyadic(k)

    def exact_at(self, t):
        return ExactScalar.of(self.c) * self.inner.exact_at(t)


@dataclass(frozen=True)
class Table(GFun):
    """Piecewise-linear interpolant of increasing ``(t, f(t))`` pairs.

    Below the first positive abscissa the graph continues along the chord
    through the origin (or towards ``f(0)`` when t = 0 is tabulated); past the
    last abscissa it stays flat.
    """

    points: tuple

    def __post_init__(self):
        pts = tuple((float(t), float(y)) for t, y in self.points)
        object.__setattr__(self, "points", pts)
        ts = np.array([p[0] for p in pts])
        ys = np.array([p[1] for p in pts])
        if len(pts) < 1 or ts[0] < 0 or ts[-1] > 1 or np.any(np.diff(ts) <= 0):
            raise NotInClassG("table abscissae must increase within [0, 1]")
        if np.any(ys[ts > 0] <= 0) or np.any(ys < 0):
            raise NotInClassG("table values must be positive on (0, 1]")
        if np.any(np.diff(ys) < -_G_TOL * ys[1:]):
            raise NotInClassG("table values must be nondecreasing")
        if ts[0] > 0:
            ts = np.concatenate([[0.0], ts])
            ys = np.concatenate([[0.0], ys])
        slopes = np.diff(ys) / np.diff(ts)
        if np.any(slopes[1:] > slopes[:-1] * (1 + 1e-9) + 1e-12):
            raise NotInClassG("table is not concave")
        object.__setattr__(self, "_ts", ts)
        object.__setattr__(self, "_ys", ys)

    def log_at(self, logt):
        logt = np.asarray(logt, dtype=float)
        ts, ys = self._ts, self._ys
        out = np.empty_like(logt)
        t1, y1 = ts[1], ys[1]
        inside = logt >= math.log(t1)
        with np.errstate(divide="ignore"):
            out[inside] = np.log(np.interp(np.exp(logt[inside]), ts, ys))
        below = ~inside
        if ys[0] > 0:
            out[below] = np.log(ys[0] + (y1 - ys[0]) * np.exp(logt[below]) / t1)
        else:
            out[below] = math.log(y1) + logt[below] - math.log(t1)
        return out

    def __call__(self, t):
        if isinstance(t, float | int) and not isinstance(t, bool):
            if not 0 < t <= 1:
                raise DomainError(f"argument must lie in (0, 1], got {t}")
            if t >= self._ts[1]:
                return float(np.interp(t, self._ts, self._ys))
        return super().__call__(t)

    def dyadic_value(self, k):
        t = 2.0**-k
        if t >= self._ts[1]:
            return float(np.interp(t, self._ts, self._ys))
        return float(np.exp(self.log_dyadic(k)))

    def vertices(self) -> list:
        return list(zip(self._ts.tolist(), self._ys.tolist()))


@dataclass(frozen=True)
class Ratio(PositiveFunction):
    """num / den, evaluation only."""

    num: PositiveFunction
    den: PositiveFunction

    def log_at(self, logt):
        return self.num.log_at(logt) - self.den.log_at(logt)

    def power_exponent(self):
        a, b = self.num.power_exponent(), self.den.power_exponent()
        return None if a is None or b is None else a - b


@dataclass(frozen=True)
class Tilde(PositiveFunction):
    """t / inner(t); increasing whenever inner is concave."""

    inner: PositiveFunction
    nondecreasing = True

    def log_at(self, logt):
        return np.asarray(logt, dtype=float) - self.inner.log_at(logt)

    def power_exponent(self):
        a = self.inner.power_exponent()
        return None if a is None else 1.0 - a


def tilde_of(f: PositiveFunction) -> Tilde:
    return Tilde(f)


# spec strings ---------------------------------------------------------------


def parse_gfun(spec: str) -> GFun:
    """Parse ``pow:a``, ``powlog:a:b``, ``table:<path>``, ``scaled:c:<spec>``, ``const:c``."""
    kind, _, rest = spec.partition(":")
    try:
        if kind == "pow":
            return Pow(float(rest))
        if kind == "powlog":
            a, b = rest.split(":")
            return PowLog(float(a), float(b))
        if kind == "const":
            return Constant(float(rest))
        if kind == "scaled":
            c, _, inner = rest.partition(":")
            return Scaled(float(c), parse_gfun(inner))
        if kind == "table":
            with open(rest) as fh:
                data = json.load(fh)
            return Table(tuple(map(tuple, data["points"] if isinstance(data, dict) else data)))
    except NotInClassG:
        raise
    except (ValueError, OSError, KeyError, TypeError) as exc:
        raise SpecError(f"cannot parse function spec {spec!r}: {exc}") from exc
    raise SpecError(f"unknown function spec {spec!r}")


# limits and verdicts --------------------------------------------------------


class Verdict(str, enum.Enum):
    HOLDS = "holds"
    FAILS = "fails"
    INCONCLUSIVE = "inconclusive"


class Trend(str, enum.Enum):
    TO_ZERO = "to_zero"
    FLAT = "flat"
    GROWS = "grows"
    UNCLEAR = "unclear"


def _slope(x, y) -> float:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    xc = x - x.mean()
    return float(np.dot(xc, y - y.mean()) / np.dot(xc, xc))


def decay_trend(r, eps=1e-3, slope_tol=0.1, flat_tol=0.05, floor=1e-3):
    """Classify the tail of a positive sequence r_0..r_D.

    TO_ZERO when the tail is nonincreasing and either drops below
    ``eps * max(r)`` or decays like a power of the index (log-log slope below
    ``-slope_tol`` on both the last half and the last quarter).  FLAT when both
    slopes are within ``flat_tol`` of zero and the tail stays above
    ``floor * r_0``.  GROWS for a nondecreasing tail with power-law growth.
    """
    r = np.asarray(r, dtype=float)
    D = len(r) - 1
    if D < 8:
        raise ValueError("need at least 9 terms to judge a trend")
    logr = np.log(r)
    j = np.arange(D + 1)
    half = j >= max(D // 2, 1)
    quarter = j >= 3 * D // 4
    s_half = _slope(np.log(j[half]), logr[half])
    s_quarter = _slope(np.log(j[quarter]), logr[quarter])
    d = np.diff(logr[half])
    tol = 1e-12 * (1 + np.abs(logr[half][:-1]))
    info = {"slope_half": s_half, "slope_quarter": s_quarter, "last": float(r[-1]), "max": float(r.max())}
    if np.all(d <= tol):
        if r[-1] < eps * r.max():
            return Trend.TO_ZERO, {**info, "reason": "below eps"}
        if s_half < -slope_tol and s_quarter < -slope_tol:
            return Trend.TO_ZERO, {**info, "reason": "power-law decay"}
    if np.all(d >= -tol) and s_half > slope_tol and s_quarter > slope_tol:
        return Trend.GROWS, {**info, "reason": "power-law growth"}
    if abs(s_half) <= flat_tol and abs(s_quarter) <= flat_tol and r[half].min() >= floor * r[0]:
        return Trend.FLAT, {**info, "reason": "flat tail bounded below"}
    return Trend.UNCLEAR, {**info, "reason": "no rule applies"}


@dataclass
class ConditionResult:
    verdict: Verdict
    trace: list
    detail: dict = field(default_factory=dict)
    gamma_est: float | None = None

    def to_dict(self) -> dict:
        out = {"verdict": self.verdict.value, "detail": self.detail, "trace": self.trace}
        if self.gamma_est is not None:
            out["gamma_est"] = self.gamma_est
        return out


def _ratio_trend(phi, psi, depth, eps):
    j = np.arange(depth + 1)
    r = np.exp(psi.log_dyadic(j) - phi.log_dyadic(j))
    trend, info = decay_trend(r, eps=eps, floor=eps)
    if trend is Trend.GROWS:
        raise EmbedOrderError(f"psi/phi grows without bound ({info['reason']})")
    return r, trend, info


def condition_A(phi: PositiveFunction, psi: PositiveFunction, depth: int = 60, eps: float = 1e-3) -> ConditionResult:
    """Decide psi(t)/phi(t) -> 0 as t -> 0 from the probes t = 2**-j, j <= depth."""
    r, trend, info = _ratio_trend(phi, psi, depth, eps)
    verdict = {Trend.TO_ZERO: Verdict.HOLDS, Trend.FLAT: Verdict.FAILS}.get(trend, Verdict.INCONCLUSIVE)
    return ConditionResult(verdict, r.tolist(), info)


@dataclass
class DilationProfile:
    j: np.ndarray  # -J..J, sample at 2**j
    log_m: np.ndarray
    gamma_est: float
    delta_est: float
    window: tuple
    probe_depth: int

    @property
    def samples(self) -> dict:
        return {int(k): float(np.exp(v)) for k, v in zip(self.j, self.log_m)}

    def to_dict(self) -> dict:
        return {
            "gamma_est": self.gamma_est,
            "delta_est": self.delta_est,
            "window": list(self.window),
            "probe_depth": self.probe_depth,
            "samples": {str(k): v for k, v in self.samples.items()},
        }


def dilation_profile(f: PositiveFunction, J: int = 64, K: int | None = None, fit_tol: float = 0.02) -> DilationProfile:
    """Sample M_f(2**j), |j| <= J, over the probe grid s = 2**-i, i <= K, and fit both indices.

    Each index is the least-squares slope of log M_f against log t over the
    deepest half of the window; FitUnstable is raised when the slope over the
    deepest quarter differs by more than ``fit_tol``.
    """
    K = 8 * J if K is None else K
    if J < 4 or K < 2 * J:
        raise ValueError("dilation_profile needs J >= 4 and K >= 2J")
    L = np.asarray(f.log_dyadic(np.arange(K + 1)), dtype=float)
    contraction = np.array([np.max(L[j:] - L[: K + 1 - j]) for j in range(J + 1)])
    expansion = np.array([np.max(L[: K + 1 - j] - L[j:]) for j in range(J + 1)])
    jj = np.arange(J + 1)
    lo, lq = J // 2, 3 * J // 4

    def fit(logm, sign):
        x = sign * jj * LN2
        return _slope(x[lo:], logm[lo:]), _slope(x[lq:], logm[lq:])

    g_half, g_q = fit(contraction, -1.0)
    d_half, d_q = fit(expansion, 1.0)
    if abs(g_half - g_q) > fit_tol or abs(d_half - d_q) > fit_tol:
        raise FitUnstable(
            f"index fit unstable: gamma {g_half:.4f}/{g_q:.4f}, delta {d_half:.4f}/{d_q:.4f}"
        )
    j = np.concatenate([-jj[::-1], jj[1:]])
    log_m = np.concatenate([contraction[::-1], expansion[1:]])
    return DilationProfile(j, log_m, g_half, d_half, (lo, J), K)


def condition_B(
    phi: PositiveFunction,
    psi: PositiveFunction,
    J: int = 64,
    K: int | None = None,
    threshold: float = 0.02,
    depth: int = 60,
) -> ConditionResult:
    """Decide whether the lower dilation index of psi/phi is positive."""
    r, _, _ = _ratio_trend(phi, psi, depth, 1e-3)
    try:
        prof = dilation_profile(Ratio(psi, phi), J, K)
    except FitUnstable as exc:
        return ConditionResult(Verdict.INCONCLUSIVE, r.tolist(), {"reason": str(exc)})
    verdict = Verdict.HOLDS if prof.gamma_est > threshold else Verdict.FAILS
    detail = {"threshold": threshold, "delta_est": prof.delta_est}
    return ConditionResult(verdict, r.tolist(), detail, gamma_est=prof.gamma_est)


def fitted_exponent(f: PositiveFunction, k_lo: int, k_hi: int) -> float:
    """Least-squares power of f over the probes 2**-k, k_lo <= k <= k_hi."""
    k = np.arange(k_lo, k_hi + 1)
    return _slope(-k * LN2, f.log_dyadic(k))


# concave majorant -----------------------------------------------------------


def concave_majorant(points) -> Table:
    """Least nondecreasing concave majorant of a point set on [0, 1].

    The origin is added when absent, since any positive concave function on
    (0, 1] has a nonnegative limit at 0.  The upper hull is built by the
    monotone chain with exact rational orientation tests, then cut at its
    highest vertex so the result never decreases.
    """
    pts = [(float(t), float(y)) for t, y in points]
    if any(b[0] <= a[0] for a, b in zip(pts, pts[1:])):
        raise ValueError("abscissae must be strictly increasing")
    if any(y < 0 for _, y in pts) or any(not 0 <= t <= 1 for t, _ in pts):
        raise ValueError("need t in [0, 1] and y >= 0")
    if pts[0][0] > 0:
        pts.insert(0, (0.0, 0.0))
    exact = [(Fraction(t), Fraction(y)) for t, y in pts]
    hull: list = []
    for p in exact:
        while len(hull) >= 2:
            (ox, oy), (ax, ay) = hull[-2], hull[-1]
            if (ax - ox) * (p[1] - oy) - (ay - oy) * (p[0] - ox) >= 0:
                hull.pop()
            else:
                break
        hull.append(p)
    top = max(range(len(hull)), key=lambda i: hull[i][1])
    hull = hull[: top + 1]
    return Table(tuple((float(t), float(y)) for t, y in hull))


def majorant_ratio(points, majorant: Table) -> float:
    """max majorant(t) / y over the positive input points."""
    return max(majorant(t) / y for t, y in points if t > 0 and y > 0)
