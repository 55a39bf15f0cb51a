"""Lorentz, Marcinkiewicz and Orlicz norms of step functions.

All engines work on the decreasing rearrangement and in the log domain, so
blocks like ``(2**-2000, 2**-1999]`` carrying values near ``2**1000`` are
handled without overflow.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .gfun import PositiveFunction, Trend, decay_trend
from .stepfn import ExactScalar, StepFunction, rearrange

MARC_REFINE = 64
_ZOOM_PASSES = 6


class NonConvex(ValueError):
    """Samples do not define an increasing convex function with N(0) = 0."""


class RangeError(ValueError):
    """Argument outside the representable range of an Orlicz function."""


def _exp(y: float) -> float:
    try:
        return math.exp(y)
    except OverflowError:
        return math.inf


def _logsumexp(a) -> float:
    a = np.asarray(a, dtype=float)
    a = a[np.isfinite(a)]
    if a.size == 0:
        return -math.inf
    top = a.max()
    return float(top + math.log(np.exp(a - top).sum()))


def _star_grid(x: StepFunction):
    """Log-domain arrays of x*: right endpoints, lengths, values, segment ratios, cumulative mass."""
    xs = rearrange(x)
    lr, llen, lv, ratio = xs.log_grid()
    keep = np.isfinite(lv)
    lr, llen, lv, ratio = lr[keep], llen[keep], lv[keep], ratio[keep]
    la = np.logaddexp.accumulate(lv + llen) if lv.size else lv
    return xs, lr, llen, lv, ratio, la


def lorentz_norm(x: StepFunction, phi: PositiveFunction) -> float:
    """Stieltjes sum ``sum_i x*_i (phi(t_i) - phi(t_{i-1}))`` with phi(0) = 0."""
    _, lr, _, lv, ratio, _ = _star_grid(x)
    if lv.size == 0:
        return 0.0
    lp = np.asarray(phi.log_at(lr), dtype=float)
    first = ~np.isfinite(ratio)
    lprev = np.full_like(lr, -np.inf)
    lprev[~first] = np.asarray(phi.log_at(lr[~first] - ratio[~first]), dtype=float)
    with np.errstate(divide="ignore"):
        inc = lp + np.log(-np.expm1(np.minimum(lprev - lp, 0.0)))
    return _exp(_logsumexp(lv + inc))


@dataclass(frozen=True)
class MarcResult:
    value: float
    argmax: float  # log of the maximising t
    refinement: int
    polished: bool

    def __float__(self):
        return self.value


def marcinkiewicz_sup(x: StepFunction, theta: PositiveFunction, refine: int = MARC_REFINE) -> MarcResult:
    """``sup_t A(t) / theta(t)`` with ``A(t) = int_0^t x*``.

    Candidates are the breakpoints of x*, ``refine`` log-spaced points inside
    each block and, for a power weight, the interior stationary point of the
    segment objective.  Unless theta is a power the best segment is then
    searched again on successively finer grids around the best sample.

    When theta is nondecreasing a block can only beat the best breakpoint if
    ``A(t_i) / theta(t_{i-1})`` does, so the other blocks are skipped.
    """
    _, lr, _, lv, ratio, la = _star_grid(x)
    if lv.size == 0:
        return MarcResult(0.0, 0.0, refine, False)
    span = ratio.copy()
    span[0] = 50.0  # the first block is searched over 50 e-folds below t_1
    lprev_t = lr - ratio  # -inf at the first block
    la_prev = np.concatenate([[-math.inf], la[:-1]])

    def seg_logA(i, s):
        """log A at t = t_i * exp(-s), 0 <= s <= span_i; i and s broadcast."""
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.logaddexp(la_prev[i], lv[i] + lprev_t[i] + np.log(np.expm1(ratio[i] - s)))
        return np.where(i == 0, lv[0] + lr[0] - s, out)

    def objective(i, s):
        with np.errstate(divide="ignore", invalid="ignore"):
            lt = lr[i] - s
            val = seg_logA(i, s) - np.asarray(theta.log_at(lt), dtype=float).reshape(np.shape(lt))
        return np.where(np.isfinite(val), val, -math.inf)

    at_bp = la - np.asarray(theta.log_at(lr), dtype=float)
    k0 = int(np.argmax(at_bp))
    best, best_lt = float(at_bp[k0]), float(lr[k0])
    rows = np.arange(lv.size)
    if getattr(theta, "nondecreasing", False):
        with np.errstate(invalid="ignore"):
            bound = la - np.asarray(theta.log_at(lprev_t), dtype=float)
        rows = rows[~(bound <= best)]  # nan/inf bounds are kept

    frac = np.linspace(0.0, 1.0, refine + 2)[1:-1]
    if rows.size:
        S = span[rows, None] * frac[None, :]
        obj = objective(rows[:, None], S)
        flat = int(np.argmax(obj))
        r, c = divmod(flat, frac.size)
        if obj[r, c] > best:
            best, best_lt = float(obj[r, c]), float(lr[rows[r]] - S[r, c])

    a = theta.power_exponent()
    if a is not None and 0 < a < 1:
        with np.errstate(divide="ignore", invalid="ignore"):
            lbeta = la_prev + np.log(-np.expm1(np.minimum(lv + lprev_t - la_prev, 0.0)))
            lstar = math.log(a) + lbeta - lv - math.log1p(-a)
        ok = np.flatnonzero(np.isfinite(lstar) & (lstar > lprev_t) & (lstar < lr))
        if ok.size:
            vals = objective(ok, lr[ok] - lstar[ok])
            j = int(np.argmax(vals))
            if vals[j] > best:
                best, best_lt = float(vals[j]), float(lstar[ok][j])

    polished = False
    if a is None:
        # zoom in around the best point: the sampled cell shrinks 32-fold per pass
        i = min(int(np.searchsorted(lr, best_lt, side="left")), lv.size - 1)
        s0 = lr[i] - best_lt
        h = span[i] / (refine + 1)
        cells = [(i, max(0.0, s0 - h), min(span[i], s0 + h))]
        if s0 < h and i + 1 < lv.size:  # the neighbour block starts at t_i
            cells.append((i + 1, span[i + 1] * (1 - 1 / (refine + 1)), span[i + 1]))
        for i, lo, hi in cells:
            for _ in range(_ZOOM_PASSES):
                s_try = np.linspace(lo, hi, 65)
                vals = objective(np.full(s_try.shape, i), s_try)
                j = int(np.argmax(vals))
                if vals[j] > best:
                    best, best_lt = float(vals[j]), float(lr[i] - s_try[j])
                step = (hi - lo) / 64
                lo, hi = max(lo, s_try[j] - step), min(hi, s_try[j] + step)
        polished = True
    return MarcResult(_exp(best), best_lt, refine, polished)


def marcinkiewicz_norm(x: StepFunction, theta: PositiveFunction, refine: int = MARC_REFINE) -> float:
    return marcinkiewicz_sup(x, theta, refine).value


def quasi_norm(x: StepFunction, psi: PositiveFunction) -> float:
    """``max_i x*_i psi(t_i)`` over the blocks of x*.

    Candidates within a whisker of the log-domain maximum are recomputed as
    ExactScalar products, so dyadic breakpoints give results good to a few ulp.
    """
    xs, lr, _, lv, _, _ = _star_grid(x)
    if lv.size == 0:
        return 0.0
    score = lv + np.asarray(psi.log_at(lr), dtype=float)
    top = score.max()
    idx = np.flatnonzero(score >= top - 1e-9 * (1 + abs(top)))
    bps, vals = xs.breakpoints[1:], [v for v in xs.values if v != 0]
    best = max((ExactScalar.of(vals[i]) * psi.exact_at(bps[i]) for i in idx))
    return float(best)


# Orlicz --------------------------------------------------------------------


class OrliczFunction:
    """Increasing convex N on [0, inf) with N(0) = 0."""

    def __call__(self, s):
        raise NotImplementedError

    def log_value(self, logs):
        """log N(exp(logs)), safe for large logs."""
        raise NotImplementedError

    def inverse(self, y: float) -> float:
        """N^{-1}(y) by bisection with bracket expansion."""
        if y < 0:
            raise RangeError("N^{-1} needs y >= 0")
        if y == 0:
            return 0.0
        lo, hi = 0.0, 1.0
        while self(hi) < y:
            lo, hi = hi, 2 * hi
            if not math.isfinite(hi):
                raise RangeError(f"N never reaches {y}")
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if mid in (lo, hi):
                break
            if self(mid) < y:
                lo = mid
            else:
                hi = mid
        return 0.5 * (lo + hi)


@dataclass(frozen=True)
class Power(OrliczFunction):
    """s**p, p >= 1."""

    p: float

    def __post_init__(self):
        if not self.p >= 1:
            raise NonConvex(f"s**p is convex only for p >= 1, got {self.p}")

    def __call__(self, s):
        return np.asarray(s, dtype=float) ** self.p if np.ndim(s) else float(s) ** self.p

    def log_value(self, logs):
        return self.p * np.asarray(logs, dtype=float)

    def inverse(self, y):
        if y < 0:
            raise RangeError("N^{-1} needs y >= 0")
        return float(y) ** (1.0 / self.p)


@dataclass(frozen=True)
class TableConvex(OrliczFunction):
    """Piecewise-linear interpolant of convex samples on [0, T], extended linearly."""

    points: tuple

    def __post_init__(self):
        pts = tuple(sorted((float(s), float(y)) for s, y in self.points))
        if not pts or pts[0][0] != 0.0:
            pts = ((0.0, 0.0),) + pts
        s = np.array([p[0] for p in pts])
        y = np.array([p[1] for p in pts])
        if y[0] != 0.0:
            raise NonConvex("N(0) must be 0")
        if s.size < 2 or np.any(np.diff(s) <= 0) or np.any(np.diff(y) <= 0):
            raise NonConvex("samples must be strictly increasing")
        slopes = np.diff(y) / np.diff(s)
        if np.any(np.diff(slopes) < -1e-12 * slopes[1:]):
            raise NonConvex("samples are not convex")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "_s", s)
        object.__setattr__(self, "_y", y)
        object.__setattr__(self, "_slope", float(slopes[-1]))

    def __call__(self, s):
        arr = np.asarray(s, dtype=float)
        out = np.interp(arr, self._s, self._y)
        far = arr > self._s[-1]
        out = np.where(far, self._y[-1] + self._slope * (arr - self._s[-1]), out)
        return out if np.ndim(s) else float(out)

    def log_value(self, logs):
        logs = np.asarray(logs, dtype=float)
        with np.errstate(over="ignore", divide="ignore"):
            s = np.exp(logs)
            out = np.log(self(s))
        big = ~np.isfinite(s)
        out[big] = math.log(self._slope) + logs[big]
        return out


def _modular_log(N: OrliczFunction, lv, llen, lu: float) -> float:
    return _logsumexp(np.asarray(N.log_value(lv - lu)) + llen)


def orlicz_norm(x: StepFunction, N: OrliczFunction, rtol: float = 1e-14) -> float:
    """Luxemburg norm ``inf{u > 0 : int N(|x| / u) <= 1}`` by bisection on log u."""
    _, llen, lv, _ = x.log_grid()
    keep = np.isfinite(lv)
    lv, llen = lv[keep], llen[keep]
    if lv.size == 0:
        return 0.0
    hi = float(lv.max()) - math.log(N.inverse(1.0))
    lo = hi - math.log(2.0)
    while _modular_log(N, lv, llen, lo) <= 0.0:
        hi, lo = lo, lo - 2 * (hi - lo)
    while hi - lo > rtol:
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if _modular_log(N, lv, llen, mid) > 0.0:
            lo = mid
        else:
            hi = mid
    return _exp(0.5 * (lo + hi))


def orlicz_fundamental(N: OrliczFunction, t) -> float:
    """``1 / N^{-1}(1 / t)``."""
    t = float(t)
    if not 0 < t <= 1:
        raise ValueError(f"t must lie in (0, 1], got {t}")
    y = 1.0 / t if t > 0 else math.inf
    if not math.isfinite(y):
        raise RangeError(f"1/t overflows for t = {t}")
    return 1.0 / N.inverse(y)


class OrliczVerdict(str, enum.Enum):
    ZERO = "zero"
    NONZERO = "nonzero"
    INCONCLUSIVE = "inconclusive"


def orlicz_ratio_limit(N: OrliczFunction, M: OrliczFunction, depth: int = 60, eps: float = 1e-3):
    """Decide ``lim_{s -> inf} M(s) / N(s) = 0`` from the probes s = 2**j, j <= depth."""
    logs = np.arange(depth + 1) * math.log(2.0)
    r = np.exp(np.asarray(M.log_value(logs)) - np.asarray(N.log_value(logs)))
    trend, info = decay_trend(r, eps=eps, floor=eps)
    verdict = {
        Trend.TO_ZERO: OrliczVerdict.ZERO,
        Trend.FLAT: OrliczVerdict.NONZERO,
        Trend.GROWS: OrliczVerdict.NONZERO,
    }.get(trend, OrliczVerdict.INCONCLUSIVE)
    return verdict, {**info, "trace": r.tolist()}
