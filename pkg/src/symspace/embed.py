"""Embedding tests between Marcinkiewicz and Lorentz spaces.

``series_test`` decides whether ``sum_k (psi(2**-k) - psi(2**-k-1)) / phi(2**-k)``
converges, which is the dyadic form of ``int_0^1 dpsi / phi < inf``.  The
remaining operations build a slower weight rho between phi and psi, check the
power-gap chain of estimates, and look for disjoint indicator witnesses.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .gfun import (
    LN2,
    EmbedOrderError,
    FitUnstable,
    PositiveFunction,
    Table,
    Verdict,
    concave_majorant,
    condition_A,
    condition_B,
    dilation_profile,
    fitted_exponent,
    majorant_ratio,
)
from .stepfn import StepFunction, dyadic

GEOMETRIC_RATIO = 0.95
P_CONVERGE = 1.1
P_DIVERGE = 0.9


class PreconditionFailed(ValueError):
    """Inputs violate the hypotheses of the requested construction."""


class SeriesVerdict(str, enum.Enum):
    CONVERGES = "converges"
    DIVERGES = "diverges"
    INCONCLUSIVE = "inconclusive"


@dataclass
class EmbedReport:
    verdict: SeriesVerdict
    terms: list
    partial_sums: list
    tail_bound: float
    certificate: str
    constants: dict = field(default_factory=dict)
    detail: dict = field(default_factory=dict)

    @property
    def total(self) -> float:
        return self.partial_sums[-1] + self.tail_bound

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict.value,
            "certificate": self.certificate,
            "sum": self.partial_sums[-1],
            "tail_bound": self.tail_bound,
            "constants": self.constants,
            "detail": self.detail,
            "trace": self.terms,
        }


def _slope(x, y) -> float:
    xc = x - x.mean()
    return float(np.dot(xc, y - y.mean()) / np.dot(xc, xc))


def certify_series(log_terms, cauchy_tol: float = 1e-2):
    """Convergence verdict for a positive series from the logs of its first K+1 terms.

    Returns ``(verdict, tail_bound, certificate, info)``.  Convergence needs a
    geometric ratio bound or a p-series fit with p > 1.1 over the last quarter,
    and the resulting tail must be below ``cauchy_tol`` times the partial sum.
    Terms that stop decaying, or decay like k**-p with p < 0.9, diverge.
    """
    lt = np.asarray(log_terms, dtype=float)
    K = lt.size - 1
    if K < 8:
        raise ValueError("need at least 9 terms")
    q = np.arange(3 * K // 4, K + 1)
    ratios = np.diff(lt[q])
    rmax = float(np.exp(ratios.max()))
    p = -_slope(np.log(q + 1.0), lt[q])
    total = float(np.exp(lt).sum())
    last = float(np.exp(lt[-1]))
    info = {"max_ratio": rmax, "p_fit": p}
    if rmax <= GEOMETRIC_RATIO:
        tail, cert = last * rmax / (1 - rmax), "geometric"
    elif p > P_CONVERGE:
        tail, cert = last * (K + 1) / (p - 1), "p-series"
    else:
        tail, cert = math.inf, ""
    if cert and tail <= cauchy_tol * total:
        return SeriesVerdict.CONVERGES, tail, cert, info
    if p < P_DIVERGE:
        return SeriesVerdict.DIVERGES, math.inf, "p-series" if p > 0.05 else "bounded below", info
    return SeriesVerdict.INCONCLUSIVE, tail, cert or "none", info


def series_log_terms(phi: PositiveFunction, psi: PositiveFunction, K: int) -> np.ndarray:
    """log of (psi(2**-k) - psi(2**-k-1)) / phi(2**-k) for k = 0..K."""
    k = np.arange(K + 2)
    lpsi = np.asarray(psi.log_dyadic(k), dtype=float)
    with np.errstate(divide="ignore"):
        la = lpsi[:-1] + np.log(-np.expm1(lpsi[1:] - lpsi[:-1]))
    return la - np.asarray(phi.log_dyadic(k[:-1]), dtype=float)


def series_test(phi: PositiveFunction, psi: PositiveFunction, K: int = 200) -> EmbedReport:
    """Decide convergence of the dyadic series for the inclusion of M(t/phi) into Lambda(psi)."""
    lt = series_log_terms(phi, psi, K)
    verdict, tail, cert, info = certify_series(lt)
    terms = np.exp(lt)
    detail = dict(info)
    try:
        delta = dilation_profile(phi).delta_est
        detail["delta_phi"] = delta
        if delta >= 1 - 1e-9:
            detail["warning"] = "upper index of phi is 1; the series test may not match the integral"
    except FitUnstable as exc:
        detail["warning"] = str(exc)
    return EmbedReport(verdict, terms.tolist(), np.cumsum(terms).tolist(), tail, cert, detail=detail)


# slower weight --------------------------------------------------------------


@dataclass
class RhoConstruction:
    u: float
    K: int
    a: np.ndarray
    terms: np.ndarray
    S: np.ndarray
    g: np.ndarray
    h_points: list
    rho: Table
    tail: float
    delta_phi: float
    majorant_ratio: float
    rho_index: float

    def to_dict(self) -> dict:
        return {
            "u": self.u,
            "K": self.K,
            "delta_phi": self.delta_phi,
            "tail": self.tail,
            "rho_index": self.rho_index,
            "majorant_ratio": self.majorant_ratio,
            "g": self.g.tolist(),
            "h_points": [list(p) for p in self.h_points],
            "rho_vertices": [list(p) for p in self.rho.vertices()],
        }


def construct_rho(phi: PositiveFunction, psi: PositiveFunction, u: float = 0.25, K: int = 200) -> RhoConstruction:
    """Build rho in G with rho/phi -> 0 that still passes the series test against psi.

    S_k is the tail of the convergent series (with the certified remainder
    beyond K added to every entry), ``g_0 = S_0``,
    ``g_k = max(S_k, 2**-u g_{k-1})`` and rho is the least concave majorant of
    ``(2**-k, sqrt(g_k) phi(2**-k))``.  The step u is capped at half the room
    left by the upper index of phi.
    """
    if not u > 0:
        raise PreconditionFailed("u must be positive")
    rep = series_test(phi, psi, K)
    if rep.verdict is not SeriesVerdict.CONVERGES:
        raise PreconditionFailed(f"series test verdict: {rep.verdict.value}")
    try:
        delta = dilation_profile(phi).delta_est
    except FitUnstable as exc:
        raise PreconditionFailed(str(exc)) from exc
    if delta + u >= 1:
        raise PreconditionFailed(f"index budget exceeded: delta_phi + u = {delta + u:.4f} >= 1")
    u = min(u, (1 - delta) / 2)
    terms = np.array(rep.terms)
    k = np.arange(K + 1)
    S = np.cumsum(terms[::-1])[::-1] + rep.tail_bound
    g = np.empty_like(S)
    g[0] = S[0]
    shrink = 2.0**-u
    for i in range(1, K + 1):
        g[i] = max(S[i], shrink * g[i - 1])
    lphi = np.asarray(phi.log_dyadic(k), dtype=float)
    h = np.sqrt(g) * np.exp(lphi)
    pts = [(0.0, 0.0)] + [(2.0 ** -int(i), float(h[i])) for i in k[::-1]]
    rho = concave_majorant(pts)
    a = np.exp(np.asarray(psi.log_dyadic(k), dtype=float)) - np.exp(np.asarray(psi.log_dyadic(k + 1), dtype=float))
    return RhoConstruction(
        u=u,
        K=K,
        a=a,
        terms=terms,
        S=S,
        g=g,
        h_points=pts,
        rho=rho,
        tail=rep.tail_bound,
        delta_phi=delta,
        majorant_ratio=majorant_ratio(pts, rho),
        rho_index=fitted_exponent(rho, K // 4, K // 2),
    )


@dataclass
class Check:
    name: str
    passed: bool
    value: float
    detail: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"name": self.name, "pass": bool(self.passed), "value": self.value, "detail": self.detail}


def ratio_to_zero(f: PositiveFunction, phi: PositiveFunction, depth: int = 60, eps: float = 1e-2) -> Check:
    """f(2**-k)/phi(2**-k) is nonincreasing in k <= depth and ends below eps."""
    k = np.arange(depth + 1)
    r = np.exp(np.asarray(f.log_dyadic(k), dtype=float) - np.asarray(phi.log_dyadic(k), dtype=float))
    mono = bool(np.all(np.diff(r) <= 1e-12 * r[:-1]))
    return Check("ratio_to_zero", mono and bool(r[-1] < eps), float(r[-1]), {"monotone": mono, "eps": eps})


def verify_rho(rc: RhoConstruction, phi: PositiveFunction, psi: PositiveFunction, depth: int = 60, eps: float = 1e-2) -> list:
    """The three conclusions about rho, each as a :class:`Check`."""
    checks = [ratio_to_zero(rc.rho, phi, depth, eps)]
    rep = series_test(rc.rho, psi, rc.K)
    checks.append(Check("series_with_rho", rep.verdict is SeriesVerdict.CONVERGES, rep.total,
                        {"certificate": rep.certificate, **rep.detail}))
    lt = np.log(rc.terms) - 0.5 * np.log(rc.S)
    verdict, tail, cert, info = certify_series(lt)
    checks.append(Check("damped_series", verdict is SeriesVerdict.CONVERGES, float(np.exp(lt).sum()) + tail,
                        {"certificate": cert, **info}))
    # the ratio is reported, not bounded; it can only fall below 1 through a hull bug
    checks.append(Check("majorant_equivalence", rc.majorant_ratio >= 1 - 1e-12, rc.majorant_ratio))
    return checks


# power-gap chain ------------------------------------------------------------


@dataclass
class ChainReport:
    u: float
    C: float
    C1: float
    delta_phi: float
    integral: float
    dyadic_sum: float
    checks: list

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_dict(self) -> dict:
        return {
            "verdict": "holds" if self.passed else "fails",
            "constants": {"u": self.u, "C": self.C, "C1": self.C1},
            "delta_phi": self.delta_phi,
            "integral": self.integral,
            "bound": self.C1 / self.u,
            "dyadic_sum": self.dyadic_sum,
            "checks": [c.to_dict() for c in self.checks],
        }


def stieltjes_blocks(phi: PositiveFunction, psi: PositiveFunction, K: int = 200, n: int = 64) -> np.ndarray:
    """``int dpsi / phi`` over each block ``[2**-k-1, 2**-k]``, k <= K.

    Trapezoid sums with n and 2n cells per block, combined by one Richardson step.
    """

    def blocks(m):
        s = np.linspace(0.5, 1.0, m + 1)
        k = np.arange(K + 1)[:, None]
        lt = np.log(s)[None, :] - k * LN2
        lpsi = np.asarray(psi.log_at(lt.ravel()), dtype=float).reshape(lt.shape)
        lphi = np.asarray(phi.log_at(lt.ravel()), dtype=float).reshape(lt.shape)
        dpsi = np.exp(lpsi[:, 1:]) - np.exp(lpsi[:, :-1])
        inv = np.exp(-lphi)
        return (dpsi * 0.5 * (inv[:, 1:] + inv[:, :-1])).sum(axis=1)

    return (4 * blocks(2 * n) - blocks(n)) / 3


def stieltjes_integral(phi: PositiveFunction, psi: PositiveFunction, K: int = 200, n: int = 64) -> float:
    """``int_0^1 dpsi / phi``; the remainder past block K is extended geometrically."""
    est = stieltjes_blocks(phi, psi, K, n)
    r = est[-1] / est[-2]
    tail = est[-1] * r / (1 - r) if 0 < r < 1 else math.inf
    return float(est.sum() + tail)


def integral_test(phi: PositiveFunction, psi: PositiveFunction, K: int = 200) -> EmbedReport:
    """Certificate for ``int_0^1 dpsi / phi < inf`` built from the blockwise integrals."""
    est = stieltjes_blocks(phi, psi, K)
    lt = np.log(est)
    verdict, tail, cert, info = certify_series(lt)
    return EmbedReport(verdict, np.exp(lt).tolist(), np.cumsum(np.exp(lt)).tolist(), tail, cert, {}, info)


def theorem5_chain(phi: PositiveFunction, psi: PositiveFunction, grid: int = 40, margin: float = 0.01,
                   tol: float = 1e-6) -> ChainReport:
    """Estimate u, C and C1 for a pair with a power gap and check the resulting bound."""
    cb = condition_B(phi, psi)
    if cb.verdict is not Verdict.HOLDS:
        raise PreconditionFailed(f"condition B verdict: {cb.verdict.value}")
    u = cb.gamma_est - margin
    i = np.arange(grid + 1)
    lpsi = np.asarray(psi.log_dyadic(np.arange(2 * grid + 1)), dtype=float)
    lphi = np.asarray(phi.log_dyadic(np.arange(2 * grid + 1)), dtype=float)
    I, J = np.meshgrid(i, i, indexing="ij")  # t = 2**-I, s = 2**-J
    lr = lpsi[I + J] + lphi[J] - lpsi[J] - lphi[I + J] + u * I * LN2
    C = float(np.exp(lr.max()))
    C1 = float(np.exp((lpsi - lphi + u * np.arange(2 * grid + 1) * LN2).max()))
    delta = dilation_profile(phi).delta_est
    integral = stieltjes_integral(phi, psi)
    dyadic_sum = float(np.exp(series_log_terms(phi, psi, 200)).sum())
    checks = [
        Check("index_budget", delta <= 1 - u + tol, delta, {"limit": 1 - u}),
        Check("integral_bound", integral <= C1 / u * (1 + tol), integral, {"bound": C1 / u}),
        Check("dyadic_sum_bound", dyadic_sum <= C1 / u * (1 + tol), dyadic_sum, {"bound": C1 / u}),
    ]
    return ChainReport(u, C, C1, delta, integral, dyadic_sum, checks)


# witnesses ------------------------------------------------------------------


@dataclass
class Witness:
    t: list
    C2: float

    def to_dict(self) -> dict:
        return {"t": [float(x) for x in self.t], "C2": self.C2}


def witness_search(phi: PositiveFunction, psi: PositiveFunction, n: int = 5, depth: int = 60) -> Witness | None:
    """Disjoint sets of measure t_k with phi(t_k) <= C2 psi(t_k) and sum t_k <= 1.

    Returns None when psi/phi -> 0, since then phi/psi is unbounded along
    every sequence t_k -> 0.  Otherwise the probes 2**-j whose ratio
    phi/psi is within a factor 2 of its tail minimum are thinned to every
    other exponent starting at j = 2, so the measures sum to at most 1/3.
    """
    try:
        if condition_A(phi, psi, depth).verdict is Verdict.HOLDS:
            return None
    except EmbedOrderError:
        pass
    j = np.arange(depth + 1)
    q = np.exp(np.asarray(phi.log_dyadic(j), dtype=float) - np.asarray(psi.log_dyadic(j), dtype=float))
    floor = q[depth // 2:].min()
    chosen: list = []
    for jj in range(2, depth + 1):
        if q[jj] <= 2 * floor * (1 + 1e-12) and (not chosen or jj - chosen[-1] >= 2):
            chosen.append(jj)
        if len(chosen) == n:
            break
    if len(chosen) < n:
        return None
    return Witness([dyadic(int(x)) for x in chosen], float(q[chosen].max()))


# discretised reciprocals -----------------------------------------------------


def clamped_reciprocal(phi: PositiveFunction, depth: int = 64, sub: int = 8) -> StepFunction:
    """Upper step envelope of ``min(1/phi(t), 1/phi(2**-depth))``.

    Each dyadic block above the clamp is cut into ``sub`` equal cells carrying
    1/phi at their left end (the largest value there), nudged up one ulp.
    """
    bps = [Fraction(0), dyadic(depth)]
    vals = [math.nextafter(1.0 / phi(dyadic(depth)), math.inf)]
    for j in range(depth - 1, -1, -1):
        lo = dyadic(j + 1)
        for i in range(sub):
            bps.append(lo * (1 + Fraction(i + 1, sub)))
            vals.append(math.nextafter(1.0 / phi(lo * (1 + Fraction(i, sub))), math.inf))
    return StepFunction(tuple(bps), tuple(vals))
