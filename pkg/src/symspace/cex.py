"""A pair of symmetric spaces whose fundamental functions separate at zero while
their norms agree on an infinite disjoint sequence.

The larger space E is the Marcinkiewicz space built on
``psi(t) = t**(1/2) * log2(4/t)**(1/2)``; the smaller space F is normed by
pairings of x* against ``b**-1/2 chi_(0,b)`` and the L2-normalised blocks w_m.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache

import numpy as np

from .embed import clamped_reciprocal
from .gfun import Pow, PowLog, Tilde, Verdict, condition_A, condition_B
from .norms import _logsumexp, marcinkiewicz_sup, quasi_norm
from .stepfn import LN2, ExactScalar, StepFunction, disjoint_sum, dyadic, log_fraction, lp_norm, rearrange

PSI = PowLog(0.5, 0.5)
SQRT = Pow(0.5)
MAX_DEPTH = 6
DEFAULT_SEED = 0x5EED
# Exhaustive search over a 0.1 grid with four blocks gives a spread of 1.4523;
# the cap keeps headroom for the larger families.  A priori bound: 32.
SPREAD_CAP = 2.0
ULP = 2.0**-52


class DepthError(ValueError):
    """Requested more blocks than the exponent budget allows."""


# the block sequence ----------------------------------------------------------


def _harmonic(n: int, N: int) -> Fraction:
    return sum((Fraction(1, k + 2) for k in range(n, N)), Fraction(0))


def _next_n(n: int) -> int:
    """Largest N with sum_{k=n}^{N-1} 1/(k+2) <= 1."""
    s, N = 0.0, n
    while s + 1.0 / (N + 2) <= 1.0:
        s += 1.0 / (N + 2)
        N += 1
    if abs(s - 1.0) < 1e-9 or abs(s + 1.0 / (N + 2) - 1.0) < 1e-9:
        while _harmonic(n, N) > 1:
            N -= 1
        while _harmonic(n, N + 1) <= 1:
            N += 1
    return N


@lru_cache(maxsize=None)
def n_sequence(count: int) -> tuple:
    """n_0 = 1 < n_1 < ... (count terms)."""
    if count <= 1:
        return (1,)[:count]
    prev = n_sequence(count - 1)
    return prev + (_next_n(prev[-1]),)


def b_exact(k: int) -> ExactScalar:
    """b_k = (k+2)**-1/2 * 2**(k/2), rounded once."""
    h = k // 2
    return ExactScalar.normalise(math.sqrt((2.0 if k % 2 else 1.0) / (k + 2)), h)


def b_log(k):
    k = np.asarray(k, dtype=float)
    return 0.5 * k * LN2 - 0.5 * np.log(k + 2.0)


@lru_cache(maxsize=4096)
def _dyadic_log(k: int) -> float:
    return log_fraction(dyadic(k))


def w_norm_sq(n: int, N: int) -> Fraction:
    """||w||_2^2 for the block spanning exponents n..N-1, in closed form."""
    return _harmonic(n, N - 1) / 2 + Fraction(1, N + 1)


@lru_cache(maxsize=64)
def _wbar_log(m: int):
    """Log view of w_m / ||w_m||_2: increasing right endpoints and values."""
    seq = n_sequence(m + 2)
    n, N = seq[m], seq[m + 1]
    ks = np.arange(N - 1, n - 1, -1)
    if N < 4000:
        lnorm = 0.5 * log_fraction(w_norm_sq(n, N))
    else:
        lnorm = 0.5 * math.log(0.5 * math.fsum(1.0 / (k + 2) for k in range(n, N - 1)) + 1.0 / (N + 1))
    wr = np.array([_dyadic_log(int(k)) for k in ks])
    return wr, b_log(ks) - lnorm


@dataclass(frozen=True)
class CexFamily:
    M_max: int
    n: tuple
    w: tuple
    v: tuple
    w_norm_sq: tuple
    psi: PowLog = PSI

    @property
    def D(self) -> list:
        return [(dyadic(self.n[m + 1]), dyadic(self.n[m])) for m in range(self.M_max + 1)]

    def b(self, k: int) -> ExactScalar:
        return b_exact(k)


def build_family(M_max: int = 5) -> CexFamily:
    """Build n_0..n_{M_max+1}, the blocks w_m and their restrictions v_m."""
    if not 0 <= M_max <= MAX_DEPTH:
        raise DepthError(f"M_max must lie in [0, {MAX_DEPTH}], got {M_max}")
    seq = n_sequence(M_max + 2)
    ws, vs, sq = [], [], []
    for m in range(M_max + 1):
        n, N = seq[m], seq[m + 1]
        ks = range(N - 1, n - 1, -1)
        bps = (Fraction(0),) + tuple(dyadic(k) for k in ks) + (Fraction(1),)
        vals = tuple(b_exact(k) for k in ks) + (0.0,)
        w = StepFunction(bps, vals)
        ws.append(w)
        vs.append(StepFunction((Fraction(0), dyadic(N)) + bps[1:], (0.0,) + vals))
        sq.append(w_norm_sq(n, N))
    return CexFamily(M_max, seq, tuple(ws), tuple(vs), tuple(sq))


# the norm of F -----------------------------------------------------------------


@dataclass(frozen=True)
class FNormResult:
    value: float
    chi_part: float
    w_parts: tuple
    m_eff: int
    tail_bound: float

    def __float__(self):
        return self.value


def _pair_log(xr, xv, wr, wv) -> float:
    """log of int x* w for decreasing step functions given by log right endpoints and log values."""
    P = np.union1d(xr[xr <= wr[-1]], wr)
    ix = np.searchsorted(xr, P, side="left")
    xval = np.full(P.shape, -math.inf)
    inside = ix < xr.size
    xval[inside] = xv[ix[inside]]
    wval = wv[np.searchsorted(wr, P, side="left")]
    prev = np.concatenate([[-math.inf], P[:-1]])
    with np.errstate(divide="ignore"):
        llen = P + np.log(-np.expm1(prev - P))
    return _logsumexp(xval + wval + llen)


def _sq_mass_log(xr, xv, lT: float) -> float:
    """log of int_0^T (x*)^2."""
    idx = int(np.searchsorted(xr, lT, side="left"))
    prev = np.concatenate([[-math.inf], xr[:-1]])
    with np.errstate(divide="ignore"):
        llen = xr + np.log(-np.expm1(prev - xr))
    terms = list(2 * xv[:idx] + llen[:idx])
    if idx < xr.size and lT > prev[idx]:
        with np.errstate(divide="ignore"):
            terms.append(2 * xv[idx] + lT + math.log(-math.expm1(prev[idx] - lT)))
    return _logsumexp(terms)


_TAIL_CONST = math.log(2.0) - math.log1p(-2.0**-0.5)
MAX_BLOCKS = 12


def f_norm(x: StepFunction, fam: CexFamily | None = None, eps: float = 1e-9) -> FNormResult:
    """Norm of x in F with a certified bound on the unexamined blocks.

    Blocks w_m are generated on demand, past the family if needed, until a
    bound on every remaining pairing drops below ``eps`` times the current
    maximum.  The bound is the smaller of ``x*(0+) * int w_bar_m`` and the
    Cauchy-Schwarz estimate ``||x* chi_(0, 2**-n_m)||_2``, both nonincreasing
    in m.
    """
    xs = rearrange(x)
    lr, _, lv, _ = xs.log_grid()
    keep = np.isfinite(lv)
    xr, xv = lr[keep], lv[keep]
    if xv.size == 0:
        return FNormResult(0.0, 0.0, (), -1, 0.0)
    chi = marcinkiewicz_sup(xs, SQRT).value
    best_log = math.log(chi)
    parts, tail = [], math.inf
    for m in range(MAX_BLOCKS + 1):
        n = n_sequence(m + 1)[m]
        tail_log = min(
            xv[0] - 0.5 * math.log(n + 2) - 0.5 * n * LN2 + _TAIL_CONST,
            0.5 * _sq_mass_log(xr, xv, _dyadic_log(n)),
        )
        tail = math.exp(tail_log) if tail_log < 700 else math.inf
        if tail_log < math.log(eps) + best_log:
            break
        wr, wv = _wbar_log(m)
        p = _pair_log(xr, xv, wr, wv)
        parts.append(math.exp(p))
        best_log = max(best_log, p)
    else:
        m = MAX_BLOCKS + 1
    return FNormResult(math.exp(best_log), chi, tuple(parts), m - 1, tail)


def inv_psi_envelope(depth: int = 64, sub: int = 8) -> StepFunction:
    """Upper step envelope of 1/psi clamped at 2**-depth."""
    return clamped_reciprocal(PSI, depth, sub)


# certified quadrature ------------------------------------------------------------


def _g(c: float, s):
    """s**-1/2 (c - log2 s)**-1/2; decreasing on (0, 1] once c > 1/ln 2."""
    s = np.asarray(s, dtype=float)
    return 1.0 / np.sqrt(s * (c - np.log2(s)))


def g_bracket(c: float, lo: float, hi: float, tol: float) -> tuple:
    """Certified ``(lower, upper)`` for the integral of g_c over [lo, hi] with 0 <= lo < hi <= 1.

    For a decreasing integrand the left and right Riemann sums bracket the
    integral and differ by exactly ``(g(a) - g(b)) * h``, which fixes the
    number of cells.  A left end at 0 is covered by dyadic pieces plus the
    analytic tail ``int_0^e g_c <= 2 e**1/2 (c - log2 e)**-1/2``.
    """
    if c * LN2 <= 1:
        raise ValueError("g_c is monotone only for c > 1/ln 2")
    if lo > 0:
        return _riemann_bracket(c, lo, hi, tol)
    depth = 4
    while 2 * 2.0 ** (-depth / 2) / math.sqrt(c + depth) > tol / 4:
        depth += 4
    e = hi * 2.0**-depth
    tail = 2 * math.sqrt(e) / math.sqrt(c - math.log2(e))
    low, up = 0.0, tail
    budget = 0.75 * tol
    for j in range(depth):
        share = budget * 2.0 ** (-(j + 1) / 4) * (1 - 2.0**-0.25) / (1 - 2.0 ** (-depth / 4))
        a, b = _riemann_bracket(c, hi * 2.0 ** (-j - 1), hi * 2.0**-j, share)
        low += a
        up += b
    return low, up


def _riemann_bracket(c, a, b, tol):
    ga, gb = float(_g(c, a)), float(_g(c, b))
    n = max(1, math.ceil((ga - gb) * (b - a) / tol))
    x = np.linspace(a, b, n + 1)
    gx = _g(c, x)
    h = (b - a) / n
    return float(gx[1:].sum() * h), float(gx[:-1].sum() * h)


def chi_b_brackets(b_grid, tol: float = 1e-6) -> list:
    """Brackets of ``int chi_b / psi = int_0^1 g_{log2(4/b)}`` for each b."""
    return [g_bracket(math.log2(4.0 / b), 0.0, 1.0, tol) for b in b_grid]


def w_over_psi_bracket(m: int, tol: float = 1e-5) -> tuple:
    """Bracket of ``int w_m / psi`` by dyadic blocks."""
    seq = n_sequence(m + 2)
    n, N = seq[m], seq[m + 1]
    count = N - n
    lo_sum = up_sum = 0.0
    for k in range(n, N - 1):
        coef = 1.0 / math.sqrt(k + 2)
        a, b = g_bracket(k + 2.0, 0.5, 1.0, tol / count / coef)
        lo_sum += coef * a
        up_sum += coef * b
    coef = 1.0 / math.sqrt(N + 1)
    a, b = g_bracket(N + 1.0, 0.0, 1.0, tol / count / coef)
    return lo_sum + coef * a, up_sum + coef * b


# verification --------------------------------------------------------------------


@dataclass
class Claim:
    claim_id: str
    relation: str
    computed: float
    bound: float
    passed: bool
    detail: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {
            "claim_id": self.claim_id,
            "paper_eq": self.relation,
            "computed": self.computed,
            "bound": self.bound,
            "pass": bool(self.passed),
        }
        if self.detail:
            out["detail"] = self.detail
        return out


@dataclass
class CexReport:
    claims: list
    samples: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.claims)

    def failed(self) -> list:
        return [c.claim_id for c in self.claims if not c.passed]

    def to_dict(self) -> dict:
        return {"pass": self.passed, "claims": [c.to_dict() for c in self.claims], "samples": self.samples}


def b_psi_deviation(K: int) -> float:
    """max_{k < K} |b_k psi(2**-k) - 1| in units of 2**-52."""
    worst = 0.0
    for k in range(K):
        prod = (b_exact(k) * PSI.exact_dyadic(k)).to_fraction()
        worst = max(worst, float(abs(prod - 1)) / ULP)
    return worst


def coefficient_samples(M: int, count: int, seed: int = DEFAULT_SEED, one_hot: float = 0.1) -> np.ndarray:
    """Uniform [0, 1] coefficient vectors, with a share of one-hot vectors."""
    rng = np.random.default_rng(seed)
    out = rng.uniform(0.0, 1.0, size=(count, M + 1))
    hot = rng.uniform(size=count) < one_hot
    which = rng.integers(0, M + 1, size=count)
    out[hot] = 0.0
    out[hot, which[hot]] = 1.0
    return out


@dataclass(frozen=True)
class SampleRecord:
    index: int
    max_a: float
    e_norm: float
    quasi: float
    f: float

    @property
    def ratio(self) -> float:
        return self.e_norm / self.f


def evaluate_sample(fam: CexFamily, a, index: int = 0) -> SampleRecord:
    v = disjoint_sum([float(c) for c in a], fam.v)
    if v.is_zero():
        return SampleRecord(index, 0.0, 0.0, 0.0, 0.0)
    e = marcinkiewicz_sup(v, Tilde(PSI)).value
    return SampleRecord(index, float(max(a)), e, quasi_norm(v, PSI), f_norm(v).value)


def spread(records) -> float:
    r = [rec.ratio for rec in records if rec.max_a > 0]
    return max(r) / min(r) if r else 1.0


def conditions_check() -> list:
    a = condition_A(PSI, SQRT)
    b = condition_B(PSI, SQRT)
    ctrl = condition_B(Pow(0.25), SQRT)
    return [
        Claim("condition_A", "psi_F/psi_E -> 0", a.trace[-1], 0.0, a.verdict is Verdict.HOLDS,
              {"verdict": a.verdict.value}),
        Claim("condition_B_fails", "lower index of psi_F/psi_E is 0", b.gamma_est, 0.02,
              b.verdict is Verdict.FAILS, {"verdict": b.verdict.value}),
        Claim("condition_B_control", "power gap has positive lower index", ctrl.gamma_est, 0.02,
              ctrl.verdict is Verdict.HOLDS, {"verdict": ctrl.verdict.value}),
    ]


def verify_all(
    fam: CexFamily,
    samples: int = 1000,
    seed: int = DEFAULT_SEED,
    cap: float = SPREAD_CAP,
    stability: float = 0.05,
    b_points: int = 64,
) -> CexReport:
    """Check every quantitative claim about the family.

    ``samples`` coefficient vectors are drawn, then as many again; the ratio
    spread is judged on the first batch and called stable when the doubled
    batch widens it by at most ``stability`` (relative).
    """
    M = fam.M_max
    n = fam.n
    claims = []

    dev = b_psi_deviation(n[M + 1])
    claims.append(Claim("b_psi_identity", "b_k psi(2^-k) = 1", dev, 2.0, dev <= 2.0, {"units": "2^-52"}))

    for m in range(M + 1):
        s, s_next = _harmonic(n[m], n[m + 1]), _harmonic(n[m], n[m + 1] + 1)
        claims.append(Claim(f"maximality_{m}", "sum 1/(k+2) <= 1 < sum + next", float(s), 1.0, s <= 1 < s_next))

    for m, w in enumerate(fam.w):
        val = lp_norm(w, 2)
        claims.append(Claim(f"w_l2_{m}", "1/2 <= ||w_m||_2 <= 1", val, 1.0, 0.5 <= val <= 1.0))
        exact = math.sqrt(float(fam.w_norm_sq[m]))
        claims.append(Claim(f"w_l2_closed_{m}", "||w_m||_2 matches the closed form", val, exact,
                            abs(val - exact) <= 1e-12))
        terms = [(b_exact(k) * b_exact(k)).to_fraction() / 2 ** (k + 1) for k in range(n[m], n[m + 1])]
        lhs = sum(terms, Fraction(0))
        rhs = _harmonic(n[m], n[m + 1]) / 2
        rel = float(abs(lhs - rhs) / rhs)
        claims.append(Claim(f"l2_identity_{m}", "sum b_k^2 2^-k-1 = 1/2 sum 1/(k+2)", rel, 1e-14, rel <= 1e-14))

    b_grid = np.geomspace(2.0**-60, 1.0, b_points)
    up = max(u for _, u in chi_b_brackets(b_grid))
    claims.append(Claim("chi_b_over_psi", "int chi_b / psi <= 2", up, 2.0, up <= 2.0, {"b_points": b_points}))
    for m in range(M + 1):
        lo, hi = w_over_psi_bracket(m)
        claims.append(Claim(f"w_over_psi_{m}", "int w_m / psi <= 2", hi, 2.0, hi <= 2.0, {"lower": lo}))
    inv = f_norm(inv_psi_envelope())
    claims.append(Claim("inv_psi_F", "||1/psi||_F <= 4", inv.value, 4.0, inv.value <= 4.0,
                        {"clamp_depth": 64, "tail_bound": inv.tail_bound}))

    for m, vm in enumerate(fam.v):
        val = f_norm(vm).value
        claims.append(Claim(f"v_lower_{m}", "||v_m||_F >= 1/4", val, 0.25, val >= 0.25))

    for m in range(M + 1):
        e = np.zeros(M + 1)
        e[m] = 1.0
        rec = evaluate_sample(fam, e)
        claims.append(Claim(f"one_hot_ratio_{m}", "||v_m||_E / ||v_m||_F <= 8", rec.ratio, 8.0, rec.ratio <= 8.0))

    coeffs = coefficient_samples(M, 2 * samples, seed)
    records = [evaluate_sample(fam, a, i) for i, a in enumerate(coeffs)]
    first = records[:samples]
    slack = 1 + 8 * ULP
    q_bad = [r.index for r in first if r.quasi > r.max_a * slack]
    f_bad = [r.index for r in first if r.f < r.max_a / 4]
    q_worst = max((r.quasi / r.max_a for r in first if r.max_a > 0), default=0.0)
    f_worst = min((r.f / r.max_a for r in first if r.max_a > 0), default=math.inf)
    claims.append(Claim("quasi_upper", "quasi(v) <= max a_m", q_worst, 1.0, not q_bad, {"violations": q_bad}))
    claims.append(Claim("f_lower", "||v||_F >= max a_m / 4", f_worst, 0.25, not f_bad, {"violations": f_bad}))
    s1, s2 = spread(first), spread(records)
    claims.append(Claim("ratio_spread", "max/min of ||v||_E/||v||_F over samples", s1, cap, s1 <= cap,
                        {"samples": samples}))
    claims.append(Claim("ratio_spread_stable", "spread under doubling", s2, s1 * (1 + stability),
                        s2 <= s1 * (1 + stability), {"samples": 2 * samples}))

    claims.extend(conditions_check())
    ratios = [r.ratio for r in first if r.max_a > 0]
    summary = {
        "count": samples,
        "seed": seed,
        "ratio_min": min(ratios) if ratios else None,
        "ratio_max": max(ratios) if ratios else None,
        "spread": s1,
        "spread_doubled": s2,
    }
    return CexReport(claims, summary)
