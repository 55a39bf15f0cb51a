import json
import math
from fractions import Fraction

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given

from symspace.cex import (
    PSI,
    DepthError,
    b_exact,
    b_psi_deviation,
    build_family,
    chi_b_brackets,
    conditions_check,
    evaluate_sample,
    f_norm,
    inv_psi_envelope,
    n_sequence,
    verify_all,
    w_over_psi_bracket,
)
from symspace.gfun import Pow
from symspace.norms import marcinkiewicz_norm
from symspace.stepfn import StepFunction, dyadic, lp_norm

from conftest import step_functions


def next_n(n):
    """Largest N with sum_{k=n}^{N-1} 1/(k+2) <= 1, by plain summation."""
    total, N = Fraction(0), n
    while total + Fraction(1, N + 2) <= 1:
        total += Fraction(1, N + 2)
        N += 1
    return N


def inv_psi(t):
    return 1 / (mp.sqrt(t) * mp.sqrt(mp.log(4 / t, 2)))


@pytest.fixture(scope="module")
def fam():
    return build_family(5)


class TestSequence:
    def test_first_steps(self):
        assert next_n(1) == 5
        assert sum(Fraction(1, k + 2) for k in range(1, 5)) == Fraction(19, 20)
        assert next_n(5) == 16
        assert float(sum(Fraction(1, k) for k in range(7, 18))) == pytest.approx(0.98955, abs=1e-5)

    def test_against_oracle(self):
        seq = [1]
        for _ in range(7):
            seq.append(next_n(seq[-1]))
        assert list(n_sequence(8)) == seq == [1, 5, 16, 46, 127, 347, 945, 2571]

    def test_maximality(self, fam):
        for n, N in zip(fam.n, fam.n[1:]):
            s = sum(Fraction(1, k + 2) for k in range(n, N))
            assert s <= 1 < s + Fraction(1, N + 2)

    @pytest.mark.parametrize("M", [-1, 7, 12])
    def test_depth_budget(self, M):
        with pytest.raises(DepthError):
            build_family(M)


class TestCoefficients:
    def test_b0(self):
        assert float(b_exact(0)) == pytest.approx(2**-0.5, rel=1e-16)
        assert abs(float(b_exact(0) * PSI.exact_dyadic(0)) - 1) <= 2 * 2.0**-52

    def test_identity_within_two_ulp(self, fam):
        assert b_psi_deviation(fam.n[-1]) <= 2.0

    @pytest.mark.parametrize("k", [3, 100, 946])
    def test_against_mpmath(self, k):
        mp.mp.dps = 40
        got = b_exact(k)
        oracle = mp.power(k + 2, -0.5) * mp.power(2, mp.mpf(k) / 2)
        assert abs(mp.mpf(got.mantissa) * mp.power(2, got.exp2) / oracle - 1) < 4 * 2.0**-52


class TestFamily:
    def test_v_supports_disjoint_and_inside_D(self, fam):
        for (lo, hi), v in zip(fam.D, fam.v):
            for l, r in v.support():
                assert lo <= l and r <= hi
        for a, b in zip(fam.D, fam.D[1:]):
            assert b[1] <= a[0]

    def test_v_below_w(self, fam):
        for v, w in zip(fam.v, fam.w):
            for l, r, val in v.blocks():
                if val != 0:
                    assert w(r) == val

    @pytest.mark.parametrize("m", range(6))
    def test_w_norms(self, fam, m):
        val = lp_norm(fam.w[m], 2)
        assert 0.5 <= val <= 1
        n, N = fam.n[m], fam.n[m + 1]
        closed = sum(Fraction(1, 2 * (k + 2)) for k in range(n, N - 1)) + Fraction(1, N + 1)
        assert val == pytest.approx(math.sqrt(closed), rel=1e-13)

    def test_w0_norm_squared(self, fam):
        assert lp_norm(fam.w[0], 2) ** 2 == pytest.approx(1 / 6 + 1 / 10 + 1 / 8 + 1 / 6, abs=1e-12)


class TestFNorm:
    @pytest.mark.parametrize("b", [Fraction(1, 4), Fraction(1, 3), dyadic(50), Fraction(1)])
    def test_indicator(self, b):
        assert f_norm(StepFunction.indicator(b)).value == pytest.approx(math.sqrt(b), rel=1e-14)

    @pytest.mark.parametrize("m", range(6))
    def test_block_self_pairing(self, fam, m):
        val = f_norm(fam.w[m]).value
        assert val == pytest.approx(lp_norm(fam.w[m], 2), rel=1e-12)

    def test_envelope_of_reciprocal(self):
        res = f_norm(inv_psi_envelope())
        assert res.value <= 4
        assert res.tail_bound < 1e-6 * res.value

    @pytest.mark.parametrize("m", range(6))
    def test_v_lower_bound(self, fam, m):
        assert f_norm(fam.v[m]).value >= 0.25


class TestQuadrature:
    @pytest.mark.parametrize("b", [1.0, 0.5, 2.0**-10, 2.0**-40])
    def test_chi_b_bracket(self, b):
        mp.mp.dps = 30
        oracle = mp.quad(inv_psi, [0, b * 2.0**-30, b * 2.0**-10, b]) / mp.sqrt(b)
        (lo, hi), = chi_b_brackets([b])
        assert lo <= oracle <= hi
        assert hi - lo <= 1e-6
        assert hi <= 2

    def test_w0_bracket(self):
        mp.mp.dps = 30
        bk = lambda k: mp.power(k + 2, -0.5) * mp.power(2, mp.mpf(k) / 2)
        oracle = sum(bk(k) * mp.quad(inv_psi, [2.0 ** (-k - 1), 2.0**-k]) for k in range(1, 4))
        oracle += bk(4) * mp.quad(inv_psi, [0, 2.0**-40, 2.0**-4])
        lo, hi = w_over_psi_bracket(0)
        assert lo <= oracle <= hi
        assert hi <= 2


class TestReport:
    def test_small_family(self):
        rep = verify_all(build_family(2), samples=40)
        assert rep.passed, rep.failed()
        d = rep.to_dict()
        for claim in d["claims"]:
            assert set(claim) >= {"claim_id", "paper_eq", "computed", "bound", "pass"}

    def test_seed_reproducible(self):
        fam = build_family(1)
        a = json.dumps(verify_all(fam, samples=10, seed=7).to_dict(), sort_keys=True, default=float)
        b = json.dumps(verify_all(fam, samples=10, seed=7).to_dict(), sort_keys=True, default=float)
        assert a == b

    def test_zero_vector(self, fam):
        rec = evaluate_sample(fam, np.zeros(6))
        assert rec.max_a == rec.e_norm == rec.quasi == rec.f == 0.0

    def test_one_hot_ratio(self, fam):
        for m in range(6):
            e = np.zeros(6)
            e[m] = 1.0
            assert evaluate_sample(fam, e).ratio <= 8

    def test_conditions(self):
        assert all(c.passed for c in conditions_check())


@given(step_functions())
def test_sandwich(x):
    lower = marcinkiewicz_norm(x, Pow(0.5))
    value = f_norm(x).value
    upper = lp_norm(x, 2)
    assert lower <= value * (1 + 1e-9)
    assert value <= upper * (1 + 1e-9)
