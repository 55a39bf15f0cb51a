import json
import math
from fractions import Fraction

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, strategies as st

from symspace.gfun import (
    Constant,
    EmbedOrderError,
    FitUnstable,
    NotInClassG,
    Pow,
    PowLog,
    Ratio,
    Scaled,
    SpecError,
    Table,
    Trend,
    Verdict,
    concave_majorant,
    condition_A,
    condition_B,
    decay_trend,
    dilation_profile,
    parse_gfun,
    tilde_of,
)
from symspace.stepfn import ExactScalar, dyadic

PSI = PowLog(0.5, 0.5)
CATALOG = [Pow(0.25), Pow(0.5), Pow(0.9), Pow(1.0), PSI, PowLog(0.3, -0.2), Scaled(3.0, Pow(0.5))]


class TestEval:
    @pytest.mark.parametrize("k", [0, 1, 2, 7, 60, 313, 2000])
    def test_powlog_at_dyadics(self, k):
        mp.mp.dps = 40
        oracle = mp.power(2, -mp.mpf(k) / 2) * mp.sqrt(k + 2)
        got = PSI.exact_dyadic(k)
        rel = abs(mp.mpf(got.mantissa) * mp.power(2, got.exp2) / oracle - 1)
        assert rel < 4 * 2.0**-52

    def test_powlog_float_and_fraction_calls_agree(self):
        assert PSI(0.25) == pytest.approx(0.5 * math.sqrt(4), rel=1e-15)
        assert float(PSI(dyadic(2))) == pytest.approx(1.0, rel=1e-15)

    @pytest.mark.parametrize("t", [0.001, 0.3, 1.0])
    def test_identity_power(self, t):
        assert Pow(1.0)(t) == pytest.approx(t, rel=1e-15)

    def test_table_interpolates(self):
        assert Table(((0.5, 0.5), (1.0, 1.0)))(0.75) == pytest.approx(0.75)

    def test_exact_scalar_argument(self):
        assert float(Pow(0.5)(ExactScalar(1.0, -4))) == pytest.approx(0.25)

    def test_outside_domain(self):
        with pytest.raises(ValueError):
            Pow(0.5)(1.5)


class TestClassG:
    @pytest.mark.parametrize("make", [lambda: Pow(2.0), lambda: Pow(0.0), lambda: Pow(-1.0), lambda: PowLog(1.2, 0.0)])
    def test_rejects(self, make):
        with pytest.raises(NotInClassG):
            make()

    def test_table_must_be_concave(self):
        with pytest.raises(NotInClassG):
            Table(((0.25, 0.1), (0.5, 0.2), (1.0, 1.0)))

    @pytest.mark.parametrize("f", CATALOG)
    def test_probe_grid_monotonicity(self, f):
        k = np.arange(51)
        lf = np.asarray(f.log_dyadic(k))
        assert np.all(np.diff(lf) <= 1e-12)  # f decreases as t = 2^-k shrinks
        assert np.all(np.diff(lf + k * math.log(2)) >= -1e-12)  # f(t)/t grows


class TestTilde:
    @pytest.mark.parametrize("t", [2.0**-40, 0.1, 0.5, 1.0])
    def test_sqrt(self, t):
        assert tilde_of(Pow(0.5))(t) == pytest.approx(math.sqrt(t), rel=1e-14)

    @pytest.mark.parametrize("t", [2.0**-40, 0.1, 0.5, 1.0])
    def test_powlog(self, t):
        expected = math.sqrt(t) / math.sqrt(math.log2(4 / t))
        assert tilde_of(PSI)(t) == pytest.approx(expected, rel=1e-14)

    def test_identity_gives_one(self):
        assert tilde_of(Pow(1.0))(0.37) == pytest.approx(1.0, rel=1e-15)


class TestDilation:
    @pytest.mark.parametrize("a", [0.25, 0.5, 0.9])
    def test_power(self, a):
        prof = dilation_profile(Pow(a))
        assert prof.gamma_est == pytest.approx(a, abs=0.01)
        assert prof.delta_est == pytest.approx(a, abs=0.01)

    def test_log_power(self):
        prof = dilation_profile(PSI)
        assert prof.gamma_est == pytest.approx(0.5, abs=0.05)
        assert prof.delta_est == pytest.approx(0.5, abs=0.05)

    def test_log_factor_ratio(self):
        prof = dilation_profile(Ratio(Pow(0.5), PSI))
        assert prof.gamma_est == pytest.approx(0.0, abs=0.05)

    def test_log_factor_against_closed_form(self):
        # (log2(4/t))^-1/2 on probes 2^-i: f(2^-j s)/f(s) = ((i+2)/(i+j+2))^1/2 grows with i,
        # so the sup sits at the deepest probe i = K - j
        K = 128
        prof = dilation_profile(Ratio(Pow(0.5), PSI), J=16, K=K)
        for j in range(17):
            assert prof.samples[-j] == pytest.approx(((K - j + 2) / (K + 2)) ** 0.5, rel=1e-12)

    @pytest.mark.parametrize("f", CATALOG)
    def test_profile_invariants(self, f):
        prof = dilation_profile(f, J=32)
        m = prof.samples
        assert m[0] == pytest.approx(1.0, abs=1e-14)
        js = sorted(m)
        assert all(m[a] <= m[b] * (1 + 1e-12) for a, b in zip(js, js[1:]))
        for i in range(1, 12):
            for j in range(1, 12):
                assert m[-(i + j)] <= m[-i] * m[-j] * (1 + 1e-9)
        assert -0.02 <= prof.gamma_est <= prof.delta_est + 0.02 <= 1.04

    def test_window_preconditions(self):
        with pytest.raises(ValueError):
            dilation_profile(Pow(0.5), J=2)

    def test_unstable_fit(self):
        # exponent 0.1 near 1 and 0.9 far below: the fitted slope drifts inside the window
        pts = tuple((2.0**-k, 2.0 ** (-0.1 * k if k < 40 else -0.1 * 40 - 0.9 * (k - 40))) for k in range(120, -1, -1))
        with pytest.raises(FitUnstable):
            dilation_profile(Table(pts), J=60, K=120)


class TestConditions:
    def test_A_power_gap(self):
        assert condition_A(Pow(1 / 3), Pow(0.5)).verdict is Verdict.HOLDS

    def test_A_log_pair(self):
        assert condition_A(PSI, Pow(0.5)).verdict is Verdict.HOLDS

    def test_A_equal(self):
        assert condition_A(Pow(0.5), Pow(0.5)).verdict is Verdict.FAILS

    def test_A_wrong_order(self):
        with pytest.raises(EmbedOrderError):
            condition_A(Pow(0.5), Pow(1 / 3))

    def test_B_power_gap(self):
        res = condition_B(Pow(0.25), Pow(0.5))
        assert res.verdict is Verdict.HOLDS
        assert res.gamma_est == pytest.approx(0.25, abs=0.01)

    def test_B_log_pair(self):
        res = condition_B(PSI, Pow(0.5))
        assert res.verdict is Verdict.FAILS
        assert res.gamma_est == pytest.approx(0.0, abs=0.05)

    @pytest.mark.parametrize("f", [Pow(0.5), PSI, Pow(1.0)])
    def test_B_equal(self, f):
        assert condition_B(f, f).verdict is Verdict.FAILS

    def test_trend_classes(self):
        k = np.arange(61.0)
        assert decay_trend(2.0**-k)[0] is Trend.TO_ZERO
        assert decay_trend(np.ones(61))[0] is Trend.FLAT
        assert decay_trend(1 + k)[0] is Trend.GROWS


class TestMajorant:
    def test_concave_input_unchanged(self):
        pts = [(0.0, 0.0), (0.25, 0.5), (0.5, 0.75), (1.0, 1.0)]
        assert concave_majorant(pts).vertices() == pts

    def test_point_below_chord_dropped(self):
        m = concave_majorant([(0.0, 0.0), (0.5, 0.2), (1.0, 1.0)])
        assert m(0.5) == pytest.approx(0.5)
        assert m.vertices() == [(0.0, 0.0), (1.0, 1.0)]

    def test_cut_at_maximum(self):
        m = concave_majorant([(0.25, 1.0), (0.5, 2.0), (1.0, 1.5)])
        assert m(1.0) == pytest.approx(2.0)

    @given(st.lists(st.tuples(st.integers(1, 1000), st.floats(0.01, 100)), min_size=1, max_size=30, unique_by=lambda p: p[0]))
    def test_majorant_properties(self, raw):
        pts = sorted((n / 1000, y) for n, y in raw)
        m = concave_majorant(pts)
        for t, y in pts:
            assert m(t) >= y * (1 - 1e-12)
        verts = m.vertices()
        lookup = dict(pts)
        for t, y in verts:
            if t > 0:
                assert y == lookup[t]
        for (t1, _), (t2, _) in zip(verts, verts[1:]):
            for a, b in ((t1, t2), (verts[0][0], t2)):
                if a > 0:
                    assert m((a + b) / 2) >= (m(a) + m(b)) / 2 - 1e-9


class TestParse:
    def test_catalog(self, tmp_path):
        path = tmp_path / "t.json"
        path.write_text(json.dumps({"points": [[0.5, 0.5], [1, 1]]}))
        assert parse_gfun("pow:0.5") == Pow(0.5)
        assert parse_gfun("powlog:0.5:0.5") == PSI
        assert parse_gfun("scaled:2:pow:0.5") == Scaled(2.0, Pow(0.5))
        assert parse_gfun("const:3") == Constant(3.0)
        assert parse_gfun(f"table:{path}")(0.75) == pytest.approx(0.75)

    @pytest.mark.parametrize("spec", ["pow", "pow:x", "powlog:1", "bogus:1", "table:/nonexistent.json", ""])
    def test_errors(self, spec):
        with pytest.raises(SpecError):
            parse_gfun(spec)

    def test_not_in_class(self):
        with pytest.raises(NotInClassG):
            parse_gfun("pow:2")
