import math

import numpy as np
import pytest

from symspace.embed import (
    PreconditionFailed,
    SeriesVerdict,
    clamped_reciprocal,
    construct_rho,
    integral_test,
    ratio_to_zero,
    series_test,
    theorem5_chain,
    verify_rho,
    witness_search,
)
from symspace.gfun import Pow, PowLog, Scaled, fitted_exponent
from symspace.norms import lorentz_norm
from symspace.stepfn import dyadic

PSI = PowLog(0.5, 0.5)
PAIRS = [
    (Pow(0.5), Pow(1.0)),
    (Pow(0.5), Pow(0.75)),
    (Pow(0.25), Pow(0.5)),
    (Pow(1 / 3), Pow(0.5)),
    (Pow(0.9), Pow(1.0)),
    (Scaled(2.0, Pow(0.3)), Pow(0.6)),
    (Pow(0.5), Pow(0.5)),
    (PSI, Pow(0.5)),
    (PSI, PSI),
    (Pow(0.5), PSI),
    (Pow(0.5), PowLog(0.5, 0.25)),
    (PowLog(0.5, -0.5), Pow(0.5)),
]
CONVERGENT = PAIRS[:6]


class TestSeries:
    def test_geometric(self):
        rep = series_test(Pow(0.5), Pow(1.0))
        assert rep.verdict is SeriesVerdict.CONVERGES
        k = np.arange(len(rep.terms))
        assert np.allclose(rep.terms, 2.0 ** (-k / 2 - 1), rtol=1e-13)
        assert rep.total == pytest.approx(0.5 / (1 - 2**-0.5), rel=1e-12)

    @pytest.mark.parametrize("a", [0.25, 0.5, 1.0])
    def test_equal_weights_constant_terms(self, a):
        rep = series_test(Pow(a), Pow(a))
        assert rep.verdict is SeriesVerdict.DIVERGES
        assert np.allclose(rep.terms, 1 - 2.0**-a, rtol=1e-13)

    def test_log_pair_is_half_power_series(self):
        rep = series_test(PSI, Pow(0.5))
        assert rep.verdict is SeriesVerdict.DIVERGES
        k = np.arange(len(rep.terms))
        assert np.allclose(rep.terms, (1 - 2**-0.5) * (k + 2.0) ** -0.5, rtol=1e-12)
        assert rep.detail["p_fit"] == pytest.approx(0.5, abs=0.01)

    @pytest.mark.parametrize("phi, psi", PAIRS)
    def test_integral_and_series_agree(self, phi, psi):
        assert integral_test(phi, psi).verdict is series_test(phi, psi).verdict

    def test_report_schema(self):
        d = series_test(Pow(0.5), Pow(1.0)).to_dict()
        assert {"verdict", "constants", "trace"} <= set(d)

    @pytest.mark.parametrize("phi, psi", CONVERGENT[:3])
    def test_clamped_reciprocal_bounded_under_refinement(self, phi, psi):
        vals = [lorentz_norm(clamped_reciprocal(phi, depth), psi) for depth in (16, 32, 64, 128)]
        assert all(a <= b * (1 + 1e-12) for a, b in zip(vals, vals[1:]))
        assert vals[-1] - vals[-2] <= 1e-3 * vals[-1]


@pytest.fixture(scope="module")
def rc():
    return construct_rho(Pow(0.5), Pow(0.75), u=0.25)


class TestRho:
    def test_recursion_closed_form(self, rc):
        c = (1 - 2**-0.75) / (1 - 2**-0.25)
        k = np.arange(rc.g.size)
        assert rc.S[0] == pytest.approx(c, rel=1e-12)
        assert np.allclose(rc.g, rc.S[0] * 2.0 ** (-k / 4), rtol=1e-10, atol=0)

    def test_recursion_identities(self, rc):
        assert rc.g[0] == rc.S[0]
        step = 2.0**-rc.u
        assert np.all(rc.g[1:] == np.maximum(rc.S[1:], step * rc.g[:-1]))
        assert np.all(np.diff(rc.g) <= 0)
        assert np.all(rc.g >= rc.S)

    def test_majorant_dominates(self, rc):
        for t, h in rc.h_points:
            if t > 0:
                assert rc.rho(t) >= h * (1 - 1e-12)

    def test_rho_index(self, rc):
        assert rc.rho_index == pytest.approx(0.625, abs=0.03)
        assert fitted_exponent(rc.rho, 20, 60) == pytest.approx(0.625, abs=0.03)

    def test_checks_pass(self, rc):
        checks = verify_rho(rc, Pow(0.5), Pow(0.75))
        assert [c.name for c in checks if not c.passed] == []
        first = checks[0]
        assert first.value < 1e-2  # rho/phi ~ t^1/8 at 2^-60

    def test_negative_control(self):
        assert not ratio_to_zero(Pow(0.5), Pow(0.5)).passed

    def test_budget(self):
        with pytest.raises(PreconditionFailed):
            construct_rho(Pow(0.5), Pow(0.75), u=0.6)

    def test_divergent_series(self):
        with pytest.raises(PreconditionFailed):
            construct_rho(Pow(0.5), Pow(0.5))


class TestPowerGapChain:
    @pytest.mark.parametrize("a, b", [(0.5, 0.75), (0.25, 0.5)])
    def test_power_pairs(self, a, b):
        rep = theorem5_chain(Pow(a), Pow(b))
        assert rep.passed
        assert rep.u == pytest.approx(b - a, abs=0.03)
        assert rep.integral == pytest.approx(b / (b - a), abs=1e-6)
        assert rep.integral <= rep.C1 / rep.u
        assert series_test(Pow(a), Pow(b)).verdict is SeriesVerdict.CONVERGES

    @pytest.mark.parametrize("phi, psi", [(Pow(0.5), Pow(0.5)), (PSI, Pow(0.5))])
    def test_refuses_without_condition_B(self, phi, psi):
        with pytest.raises(PreconditionFailed):
            theorem5_chain(phi, psi)


class TestWitness:
    def test_equal_weights(self):
        w = witness_search(Pow(0.5), Pow(0.5), 5)
        assert w.t == [dyadic(2 * k) for k in range(1, 6)]
        assert w.C2 == pytest.approx(1.0, rel=1e-14)

    def test_none_under_condition_A(self):
        assert witness_search(PSI, Pow(0.5), 5) is None

    def test_constant_ratio(self):
        w = witness_search(Pow(0.5), Scaled(1 / 3, Pow(0.5)), 3)
        assert len(w.t) == 3 and sum(w.t) <= 1
        assert all(t.numerator == 1 and t.denominator & (t.denominator - 1) == 0 for t in w.t)
        assert w.C2 == pytest.approx(3.0, rel=1e-12)
