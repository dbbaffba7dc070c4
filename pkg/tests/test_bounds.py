import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, strategies as st

from glfgp.bounds import (bernstein_rho, compute_s, compute_umin, matern_truncation_residual,
                          matern_x_upper, matern_x_upper_printed, plan, poly_tail_integral,
                          polyellipse_params, s_bound)
from glfgp.errors import BoundFailure, UnsupportedAnalyticity
from glfgp.kernels import HyperDomain, KernelSpec, decay_class, spectral_density

UNIT = HyperDomain.from_corner([1.0], 1.0, 1.0)

# frozen oracle values: mpmath (40 digits) root of the truncation equation with
# the tail integral written as z^a/a 2F1(a, 1-d/2; a+1; z)
MATERN52_U = {1: 12.892825315555856237, 2: 13.930311743702960842, 3: 13.957197417024969502}


def mp_tail(x, d, r):
    with mp.workdps(40):
        a = mp.mpf(r) - mp.mpf(d) / 2
        z = 1 / (1 + mp.mpf(x) ** 2)
        return z**a / a * mp.hyp2f1(a, 1 - mp.mpf(d) / 2, a + 1, z)


@pytest.mark.parametrize("x,d,r", [(0.3, 1, 1.0), (5.0, 1, 3.0), (2.0, 3, 2.5), (1e-6, 1, 1.0),
                                   (40.0, 2, 1.7), (0.01, 3, 4.0)])
def test_tail_integral_against_hypergeometric_oracle(x, d, r):
    assert poly_tail_integral(x, d, r) == pytest.approx(float(mp_tail(x, d, r)), rel=1e-12)


def test_gaussian_umin():
    U = compute_umin(KernelSpec("gaussian"), UNIT, 100)
    assert U[0] == pytest.approx(math.sqrt(2 * math.log(2 * 100**2)), rel=1e-14)
    assert U[0] == pytest.approx(4.45051, abs=1e-5)


def test_semigroup_umin():
    U = compute_umin(KernelSpec("reciprocal_semigroup"), UNIT, 100)
    assert U[0] == pytest.approx(9.90349, abs=1e-5)
    assert U[0] == pytest.approx(math.log(2e4), rel=1e-14)


@pytest.mark.parametrize("d", [1, 2, 3])
def test_matern_umin_root(d):
    spec = KernelSpec("matern", d, 2.5)
    U = compute_umin(spec, UNIT, 100)
    np.testing.assert_allclose(U, MATERN52_U[d], rtol=1e-10)
    info = decay_class(spec, UNIT)
    x = U[0] * info.L[0]
    assert abs(matern_truncation_residual(x, info, d, 100, 1.0, 1.0)) <= 1e-10
    assert x <= matern_x_upper(info, d, 100, 1.0, 1.0)


def test_commonly_quoted_matern_bound_undershoots_root():
    # the closed form without the factor 2 is not an upper bound: keep this
    # visible so the bracket is never narrowed back to it
    info = decay_class(KernelSpec("matern", nu=2.5), UNIT)
    x = compute_umin(KernelSpec("matern", nu=2.5), UNIT, 100)[0] * info.L[0]
    assert matern_x_upper_printed(info, 1, 100, 1.0, 1.0) < x
    assert matern_x_upper(info, 1, 100, 1.0, 1.0) / matern_x_upper_printed(info, 1, 100, 1.0, 1.0) \
        == pytest.approx(2 ** (1 / 5))


def test_laplacian_and_cauchy_umin_closed_forms():
    n = 100
    Ul = compute_umin(KernelSpec("laplacian"), UNIT, n)[0]
    assert Ul == pytest.approx(1 / math.tan(math.pi / (4 * n * n)), rel=1e-12)
    Uc = compute_umin(KernelSpec("cauchy"), UNIT, n)[0]
    assert Uc == pytest.approx(math.log(4 * n * n), rel=1e-14)


def test_bound_failure_diagnostic():
    dom = HyperDomain.from_corner([1.0], 1.0, 10.0)
    with pytest.raises(BoundFailure, match="cot"):
        compute_umin(KernelSpec("laplacian"), dom, 1)


@pytest.mark.parametrize("family,nu", [("gaussian", None), ("matern", 2.5), ("matern", 1.0),
                                       ("laplacian", None), ("cauchy", None),
                                       ("reciprocal_semigroup", None)])
@pytest.mark.parametrize("n", [10, 100, 1000])
def test_truncation_tail_within_budget(family, nu, n):
    spec = KernelSpec(family, 1, nu)
    dom = HyperDomain.from_corner([0.7], 2.0, 0.3)
    U = compute_umin(spec, dom, n)[0]
    c = dom.corner()
    p = lambda e: mp.mpf(spectral_density(spec, c.theta0, float(e)))
    with mp.workdps(30):
        tail = mp.quad(p, [U, 2 * U, 10 * U, mp.inf])
    if spec.feature_kind == "fourier":
        tail *= 2
    assert float(n / c.sn2 * tail) <= 1 / (2 * c.sf2 * n) * 1.05


def test_polyellipse_examples():
    pe = polyellipse_params(KernelSpec("gaussian", bounding_box=2.0), UNIT, [4.45051])
    assert pe.rho[0] == pytest.approx(1 + math.sqrt(2))
    assert pe.M_U_beta == pytest.approx(85.68, abs=0.01)
    assert pe.M_U_beta >= pe.M_R >= 1
    pm = polyellipse_params(KernelSpec("matern", nu=2.5, bounding_box=2.0), UNIT, [10.0])
    assert pm.beta[0] == pytest.approx(math.sqrt(5))
    assert pm.rho[0] == pytest.approx(math.sqrt(5) / 20 + math.sqrt(5 / 400 + 1), rel=1e-14)
    assert pm.rho[0] == pytest.approx(1.11803, abs=1e-5)
    for fam in ("laplacian", "cauchy"):
        with pytest.raises(UnsupportedAnalyticity):
            polyellipse_params(KernelSpec(fam, bounding_box=2.0), UNIT, [5.0])


def _independent_s_bound(d, U, M, C, rho, sf2, sn2, n):
    inner = math.log(2 ** (2 * d + 2) * M**2 * C * sf2 * n**2 / sn2)
    return (inner / d + math.log(U) - math.log(rho - 1)) / (2 * math.log(rho)) + 1


def test_gaussian_s_golden_value():
    U = math.sqrt(2 * math.log(2 * 100**2))
    M = math.exp(U * 2 / 2)
    C = (2 * math.pi) ** -0.5 * math.exp(U**2 / 2)
    ref = _independent_s_bound(1, U, M, C, 1 + math.sqrt(2), 1.0, 1.0, 100)
    spec = KernelSpec("gaussian", bounding_box=2.0)
    pe = polyellipse_params(spec, UNIT, [U])
    assert s_bound(spec, UNIT, 100, [U], pe)[0] == pytest.approx(ref, rel=1e-13)
    assert compute_s(spec, UNIT, 100, [U], pe)[0] == 19 == math.ceil(ref)


@pytest.mark.parametrize("family,nu,t0", [("gaussian", None, 0.5), ("matern", 2.5, 0.3),
                                          ("matern", 1.5, 1.0), ("reciprocal_semigroup", None, 2.0)])
def test_s_bound_matches_independent_arithmetic(family, nu, t0):
    spec = KernelSpec(family, 1, nu, bounding_box=3.0)
    dom = HyperDomain.from_corner([t0], 1.5, 0.05)
    U = compute_umin(spec, dom, 500)
    pe = polyellipse_params(spec, dom, U)
    ref = _independent_s_bound(1, U[0], pe.M_U_beta, pe.C_U_beta, pe.rho[0], 1.5, 0.05, 500)
    assert s_bound(spec, dom, 500, U, pe)[0] == pytest.approx(ref, rel=1e-12)


def test_doubling_n_shift_is_exact():
    for d in (1, 2, 3):
        spec = KernelSpec("gaussian", d, bounding_box=2.0)
        U = [3.0] * d
        pe = polyellipse_params(spec, UNIT, U)
        diff = s_bound(spec, UNIT, 200, U, pe) - s_bound(spec, UNIT, 100, U, pe)
        np.testing.assert_allclose(diff, 2 * math.log(2) / (2 * d * np.log(pe.rho)), rtol=1e-12)


def test_s_grows_logarithmically():
    spec = KernelSpec("gaussian", bounding_box=2.0)
    s3 = plan(spec, UNIT, 10**3).s[0]
    s6 = plan(spec, UNIT, 10**6).s[0]
    assert s6 / s3 <= 2.2


@given(n=st.integers(2, 10**6), l0=st.floats(0.05, 5), factor=st.floats(1.01, 10))
def test_umin_monotonicity(n, l0, factor):
    for spec in (KernelSpec("gaussian"), KernelSpec("matern", nu=1.5), KernelSpec("laplacian")):
        a = compute_umin(spec, HyperDomain.from_corner([l0], 1.0, 0.1), n)[0]
        b = compute_umin(spec, HyperDomain.from_corner([l0 * factor], 1.0, 0.1), n)[0]
        assert b <= a * (1 + 1e-12)
    for spec in (KernelSpec("gaussian"), KernelSpec("matern", nu=2.5), KernelSpec("laplacian"),
                 KernelSpec("cauchy"), KernelSpec("reciprocal_semigroup")):
        dom = HyperDomain.from_corner([l0], 1.0, 0.1)
        assert compute_umin(spec, dom, n)[0] <= compute_umin(spec, dom, n + 1 + n // 3)[0] * (1 + 1e-12)


@given(U=st.floats(0.5, 30), dU=st.floats(0, 5), n=st.integers(1, 10**5))
def test_s_monotone_in_n_and_U(U, dU, n):
    spec = KernelSpec("matern", nu=2.5, bounding_box=2.0)
    pe = polyellipse_params(spec, UNIT, [U])
    base = compute_s(spec, UNIT, n, [U], pe)[0]
    assert compute_s(spec, UNIT, 2 * n, [U], pe)[0] >= base
    assert compute_s(spec, UNIT, n, [U + dU], pe)[0] >= base
    bigger_M = pe.__class__(pe.beta, pe.rho, pe.M_R, pe.log_M + 1.0, pe.log_C)
    bigger_C = pe.__class__(pe.beta, pe.rho, pe.M_R, pe.log_M, pe.log_C + 1.0)
    assert compute_s(spec, UNIT, n, [U], bigger_M)[0] >= base
    assert compute_s(spec, UNIT, n, [U], bigger_C)[0] >= base
    assert base >= 1


def test_plan_composes_sub_operations():
    spec = KernelSpec("gaussian", bounding_box=2.0)
    dom = HyperDomain.from_corner([0.5], 1.0, 0.1)
    bp = plan(spec, dom, 100)
    U = compute_umin(spec, dom, 100)
    pe = polyellipse_params(spec, dom, U)
    np.testing.assert_array_equal(bp.U, U)
    np.testing.assert_array_equal(bp.s, compute_s(spec, dom, 100, U, pe))
    d = bp.as_dict()
    assert d["U_1"] == U[0] and d["s_1"] == bp.s[0] and d["rho_1"] == pe.rho[0]
    assert d["M_U_beta"] == pytest.approx(pe.M_U_beta) and d["M_R"] == 1.0
    assert "s_tot" in bp.report()
    assert bernstein_rho(U, pe.beta)[0] == pe.rho[0]


def test_plan_flags_feature_count_above_n():
    bp = plan(KernelSpec("gaussian", bounding_box=2.0), HyperDomain.from_corner([0.5], 1.0, 0.1), 10)
    assert bp.s_total >= 10 and bp.as_dict()["exceeds_n"]
    assert any("not smaller than n" in m for m in bp.notes)


def test_plan_cap_and_override():
    spec = KernelSpec("gaussian", 3, bounding_box=2.0)
    dom = HyperDomain.from_corner([0.05], 1.0, 0.01)
    with pytest.raises(BoundFailure, match="s_override"):
        plan(spec, dom, 1000, max_features=10**4)
    bp = plan(spec, dom, 1000, max_features=10**4, s_override=10)
    assert bp.s.tolist() == [10, 10, 10] and bp.capped
    assert bp.s_total_theoretical > 10**4


def test_laplacian_plans_only_with_explicit_sizes():
    spec = KernelSpec("laplacian", bounding_box=[2.0])
    dom = HyperDomain.from_corner([0.5], 1.0, 0.1)
    with pytest.raises(UnsupportedAnalyticity):
        plan(spec, dom, 100)
    bp = plan(spec, dom, 100, s_override=64)
    assert bp.s.tolist() == [64] and bp.polyellipse is None and bp.U[0] > 0
    assert bp.as_dict()["s_tot_theory"] is None
    assert "no quadrature-size bound" in bp.report()
