import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nlcap.errors import ConfigParse, DivergentTail, ExtrapolationDominated, NonPositiveProfile, NonPositiveSample
from nlcap.kernel import (
    KernelSpec,
    Location,
    check_integrability,
    concentration_hp,
    concentration_window,
    doubling_beta,
    doubling_ratios,
    dual_index_transform,
    halfspace_tail_w,
    hp_via_L,
    load_kernel,
    matuszewska_lower_index,
    slab_mass,
    sphere_area,
    tabulate_L,
    tabulate_w,
    tail_mass_L,
)
from nlcap.tabulated import TabulatedRadial

BUILTIN = [
    KernelSpec.fractional(0.25, 2.0, 1, 2.0),
    KernelSpec.fractional(0.5, 1.0, 1, 1.0),
    KernelSpec.fractional(0.3, 2.0, 2, 2.0),
    KernelSpec.log_zero_order(0.5, 0.5, 1, 2.0),
    KernelSpec.double_log(0.5, 2.0, 1, 2.0),
]


def test_sphere_area():
    assert sphere_area(1) == pytest.approx(2.0)
    assert sphere_area(2) == pytest.approx(2 * math.pi)
    assert sphere_area(3) == pytest.approx(4 * math.pi)


def test_constructor_invariants():
    with pytest.raises(ValueError):
        KernelSpec.fractional(1.0, 2.0, 1, 2.0)
    with pytest.raises(ValueError):
        KernelSpec.log_zero_order(2.0, 0.6, 1, 2.0)
    with pytest.raises(ValueError):
        KernelSpec.fractional(0.25, 2.0, 1, 0.5)


def test_integrability_fractional_value(frac1):
    rep = check_integrability(frac1)
    assert rep.finite
    assert rep.value == pytest.approx(16.0 / 3.0, rel=1e-9)


def test_integrability_finite_for_sp_below_p():
    assert check_integrability(KernelSpec.fractional(0.6, 2.0, 1, 2.0)).finite


def test_integrability_borderline_divergence():
    k = KernelSpec.custom(lambda r: r**-3.0, d=1, p=2.0)
    rep = check_integrability(k)
    assert not rep.finite and rep.value == math.inf


def test_negative_profile_rejected():
    with pytest.raises(NonPositiveProfile):
        check_integrability(KernelSpec.custom(lambda r: -(r**-1.5), d=1, p=2.0))


def test_tail_mass_closed_form(frac1):
    L = tail_mass_L(frac1, [0.25, 1.0, 4.0])
    np.testing.assert_allclose(L.values, 4.0 * np.array([0.25, 1.0, 4.0]) ** -0.5, rtol=1e-8)
    assert float(L(0.25)) == pytest.approx(8.0, rel=1e-8)


@pytest.mark.parametrize("kernel", BUILTIN, ids=lambda k: f"{k.family}-d{k.d}")
def test_monotone_tabulations(kernel):
    L = tabulate_L(kernel, 1e-3, 1e3, per_decade=16)
    assert np.all(np.diff(L.values) <= 0)
    hp = [concentration_hp(kernel, r) for r in np.geomspace(1e-3, 1e3, 13)]
    assert np.all(np.diff(hp) <= 0)


def test_log_zero_order_L_shape():
    k = KernelSpec.log_zero_order(0.5, 0.5, 1, 2.0)
    s = np.geomspace(0.01, 0.1, 11)
    L = tail_mass_L(k, s).values
    q = L / np.log1p(s**-0.5) ** 1.5
    assert q.max() / q.min() < 1.5


def test_concentration_closed_form(frac1):
    assert concentration_hp(frac1, 1.0) == pytest.approx(16.0 / 3.0, rel=1e-9)
    assert concentration_hp(frac1, 0.25) == pytest.approx(32.0 / 3.0, rel=1e-9)


def test_concentration_zero_kernel():
    k = KernelSpec.custom(lambda r: np.zeros_like(r), d=1, p=2.0)
    assert concentration_hp(k, 1.0) == 0.0


def test_concentration_compact_kernel_decay():
    # nu = 1 on (0, 1): h_2(r) = 2 int_0^1 rho^2 / r^2 = (2/3) r^-2 for r >= 1.
    k = KernelSpec.custom(lambda r: np.where(r < 1.0, 1.0, 0.0), d=1, p=2.0, breakpoints=(1.0,))
    for r in (10.0, 100.0, 1000.0):
        assert concentration_hp(k, r) * r**2 == pytest.approx(2.0 / 3.0, rel=1e-8)


@pytest.mark.parametrize("r", [0.1, 0.5, 1.0, 2.0])
def test_hp_over_L_ratio(frac1, r):
    L = tabulate_L(frac1, 1e-6, 10.0, per_decade=32)
    assert hp_via_L(L, 2.0, r) / float(L(r)) == pytest.approx(4.0 / 3.0, rel=1e-8)
    assert hp_via_L(L, 2.0, r) == pytest.approx(concentration_hp(frac1, r), rel=1e-8)


def test_hp_via_constant_L():
    L = TabulatedRadial(np.array([1e-3, 1.0]), np.array([3.0, 3.0]))
    assert hp_via_L(L, 2.0, 0.5) == pytest.approx(3.0)


def test_hp_via_L_extrapolation_dominated(frac1):
    L = tabulate_L(frac1, 0.5, 10.0, per_decade=8)
    with pytest.raises(ExtrapolationDominated):
        hp_via_L(L, 2.0, 0.6)


def test_concentration_window_fractional(frac1):
    rep = concentration_window(frac1, np.geomspace(1e-3, 1.0, 7), (1.0, 1.5))
    np.testing.assert_allclose(rep.ratios, 4.0 / 3.0, rtol=1e-8)
    assert rep.r0 == pytest.approx(1.0)


def test_halfspace_tail_closed_form(frac1):
    assert halfspace_tail_w(frac1, 1.0) == pytest.approx(2.0, rel=1e-9)


def test_halfspace_tail_axis_swap_2d():
    k = KernelSpec.fractional(0.25, 2.0, 2, 2.0)
    a = halfspace_tail_w(k, 1.0, method="nested", axis=1)
    b = halfspace_tail_w(k, 1.0, method="nested", axis=0)
    c = halfspace_tail_w(k, 1.0, method="cap")
    assert a == pytest.approx(b, rel=1e-6)
    assert a == pytest.approx(c, rel=1e-6)


@pytest.mark.parametrize("kernel", [BUILTIN[0], BUILTIN[2], BUILTIN[3]], ids=["frac1", "frac2", "lzo"])
def test_L_bounded_by_halfspace_tail(kernel):
    d = kernel.d
    s = np.geomspace(1e-2, 1e2, 9)
    L = tail_mass_L(kernel, s).values
    w = np.array([halfspace_tail_w(kernel, x / math.sqrt(d), method="cap" if d > 1 else "auto") for x in s])
    assert np.all(L <= 2 * d * w * (1 + 1e-9))


def test_doubling_beta_fractional(frac1):
    s, ratios = doubling_ratios(frac1, (1e-3, 1e3), samples=16)
    np.testing.assert_allclose(ratios, math.sqrt(2.0), rtol=1e-8)
    assert doubling_beta(frac1, (1e-3, 1e3), samples=16) == pytest.approx(math.sqrt(2.0), rel=1e-8)


def test_doubling_beta_outside_unit_interval():
    k = KernelSpec.custom(lambda r: r ** (-1.0 - 2 * 0.9), d=1, p=2.0)
    beta = doubling_beta(k, (0.1, 10.0), samples=8)
    assert beta == pytest.approx(2.0**1.8, rel=1e-8)
    assert beta >= 2.0


def test_doubling_certificate_replay():
    k = KernelSpec.log_zero_order(0.5, 0.5, 1, 2.0)
    beta = doubling_beta(k, (1e-3, 1e2), samples=24)
    for s in np.geomspace(1e-3, 1e2, 24):
        assert halfspace_tail_w(k, s) <= beta * halfspace_tail_w(k, 2 * s) * (1 + 1e-12)


def test_slab_mass_identity(frac1):
    # w(1/2) - w(1) = 2 (sqrt 2 - 1)
    assert slab_mass(frac1, 0.5, 1.0) == pytest.approx(2 * (math.sqrt(2) - 1), rel=1e-10)


def test_tabulate_w_2d_matches_pointwise():
    k = KernelSpec.fractional(0.25, 2.0, 2, 2.0)
    w = tabulate_w(k, 0.1, 10.0, per_decade=4)
    assert float(w(1.0)) == pytest.approx(halfspace_tail_w(k, 1.0, method="cap"), rel=1e-8)


@pytest.mark.parametrize("loc", list(Location))
def test_index_pure_power(loc):
    est = matuszewska_lower_index(lambda r: r**-1.5, loc)
    assert est.index == pytest.approx(-1.5, abs=1e-9)
    assert est.A == pytest.approx(1.0, rel=1e-8)


def test_index_double_log():
    k = KernelSpec.double_log(0.5, 2.0, 1, 2.0)
    assert matuszewska_lower_index(k.profile, Location.AT_ZERO).index == pytest.approx(-1.0, abs=0.05)
    # The log^-gamma(2 + r) correction flattens only far out, so sample deeper at infinity.
    est = matuszewska_lower_index(k.profile, Location.AT_INFINITY, offset=24)
    assert est.index == pytest.approx(-1.0, abs=0.05)


def test_index_slowly_varying_correction():
    est = matuszewska_lower_index(lambda r: r**-1.0 * np.log1p(r**-0.5) ** 0.5, Location.AT_ZERO, decades=6)
    assert est.index == pytest.approx(-1.0, abs=0.1)


def test_index_certificate():
    prof = KernelSpec.log_zero_order(0.5, 0.5, 1, 2.0).profile
    est = matuszewska_lower_index(prof, Location.AT_ZERO)
    r = np.geomspace(*est.range, 64)
    v = prof(r)
    i, j = np.triu_indices(r.size, 1)
    lhs = v[j] / v[i]
    rhs = est.A * (r[j] / r[i]) ** est.index
    assert np.all(lhs >= rhs * (1 - 1e-8))


def test_index_nonpositive_sample():
    with pytest.raises(NonPositiveSample):
        matuszewska_lower_index(lambda r: np.zeros_like(r), Location.AT_ZERO)


def test_dual_transform():
    prof = KernelSpec.log_zero_order(0.5, 0.5, 1, 2.0).profile
    a = matuszewska_lower_index(prof, Location.AT_ZERO).index
    b = matuszewska_lower_index(dual_index_transform(prof), Location.AT_INFINITY).index
    assert a == pytest.approx(b, abs=0.05)
    c = matuszewska_lower_index(dual_index_transform(lambda r: np.full_like(r, 3.0)), Location.AT_INFINITY)
    assert c.index == pytest.approx(0.0, abs=1e-12)
    t = dual_index_transform(lambda r: r**-0.7)
    np.testing.assert_allclose(t(np.array([0.5, 2.0])), np.array([0.5, 2.0]) ** -0.7)


@pytest.mark.parametrize("kernel", BUILTIN, ids=lambda k: f"{k.family}-d{k.d}")
def test_hp_identity_builtin(kernel):
    L = tabulate_L(kernel, 1e-10, 1e3)
    for r in np.geomspace(1e-3, 10.0, 5):
        assert hp_via_L(L, kernel.p, r) == pytest.approx(concentration_hp(kernel, r), rel=1e-6)


@given(s=st.floats(0.05, 0.95), q=st.floats(0.01, 100.0))
def test_fractional_scaling_property(s, q):
    k = KernelSpec.fractional(s, 1.0, 1, 1.0)
    base = math.log(q)
    # L(q) = (2 / s) q^{-s}
    assert float(tail_mass_L(k, [q, 2 * q]).values[0]) == pytest.approx(2.0 / s * math.exp(-s * base), rel=1e-7)


@given(beta=st.floats(1.05, 1.95))
def test_beta_power_bound(beta):
    # beta^N <= 2 sqrt(d) for N = ceil(log2 sqrt d) whenever beta < 2.
    for d in (1, 2, 3, 4):
        N = math.ceil(math.log2(math.sqrt(d)))
        assert beta**N <= 2 * math.sqrt(d)


def test_config_roundtrip(tmp_path, frac1):
    path = tmp_path / "k.json"
    path.write_text('{"family": "fractional", "s": 0.25, "order": 2, "d": 1, "p": 2}')
    k = load_kernel(path)
    assert k.digest() == frac1.digest()
    table = tmp_path / "t.csv"
    TabulatedRadial(np.array([0.1, 1.0, 10.0]), np.array([30.0, 1.0, 0.05])).to_csv(table)
    (tmp_path / "rv.json").write_text('{"family": "reg_varying", "table": "t.csv", "d": 1, "p": 2}')
    rv = load_kernel(tmp_path / "rv.json")
    assert float(rv.profile(np.array(1.0))) == pytest.approx(1.0)


def test_config_errors(tmp_path):
    (tmp_path / "bad.json").write_text('{"family": "fractional"}')
    with pytest.raises(ConfigParse):
        load_kernel(tmp_path / "bad.json")
    (tmp_path / "junk.json").write_text("{not json")
    with pytest.raises(ConfigParse):
        load_kernel(tmp_path / "junk.json")
    with pytest.raises(ConfigParse):
        KernelSpec.from_mapping({"family": "custom"})


def test_divergent_concentration():
    k = KernelSpec.custom(lambda r: r**-3.5, d=1, p=2.0)
    with pytest.raises(DivergentTail):
        concentration_hp(k, 1.0)


def test_reg_varying_table_kinks_are_breakpoints():
    nodes = np.geomspace(1e-6, 1e6, 49)
    k = KernelSpec.reg_varying(TabulatedRadial(nodes, nodes**0.5 * (1 + nodes) ** 0.5), 1, 2.0)
    assert len(k.log_breakpoints) == 49
    L = tabulate_L(k, 1e-10, 1e3)
    for r in (1e-2, 1.0, 1e2):
        assert hp_via_L(L, 2.0, r) == pytest.approx(concentration_hp(k, r), rel=1e-6)
