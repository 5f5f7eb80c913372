import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nlcap.errors import BetaOutOfRange, IndexTooLow, SupportViolation
from nlcap.grid import GridFunction, build_cell_masses, indicator
from nlcap.hardy import (
    HardyContext,
    HardyReport,
    check_embedding_index,
    delta_step,
    dimension_exponent,
    double_log_weight,
    fullspace_constant,
    generalized_inverse_V,
    hardy_constant,
    hardy_corpus,
    log_zero_order_weight,
    regularize_kernel,
    tensor_bump,
    verify_embedding,
    verify_fullspace_hardy,
    verify_halfspace_hardy,
    verify_regularized_hardy,
    weight_check,
)
from nlcap.kernel import KernelSpec


@pytest.fixture(scope="module")
def ctx_p1(frac1_p1):
    return HardyContext.build(frac1_p1)


@pytest.fixture(scope="module")
def ctx_p2(frac1):
    return HardyContext.build(frac1)


@pytest.fixture(scope="module")
def masses_p1_512(frac1_p1):
    return build_cell_masses(frac1_p1, 8.0, 512)


def test_hardy_constant_values():
    assert hardy_constant(1.5, 1.0) == 4.5
    assert hardy_constant(math.sqrt(2.0), 2.0) == pytest.approx(4.525873610135541, rel=1e-12)
    assert hardy_constant(1.0 + 1e-12, 2.0) == pytest.approx(2.0, rel=1e-5)
    for beta in (1.0, 2.0, 2.5):
        with pytest.raises(BetaOutOfRange):
            hardy_constant(beta, 2.0)


@given(p=st.floats(1.0, 6.0), b1=st.floats(1.01, 1.98), b2=st.floats(1.01, 1.98))
def test_hardy_constant_increasing_in_beta(p, b1, b2):
    lo, hi = sorted((b1, b2))
    assert hardy_constant(lo, p) <= hardy_constant(hi, p)


def test_dimension_constant():
    assert dimension_exponent(1) == 0 and dimension_exponent(2) == 1 and dimension_exponent(4) == 1
    assert fullspace_constant(1.5, 1.0, 1) == pytest.approx(4.0 * 4.5)
    assert fullspace_constant(1.5, 1.0, 2) == pytest.approx(4.0 * 4.5 * 3.0)


def test_context_rejects_bad_beta(frac1):
    with pytest.raises(BetaOutOfRange):
        HardyContext(frac1, 2.0, None, 2.0)


def test_context_fractional(ctx_p2):
    assert ctx_p2.beta == pytest.approx(math.sqrt(2.0), rel=1e-8)
    assert ctx_p2.C1 == pytest.approx(4.525873610135541, rel=1e-8)


def test_generalized_inverse(ctx_p2):
    # w(s) = 2 s^{-1/2}, so V(t) = (2/t)^2.
    for t in (0.5, 2.0, 4.0):
        assert generalized_inverse_V(ctx_p2.w, t) == pytest.approx((2.0 / t) ** 2, rel=1e-8)


@given(s=st.floats(1e-4, 1e3))
def test_inverse_properties(ctx_p2, s):
    w = ctx_p2.w
    ws = float(w(s))
    v = generalized_inverse_V(w, ws)
    assert v <= s * (1 + 1e-8)
    assert float(w(v)) == pytest.approx(ws, rel=1e-8)


def test_delta_step(ctx_p2):
    rep = delta_step(ctx_p2, 1.0)
    assert rep.delta == pytest.approx(0.5, rel=1e-8)
    assert rep.annulus_mass == pytest.approx(2 * (math.sqrt(2.0) - 1.0), rel=1e-2)
    assert rep.mass_relerr < 1e-2
    for s in np.geomspace(1e-3, 1e2, 64):
        assert delta_step(ctx_p2, float(s)).within_half


def test_delta_step_log_kernel():
    k = KernelSpec.log_zero_order(0.5, 0.5, 1, 2.0)
    ctx = HardyContext.build(k)
    for s in np.geomspace(1e-3, 10.0, 16):
        rep = delta_step(ctx, float(s))
        assert rep.within_half and rep.mass_relerr < 1e-2


def test_report_ratio_and_slack():
    assert HardyReport(0.0, 0.0, 0.0, 3.0, 2.0).passed
    assert HardyReport(4.0, 0.0, 1.0, 2.0, 2.0).ratio == pytest.approx(1.0)
    assert HardyReport(4.0 * 1.019**2, 0.0, 1.0, 2.0, 2.0).passed
    assert not HardyReport(4.0 * 1.03**2, 0.0, 1.0, 2.0, 2.0).passed


def test_halfspace_indicator(ctx_p1, masses_p1_512):
    f = indicator(1, 8.0, 512, lambda x: (x > 0) & (x < 1))
    rep = verify_halfspace_hardy(f, ctx_p1, masses_p1_512, 8.0)
    assert rep.lhs == pytest.approx(4.0, rel=1e-8)
    # Seminorm restricted to the half-line (0, 8): 8 - 8 (sqrt 8 - sqrt 7).
    assert rep.rhs_seminorm == pytest.approx(8 - 8 * (math.sqrt(8) - math.sqrt(7)), rel=1e-3)
    assert rep.passed and rep.ratio <= 1.0


def test_halfspace_zero_and_support(ctx_p1, masses_p1_512):
    z = GridFunction.zeros(1, 8.0, 512)
    rep = verify_halfspace_hardy(z, ctx_p1, masses_p1_512, 8.0)
    assert rep.lhs == 0.0 and rep.passed
    f = indicator(1, 8.0, 512, lambda x: (x > -1) & (x < 1))
    with pytest.raises(SupportViolation):
        verify_halfspace_hardy(f, ctx_p1, masses_p1_512, 8.0)
    with pytest.raises(SupportViolation):
        verify_halfspace_hardy(z, ctx_p1, masses_p1_512, 9.0)


def test_halfspace_random_corpus(ctx_p2, frac1):
    m = build_cell_masses(frac1, 8.0, 256)
    corpus = hardy_corpus(1, 8.0, 256, seed=7, random_count=20, slab=4.0)
    assert sum(1 for name, _ in corpus if name.startswith("random")) == 20
    for name, f in corpus:
        assert verify_halfspace_hardy(f, ctx_p2, m, 4.0, label=name).passed, name


def test_halfspace_2d():
    k = KernelSpec.fractional(0.25, 2.0, 2, 2.0)
    ctx = HardyContext.build(k)
    m = build_cell_masses(k, 4.0, 32)
    for name, f in hardy_corpus(2, 4.0, 32, slab=4.0, random_count=3):
        assert verify_halfspace_hardy(f, ctx, m, 4.0, label=name).passed, name


def test_fullspace_indicator(ctx_p1, masses_p1_512):
    f = indicator(1, 8.0, 512, lambda x: (x > 0) & (x < 1))
    rep = verify_fullspace_hardy(f, ctx_p1, masses_p1_512)
    assert rep.lhs == pytest.approx(8.0, rel=2e-2)
    assert rep.rhs_seminorm ** 1.0 == pytest.approx(16.0, rel=2e-2)
    assert rep.constant == pytest.approx(fullspace_constant(math.sqrt(2.0), 1.0, 1), rel=1e-8)
    assert rep.passed
    assert verify_fullspace_hardy(GridFunction.zeros(1, 8.0, 512), ctx_p1, masses_p1_512).passed


def test_fullspace_corpus_2d():
    k = KernelSpec.fractional(0.25, 2.0, 2, 2.0)
    ctx = HardyContext.build(k)
    m = build_cell_masses(k, 4.0, 32)
    for name, f in hardy_corpus(2, 4.0, 32, random_count=2):
        assert verify_fullspace_hardy(f, ctx, m, label=name).passed, name


def test_example_weights():
    r = np.array([0.01, 1.0, 100.0])
    lg = np.log1p(r**-0.5)
    np.testing.assert_allclose(log_zero_order_weight(0.5, 0.5)(r), lg**0.5 * (lg + 1))
    np.testing.assert_allclose(double_log_weight(0.5, 2.0)(r), np.log(2 + 1 / r) ** 1.5 / np.log(2 + r))
    np.testing.assert_allclose(double_log_weight(-1.0, 2.0)(r), np.log(np.log(2 + 1 / r)) / np.log(2 + r))


@pytest.mark.parametrize("family", ["log_zero_order", "double_log"])
def test_weight_check_corpus(family):
    if family == "log_zero_order":
        k = KernelSpec.log_zero_order(0.5, 0.5, 1, 2.0)
        wfn = log_zero_order_weight(0.5, 0.5)
    else:
        k = KernelSpec.double_log(0.5, 2.0, 1, 2.0)
        wfn = double_log_weight(0.5, 2.0)
    ctx = HardyContext.build(k)
    m = build_cell_masses(k, 8.0, 256)
    for name, f in hardy_corpus(1, 8.0, 256):
        assert weight_check(f, ctx, m, wfn, label=name).passed, name


def test_embedding_homogeneity(frac1):
    m = build_cell_masses(frac1, 8.0, 256)
    f = tensor_bump(1, 8.0, 256, 1.0)
    a = verify_embedding(f, frac1, m)
    b = verify_embedding(f.like(2.0 * f.values), frac1, m)
    assert b.ratio == pytest.approx(a.ratio, rel=1e-12)
    # The as-printed reading scales like 2^{p-1}.
    assert b.ratio_as_printed == pytest.approx(2.0 * a.ratio_as_printed, rel=1e-12)


def test_embedding_refinement(frac1):
    ratios = []
    for n in (256, 512, 1024):
        m = build_cell_masses(frac1, 8.0, n)
        ratios.append(verify_embedding(tensor_bump(1, 8.0, n, 1.0), frac1, m).ratio)
    assert max(ratios) / min(ratios) < 1.1
    assert all(math.isfinite(r) for r in ratios)


def test_embedding_index_checks():
    with pytest.raises(IndexTooLow):
        check_embedding_index(KernelSpec.custom(lambda r: r**-2.5, d=1, p=2.0))
    with pytest.warns(UserWarning):
        check_embedding_index(KernelSpec.custom(lambda r: r**-1.95, d=1, p=2.0))


def test_regularized_fractional(frac1):
    reg = regularize_kernel(frac1)
    assert reg.a == pytest.approx(1.5, abs=1e-6) and reg.b == pytest.approx(1.5, abs=1e-6)
    assert reg.beta == pytest.approx(math.sqrt(2.0), rel=1e-6)
    assert reg.comparability >= 1.0
    m = build_cell_masses(frac1, 8.0, 256)
    for name, f in hardy_corpus(1, 8.0, 256):
        assert verify_regularized_hardy(f, frac1, m, reg, label=name).passed, name


def test_regularized_log_kernel():
    k = KernelSpec.log_zero_order(0.5, 0.5, 1, 2.0)
    reg = regularize_kernel(k)
    assert reg.beta < 2.0
    m = build_cell_masses(k, 8.0, 256)
    for name, f in hardy_corpus(1, 8.0, 256):
        assert verify_regularized_hardy(f, k, m, reg, label=name).passed, name


def test_corpus_deterministic():
    a = hardy_corpus(1, 8.0, 64, seed=3)
    b = hardy_corpus(1, 8.0, 64, seed=3)
    assert [x[0] for x in a] == [x[0] for x in b]
    assert all(np.array_equal(x[1].values, y[1].values) for x, y in zip(a, b))
    assert all(np.all(f.values >= 0) for _, f in a)
