import cmath
import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from semidecay.cbf import (
    CATALOG_NAMES,
    StieltjesRep,
    apply_cbf_operator,
    catalog,
    catalog_entry,
    cbf_closure_transforms,
    cbf_power_product,
    eval_cbf_scalar,
    integrability_check,
    nollau_log1p,
    pick_property_check,
)
from semidecay.errors import DivisionByZero, DomainError, ParameterDomain
from semidecay.linop import OperatorModel

JORDAN = OperatorModel.block_diagonal([[[1.0, 1.0], [0.0, 1.0]]])


def test_scalar_examples():
    assert eval_cbf_scalar(catalog_entry("log1p").rep, 1) == pytest.approx(math.log(2), rel=1e-10)
    assert eval_cbf_scalar(catalog_entry("power", 0.5).rep, 4) == pytest.approx(2, rel=1e-10)


def test_lambda_minus_one_over_log_against_mpmath():
    # independent oracle: the printed density at high precision, in the variable u = log s
    mpmath.mp.dps = 30
    lam = mpmath.e
    f = lambda u: lam / (lam + mpmath.exp(u)) * (mpmath.exp(u) + 1) / (mpmath.pi ** 2 + u ** 2)
    oracle = mpmath.quad(f, [-mpmath.inf, -50, 0, 1, 50, mpmath.inf])
    got = eval_cbf_scalar(catalog_entry("lambda_minus_one_over_log").rep, math.e)
    assert got.real == pytest.approx(float(oracle), rel=1e-8)
    assert got.real == pytest.approx(math.e - 1, rel=1e-8)


def test_domain_error_left_half_plane():
    with pytest.raises(DomainError):
        eval_cbf_scalar(catalog_entry("log1p").rep, -1 + 0j)


def test_catalog_agreement():
    rng = np.random.default_rng(3)
    pts = [10.0 ** k for k in range(-3, 4)]
    pts += list(rng.uniform(0.1, 10, 20) + 1j * rng.uniform(-10, 10, 20))
    for entry in catalog(0.5):
        for lam in pts:
            q = eval_cbf_scalar(entry.rep, lam)
            c = complex(entry.closed_form(lam))
            assert abs(q - c) <= 1e-6 * abs(c), (entry.name, lam)


def test_operator_examples():
    y = apply_cbf_operator(catalog_entry("log1p").rep, OperatorModel.diagonal([1.0]), [1.0])
    assert y[0] == pytest.approx(math.log(2), rel=1e-9)
    y = apply_cbf_operator(catalog_entry("power", 0.5).rep, OperatorModel.diagonal([4.0, 9.0]), [1, 1])
    assert np.allclose(y, [2, 3], rtol=1e-9)
    y = apply_cbf_operator(catalog_entry("log1p").rep, JORDAN, [0, 1])
    # f(J) = [[f(1), f'(1)], [0, f(1)]] with f = log(1 + .)
    assert np.allclose(y, [0.5, math.log(2)], rtol=1e-9)


@pytest.mark.parametrize("name", CATALOG_NAMES)
def test_operator_matches_entrywise(name):
    entry = catalog_entry(name, 0.3)
    d = np.array([0.01, 0.5 + 2j, 3.0, 40 - 5j, 1e3])
    y = apply_cbf_operator(entry.rep, OperatorModel.diagonal(d), np.ones(d.size))
    expect = np.array([entry.closed_form(z) for z in d])
    assert np.allclose(y, expect, rtol=1e-7, atol=0)


def test_nollau_examples():
    assert nollau_log1p(OperatorModel.diagonal([1.0]), [1.0])[0] == pytest.approx(math.log(2), rel=1e-12)
    assert nollau_log1p(OperatorModel.diagonal([math.e - 1]), [1.0])[0] == pytest.approx(1, rel=1e-12)
    assert np.allclose(nollau_log1p(OperatorModel.diagonal([1.0, 3.0]), [1, 1]), [math.log(2), math.log(4)])


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000))
def test_two_path_log1p(seed):
    rng = np.random.default_rng(seed)
    d = 10 ** rng.uniform(-3, 3, 4) * np.exp(1j * rng.uniform(-1.2, 1.2, 4))
    x = rng.normal(size=4)
    A = OperatorModel.diagonal(d)
    a = nollau_log1p(A, x)
    b = apply_cbf_operator(catalog_entry("log1p").rep, A, x)
    assert np.allclose(a, b, rtol=1e-8, atol=1e-12 * np.abs(b).max())
    lam = rng.uniform(0.01, 10)
    J = OperatorModel.block_diagonal([[[lam, 1.0], [0, lam]]])
    a = nollau_log1p(J, x[:2])
    b = apply_cbf_operator(catalog_entry("log1p").rep, J, x[:2])
    assert np.allclose(a, b, rtol=1e-8, atol=1e-12)


def test_truncation_monotone():
    # nonnegative integrand at real lam > 0: truncated integrals grow with R
    entry = catalog_entry("log1p")
    lam = 2.0
    vals = []
    from scipy.integrate import quad
    for R in (10, 1e2, 1e3, 1e4, 1e5):
        vals.append(quad(lambda s: lam / (lam + s) * entry.rep.density(s), 1, R, limit=200)[0])
    assert all(b >= a for a, b in zip(vals, vals[1:]))
    assert vals[-1] < math.log(3)


def test_integrability():
    for entry in catalog(0.5):
        assert math.isfinite(integrability_check(entry.rep))


def test_rep_validation():
    with pytest.raises(ParameterDomain):
        StieltjesRep(-1.0, 0.0, lambda s: 0.0)


def test_pick_examples():
    assert pick_property_check(lambda z: cmath.sqrt(z)).passed
    ray = [2 * cmath.exp(1j * a) for a in np.linspace(0.1, 3.0, 30)]
    rep = pick_property_check(lambda z: z * z, ray)
    assert not rep.passed and rep.violations
    g, h = catalog_entry("log1p").closed_form, catalog_entry("power", 0.5).closed_form
    assert pick_property_check(lambda z: g(h(z))).passed


def test_closure_transforms():
    r, f = cbf_closure_transforms(catalog_entry("power", 0.5))
    for z in (0.3, 2 + 1j, 10j + 1):
        assert r(z) == pytest.approx(cmath.sqrt(z))
        assert f(z) == pytest.approx(cmath.sqrt(z))
    r, _ = cbf_closure_transforms(catalog_entry("log1p"))
    assert pick_property_check(r).passed
    r, _ = cbf_closure_transforms(catalog_entry("power", 1.0))
    assert r(3 + 1j) == pytest.approx(1)
    assert pick_property_check(r).passed
    with pytest.raises(DivisionByZero):
        cbf_closure_transforms(lambda z: 0 * z)


def test_power_product():
    p1 = catalog_entry("power", 1.0)
    prod = cbf_power_product(p1, p1, 0.5, 0.5)
    assert prod(3 + 2j) == pytest.approx(3 + 2j)
    assert pick_property_check(prod).passed
    prod = cbf_power_product(lambda z: 1 + z, lambda z: cmath.log(2 + z), 0.5, 0.5)
    assert pick_property_check(prod).passed
    with pytest.raises(ParameterDomain):
        cbf_power_product(p1, p1, 0.7, 0.4)
