"""Acceptance matrix.  Each test prints one ``ACCEPTANCE <k> PASS|FAIL`` line."""
import math
import time

import numpy as np
import pytest

import _gate
from semidecay.cbf import catalog, eval_cbf_scalar
from semidecay.errors import HypothesisViolated
from semidecay.funcalc import (
    HInftyZeroSymbol,
    dunford_apply,
    log_operator,
    log_scaling_check,
    matrix_function_oracle,
    weight_operator,
)
from semidecay.linop import OperatorModel, operator_norm
from semidecay.profiles import predict_decay
from semidecay.semigroup import (
    evolve,
    laplace_orbit_infinity,
    laplace_orbit_infinity_zero,
    lemma_b1_check,
    lemma_b2_check,
)
from semidecay.verify import PASS, FamilySpec, build_family, family_profile_calibration, paper_suite, run_suite


@pytest.fixture
def report(capsys):
    def emit(k, ok, detail):
        with capsys.disabled():
            print(f"\nACCEPTANCE {k} {'PASS' if ok else 'FAIL'}: {detail}")
        assert ok, detail
    return emit


def test_1_catalog_fidelity(report):
    start = time.perf_counter()
    rng = np.random.default_rng(2024)
    pts = [10.0 ** k for k in range(-3, 4)]
    pts += list(rng.uniform(1e-3, 10, 20) + 1j * rng.uniform(-10, 10, 20))
    worst = 0.0
    for entry in catalog(0.5):
        for lam in pts:
            c = complex(entry.closed_form(lam))
            worst = max(worst, abs(eval_cbf_scalar(entry.rep, lam) - c) / abs(c))
    elapsed = time.perf_counter() - start
    report(1, worst <= 1e-6 and elapsed < 10, f"max rel err {worst:.2e}, {elapsed:.2f} s")


def _calculus_operators():
    rot = np.exp(0.4j)
    ops = [
        OperatorModel.diagonal([1.0]),
        OperatorModel.diagonal([0.01, 1.0, 100.0]),
        OperatorModel.diagonal([0.3 * rot, 2 / rot, 5.0]),
        OperatorModel.diagonal(np.logspace(-3, 3, 7)),
        OperatorModel.diagonal([1 + 0.5j, 1 - 0.5j, 4.0]),
        OperatorModel.diagonal([0.05 * rot ** 2, 20.0 / rot ** 2]),
    ]
    for lam, g in ((1.0, 1.0), (3 * rot, 2.0), (0.2, 0.1), (10 / rot, 5.0), (0.5 + 0.3j, 0.5), (2.0, 0.01)):
        ops.append(OperatorModel.block_diagonal([[[lam, g], [0, lam]]]))
    return ops


def test_2_calculus_consistency(report):
    start = time.perf_counter()
    symbols = [
        HInftyZeroSymbol(0, 1), HInftyZeroSymbol(1, 1), HInftyZeroSymbol(0.5, 0.5),
        HInftyZeroSymbol(0, 2, 1, 0), HInftyZeroSymbol(1, 1, 0, 1), HInftyZeroSymbol(0.5, 1.5, 0.5, 2),
    ]
    worst = 0.0
    for A in _calculus_operators():
        for sym in symbols:
            D = dunford_apply(sym, A)
            O = matrix_function_oracle(sym, A)
            worst = max(worst, operator_norm(D - O) / operator_norm(O))
    elapsed = time.perf_counter() - start
    report(2, worst <= 1e-6 and elapsed < 30, f"12 ops x 6 symbols, max rel err {worst:.2e}, {elapsed:.2f} s")


def test_3_log_coherence(report):
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(5):
        d = 10.0 ** rng.uniform(-3, 3, 12) * np.exp(1j * rng.uniform(-1.2, 1.2, 12))
        d[:2] = [1e-3, 1e3]
        L = np.diag(np.asarray(log_operator(OperatorModel.diagonal(d))))
        worst = max(worst, float(np.max(np.abs(L - np.log(d)))))
    A = OperatorModel.diagonal(np.logspace(-3, 3, 9))
    scaling = all(log_scaling_check(A, s).passed for s in (0.0, 0.25, 0.5, 1.0))
    report(3, worst <= 1e-8 and scaling, f"max abs err {worst:.2e}, scaling checks {'ok' if scaling else 'failed'}")


def test_4_inverse_laplace(report):
    start = time.perf_counter()
    cases = [("DiagInf", (1, 0), "inf"), ("DiagInf", (1, 1), "inf"), ("JordanUnboundedInf", (1, 1), "inf"),
             ("DiagTwoSided", (1, 0, 1, 0), "both"), ("DiagZero", (1, 0), "both")]
    worst = 0.0
    for kind, params, which in cases:
        A = build_family(FamilySpec(kind, params, 16))
        rng = np.random.default_rng(0)
        y = rng.normal(size=A.dim) + 1j * rng.normal(size=A.dim)
        if which == "inf":
            W = weight_operator(A, "Infinity", (2.5, 1.0)).matrix
        else:
            W = weight_operator(A, "InfinityZero", {"mu": 1.0, "nu": 2.0, "upsilon": 1.0}).matrix
        for t in (0.0, 0.5, 1.0, 5.0):
            if which == "inf":
                got = laplace_orbit_infinity(A, 2.5, 1.0, t, y)
            else:
                got = laplace_orbit_infinity_zero(A, 1.0, 2.0, 1.0, t, y)
            ref = (evolve(A, t) @ W).matvec(y)
            worst = max(worst, np.linalg.norm(got - ref) / np.linalg.norm(ref))
    elapsed = time.perf_counter() - start
    report(4, worst <= 1e-4 and elapsed < 60, f"max rel err {worst:.2e}, {elapsed:.2f} s")


def test_5_contour_identities(report):
    b1 = [lemma_b1_check(nu, zeta, 1.0, (0.0, 1.0, 5.0), variant, tol_abs=1e-6)
          for nu, zeta in ((2, 0), (2, 1), (3, 2)) for variant in ("log2", "two_pi_ilog")]
    worst_b1 = max(math.hypot(v[1], v[2]) for r in b1 for v in r.details["values"])
    two_pi = 2 * math.pi
    points = [
        (0, 1, 0, 1, 1j, "a", lambda lam: 1 / (1 - lam)),
        (0, 2, 1, 1, 2j, "a", lambda lam: 1 / ((1 - lam) ** 2 * np.log(2 - lam))),
        (0, 1.5, 2, 0.5, 3 - 3j, "a", lambda lam: 1 / ((1 - lam) ** 1.5 * np.log(2 - lam) ** 2)),
        (1, 1, 1, 1, 1j, "b", lambda lam: -lam / ((1 - lam) ** 2 * (two_pi - 1j * np.log(-lam)))),
        (0.5, 0.5, 1, 1, 2 + 4j, "b",
         lambda lam: (-lam) ** 0.5 / ((1 - lam) * (two_pi - 1j * np.log(-lam)))),
        (0.3, 1.2, 2, 1, -0.5j + 0.1, "b",
         lambda lam: (-lam) ** 0.3 / ((1 - lam) ** 1.5 * (two_pi - 1j * np.log(-lam)) ** 2)),
    ]
    worst_b2 = 0.0
    for al, be, ze, eta, lam, variant, closed in points:
        r = lemma_b2_check(al, be, ze, eta, lam, variant)
        c = complex(closed(complex(lam)))
        worst_b2 = max(worst_b2, abs(complex(*r.details["value"]) - c) / abs(c))
    ok = all(r.passed for r in b1) and worst_b1 <= 1e-6 and worst_b2 <= 1e-6
    report(5, ok, f"B1 max |integral| {worst_b1:.2e}, B2 max rel err {worst_b2:.2e}")


def test_6_profile_calibration(report):
    start = time.perf_counter()
    errs = []
    for kind, params in [("DiagInf", (1, 0)), ("DiagInf", (2, 0)), ("DiagInf", (1, 1)), ("DiagInf", (2, 1)),
                         ("DiagZero", (1, 0)), ("DiagZero", (2, 1))]:
        prof = family_profile_calibration(FamilySpec(kind, params, 2048))
        fit = prof.fit_inf if kind == "DiagInf" else prof.fit_zero
        errs.append((abs(fit.exponent - params[0]), abs(fit.log_exponent - params[1])))
    e_pow = max(e for e, _ in errs)
    e_log = max(e for _, e in errs)
    elapsed = time.perf_counter() - start
    report(6, e_pow <= 0.05 and e_log <= 0.3 and elapsed < 60,
           f"max exponent err {e_pow:.3f}, max log err {e_log:.3f}, {elapsed:.2f} s")


def test_7_decay_suite(report):
    start = time.perf_counter()
    reports = run_suite(paper_suite())
    elapsed = time.perf_counter() - start
    by_name = {r.spec.name: r for r in reports}
    ok = all(r.verdict == PASS and r.tail_variation < 0.2 for r in reports)
    stretched = by_name["log_only_hilbert"]
    ok = ok and stretched.fitted_poly_exponent <= -0.9 * stretched.spec.theorem_params["tau"]
    ok = ok and by_name["jordan_inf"].sup_norm >= 5
    lines = ", ".join(f"{r.spec.name}={r.verdict}" for r in reports)
    report(7, ok and elapsed < 600, f"{lines}; jordan sup {by_name['jordan_inf'].sup_norm:.2f}; {elapsed:.2f} s")


def test_8_hypothesis_gate(report):
    good, bad = _gate.draws(200, 200, seed=0)
    accepted = 0
    for tid, P in good:
        try:
            predict_decay(tid, P)
            accepted += 1
        except HypothesisViolated:
            pass
    rejected = 0
    for tid, P in bad:
        try:
            predict_decay(tid, P)
        except HypothesisViolated:
            rejected += 1
    report(8, accepted == 200 and rejected == 200, f"accepted {accepted}/200, rejected {rejected}/200")


def test_9_determinism(report):
    specs = paper_suite()
    a = [r.dumps() for r in run_suite(specs, workers=1)]
    b = [r.dumps() for r in run_suite(specs, workers=8)]
    c = [r.dumps() for r in run_suite(specs, workers=1)]
    report(9, a == b == c, f"{len(a)} reports byte-identical across reruns and workers 1/8: {a == b == c}")
