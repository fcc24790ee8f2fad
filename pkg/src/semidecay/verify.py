"""Synthetic operator families, decay experiments and bound verdicts.

Each experiment builds a truncated operator with prescribed resolvent growth,
measures ``||T(t) W||`` for the weight ``W`` that goes with a theorem, and
checks the measurement against the predicted envelope.  Verdicts are
one-sided: a family decaying faster than predicted passes.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .config import DEFAULT
from .errors import CalibrationFailed, InsufficientSamples, ParameterDomain
from .funcalc import weight_operator
from .linop import OperatorModel
from .parallel import pmap
from .profiles import (
    DecayPrediction,
    GrowthProfile,
    fit_growth_infinity,
    fit_growth_zero,
    predict_decay,
    resolvent_profile,
)
from .semigroup import DecayCurve, decay_curve, default_t_grid

FLOOR = 1e-280

FAMILY_PARAMS = {
    "DiagInf": ("beta", "b"),
    "DiagZero": ("alpha", "a"),
    "DiagTwoSided": ("alpha", "a", "beta", "b"),
    "JordanUnboundedInf": ("beta", "g"),
    "LogOnly": ("b",),
}


@dataclass(frozen=True)
class FamilySpec:
    kind: str
    params: tuple
    N: int = 2048
    seed: int = 0

    def __post_init__(self):
        if self.kind not in FAMILY_PARAMS:
            raise ParameterDomain(f"unknown family {self.kind!r}")
        names = FAMILY_PARAMS[self.kind]
        vals = self.params
        if isinstance(vals, dict):
            missing = [k for k in names if k not in vals]
            if missing:
                raise ParameterDomain(f"{self.kind} needs parameters {missing}")
            vals = tuple(vals[k] for k in names)
        vals = tuple(float(v) for v in vals)
        if len(vals) != len(names):
            raise ParameterDomain(f"{self.kind} expects parameters {names}")
        object.__setattr__(self, "params", vals)
        if int(self.N) != self.N or self.N < 16:
            raise ParameterDomain("N must be an integer >= 16")
        p = self.named
        if p.get("beta", 1.0) <= 0 or p.get("alpha", 1.0) <= 0:
            raise ParameterDomain("growth exponents must be positive")
        if p.get("a", 0.0) < 0 or p.get("b", 0.0) < 0 or p.get("g", 0.0) < 0:
            raise ParameterDomain("log exponents and g must be nonnegative")

    @property
    def named(self) -> dict:
        return dict(zip(FAMILY_PARAMS[self.kind], self.params))

    def to_json(self) -> dict:
        return {"kind": self.kind, "params": self.named, "N": int(self.N), "seed": int(self.seed)}

    @classmethod
    def from_json(cls, d: dict) -> "FamilySpec":
        return cls(d["kind"], d["params"], int(d.get("N", 2048)), int(d.get("seed", 0)))


def _inf_eigs(N, beta, b):
    k = np.arange(1, N + 1, dtype=float)
    return k ** -beta * np.log(np.e + k) ** -b + 1j * k


def _zero_eigs(N, alpha, a):
    k = np.arange(1, N + 1, dtype=float)
    return k ** -alpha * np.log(np.e + k) ** -a + 1j / k


def build_family(spec: FamilySpec) -> OperatorModel:
    """Truncated operator of size ``N`` (or ``N`` blocks) for ``spec``."""
    p = spec.named
    N = int(spec.N)
    if spec.kind == "DiagInf":
        return OperatorModel.diagonal(_inf_eigs(N, p["beta"], p["b"]))
    if spec.kind == "DiagZero":
        return OperatorModel.diagonal(_zero_eigs(N, p["alpha"], p["a"]))
    if spec.kind == "DiagTwoSided":
        return OperatorModel.diagonal(np.concatenate([_zero_eigs(N, p["alpha"], p["a"]),
                                                      _inf_eigs(N, p["beta"], p["b"])]))
    if spec.kind == "LogOnly":
        k = np.arange(1, N + 1, dtype=float)
        return OperatorModel.diagonal(np.log(np.e + k) ** -p["b"] + 1j * k)
    k = np.arange(1, N + 1, dtype=float)
    blocks = np.zeros((N, 2, 2), dtype=complex)
    ak = k ** -p["beta"]
    blocks[:, 0, 0] = ak + 1j * k
    blocks[:, 1, 1] = ak + 1j * k
    blocks[:, 0, 1] = p["g"]
    return OperatorModel.block_diagonal(blocks)


def calibration_windows(spec: FamilySpec) -> tuple:
    N = int(spec.N)
    return (1e2, min(1e6, N / 2)), (max(1e-6, 2 / N), 1e-2)


def family_profile_calibration(spec: FamilySpec, *, beta_tol: float = 0.05, log_tol: float = 0.3,
                               space=2) -> GrowthProfile:
    """Profile the built family and check that the fitted growth matches ``spec``."""
    if spec.N < 256:
        raise ParameterDomain("calibration needs N >= 256")
    A = build_family(spec)
    prof = resolvent_profile(A, space=space)
    w_inf, w_zero = calibration_windows(spec)
    p = spec.named
    problems = []
    if spec.kind in ("DiagInf", "DiagTwoSided", "JordanUnboundedInf", "LogOnly"):
        fit = fit_growth_infinity(prof, w_inf)
        if spec.kind in ("DiagInf", "DiagTwoSided"):
            if abs(fit.exponent - p["beta"]) > beta_tol:
                problems.append(f"beta_fit = {fit.exponent:.4f}, expected {p['beta']}")
            if abs(fit.log_exponent - p["b"]) > log_tol:
                problems.append(f"b_fit = {fit.log_exponent:.4f}, expected {p['b']}")
    if spec.kind in ("DiagZero", "DiagTwoSided"):
        fit = fit_growth_zero(prof, w_zero)
        if abs(fit.exponent - p["alpha"]) > beta_tol:
            problems.append(f"alpha_fit = {fit.exponent:.4f}, expected {p['alpha']}")
        if abs(fit.log_exponent - p["a"]) > log_tol:
            problems.append(f"a_fit = {fit.log_exponent:.4f}, expected {p['a']}")
    if problems:
        raise CalibrationFailed(f"{spec.kind}{spec.params}: " + "; ".join(problems))
    return prof


# ---------------------------------------------------------------------------
# exponent fits
# ---------------------------------------------------------------------------

@dataclass
class FitResult:
    model: str
    slope: float
    intercept: float
    slope_se: float
    n_points: int
    extra: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"model": self.model, "slope": self.slope, "intercept": self.intercept,
                "slope_se": self.slope_se, "n_points": self.n_points, "extra": self.extra}


def fit_exponents(curve, model: str = "poly", *, log_exponent: float = 0.0, b: float = 0.0,
                  window: tuple | None = None) -> FitResult:
    """Regress the decay curve against ``log t`` (``poly``, ``poly_log``) or ``t^{1/(b+1)}`` (``stretched``).

    ``curve`` is a :class:`DecayCurve` or a pair ``(t, values)``.  Values below
    the floating point floor are ignored.
    """
    if isinstance(curve, DecayCurve):
        t, v = curve.t_grid, curve.values
    else:
        t, v = (np.asarray(x, float) for x in curve)
    mask = v > FLOOR
    if window is not None:
        mask &= (t >= window[0]) & (t <= window[1])
    t, v = t[mask], v[mask]
    if len(t) < 10:
        raise InsufficientSamples(f"{len(t)} usable points; need >= 10")
    y = np.log(v)
    if model == "poly":
        x = np.log(t)
    elif model == "poly_log":
        x = np.log(t)
        y = y - log_exponent * np.log(np.log1p(t))
    elif model == "stretched":
        x = t ** (1.0 / (b + 1.0))
    else:
        raise ParameterDomain(f"unknown fit model {model!r}")
    X = np.column_stack([np.ones_like(x), x])
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ coef
    dof = max(len(y) - 2, 1)
    cov = float(resid @ resid) / dof * np.linalg.pinv(X.T @ X)
    extra = {"log_exponent": log_exponent} if model == "poly_log" else {"b": b} if model == "stretched" else {}
    return FitResult(model, float(coef[1]), float(coef[0]), float(math.sqrt(max(cov[1, 1], 0.0))),
                     len(t), extra)


# ---------------------------------------------------------------------------
# experiments
# ---------------------------------------------------------------------------

@dataclass
class ExperimentSpec:
    name: str
    family: FamilySpec
    theorem_id: str
    theorem_params: dict
    t_grid: tuple = (1.0, 1e4, 25)
    p: float = 2.0
    fit_tol_poly: float = 0.05
    fit_tol_log: float = 0.5
    bound_margin: float = 0.25
    t0: float = DEFAULT.t0
    stability_tol: float = 0.2
    stretched_slope_factor: float = 0.9
    witness_sup_norm: float | None = None

    def __post_init__(self):
        fam = self.family.named
        for key in ("alpha", "a", "beta", "b"):
            if key in fam and key in self.theorem_params and float(self.theorem_params[key]) != fam[key]:
                raise ParameterDomain(
                    f"{self.name}: theorem {key} = {self.theorem_params[key]} differs from family {key} = {fam[key]}")
        if self.theorem_params.get("p", self.p) != self.p:
            raise ParameterDomain(f"{self.name}: norm p and theorem p differ")

    def grid(self) -> np.ndarray:
        lo, hi, per = self.t_grid
        return default_t_grid(float(lo), float(hi), int(per))

    def params_for_prediction(self) -> dict:
        out = dict(self.theorem_params)
        out.setdefault("p", self.p)
        return out

    def to_json(self) -> dict:
        return {
            "name": self.name, "family": self.family.to_json(), "theorem_id": self.theorem_id,
            "theorem_params": self.theorem_params, "t_grid": list(self.t_grid), "p": self.p,
            "fit_tol_poly": self.fit_tol_poly, "fit_tol_log": self.fit_tol_log,
            "bound_margin": self.bound_margin, "t0": self.t0, "stability_tol": self.stability_tol,
            "stretched_slope_factor": self.stretched_slope_factor,
            "witness_sup_norm": self.witness_sup_norm,
        }

    @classmethod
    def from_json(cls, d: dict) -> "ExperimentSpec":
        d = dict(d)
        d["family"] = FamilySpec.from_json(d["family"])
        if "t_grid" in d:
            d["t_grid"] = tuple(d["t_grid"])
        return cls(**d)


PASS, FAIL, INCONCLUSIVE = "PASS", "FAIL", "INCONCLUSIVE"


@dataclass
class DecayReport:
    spec: ExperimentSpec
    curve: DecayCurve
    prediction: DecayPrediction
    fitted_C: float
    bound_ratio: np.ndarray
    max_ratio_tail: float
    tail_variation: float
    fitted_poly_exponent: float
    fit: FitResult | None
    verdict: str
    reasons: list
    flags: list = field(default_factory=list)
    sup_norm: float | None = None

    def to_json(self) -> dict:
        return {
            "experiment": self.spec.name,
            "spec": self.spec.to_json(),
            "prediction": self.prediction.to_json(),
            "curve": self.curve.to_json(),
            "fitted_C": self.fitted_C,
            "bound_ratio": self.bound_ratio.tolist(),
            "max_ratio_tail": self.max_ratio_tail,
            "tail_variation": self.tail_variation,
            "fitted_poly_exponent": self.fitted_poly_exponent,
            "fit": None if self.fit is None else self.fit.to_json(),
            "verdict": self.verdict,
            "reasons": list(self.reasons),
            "flags": list(self.flags),
            "sup_norm": self.sup_norm,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, indent=1)


def _tail_stats(t, ratio):
    """Max ratio over the last decade and its growth relative to the decade before."""
    t_hi = t[-1]
    last = ratio[t >= t_hi / 10]
    prev = ratio[(t >= t_hi / 100) & (t < t_hi / 10)]
    m_last = float(np.max(last))
    if prev.size == 0 or np.max(prev) == 0:
        return m_last, 0.0
    return m_last, m_last / float(np.max(prev)) - 1.0


def run_experiment(spec: ExperimentSpec, *, workers: int = 1) -> DecayReport:
    """Measure ``||T(t) W||`` for ``spec`` and compare with its predicted envelope."""
    pred = predict_decay(spec.theorem_id, spec.params_for_prediction())
    A = build_family(spec.family)
    W = weight_operator(A, pred.weight["family"], pred.weight["params"])
    curve = decay_curve(A, W, spec.grid(), spec.p, workers=workers)
    flags, reasons = [], []

    sup_norm = None
    if spec.witness_sup_norm is not None:
        sup_norm = float(np.max(decay_curve(A, None, spec.grid(), spec.p, workers=workers).values))

    t, v = curve.t_grid, curve.values
    low = np.nonzero(v <= FLOOR)[0]
    if low.size:
        # shorten the grid at the first point that hit the floor
        flags.append(f"floor: grid shortened at t = {t[low[0]]:.6g} ({t.size - low[0]} points dropped)")
        t, v = t[:low[0]], v[:low[0]]
        curve = DecayCurve(t, v, curve.weight, curve.norm_p)

    env = pred.envelope(t)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(env > 0, v / env, np.inf)
    window = t >= spec.t0
    if window.sum() < 10:
        return DecayReport(spec, curve, pred, math.nan, ratio, math.nan, math.nan, math.nan, None,
                           INCONCLUSIVE, ["fewer than 10 usable points with t >= t0"], flags, sup_norm)

    # constant fitted on [t0, t_max/10); the last decade is then an out-of-sample check
    calib = window & (t < t[-1] / 10)
    fitted_C = float(np.mean(ratio[calib] if calib.sum() >= 3 else ratio[window]))
    max_tail, variation = _tail_stats(t[window], ratio[window])

    if pred.stretched_exp:
        c, q = pred.stretched_exp
        fit = fit_exponents(curve, "stretched", b=1 / q - 1, window=(spec.t0, math.inf))
        fitted_exp = fit.slope
        if fit.slope > -spec.stretched_slope_factor * c:
            reasons.append(f"stretched slope {fit.slope:.4g} > {-spec.stretched_slope_factor * c:.4g}")
    else:
        if pred.log_exponent:
            fit = fit_exponents(curve, "poly_log", log_exponent=pred.log_exponent, window=(spec.t0, math.inf))
        else:
            fit = fit_exponents(curve, "poly", window=(spec.t0, math.inf))
        fitted_exp = fit.slope
        if fit.slope > pred.poly_exponent + spec.fit_tol_poly:
            reasons.append(f"fitted exponent {fit.slope:.4g} > predicted {pred.poly_exponent:.4g}"
                           f" + {spec.fit_tol_poly:g}")

    if not math.isfinite(max_tail) or max_tail > (1 + spec.bound_margin) * fitted_C:
        reasons.append(f"tail ratio {max_tail:.4g} exceeds (1 + {spec.bound_margin:g}) * C = "
                       f"{(1 + spec.bound_margin) * fitted_C:.4g}")
    if variation >= spec.stability_tol:
        reasons.append(f"tail ratio grew by {variation:.3g} over the last decade")
    if spec.witness_sup_norm is not None and sup_norm < spec.witness_sup_norm:
        reasons.append(f"sup ||T(t)|| = {sup_norm:.4g} < {spec.witness_sup_norm:g}")

    verdict = FAIL if reasons else PASS
    return DecayReport(spec, curve, pred, fitted_C, ratio, max_tail, variation, fitted_exp, fit,
                       verdict, reasons, flags, sup_norm)


def paper_suite(N: int = 2048, t_max: float = 1e4, per_decade: int = 25) -> list:
    """The reference decay-bound matrix (seven experiments)."""
    grid = (1.0, t_max, per_decade)
    return [
        ExperimentSpec("hilbert_inf_b0", FamilySpec("DiagInf", (1, 0), N), "CorHilbertInf",
                       {"beta": 1, "b": 0, "tau": 2}, grid),
        ExperimentSpec("hilbert_inf_b1", FamilySpec("DiagInf", (1, 1), N), "CorHilbertInf",
                       {"beta": 1, "b": 1, "tau": 2}, grid),
        ExperimentSpec("weighted_inf_b1", FamilySpec("DiagInf", (1, 1), N), "WeightedInf",
                       {"beta": 1, "b": 1, "tau": 2, "rho": 1, "delta": DEFAULT.delta}, grid),
        ExperimentSpec("weighted_inf_zero_two_sided", FamilySpec("DiagTwoSided", (1, 0, 1, 0), N),
                       "WeightedInfZero",
                       {"alpha": 1, "a": 0, "beta": 1, "b": 0, "sigma": 1, "tau": 2, "rho": 1, "delta": 1.1},
                       grid),
        ExperimentSpec("zero_a0", FamilySpec("DiagZero", (1, 0), N), "ThmZero",
                       {"alpha": 1, "a": 0, "sigma": 1, "delta": 0.1}, grid),
        ExperimentSpec("log_only_hilbert", FamilySpec("LogOnly", (1,), N), "LogOnlyHilbert",
                       {"b": 1, "tau": 1, "delta": 0.25}, (1.0, min(t_max, 1e3), per_decade)),
        ExperimentSpec("jordan_inf", FamilySpec("JordanUnboundedInf", (1, 1), min(N, 512)), "ThmInf",
                       {"beta": 1, "b": 0, "tau": 2, "delta": DEFAULT.delta}, grid, witness_sup_norm=5.0),
    ]


PRESETS = {"paper-suite": paper_suite}


def run_suite(specs, *, workers: int = 1) -> list:
    """Run experiments concurrently; results keep the input order."""
    return pmap(lambda s: run_experiment(s, workers=1), list(specs), workers)


SUMMARY_FIELDS = ("experiment", "theorem", "poly_pred", "poly_fit", "log_pred", "max_ratio_tail", "verdict")


def summary_csv(reports) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SUMMARY_FIELDS)
    for r in reports:
        w.writerow([r.spec.name, r.spec.theorem_id, repr(r.prediction.poly_exponent),
                    repr(r.fitted_poly_exponent), repr(r.prediction.log_exponent),
                    repr(r.max_ratio_tail), r.verdict])
    return buf.getvalue()
