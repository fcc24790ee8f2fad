"""Resolvent growth along the imaginary axis and decay-rate predictions."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.interpolate import PchipInterpolator

from .cbf import CheckReport
from .config import DEFAULT
from .errors import (
    HypothesisViolated,
    InsufficientSamples,
    ParameterDomain,
    RangeExceeded,
    SingularShift,
)
from .linop import OperatorModel, _as_p, batch_norms, inv_r, shifted_inverse_batch

# ---------------------------------------------------------------------------
# profiling
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ProfilePlan:
    """Sample points ``s`` for ``||(is + A)^{-1}||``.

    Two log-spaced clusters: ``zero`` (only used for injective operators) and
    ``inf``.  With ``refine_spectrum`` the values ``|Im lambda_k|`` falling in
    either range are added, so resolvent peaks are hit exactly.
    """

    inf_range: tuple = (1.0, 1e6)
    zero_range: tuple = (1e-6, 1.0)
    per_decade: int = 32
    refine_spectrum: bool = True

    def samples(self, A: OperatorModel) -> np.ndarray:
        pts = [_logspace(*self.inf_range, self.per_decade)]
        if A.injective:
            pts.append(_logspace(*self.zero_range, self.per_decade))
        s = np.concatenate(pts)
        if self.refine_spectrum and A.dim:
            ims = np.abs(A.eigenvalues.imag)
            keep = (ims >= self.inf_range[0]) & (ims <= self.inf_range[1])
            if A.injective:
                keep |= (ims >= self.zero_range[0]) & (ims <= self.zero_range[1])
            s = np.concatenate([s, ims[keep]])
        return np.unique(s)


def _logspace(lo, hi, per_decade):
    n = max(int(round(math.log10(hi / lo) * per_decade)) + 1, 2)
    return np.logspace(math.log10(lo), math.log10(hi), n)


@dataclass
class GrowthFit:
    exponent: float
    log_exponent: float
    C: float
    r2: float
    se: tuple = (0.0, 0.0, 0.0)
    clamped: bool = False
    dropped_log: bool = False
    n_samples: int = 0
    window: tuple = ()

    def as_tuple(self) -> tuple:
        return (self.exponent, self.log_exponent, self.C, self.r2)

    def to_json(self) -> dict:
        return {
            "exponent": self.exponent, "log_exponent": self.log_exponent, "C": self.C, "r2": self.r2,
            "se": list(self.se), "clamped": self.clamped, "dropped_log": self.dropped_log,
            "n_samples": self.n_samples, "window": list(self.window),
        }


@dataclass
class GrowthProfile:
    s: np.ndarray
    n: np.ndarray
    M: np.ndarray
    M_inf: np.ndarray
    M_zero: np.ndarray
    injective: bool = False
    fit_inf: GrowthFit | None = None
    fit_zero: GrowthFit | None = None

    @property
    def beta_fit(self):
        return None if self.fit_inf is None else self.fit_inf.exponent

    @property
    def alpha_fit(self):
        return None if self.fit_zero is None else self.fit_zero.exponent

    def to_json(self) -> dict:
        return {
            "s": self.s.tolist(), "n": self.n.tolist(), "M": self.M.tolist(),
            "injective": self.injective,
            "fit_inf": None if self.fit_inf is None else self.fit_inf.to_json(),
            "fit_zero": None if self.fit_zero is None else self.fit_zero.to_json(),
        }


def _running_max_forward(s, n, lo):
    out = np.full(n.shape, np.nan)
    mask = s >= lo
    out[mask] = np.maximum.accumulate(n[mask]) if mask.any() else out[mask]
    return out


def _running_max_backward(s, n, hi):
    out = np.full(n.shape, np.nan)
    mask = s <= hi
    if mask.any():
        out[mask] = np.maximum.accumulate(n[mask][::-1])[::-1]
    return out


def profile_from_samples(s, n, injective: bool = False, split: float = 1.0) -> GrowthProfile:
    """Wrap sampled values ``n(s)`` (any positive sequence) as a profile."""
    s = np.asarray(s, dtype=float)
    n = np.asarray(n, dtype=float)
    order = np.argsort(s)
    s, n = s[order], n[order]
    if np.any(n <= 0) or np.any(~np.isfinite(n)):
        raise ValueError("profile values must be positive and finite")
    return GrowthProfile(s, n, np.maximum.accumulate(n), _running_max_forward(s, n, split),
                         _running_max_backward(s, n, split), injective)


def resolvent_profile(A: OperatorModel, plan: ProfilePlan | None = None, space=2, *,
                      chunk: int = 256) -> GrowthProfile:
    """``n(s) = max(|(is + A)^{-1}|, |(-is + A)^{-1}|)`` and running maxima."""
    plan = plan or ProfilePlan()
    p = _as_p(space)
    s = plan.samples(A)
    n = np.empty_like(s)
    for lo in range(0, s.size, chunk):
        ss = s[lo:lo + chunk]
        with np.errstate(all="ignore"):
            up = batch_norms(A.kind, shifted_inverse_batch(A, 1.0, 1j * ss), p)
            dn = batch_norms(A.kind, shifted_inverse_batch(A, 1.0, -1j * ss), p)
        vals = np.maximum(up, dn)
        bad = ~np.isfinite(vals) | (vals > 1e15)
        if np.any(bad):
            raise SingularShift(f"(is + A) singular at s = {ss[bad][0]:.6g}")
        n[lo:lo + chunk] = vals
    return profile_from_samples(s, n, A.injective)


# ---------------------------------------------------------------------------
# growth fits
# ---------------------------------------------------------------------------

def _window_data(profile, window, which):
    if isinstance(profile, GrowthProfile):
        s = profile.s
        vals = profile.M_inf if which == "inf" else profile.M_zero
        if np.all(np.isnan(vals)):
            vals = profile.n
    else:
        s, vals = map(lambda v: np.asarray(v, float), profile)
        order = np.argsort(s)
        s, vals = s[order], vals[order]
        vals = np.maximum.accumulate(vals) if which == "inf" else np.maximum.accumulate(vals[::-1])[::-1]
    lo, hi = window
    mask = (s >= lo) & (s <= hi) & np.isfinite(vals)
    return s[mask], vals[mask]


def _loglog_regression(x, y):
    """Least squares ``y ~ c0 + c1 x + c2 log x``; returns coef, se, r2."""
    X = np.column_stack([np.ones_like(x), x, np.log(x)])
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ coef
    dof = max(len(y) - 3, 1)
    sigma2 = float(resid @ resid) / dof
    cov = sigma2 * np.linalg.pinv(X.T @ X)
    se = np.sqrt(np.maximum(np.diag(cov), 0))
    return coef, se, _r2(y, resid)


def _r2(y, resid):
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot <= 1e-24 * max(1.0, float(y @ y)):
        return 1.0
    return 1 - float(resid @ resid) / ss_tot


def _fit(x, y, window, min_exponent=0.0):
    if len(x) < 12:
        raise InsufficientSamples(f"{len(x)} samples in window {window}; need >= 12")
    if np.any(x <= 1):
        raise ParameterDomain("window must keep log s > 1 (s > e)")
    coef, se, r2 = _loglog_regression(x, y)
    dropped = False
    if coef[2] < 0 or abs(coef[2]) <= max(2 * se[2], 1e-8):
        X = np.column_stack([np.ones_like(x), x])
        c2, *_ = np.linalg.lstsq(X, y, rcond=None)
        resid = y - X @ c2
        dof = max(len(y) - 2, 1)
        cov = float(resid @ resid) / dof * np.linalg.pinv(X.T @ X)
        coef = np.array([c2[0], c2[1], 0.0])
        se = np.array([math.sqrt(max(cov[0, 0], 0)), math.sqrt(max(cov[1, 1], 0)), 0.0])
        r2 = _r2(y, resid)
        dropped = True
    exponent = float(coef[1])
    clamped = False
    if exponent < min_exponent:
        exponent, clamped = float(min_exponent), True
    return GrowthFit(exponent, float(coef[2]), float(math.exp(coef[0])), float(r2),
                     tuple(float(v) for v in se), clamped, dropped, len(x), tuple(window))


def fit_growth_infinity(profile, window: tuple = (1e2, 1e6)) -> GrowthFit:
    """Fit ``log M(s) ~ log C + beta log s + b log log s`` on ``window``.

    ``profile`` is a :class:`GrowthProfile` or a pair ``(s, n)``.  The
    log-log term is dropped when it is negative or within two standard errors
    of zero.
    """
    s, v = _window_data(profile, window, "inf")
    fit = _fit(np.log(s), np.log(v), window) if len(s) else _fit(np.array([]), np.array([]), window)
    if isinstance(profile, GrowthProfile):
        profile.fit_inf = fit
    return fit


def fit_growth_zero(profile, window: tuple = (1e-6, 1e-2)) -> GrowthFit:
    """Fit ``log M(s) ~ log C + alpha log(1/s) + a log log(1/s)``; ``alpha`` clamped to >= 1."""
    s, v = _window_data(profile, window, "zero")
    fit = _fit(np.log(1 / s), np.log(v), window, min_exponent=1.0) if len(s) else \
        _fit(np.array([]), np.array([]), window)
    if isinstance(profile, GrowthProfile):
        profile.fit_zero = fit
    return fit


def growth_bound_estimate(t, values, tail_fraction: float = 0.5) -> float:
    """Slope of ``log ||T(t)||`` against ``t`` over the last part of a curve."""
    t = np.asarray(t, float)
    v = np.asarray(values, float)
    k = max(int(len(t) * (1 - tail_fraction)), 0)
    tt, vv = t[k:], v[k:]
    mask = vv > 0
    if mask.sum() < 2:
        return -math.inf
    return float(np.polyfit(tt[mask], np.log(vv[mask]), 1)[0])


# ---------------------------------------------------------------------------
# M_log and friends
# ---------------------------------------------------------------------------

@dataclass
class FunctionTable:
    s: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.s = np.asarray(self.s, float)
        self.values = np.asarray(self.values, float)
        if self.s.shape != self.values.shape:
            raise ValueError("s and values differ in length")
        if np.any(np.diff(self.s) <= 0):
            raise ValueError("s must be strictly increasing")

    def interpolant(self) -> Callable:
        return PchipInterpolator(self.s, self.values, extrapolate=False)


def _as_table(M, s=None) -> FunctionTable:
    if isinstance(M, FunctionTable):
        return M
    if isinstance(M, GrowthProfile):
        return FunctionTable(M.s, M.M)
    if callable(M):
        s = np.asarray(s, float)
        return FunctionTable(s, np.array([M(x) for x in s], float))
    s_arr, vals = M
    return FunctionTable(s_arr, vals)


def m_log(M, s=None) -> FunctionTable:
    """``M_log(s) = M(s) (log(1 + M(s)) + log(1 + s))`` on the table grid."""
    tab = _as_table(M, s)
    if np.any(tab.values <= 0):
        raise ParameterDomain("M must be positive")
    if np.any(np.diff(tab.values) < 0):
        raise ParameterDomain("M must be nondecreasing")
    v = tab.values * (np.log1p(tab.values) + np.log1p(tab.s))
    return FunctionTable(tab.s, v)


def m_log_right_inverse(table: FunctionTable, t: float, *, rtol: float = 1e-9, full_output: bool = False):
    """Largest ``s`` with ``M_log(s) <= t`` (monotone interpolation plus bisection)."""
    s, v = table.s, table.values
    if t > v[-1]:
        raise RangeExceeded(f"t = {t} exceeds the table maximum {v[-1]}")
    if t < v[0]:
        return (float(s[0]), True) if full_output else float(s[0])
    idx = int(np.searchsorted(v, t, side="right")) - 1
    if idx >= len(s) - 1 or v[idx] == t:
        out = float(s[idx])
        return (out, False) if full_output else out
    f = table.interpolant()
    lo, hi = float(s[idx]), float(s[idx + 1])
    while hi - lo > rtol * hi:
        mid = 0.5 * (lo + hi)
        if float(f(mid)) <= t:
            lo = mid
        else:
            hi = mid
    return (lo, False) if full_output else lo


PI_LAMBDAS = (1.0, 2.0, 5.0, 10.0, 100.0, 1000.0)


def positive_increase_check(table, alpha: float, c: float, s0: float, *,
                            lambdas: Sequence[float] = PI_LAMBDAS, s=None) -> CheckReport:
    """Scan ``M(lam s) / M(s) >= c lam^alpha`` over ``lam`` and grid points ``s >= s0``."""
    if alpha <= 0 or not 0 < c <= 1:
        raise ParameterDomain("need alpha > 0 and c in (0, 1]")
    tab = _as_table(table, s)
    f = tab.interpolant()
    violations, checked = [], 0
    for lam in lambdas:
        for x in tab.s[tab.s >= s0]:
            y = lam * x
            if y > tab.s[-1] * (1 + 1e-12):
                break
            num = float(f(min(y, tab.s[-1])))
            ratio = num / float(f(x))
            checked += 1
            if ratio < c * lam ** alpha * (1 - 1e-9):
                violations.append((x, ratio, f"M({lam:g}s)/M(s) = {ratio:.4g} < {c * lam ** alpha:.4g}"))
    ok = not violations
    return CheckReport("positive_increase", ok, checked, violations,
                       note="no violation found" if ok else f"{len(violations)} violations")


def slowly_varying_bound_check(ell: Callable, gamma: float, grid: Sequence[float], *,
                               c_min: float = 0.1, C_max: float = 10.0) -> CheckReport:
    """Empirical constants in ``c (s/t)^g <= l(t)/l(s) <= C (t/s)^g`` for ``t >= s``.

    The check passes when the empirical ``c`` and ``C`` are finite, positive and
    within ``[c_min, C_max]``.
    """
    if gamma <= 0:
        raise ParameterDomain("gamma must be positive")
    g = np.sort(np.asarray(grid, float))
    vals = np.array([float(ell(x)) for x in g])
    S, T = np.meshgrid(g, g, indexing="ij")
    mask = T >= S
    ratio = vals[None, :] / vals[:, None]
    lower = (ratio / (S / T) ** gamma)[mask]
    upper = (ratio / (T / S) ** gamma)[mask]
    c_emp, C_emp = float(np.min(lower)), float(np.max(upper))
    violations = []
    if not (np.isfinite(c_emp) and c_emp > 0 and c_emp >= c_min):
        violations.append((gamma, c_emp, f"lower constant {c_emp:.4g} below {c_min:g}"))
    if not (np.isfinite(C_emp) and C_emp <= C_max):
        violations.append((gamma, C_emp, f"upper constant {C_emp:.4g} above {C_max:g}"))
    return CheckReport("slowly_varying_bound", not violations, int(mask.sum()), violations,
                       note=f"c={c_emp:.4g}, C={C_emp:.4g}", details={"c": c_emp, "C": C_emp})


# ---------------------------------------------------------------------------
# predictions
# ---------------------------------------------------------------------------

THEOREMS = (
    "ThmInf", "CorHilbertInf", "CorInfB0", "ThmInfZero", "CorInfZeroAB0",
    "ThmZero", "CorZeroA0", "LogOnlyBanach", "LogOnlyHilbert",
    "WeightedInf", "WeightedInfZero",
)


@dataclass
class DecayPrediction:
    """Envelope ``exp(-c t^q) t^poly log(1+t)^log_exp`` (constant left free)."""

    theorem_id: str
    poly_exponent: float
    log_exponent: float
    stretched_exp: tuple | None = None
    weight: dict = field(default_factory=dict)
    validity: dict = field(default_factory=dict)

    def envelope(self, t):
        t = np.asarray(t, float)
        out = t ** self.poly_exponent * np.log1p(t) ** self.log_exponent
        if self.stretched_exp:
            c, q = self.stretched_exp
            out = out * np.exp(-c * t ** q)
        return out

    def log_envelope(self, t):
        t = np.asarray(t, float)
        out = self.poly_exponent * np.log(t) + self.log_exponent * np.log(np.log1p(t))
        if self.stretched_exp:
            c, q = self.stretched_exp
            out = out - c * t ** q
        return out

    @property
    def form(self) -> str:
        base = f"t^({self.poly_exponent:.6g}) * log(1+t)^({self.log_exponent:.6g})"
        if self.stretched_exp:
            c, q = self.stretched_exp
            base = f"exp(-{c:.6g} * t^({q:.6g})) * " + base
        return base

    def to_json(self) -> dict:
        return {
            "theorem_id": self.theorem_id,
            "poly": self.poly_exponent,
            "logexp": self.log_exponent,
            "stretched": None if self.stretched_exp is None else list(self.stretched_exp),
            "form": self.form,
            "weight": self.weight,
            "validity": self.validity,
        }


class _Hyp:
    """Collects named inequalities and raises on the first failure."""

    def __init__(self, theorem):
        self.theorem = theorem
        self.checked = {}

    def __call__(self, ok: bool, text: str):
        self.checked[text] = bool(ok)
        if not ok:
            raise HypothesisViolated(self.theorem, text)


def _get(params, key, default=None, required=False):
    if key in params and params[key] is not None:
        return float(params[key])
    if required:
        raise ParameterDomain(f"parameter {key!r} is required")
    return default


def predict_decay(theorem_id: str, params: dict) -> DecayPrediction:
    """Envelope exponents for ``theorem_id`` after checking its hypotheses.

    ``params`` may contain ``alpha, a, beta, b, sigma, tau, rho, delta,
    epsilon, p, c``.  Raises :class:`HypothesisViolated` naming the first
    inequality that fails.
    """
    if theorem_id not in THEOREMS:
        raise ParameterDomain(f"unknown theorem id {theorem_id!r}")
    P = dict(params)
    h = _Hyp(theorem_id)
    p = _get(P, "p", 2.0)
    h(1 <= p <= 2, "1 <= p <= 2")
    ir = inv_r(p)
    delta = _get(P, "delta", DEFAULT.delta)
    eps = _get(P, "epsilon", DEFAULT.epsilon)
    a = _get(P, "a", 0.0)
    b = _get(P, "b", 0.0)
    h(a >= 0, "a >= 0")
    h(b >= 0, "b >= 0")

    tid = theorem_id
    if tid in ("ThmInf", "CorHilbertInf", "CorInfB0", "WeightedInf"):
        beta = _get(P, "beta", required=True)
        tau = _get(P, "tau", required=True)
        h(beta > 0, "beta > 0")
        if tid == "CorHilbertInf":
            h(p == 2, "p = 2 (Hilbert space)")
            h(tau > beta, "tau > beta")
            return DecayPrediction(tid, 1 - tau / beta, b * tau / beta, None,
                                   {"family": "Infinity", "params": {"nu": tau, "upsilon": 0.0}}, h.checked)
        h(tau > 0, "tau > 0")
        h(tau > beta + ir, "tau > beta + 1/r")
        h(delta > 0, "delta > 0")
        if tid == "ThmInf":
            return DecayPrediction(tid, 1 - (tau - ir) / beta, b * (tau - ir) / beta + (1 + delta) * ir, None,
                                   {"family": "Infinity", "params": {"nu": tau, "upsilon": 0.0}}, h.checked)
        rho_max = (tau - ir) / beta - 1
        rho = _get(P, "rho", rho_max)
        h(0 <= rho, "rho >= 0")
        h(rho <= rho_max, "rho <= (tau - 1/r)/beta - 1")
        if tid == "CorInfB0":
            h(b == 0, "b = 0")
            return DecayPrediction(tid, -rho, (1 + delta) * ir, None,
                                   {"family": "Infinity", "params": {"nu": tau, "upsilon": 0.0}}, h.checked)
        upsilon = b / beta * (tau - ir) + (1 + delta) * ir
        return DecayPrediction(tid, -rho, 0.0, None,
                               {"family": "Infinity", "params": {"nu": tau, "upsilon": upsilon}}, h.checked)

    if tid in ("ThmInfZero", "CorInfZeroAB0", "WeightedInfZero"):
        alpha = _get(P, "alpha", required=True)
        beta = _get(P, "beta", required=True)
        sigma = _get(P, "sigma", required=True)
        tau = _get(P, "tau", required=True)
        h(alpha >= 1, "alpha >= 1")
        h(beta > 0, "beta > 0")
        if tid == "CorInfZeroAB0":
            h(a == 0 and b == 0, "a = b = 0")
        if tid == "WeightedInfZero":
            h(sigma >= alpha - 1, "sigma >= alpha - 1")
            h(tau >= beta + ir, "tau >= beta + 1/r")
        else:
            h(sigma > alpha - 1, "sigma > alpha - 1")
            h(tau > beta + ir, "tau > beta + 1/r")
        h(delta > 1 - ir, "delta > 1 - 1/r")
        rho_max = min((sigma + 1) / alpha - 1, (tau - ir) / beta - 1)
        rho = _get(P, "rho", rho_max)
        h(0 <= rho, "rho >= 0")
        h(rho <= rho_max, "rho <= min((sigma+1)/alpha - 1, (tau - 1/r)/beta - 1)")
        c = max(a, b)
        log_exp = c * (math.ceil(rho) + 1) + ir + delta
        if tid == "CorInfZeroAB0":
            log_exp = ir + delta
        if tid == "WeightedInfZero":
            return DecayPrediction(tid, -rho, 0.0, None,
                                   {"family": "InfinityZero", "params": {"mu": sigma, "nu": tau, "upsilon": log_exp}},
                                   h.checked)
        return DecayPrediction(tid, -rho, log_exp, None,
                               {"family": "InfinityZero", "params": {"mu": sigma, "nu": tau, "upsilon": 0.0}},
                               h.checked)

    if tid in ("ThmZero", "CorZeroA0"):
        alpha = _get(P, "alpha", required=True)
        sigma = _get(P, "sigma", required=True)
        h(alpha >= 1, "alpha >= 1")
        if tid == "CorZeroA0":
            h(a == 0, "a = 0")
        h(sigma > alpha - 1, "sigma > alpha - 1")
        h(delta > 0, "delta > 0")
        log_exp = a * (sigma + 1) / alpha + 1 + delta
        return DecayPrediction(tid, 1 - (sigma + 1) / alpha, log_exp, None,
                               {"family": "Zero", "params": {"mu": sigma, "upsilon": 0.0}}, h.checked)

    # log-only growth
    tau = _get(P, "tau", required=True)
    h(eps > 0, "epsilon > 0")
    q = 1 / (b + 1)
    weight = {"family": "Infinity", "params": {"nu": tau, "upsilon": 0.0}}
    if tid == "LogOnlyBanach":
        c = _get(P, "c", DEFAULT.c_logonly)
        h(p < 2, "p < 2 (r finite)")
        h(0 < c < 0.5, "0 < c < 1/2")
        h(delta > 0, "delta > 0")
        r = 1 / ir
        h(tau > ir, "tau > 1/r")
        poly = tau * r / (b + 1) * (b * (eps + 1) + (1 + delta) * ir)
        return DecayPrediction(tid, poly, 0.0, (c * tau * r, q), weight, h.checked)
    h(p == 2, "p = 2 (Hilbert space)")
    h(0 < delta < 0.5, "0 < delta < 1/2")
    h(tau > delta, "tau > delta")
    poly = tau * b * (eps + 1) / (delta * (b + 1))
    return DecayPrediction(tid, poly, 0.0, (tau, q), weight, h.checked)
