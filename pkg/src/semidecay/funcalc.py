"""Sector-contour functional calculus, logarithms and weight operators.

Two independent routes compute functions of an :class:`OperatorModel`:

* :func:`dunford_apply` integrates ``f(z) (z - A)^{-1}`` over the boundary of a
  sector containing the spectrum (trapezoid rule in ``log|z|``);
* :func:`matrix_function_oracle` works spectrally (entrywise, 2x2 Newton form,
  or eigendecomposition).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .cbf import CheckReport, _gl_panels, _spectral_extent, nollau_log1p_operator
from .config import DEFAULT
from .errors import (
    BranchCutIntersection,
    ContourTooTight,
    IllConditionedEigenbasis,
    NotInjective,
    ParameterDomain,
    TailBoundExceeded,
)
from .linop import (
    BLOCK,
    DENSE,
    DIAGONAL,
    OperatorModel,
    operator_norm,
    resolvent_shift,
    shifted_inverse_batch,
)

TWO_PI = 2 * math.pi
COND_LIMIT = 1e8


# ---------------------------------------------------------------------------
# symbols and contours
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class HInftyZeroSymbol:
    """``z^a / ((1+z)^(a+b) log(2+z)^u1 (2 pi - i log z)^u2)``."""

    alpha: float = 0.0
    beta: float = 1.0
    upsilon1: float = 0.0
    upsilon2: float = 0.0

    def __post_init__(self):
        if self.alpha < 0 or self.beta <= 0 or self.upsilon1 < 0 or self.upsilon2 < 0:
            raise ParameterDomain("need alpha >= 0, beta > 0, upsilon1 >= 0, upsilon2 >= 0")

    def __call__(self, z):
        z = np.asarray(z, dtype=complex)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = (1 + z) ** (-(self.alpha + self.beta))
            if self.alpha:
                out = out * np.where(z == 0, 0, z ** self.alpha)
            if self.upsilon1:
                out = out * np.log(2 + z) ** (-self.upsilon1)
            if self.upsilon2:
                out = out * (TWO_PI - 1j * np.log(z)) ** (-self.upsilon2)
            if self.alpha:
                out = np.where(z == 0, 0, out)
        return out

    def to_json(self) -> dict:
        return {"alpha": self.alpha, "beta": self.beta, "upsilon1": self.upsilon1, "upsilon2": self.upsilon2}


@dataclass(frozen=True)
class SectorContour:
    """Boundary of ``S_{omega'}`` from ``inf*e^{i omega'}`` through 0 to ``inf*e^{-i omega'}``."""

    omega_prime: float
    r_min: float
    r_max: float
    nodes_per_decade: int = 32

    def __post_init__(self):
        if not 0 < self.omega_prime < math.pi:
            raise ParameterDomain("omega_prime must lie in (0, pi)")
        if not 0 < self.r_min < self.r_max:
            raise ParameterDomain("need 0 < r_min < r_max")
        if self.nodes_per_decade < 4:
            raise ParameterDomain("nodes_per_decade must be >= 4")

    @property
    def h(self) -> float:
        return math.log(10.0) / self.nodes_per_decade


def spectral_angle(A: OperatorModel) -> float:
    ev = A.eigenvalues
    ev = ev[np.abs(ev) > 0]
    return float(np.max(np.abs(np.angle(ev)))) if ev.size else 0.0


def default_contour(A: OperatorModel, nodes_per_decade: int = 32) -> SectorContour:
    omega_a = spectral_angle(A)
    mods = np.abs(A.eigenvalues)
    nz = mods[mods > 0]
    r_min = 1e-6 * (float(nz.min()) if nz.size else 1.0)
    r_max = 1e6 * float(np.max(1 + mods)) if mods.size else 1e6
    return SectorContour((omega_a + math.pi) / 2, r_min, r_max, nodes_per_decade)


@dataclass
class DunfordInfo:
    contour: SectorContour
    tail_bound: float
    richardson_error: float
    n_nodes: int

    def to_json(self) -> dict:
        c = self.contour
        return {
            "omega_prime": c.omega_prime, "r_min": c.r_min, "r_max": c.r_max,
            "nodes_per_decade": c.nodes_per_decade, "tail_bound": self.tail_bound,
            "richardson_error": self.richardson_error, "n_nodes": self.n_nodes,
        }


def _contour_sum(f, A: OperatorModel, omega: float, u: np.ndarray, chunk: int = 512):
    """Sum over nodes ``u`` of the ray integrands, both rays, no weights."""
    e_up, e_dn = np.exp(1j * omega), np.exp(-1j * omega)
    total = np.zeros(A.data.shape, complex)
    for lo in range(0, u.size, chunk):
        r = np.exp(u[lo:lo + chunk])
        for sign, e in ((-1.0, e_up), (1.0, e_dn)):
            z = r * e
            coef = sign * f(z) * z
            inv = shifted_inverse_batch(A, -1.0, z)  # (z - A)^{-1}
            total += np.tensordot(coef, inv, axes=1)
    return total


def _endpoint_norm(f, A, omega, r, space=2):
    vals = []
    for e in (np.exp(1j * omega), np.exp(-1j * omega)):
        z = r * e
        inv = shifted_inverse_batch(A, -1.0, z)[0]
        vals.append(abs(complex(f(np.array([z]))[0])) * r * operator_norm(A.like(inv), space))
    return max(vals)


def dunford_apply(symbol, A: OperatorModel, contour: SectorContour | None = None, *,
                  tol: float = 1e-10, full_output: bool = False, max_r_decades: float = 300.0):
    """``f(A) = (2 pi i)^{-1} int_Gamma f(z) (z - A)^{-1} dz``.

    Trapezoid rule in ``u = log r`` on both rays.  The truncation radii are
    widened until the estimated tails fall below ``tol * (1 + |f(A)|)``; the
    discretisation error is estimated by comparing step ``h`` with ``2h``.
    """
    contour = contour or default_contour(A)
    if isinstance(symbol, HInftyZeroSymbol):
        decay_inf = symbol.beta
        decay_zero = symbol.alpha + 1 if A.injective else symbol.alpha
        if decay_zero <= 0:
            raise ParameterDomain("alpha = 0 requires an invertible operator")
    else:
        decay_inf = getattr(symbol, "decay_inf", 1.0)
        decay_zero = getattr(symbol, "decay_zero", 1.0)
    f = symbol
    omega = contour.omega_prime
    h = contour.h

    ev = A.eigenvalues
    nz = ev[np.abs(ev) > 0]
    if nz.size and np.any(omega - np.abs(np.angle(nz)) < 2 * h):
        raise ContourTooTight(f"spectrum within two node spacings of the contour angle {omega:.4f}")

    # widen truncation radii until the tails are below tolerance
    scale = 1.0 + max(abs(complex(f(np.array([v]))[0])) for v in ev) if ev.size else 1.0
    target = tol * scale
    r_min, r_max = contour.r_min, contour.r_max
    step = 10.0 ** 2
    lo_limit = contour.r_min * 10.0 ** (-max_r_decades)
    hi_limit = contour.r_max * 10.0 ** max_r_decades
    tail_hi = _endpoint_norm(f, A, omega, r_max) / (math.pi * decay_inf)
    while tail_hi > target / 2 and r_max < hi_limit:
        r_max *= step
        tail_hi = _endpoint_norm(f, A, omega, r_max) / (math.pi * decay_inf)
    tail_lo = _endpoint_norm(f, A, omega, r_min) / (math.pi * decay_zero)
    while tail_lo > target / 2 and r_min > max(lo_limit, 1e-300):
        r_min /= step
        tail_lo = _endpoint_norm(f, A, omega, r_min) / (math.pi * decay_zero)
    tail = tail_hi + tail_lo
    if tail > target:
        raise TailBoundExceeded(f"truncation tail {tail:.3g} above tolerance {target:.3g}")

    # node grid anchored at log r_min; step h, with the 2h subgrid for Richardson
    u0, u1 = math.log(r_min), math.log(r_max)
    n = int(math.ceil((u1 - u0) / h))
    n += n % 2
    u = u0 + h * np.arange(n + 1)
    S_even = _contour_sum(f, A, omega, u[::2])
    S_all = S_even + _contour_sum(f, A, omega, u[1::2])
    norm = 1 / (2j * math.pi)
    fine = A.like(norm * h * S_all)
    coarse = A.like(norm * 2 * h * S_even)
    rich = operator_norm(fine - coarse)
    if full_output:
        return fine, DunfordInfo(SectorContour(omega, r_min, r_max, contour.nodes_per_decade), tail, rich, 2 * u.size)
    return fine


# ---------------------------------------------------------------------------
# spectral oracle
# ---------------------------------------------------------------------------

def _apply_scalar(f, values):
    values = np.asarray(values, dtype=complex)
    try:
        out = np.asarray(f(values), dtype=complex)
        if out.shape == values.shape:
            return out
    except Exception:
        pass
    return np.array([complex(f(complex(v))) for v in values.ravel()], dtype=complex).reshape(values.shape)


def divided_difference(f, l1: complex, l2: complex, fprime=None, n_circle: int = 64) -> complex:
    """``f[l1, l2]``; confluent or near-confluent pairs use a Cauchy integral."""
    l1, l2 = complex(l1), complex(l2)
    scale = max(abs(l1), abs(l2), 1e-300)
    if abs(l1 - l2) > 1e-3 * scale:
        f1, f2 = _apply_scalar(f, [l1, l2])
        return (f1 - f2) / (l1 - l2)
    if fprime is not None and l1 == l2:
        return complex(fprime(l1))
    mid = (l1 + l2) / 2
    rho = 0.25 * abs(mid) if mid != 0 else 1e-3
    rho = max(rho, 4 * abs(l1 - l2))
    theta = 2 * math.pi * np.arange(n_circle) / n_circle
    z = mid + rho * np.exp(1j * theta)
    fz = _apply_scalar(f, z)
    # (1/2 pi i) int f/((z-l1)(z-l2)) dz with dz = i (z - mid) dtheta
    return complex(np.mean(fz * (z - mid) / ((z - l1) * (z - l2))))


def _fun_2x2(f, B, fprime=None):
    ev = np.linalg.eigvals(B)
    l1, l2 = ev[0], ev[1]
    f1 = _apply_scalar(f, [l1])[0]
    dd = divided_difference(f, l1, l2, fprime)
    return f1 * np.eye(2) + dd * (B - l1 * np.eye(2))


def _fun_eig(f, B):
    w, V = np.linalg.eig(B)
    cond = np.linalg.cond(V)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise IllConditionedEigenbasis(f"eigenvector condition number {cond:.3g} exceeds {COND_LIMIT:g}")
    fw = _apply_scalar(f, w)
    return (V * fw) @ np.linalg.inv(V)


def matrix_function_oracle(f: Callable, A: OperatorModel, fprime: Callable | None = None) -> OperatorModel:
    """Primary matrix function ``f(A)`` computed spectrally."""
    if A.kind == DIAGONAL:
        return A.like(_apply_scalar(f, A.data))
    if A.kind == BLOCK:
        k, m, _ = A.data.shape
        if m == 1:
            return A.like(_apply_scalar(f, A.data[:, 0, 0])[:, None, None])
        if m == 2:
            return A.like(np.stack([_fun_2x2(f, B, fprime) for B in A.data]) if k else A.data)
        return A.like(np.stack([_fun_eig(f, B) for B in A.data]) if k else A.data)
    if A.dim == 1:
        return A.like(_apply_scalar(f, A.data))
    if A.dim == 2:
        return A.like(_fun_2x2(f, A.data, fprime))
    return A.like(_fun_eig(f, A.data))


# ---------------------------------------------------------------------------
# powers and logarithms
# ---------------------------------------------------------------------------

def _check_off_cut(values, shift=0.0, what="spectrum"):
    z = np.asarray(values) + shift
    on_cut = (np.abs(z.imag) <= 1e-14 * np.maximum(1, np.abs(z))) & (z.real <= 0)
    if np.any(on_cut):
        raise BranchCutIntersection(f"{what} meets the branch cut (-inf, 0]")


def frac_power_inv(A: OperatorModel, tau: float, *, cross_check: bool = False) -> OperatorModel:
    """``(I + A)^{-tau}`` with the principal branch."""
    _check_off_cut(A.eigenvalues, 1.0, "spectrum of 1 + A")
    out = matrix_function_oracle(lambda z: (1 + z) ** (-tau), A)
    if cross_check and A.injective and tau > 0:
        alt = dunford_apply(HInftyZeroSymbol(0.0, tau), A)
        err = operator_norm(out - alt)
        if err > 1e-6 * (1 + operator_norm(out)):
            raise ParameterDomain(f"Dunford cross-check disagrees by {err:.3g}")
    return out


def power_operator(A: OperatorModel, mu: float) -> OperatorModel:
    """``A^mu`` (principal branch)."""
    if mu == 0:
        return A.identity_like()
    if float(mu).is_integer() and mu > 0:
        out = A
        for _ in range(int(mu) - 1):
            out = out @ A
        return out
    _check_off_cut(A.eigenvalues[np.abs(A.eigenvalues) > 0], 0.0)
    return matrix_function_oracle(lambda z: np.where(z == 0, 0, np.asarray(z, complex) ** mu), A)


def _log1p_inverse_operator(A: OperatorModel, *, extra: float = 40.0, nodes: int = 16,
                            panel: float = 1.0) -> OperatorModel:
    """``log(1 + A^{-1}) = int_0^inf e^{-u} (e^{-u} + A)^{-1} du`` without forming ``A^{-1}``."""
    lo, _ = _spectral_extent(A)
    U = max(-math.log(lo), 0.0) + extra
    u, w, U = _gl_panels(U, nodes, panel)
    total = np.zeros(A.data.shape, complex)
    for i in range(0, u.size, 256):
        s = np.exp(-u[i:i + 256])
        total += np.tensordot(w[i:i + 256] * s, shifted_inverse_batch(A, 1.0, s), axes=1)
    eU = math.exp(-U)
    tail = resolvent_shift(A, eU) * eU
    return A.like(total) + tail


def log_operator(A: OperatorModel) -> OperatorModel:
    """``log A = log(1 + A) - log(1 + A^{-1})`` for injective sectorial ``A``."""
    if not A.injective:
        raise NotInjective("log(A) needs an injective operator")
    _check_off_cut(A.eigenvalues)
    return nollau_log1p_operator(A) - _log1p_inverse_operator(A)


def log_scaling_check(A: OperatorModel, sigma: float, tol: float = 1e-8) -> CheckReport:
    """Check ``log(A^sigma) = sigma log(A)``."""
    if not 0 <= sigma <= 1:
        raise ParameterDomain("sigma must lie in [0, 1]")
    LA = log_operator(A)
    LS = log_operator(power_operator(A, sigma)) if sigma else A.like(np.zeros(A.data.shape))
    diff = operator_norm(LS - LA * sigma)
    bound = tol * (1 + operator_norm(LA))
    ok = diff <= bound
    return CheckReport(f"log_scaling(sigma={sigma:g})", ok, 1,
                       [] if ok else [(sigma, diff, f"difference {diff:.3g} > {bound:.3g}")],
                       note=f"difference {diff:.3e}")


def two_pi_ilog_weight(A: OperatorModel, upsilon: float) -> OperatorModel:
    """``(2 pi - i log A)^{-upsilon}``."""
    if not A.injective:
        raise NotInjective("(2 pi - i log A) needs an injective operator")
    _check_off_cut(A.eigenvalues)
    if upsilon == 0:
        return A.identity_like()
    B = A.identity_like() * TWO_PI - log_operator(A) * 1j
    return matrix_function_oracle(lambda z: np.asarray(z, complex) ** (-upsilon), B)


# ---------------------------------------------------------------------------
# weight operators
# ---------------------------------------------------------------------------

INFINITY = "Infinity"
INFINITY_ZERO = "InfinityZero"
ZERO = "Zero"
FAMILIES = (INFINITY, INFINITY_ZERO, ZERO)


@dataclass
class WeightOperator:
    family: str
    params: dict
    factors: list
    matrix: OperatorModel = field(repr=False, default=None)

    def __post_init__(self):
        if self.matrix is None:
            self.matrix = self.recompute()

    def recompute(self) -> OperatorModel:
        out = self.factors[0]
        for F in self.factors[1:]:
            out = out @ F
        return out

    def max_commutator(self) -> float:
        worst = 0.0
        for i, F in enumerate(self.factors):
            for G in self.factors[i + 1:]:
                denom = operator_norm(F) * operator_norm(G)
                if denom > 0:
                    worst = max(worst, F.commutator_norm(G) / denom)
        return worst

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.matrix, dtype=dtype)


def _family(name: str) -> str:
    key = name.replace("_", "").replace("-", "").lower()
    table = {"infinity": INFINITY, "infinityzero": INFINITY_ZERO, "zero": ZERO}
    if key not in table:
        raise ParameterDomain(f"unknown weight family {name!r}")
    return table[key]


def weight_operator(A: OperatorModel, family: str, params) -> WeightOperator:
    """Build one of the three weight families as a product of commuting factors.

    ``params`` is ``(nu, upsilon)`` for Infinity, ``(mu, nu, upsilon)`` for
    InfinityZero and ``(mu, upsilon)`` for Zero (tuples or dicts).
    """
    family = _family(family)
    names = {INFINITY: ("nu", "upsilon"), INFINITY_ZERO: ("mu", "nu", "upsilon"), ZERO: ("mu", "upsilon")}[family]
    if isinstance(params, dict):
        p = {k: float(params[k]) for k in names}
    else:
        if len(params) != len(names):
            raise ParameterDomain(f"{family} expects parameters {names}")
        p = dict(zip(names, map(float, params)))
    if any(v < 0 for v in p.values()):
        raise ParameterDomain("weight parameters must be nonnegative")
    if family != INFINITY and not A.injective:
        raise NotInjective(f"{family} weights need an injective operator")

    if family == INFINITY:
        factors = [frac_power_inv(A, p["nu"])]
        if p["upsilon"]:
            factors.append(matrix_function_oracle(lambda z: np.log(2 + np.asarray(z, complex)) ** (-p["upsilon"]), A))
    elif family == INFINITY_ZERO:
        factors = [power_operator(A, p["mu"]), frac_power_inv(A, p["mu"] + p["nu"]),
                   two_pi_ilog_weight(A, p["upsilon"])]
    else:
        factors = [power_operator(A, p["mu"]), frac_power_inv(A, p["mu"])]
        if p["upsilon"]:
            factors.append(matrix_function_oracle(
                lambda z: np.log(2 + 1 / np.asarray(z, complex)) ** (-p["upsilon"]), A))
    return WeightOperator(family, p, factors)


def moment_inequality_check(A: OperatorModel, C: OperatorModel, theta: float, t_grid: Sequence[float], *,
                            Phi: OperatorModel | None = None, K: float | None = None, space=2) -> CheckReport:
    """Ratio ``|T C^theta Phi| / (|T Phi|^(1-theta) |T C Phi|^theta)`` over ``t_grid``."""
    from .semigroup import evolve

    if not 0 < theta < 1:
        raise ParameterDomain("theta must lie in (0, 1)")
    K = DEFAULT.moment_K if K is None else K
    Phi = Phi if Phi is not None else A.identity_like()
    Ct = matrix_function_oracle(lambda z: np.where(z == 0, 0, np.asarray(z, complex) ** theta), C)
    ratios, skipped = [], []
    for t in t_grid:
        T = evolve(A, float(t))
        num = operator_norm(T @ Ct @ Phi, space)
        d1 = operator_norm(T @ Phi, space)
        d2 = operator_norm(T @ C @ Phi, space)
        denom = d1 ** (1 - theta) * d2 ** theta
        if denom <= 1e-300:
            skipped.append((t, "zero denominator"))
            continue
        ratios.append((t, num / denom))
    worst = max((r for _, r in ratios), default=0.0)
    violations = [(t, r, f"ratio {r:.3g} > K={K:g}") for t, r in ratios if r > K]
    return CheckReport("moment_inequality", not violations, len(ratios), violations, skipped,
                       note=f"max ratio {worst:.6g}",
                       details={"max_ratio": worst, "ratios": [[t, r] for t, r in ratios]})
