"""Semigroup orbits ``T(t) = exp(-tA)`` and contour identities along ``iR``.

The inverse-Laplace routines give an orbit ``T(t) f(A) y`` without ever
forming an exponential: they integrate ``e^{-lam t} f(lam) (lam - A)^{-1} y``
along the imaginary axis.  With ``lam = i xi`` (traversed from ``+i inf`` to
``-i inf``) this is

    g(t) = -(1 / 2 pi) int_R e^{-i xi t} f(i xi) (i xi - A)^{-1} y d xi,

and nodes ``xi`` and ``-xi`` are always summed together.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.linalg
from scipy import integrate

from .cbf import CheckReport
from .errors import (
    DomainError,
    IntegrabilityRejected,
    NotInjective,
    OverflowRisk,
    ParameterDomain,
    TailBoundExceeded,
)
from .funcalc import WeightOperator
from .linop import BLOCK, DENSE, DIAGONAL, NormSpace, OperatorModel, _as_p, batch_norms, shifted_inverse_batch
from .parallel import pmap

TWO_PI = 2 * math.pi


# ---------------------------------------------------------------------------
# exponentials
# ---------------------------------------------------------------------------

def _phi1(x):
    """``expm1(x) / x`` for complex arrays, 1 at 0."""
    x = np.asarray(x, dtype=complex)
    small = np.abs(x) < 1e-5
    safe = np.where(small, 1.0, x)
    with np.errstate(all="ignore"):
        big = np.expm1(safe) / safe
    series = 1 + x / 2 + x * x / 6
    return np.where(small, series, big)


def _exp_2x2(B: np.ndarray, t: float) -> np.ndarray:
    """``exp(-t B)`` for a stack of 2x2 matrices via the Newton form."""
    tri = np.all(B[:, 1, 0] == 0)
    if tri:
        l1, l2 = B[:, 0, 0], B[:, 1, 1]
    else:
        ev = np.linalg.eigvals(B)
        l1, l2 = ev[:, 0], ev[:, 1]
    e1 = np.exp(-t * l1)
    dd = e1 * (-t) * _phi1(-t * (l2 - l1))  # f[l1, l2] for f(z) = exp(-t z)
    eye = np.eye(2)
    return e1[:, None, None] * eye + dd[:, None, None] * (B - l1[:, None, None] * eye)


def evolve(A: OperatorModel, t: float) -> OperatorModel:
    """``T(t) = exp(-tA)`` in the layout of ``A``."""
    t = float(t)
    if t < 0:
        raise DomainError("t must be nonnegative")
    if t == 0:
        return A.identity_like()
    ev = A.eigenvalues
    if ev.size and t * float(np.max(-ev.real)) > 700:
        raise OverflowRisk(f"exp(-tA) overflows at t={t}")
    if A.kind == DIAGONAL:
        return A.like(np.exp(-t * A.data))
    if A.kind == BLOCK:
        m = A.data.shape[1]
        if A.data.shape[0] == 0:
            return A.like(A.data)
        if m == 1:
            return A.like(np.exp(-t * A.data))
        if m == 2:
            return A.like(_exp_2x2(A.data, t))
        return A.like(scipy.linalg.expm(-t * A.data))
    return A.like(scipy.linalg.expm(-t * A.data))


# ---------------------------------------------------------------------------
# decay curves
# ---------------------------------------------------------------------------

@dataclass
class DecayCurve:
    t_grid: np.ndarray
    values: np.ndarray
    weight: dict = field(default_factory=dict)
    norm_p: float = 2.0

    def __post_init__(self):
        self.t_grid = np.asarray(self.t_grid, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.t_grid.shape != self.values.shape:
            raise ValueError("t_grid and values differ in length")
        if np.any(np.diff(self.t_grid) <= 0):
            raise ValueError("t_grid must be strictly increasing")
        if np.any(self.values < 0):
            raise ValueError("norms must be nonnegative")

    def to_json(self) -> dict:
        return {
            "t": self.t_grid.tolist(),
            "norm": self.values.tolist(),
            "weight": self.weight,
            "p": "inf" if math.isinf(self.norm_p) else self.norm_p,
        }


def default_t_grid(t_min: float = 1.0, t_max: float = 1e4, per_decade: int = 25) -> np.ndarray:
    decades = math.log10(t_max / t_min)
    return np.logspace(math.log10(t_min), math.log10(t_max), int(round(decades * per_decade)) + 1)


def _weight_matrix(A: OperatorModel, W) -> tuple:
    if W is None:
        return A.identity_like(), {"family": "identity"}
    if isinstance(W, WeightOperator):
        return W.matrix, {"family": W.family, "params": W.params}
    return W, {"family": "custom"}


def decay_curve(A: OperatorModel, W=None, t_grid: Sequence[float] | None = None, space=2, *,
                workers: int = 1) -> DecayCurve:
    """``||T(t) W||`` on ``t_grid`` (monotonicity is not assumed)."""
    p = _as_p(space)
    t_grid = default_t_grid() if t_grid is None else np.asarray(t_grid, dtype=float)
    Wm, desc = _weight_matrix(A, W)
    if A.kind == DIAGONAL and Wm.kind == DIAGONAL:
        absw = np.abs(Wm.data)
        re = A.data.real

        def one(t):
            if A.dim == 0:
                return 0.0
            return float(np.max(np.exp(-t * re) * absw))
    else:
        def one(t):
            return float(batch_norms(A.kind, (evolve(A, t) @ Wm).data[None], p)[0])

    values = pmap(one, t_grid.tolist(), workers)
    return DecayCurve(t_grid, np.array(values), desc, p)


# ---------------------------------------------------------------------------
# integrals along the imaginary axis
# ---------------------------------------------------------------------------

def _quad_vec(f, a, b, tol, epsabs, points=None):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        res, err, info = integrate.quad_vec(f, a, b, epsabs=epsabs, epsrel=tol, norm="max",
                                            limit=5000, points=points, full_output=True)
    if not info.success:
        raise TailBoundExceeded(f"quadrature on [{a}, {b}] did not converge: {info.message}")
    return res, err


def _fourier_tail(func, a, t, tol, epsabs, kind):
    """``int_a^inf func(xi) w(xi t) d xi`` with ``w`` = cos or sin, func real scalar."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        out = integrate.quad(func, a, np.inf, weight=kind, wvar=t, epsabs=epsabs, epsrel=tol,
                             limlst=200, limit=500, full_output=1)
    val, err = out[0], out[1]
    ier = out[3] if len(out) > 3 else 0
    if ier not in (0,) and not (err <= max(epsabs, tol * abs(val)) * 100):
        raise TailBoundExceeded(f"oscillatory tail did not converge (ier={ier})")
    return val, err


def _iR_transform(F: Callable, n: int, t: float, Xi: float, points, tol: float, epsabs: float):
    """``int_R e^{-i xi t} F(xi) d xi`` for vector-valued ``F`` (length ``n``).

    ``[0, Xi]`` uses a vector adaptive rule on the paired integrand; the tail
    uses QAWF per real component (or a plain infinite rule when ``t == 0``).
    """
    def paired(xi):
        e = complex(math.cos(xi * t), -math.sin(xi * t))
        v = e * F(xi) + e.conjugate() * F(-xi)
        return np.concatenate([v.real, v.imag])

    head, err_head = _quad_vec(paired, 0.0, Xi, tol, epsabs, points)
    head = head[:n] + 1j * head[n:]

    if t == 0:
        def tail_f(xi):
            v = F(xi) + F(-xi)
            return np.concatenate([v.real, v.imag])
        tail, err_tail = _quad_vec(tail_f, Xi, np.inf, tol, epsabs)
        return head + tail[:n] + 1j * tail[n:], err_head + err_tail

    # C = F(xi) + F(-xi) under cos, S = F(xi) - F(-xi) under -i sin
    cache = {}

    def CS(xi):
        if xi not in cache:
            if len(cache) > 4096:
                cache.clear()
            fp, fm = F(xi), F(-xi)
            cache[xi] = (fp + fm, fp - fm)
        return cache[xi]

    tail = np.zeros(n, complex)
    err_tail = 0.0
    for j in range(n):
        c_re, e1 = _fourier_tail(lambda x: CS(x)[0][j].real, Xi, t, tol, epsabs, "cos")
        c_im, e2 = _fourier_tail(lambda x: CS(x)[0][j].imag, Xi, t, tol, epsabs, "cos")
        s_re, e3 = _fourier_tail(lambda x: CS(x)[1][j].real, Xi, t, tol, epsabs, "sin")
        s_im, e4 = _fourier_tail(lambda x: CS(x)[1][j].imag, Xi, t, tol, epsabs, "sin")
        tail[j] = complex(c_re, c_im) - 1j * complex(s_re, s_im)
        err_tail += e1 + e2 + e3 + e4
    return head + tail, err_head + err_tail


def _resolvent_points(A: OperatorModel, Xi: float) -> list:
    ims = np.unique(np.round(np.abs(A.eigenvalues.imag), 12))
    ims = ims[(ims > 0) & (ims < Xi)]
    if ims.size > 200:
        ims = ims[np.linspace(0, ims.size - 1, 200).astype(int)]
    near_zero = [10.0 ** k for k in range(-8, 1)]
    return sorted(set(ims.tolist()) | set(p for p in near_zero if p < Xi))


def _orbit(A: OperatorModel, symbol: Callable, t: float, y, tol: float, epsabs: float | None,
           Xi: float | None, full_output: bool):
    y = np.asarray(y, dtype=complex)
    if y.shape != (A.dim,):
        raise ValueError(f"y must have length {A.dim}")
    if not np.any(y):
        out = np.zeros(A.dim, complex)
        return (out, {"Xi": 0.0, "error_estimate": 0.0}) if full_output else out
    if t < 0:
        raise DomainError("t must be nonnegative")
    if Xi is None:
        Xi = 2.0 * max(1.0, float(np.max(np.abs(A.eigenvalues))))
    scale = float(np.max(np.abs(y)))
    epsabs = 1e-9 * scale if epsabs is None else epsabs

    def F(xi):
        z = 1j * xi
        inv = shifted_inverse_batch(A, -1.0, z)[0]  # (i xi - A)^{-1}
        return complex(symbol(z)) * A.like(inv).matvec(y)

    val, err = _iR_transform(F, A.dim, float(t), Xi, _resolvent_points(A, Xi), tol, epsabs)
    g = -val / TWO_PI
    if full_output:
        return g, {"Xi": Xi, "error_estimate": err / TWO_PI}
    return g


def _check_growth(profile, nu, mu=None):
    if profile is None:
        return
    beta = getattr(profile, "beta_fit", None)
    if beta is not None and nu < beta + 1.25:
        raise IntegrabilityRejected(f"nu={nu} < beta_fit + 1.25 = {beta + 1.25:.3g}")
    alpha = getattr(profile, "alpha_fit", None)
    if mu is not None and alpha is not None and mu < alpha - 0.75:
        raise IntegrabilityRejected(f"mu={mu} < alpha_fit - 0.75 = {alpha - 0.75:.3g}")


def laplace_orbit_infinity(A: OperatorModel, nu: float, upsilon: float, t: float, y, *,
                           tol: float = 1e-8, epsabs: float | None = None, Xi: float | None = None,
                           profile=None, full_output: bool = False):
    """``T(t) (1+A)^{-nu} log(2+A)^{-upsilon} y`` by integration along ``iR``."""
    ev = A.eigenvalues
    if ev.size and np.any(ev.real <= 0):
        raise DomainError("the closed left half-plane must lie in the resolvent set")
    if nu <= 0 or upsilon < 0:
        raise ParameterDomain("need nu > 0 and upsilon >= 0")
    _check_growth(profile, nu)

    def symbol(z):
        out = (1 + z) ** (-nu)
        if upsilon:
            out *= np.log(2 + z) ** (-upsilon)
        return out

    return _orbit(A, symbol, t, y, tol, epsabs, Xi, full_output)


def laplace_orbit_infinity_zero(A: OperatorModel, mu: float, nu: float, upsilon: float, t: float, y, *,
                                tol: float = 1e-8, epsabs: float | None = None, Xi: float | None = None,
                                profile=None, full_output: bool = False):
    """``T(t) A^mu (1+A)^{-mu-nu} (2 pi - i log A)^{-upsilon} y`` along ``iR``.

    The branch point of ``log`` at ``xi = 0`` is handled by log-spaced
    breakpoints toward 0 on both sides.
    """
    if not A.injective:
        raise NotInjective("orbit with logarithmic weight needs injective A")
    ev = A.eigenvalues
    if ev.size and np.any(ev.real <= 0):
        raise DomainError("spectrum must lie in the open right half-plane")
    if mu < 0 or nu <= 0 or upsilon < 0:
        raise ParameterDomain("need mu >= 0, nu > 0, upsilon >= 0")
    _check_growth(profile, nu, mu)

    def symbol(z):
        if z == 0:
            return 0j if mu > 0 else complex((TWO_PI - 1j * np.log(1e-300)) ** (-upsilon))
        out = z ** mu * (1 + z) ** (-(mu + nu))
        if upsilon:
            out *= (TWO_PI - 1j * np.log(z)) ** (-upsilon)
        return out

    return _orbit(A, symbol, t, y, tol, epsabs, Xi, full_output)


# ---------------------------------------------------------------------------
# contour identities
# ---------------------------------------------------------------------------

def _scalar_iR_integral(h: Callable, t: float, tol: float = 1e-11, epsabs: float = 1e-12, a: float = 10.0):
    """``int_{iR} e^{-lam t} h(lam) d lam`` computed as ``i int_R e^{-i xi t} h(i xi) d xi``."""
    def C(x):
        return h(1j * x) + h(-1j * x)

    def S(x):
        return h(1j * x) - h(-1j * x)

    pts = [10.0 ** k for k in range(-6, 1)]
    parts = []
    if t == 0:
        for fn in (lambda x: C(x).real, lambda x: C(x).imag):
            v0 = integrate.quad(fn, 0, a, points=pts, limit=500, epsabs=epsabs, epsrel=tol, full_output=1)
            v1 = integrate.quad(fn, a, np.inf, limit=500, epsabs=epsabs, epsrel=tol, full_output=1)
            parts.append((v0[0] + v1[0], v0[1] + v1[1]))
        total = complex(parts[0][0], parts[1][0])
        err = parts[0][1] + parts[1][1]
    else:
        vals, err = [], 0.0
        for fn, kind in ((lambda x: C(x).real, "cos"), (lambda x: C(x).imag, "cos"),
                         (lambda x: S(x).real, "sin"), (lambda x: S(x).imag, "sin")):
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                v0 = integrate.quad(fn, 0, a, weight=kind, wvar=t, limit=500, epsabs=epsabs, epsrel=tol)
                v1 = integrate.quad(fn, a, np.inf, weight=kind, wvar=t, limlst=200, limit=500,
                                    epsabs=epsabs, epsrel=tol)
            vals.append(v0[0] + v1[0])
            err += v0[1] + v1[1]
        total = complex(vals[0], vals[1]) - 1j * complex(vals[2], vals[3])
    return 1j * total, err


B1_VARIANTS = ("log2", "two_pi_ilog")


def lemma_b1_check(nu: float, zeta: float, mu: float = 1.0, t_list: Sequence[float] = (0.0, 1.0, 5.0),
                   variant: str = "log2", tol_abs: float = 1e-6) -> CheckReport:
    """Check that ``int_{iR} e^{-lam t} h(lam) d lam`` vanishes.

    ``log2``:        ``h = (1+lam)^{-nu} log(2+lam)^{-zeta}``
    ``two_pi_ilog``: ``h = lam^mu (1+lam)^{-nu-mu} (2 pi - i log lam)^{-zeta}``
    """
    if variant not in B1_VARIANTS:
        raise ParameterDomain(f"variant must be one of {B1_VARIANTS}")
    if nu < 1 or zeta < 0 or mu < 0:
        raise ParameterDomain("need nu >= 1, zeta >= 0, mu >= 0")

    if variant == "log2":
        def h(z):
            return (1 + z) ** (-nu) * np.log(2 + z) ** (-zeta)
    else:
        def h(z):
            if z == 0:
                return 0j
            return z ** mu * (1 + z) ** (-(nu + mu)) * (TWO_PI - 1j * np.log(z)) ** (-zeta)

    violations, values = [], []
    for t in t_list:
        t = float(t)
        if nu <= 1 and t == 0:
            raise IntegrabilityRejected("nu = 1 needs t > 0 (the integral is only conditionally convergent)")
        val, err = _scalar_iR_integral(h, t)
        values.append([t, val.real, val.imag, err])
        if abs(val) > tol_abs:
            violations.append((t, val, f"|integral| = {abs(val):.3g} > {tol_abs:g}"))
    return CheckReport(f"lemma_b1[{variant}](nu={nu:g}, zeta={zeta:g}, mu={mu:g})", not violations,
                       len(values), violations, details={"values": values})


def _cquad(f, a, b, tol, epsabs):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        re = integrate.quad(lambda r: f(r).real, a, b, limit=500, epsabs=epsabs, epsrel=tol)
        im = integrate.quad(lambda r: f(r).imag, a, b, limit=500, epsabs=epsabs, epsrel=tol)
    return complex(re[0], im[0]), re[1] + im[1]


def gamma_integral(h: Callable, theta: float, tol: float = 1e-11, epsabs: float = 1e-13):
    """``int_Gamma h(z) dz`` with Gamma oriented from ``inf e^{i theta}`` to ``inf e^{-i theta}``."""
    ep, em = np.exp(1j * theta), np.exp(-1j * theta)

    def g(r):
        return -h(r * ep) * ep + h(r * em) * em

    total, err = 0j, 0.0
    for a, b in ((0.0, 1.0), (1.0, 10.0), (10.0, np.inf)):
        v, e = _cquad(g, a, b, tol, epsabs)
        total += v
        err += e
    return total, err


def lemma_b2_check(alpha: float, beta: float, zeta: float, eta: float, lam: complex, variant: str = "a", *,
                   phi: float = math.pi / 4, theta: float | None = None, rtol: float = 1e-6) -> CheckReport:
    """Residue identities for the contour ``Gamma`` at angle ``theta``.

    The reported value is ``(2 pi i)^{-1} int_Gamma``; it is compared with the
    residue at ``z = 1 - lam - eta``.  For variant ``b`` the printed right-hand
    side (denominator ``(1 - lam)``) is reported alongside; it equals the
    residue only when ``alpha + beta = 1``.
    """
    lam = complex(lam)
    theta = (math.pi - phi / 2) if theta is None else theta
    if not 0 < phi <= math.pi / 2:
        raise ParameterDomain("phi must lie in (0, pi/2]")
    if not math.pi - phi < theta < math.pi:
        raise ParameterDomain("theta must lie in (pi - phi, pi)")
    if not 0 < eta <= 1:
        raise ParameterDomain("eta must lie in (0, 1]")
    if lam == 0 or lam.real < 0 or abs(np.angle(lam)) < phi:
        raise DomainError("lam must lie in the closed right half-plane outside the sector S_phi")
    if beta <= 0 or alpha < 0 or zeta < 0:
        raise ParameterDomain("need alpha >= 0, beta > 0, zeta >= 0")

    if variant == "a":
        def h(z):
            return 1 / ((eta + z) ** beta * np.log(1 + eta + z) ** zeta * (z + lam + eta - 1))
        closed = 1 / ((1 - lam) ** beta * np.log(2 - lam) ** zeta)
        printed = closed
    elif variant == "b":
        if eta != 1:
            raise ParameterDomain("variant b needs eta = 1: for eta < 1 the cut of log(-1+eta+z) enters the contour")

        def h(z):
            za = z ** alpha if z != 0 else 0j
            return za / ((eta + z) ** (alpha + beta) * (TWO_PI - 1j * np.log(-1 + eta + z)) ** zeta
                         * (z + lam + eta - 1))
        w = (1 - lam - eta) ** alpha
        closed = w / ((1 - lam) ** (alpha + beta) * (TWO_PI - 1j * np.log(-lam)) ** zeta)
        printed = w / ((1 - lam) * (TWO_PI - 1j * np.log(-lam)) ** zeta)
    else:
        raise ParameterDomain("variant must be 'a' or 'b'")

    integral, err = gamma_integral(h, theta)
    value = integral / (2j * math.pi)
    rel = abs(value - closed) / abs(closed)
    ok = rel <= rtol
    enc = lambda z: [float(z.real), float(z.imag)]
    return CheckReport(
        f"lemma_b2[{variant}]", ok, 1,
        [] if ok else [(lam, value, f"relative error {rel:.3g}")],
        details={"value": enc(value), "closed_form": enc(closed), "printed_form": enc(printed),
                 "rel_err": rel, "rel_err_printed": abs(value - printed) / abs(printed),
                 "quad_error": err / (2 * math.pi), "theta": theta},
    )
