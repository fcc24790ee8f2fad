"""Complete Bernstein functions in Stieltjes form.

A complete Bernstein function is stored as

    f(lam) = a + b*lam + int_{(0, inf)} lam / (lam + s) w(s) ds.

All quadrature runs in the log variable ``u = log s``.  Each representation
carries two numerically stable views of the density:

* ``m_u(u) = s * w(s)``  (the measure density in ``u``), used for ``s <= |lam|``;
* ``w_u(u) = w(s)``      (evaluated without forming ``s``), used for ``s > |lam|``.

so that the kernel never has to form ``exp(u)`` for large ``u``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import integrate

from .config import DEFAULT
from .errors import (
    DivisionByZero,
    DomainError,
    EvaluationFailure,
    IntegrabilityRejected,
    ParameterDomain,
    QuadratureNonConvergence,
)
from .linop import OperatorModel, apply_batch, shifted_inverse_batch

PI2 = math.pi ** 2
_U_CLAMP = 700.0
# beyond this |u| every catalog density is below 1e-60 and is treated as 0
_U_FAR = 1e30


def _zero(u):
    return 0.0


@dataclass(frozen=True)
class StieltjesRep:
    """Stieltjes triple ``(a, b, mu)`` with ``mu(ds) = w(s) ds`` on ``support``."""

    a: float
    b: float
    density: Callable[[float], float]
    support: tuple = (0.0, math.inf)
    label: str = ""
    m_u: Callable | None = None
    w_u: Callable | None = None
    formula: str = ""
    singular_points: tuple = ()

    def __post_init__(self):
        if not (self.a >= 0 and self.b >= 0):
            raise ParameterDomain("a and b must be nonnegative")
        lo, hi = self.support
        if not (0 <= lo < hi):
            raise ParameterDomain(f"bad support {self.support}")
        dens = self.density
        if self.m_u is None:
            object.__setattr__(self, "m_u", lambda u: math.exp(u) * dens(math.exp(u)))
        if self.w_u is None:
            object.__setattr__(self, "w_u", lambda u: dens(math.exp(u)))

    @property
    def u_support(self) -> tuple:
        lo, hi = self.support
        return (math.log(lo) if lo > 0 else -math.inf, math.log(hi) if math.isfinite(hi) else math.inf)

    @property
    def has_measure(self) -> bool:
        return self.density is not _zero

    def breakpoints(self) -> list:
        lo, hi = self.u_support
        pts = {0.0, *self.singular_points}
        return sorted(p for p in pts if lo < p < hi)

    @classmethod
    def from_density(cls, density, support=(0.0, math.inf), a=0.0, b=0.0, label="custom"):
        return cls(a, b, density, tuple(support), label)


@dataclass(frozen=True)
class CbfCatalogEntry:
    name: str
    rep: StieltjesRep
    closed_form: Callable[[complex], complex]
    params: dict = field(default_factory=dict)

    def __call__(self, lam):
        return self.closed_form(lam)


# ---------------------------------------------------------------------------
# catalog
# ---------------------------------------------------------------------------

def _series(coeffs, x):
    out = 0j
    for c in reversed(coeffs):
        out = out * x + c
    return out


_N_SERIES = 30
_D_COEF = [1 / math.factorial(m) for m in range(1, _N_SERIES + 1)]
_E_COEF = [(n - 1) / math.factorial(n) for n in range(2, _N_SERIES + 2)]
_F_COEF = [(m - 1) * (m - 2) / math.factorial(m) for m in range(3, _N_SERIES + 3)]


def _lambda_minus_one_over_log(lam):
    x = np.log(complex(lam))
    if abs(x) < 0.5:
        return _series(_D_COEF, x)
    return (complex(lam) - 1) / x


def _log_square_combination(lam):
    lam = complex(lam)
    x = np.log(lam)
    if abs(x) < 0.5:
        return _series(_E_COEF, x)
    return (lam * x - lam + 1) / x ** 2


def _log_cube_combination(lam):
    lam = complex(lam)
    x = np.log(lam)
    if abs(x) < 0.5:
        return _series(_F_COEF, x)
    return (-2 + 2 * lam - 2 * lam * x + lam * x ** 2) / x ** 3


def power(alpha: float) -> CbfCatalogEntry:
    """``lam**alpha`` for ``0 <= alpha <= 1``."""
    if not 0 <= alpha <= 1:
        raise ParameterDomain("power requires 0 <= alpha <= 1")
    closed = lambda lam: complex(lam) ** alpha if lam != 0 else 0j
    if alpha == 0:
        rep = StieltjesRep(1.0, 0.0, _zero, label="power(0)", m_u=_zero, w_u=_zero, formula="0")
        return CbfCatalogEntry("power", rep, lambda lam: 1 + 0j, {"alpha": 0.0})
    if alpha == 1:
        rep = StieltjesRep(0.0, 1.0, _zero, label="power(1)", m_u=_zero, w_u=_zero, formula="0")
        return CbfCatalogEntry("power", rep, closed, {"alpha": 1.0})
    c = math.sin(alpha * math.pi) / math.pi
    rep = StieltjesRep(
        0.0, 0.0,
        lambda s: c * s ** (alpha - 1),
        label=f"power({alpha:g})",
        m_u=lambda u: c * math.exp(alpha * u),
        w_u=lambda u: c * math.exp((alpha - 1) * u),
        formula="sin(alpha*pi)/pi * s**(alpha-1)",
    )
    return CbfCatalogEntry("power", rep, closed, {"alpha": float(alpha)})


def shifted_power(alpha: float) -> CbfCatalogEntry:
    """``(1 + lam)**alpha - 1`` for ``0 < alpha <= 1``."""
    if not 0 < alpha <= 1:
        raise ParameterDomain("shifted_power requires 0 < alpha <= 1")
    closed = lambda lam: (1 + complex(lam)) ** alpha - 1
    if alpha == 1:
        rep = StieltjesRep(0.0, 1.0, _zero, label="shifted_power(1)", m_u=_zero, w_u=_zero, formula="0")
        return CbfCatalogEntry("shifted_power", rep, closed, {"alpha": 1.0})
    c = math.sin(alpha * math.pi) / math.pi
    rep = StieltjesRep(
        0.0, 0.0,
        lambda s: c * (s - 1) ** alpha / s,
        support=(1.0, math.inf),
        label=f"shifted_power({alpha:g})",
        m_u=lambda u: c * math.expm1(u) ** alpha,
        w_u=lambda u: c * math.exp((alpha - 1) * u) * (-math.expm1(-u)) ** alpha,
        formula="sin(alpha*pi)/pi * (s-1)**alpha / s on (1, inf)",
    )
    return CbfCatalogEntry("shifted_power", rep, closed, {"alpha": float(alpha)})


def log1p() -> CbfCatalogEntry:
    rep = StieltjesRep(
        0.0, 0.0,
        lambda s: 1.0 / s,
        support=(1.0, math.inf),
        label="log1p",
        m_u=lambda u: 1.0,
        w_u=lambda u: math.exp(-u),
        formula="1/s on (1, inf)",
    )
    return CbfCatalogEntry("log1p", rep, lambda lam: np.log1p(complex(lam)))


def lambda_minus_one_over_log() -> CbfCatalogEntry:
    def m_u(u):
        if u > _U_CLAMP:
            return math.inf
        return (math.exp(u) + 1) / (PI2 + u * u)

    def w_u(u):
        if u < -_U_CLAMP:
            return math.inf
        return (1 + math.exp(-u)) / (PI2 + u * u)

    rep = StieltjesRep(
        0.0, 0.0,
        lambda s: (s + 1) / (s * (PI2 + math.log(s) ** 2)),
        label="lambda_minus_one_over_log",
        m_u=m_u, w_u=w_u,
        formula="(s+1) / (s*(pi^2 + log(s)^2))",
    )
    return CbfCatalogEntry("lambda_minus_one_over_log", rep, _lambda_minus_one_over_log)


def log_square_combination() -> CbfCatalogEntry:
    def m_u(u):
        q = PI2 + u * u
        return (math.exp(u) * (PI2 - 2 * u + u * u) - 2 * u) / q ** 2

    def w_u(u):
        q = PI2 + u * u
        return (PI2 - 2 * (1 + math.exp(-u)) * u + u * u) / q ** 2

    def density(s):
        L = math.log(s)
        return (s * (PI2 - 2 * L + L * L) - 2 * L) / (s * (PI2 + L * L) ** 2)

    rep = StieltjesRep(
        0.0, 0.0, density,
        label="log_square_combination",
        m_u=m_u, w_u=w_u,
        formula="(s*(pi^2 - 2 log s + log(s)^2) - 2 log s) / (s*(pi^2 + log(s)^2)^2)",
    )
    return CbfCatalogEntry("log_square_combination", rep, _log_square_combination)


def _f_PQ(u):
    P = PI2 * (PI2 - 2) + u ** 4 - 4 * u ** 3 + 2 * (3 + PI2) * u ** 2 - 4 * PI2 * u
    Q = -2 * PI2 + 6 * u * u
    return P, Q


def log_cube_combination() -> CbfCatalogEntry:
    def m_u(u):
        P, Q = _f_PQ(u)
        return (math.exp(u) * P + Q) / (PI2 + u * u) ** 3

    def w_u(u):
        P, Q = _f_PQ(u)
        return (P + Q * math.exp(-u)) / (PI2 + u * u) ** 3

    def density(s):
        P, Q = _f_PQ(math.log(s))
        return (s * P + Q) / (s * (PI2 + math.log(s) ** 2) ** 3)

    rep = StieltjesRep(
        0.0, 0.0, density,
        label="log_cube_combination",
        m_u=m_u, w_u=w_u,
        formula="(s*P(log s) + Q(log s)) / (s*(pi^2 + log(s)^2)^3)",
    )
    return CbfCatalogEntry("log_cube_combination", rep, _log_cube_combination)


CATALOG_NAMES = (
    "power", "shifted_power", "log1p",
    "lambda_minus_one_over_log", "log_square_combination", "log_cube_combination",
)


def catalog_entry(name: str, alpha: float = 0.5) -> CbfCatalogEntry:
    builders = {
        "power": lambda: power(alpha),
        "shifted_power": lambda: shifted_power(alpha),
        "log1p": log1p,
        "lambda_minus_one_over_log": lambda_minus_one_over_log,
        "log_square_combination": log_square_combination,
        "log_cube_combination": log_cube_combination,
    }
    if name not in builders:
        raise KeyError(f"unknown catalog entry {name!r}")
    return builders[name]()


def catalog(alpha: float = 0.5) -> list:
    """All six catalog entries; the parametrised ones use ``alpha``."""
    return [catalog_entry(n, alpha) for n in CATALOG_NAMES]


# ---------------------------------------------------------------------------
# scalar evaluation
# ---------------------------------------------------------------------------

def _scalar_kernel(rep: StieltjesRep, lam: complex):
    L = math.log(abs(lam))

    def f(u):
        if abs(u) > _U_FAR:
            return 0j
        if u <= L:
            return rep.m_u(u) * lam / (lam + math.exp(u))
        return rep.w_u(u) * lam / (1 + lam * math.exp(-u))

    return f, L


def _intervals(lo, hi, points):
    pts = sorted(p for p in set(points) if lo < p < hi)
    edges = [lo, *pts, hi]
    return list(zip(edges[:-1], edges[1:]))


def _quad_real(f, a, b, epsabs, epsrel, limit):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        out = integrate.quad(f, a, b, epsabs=epsabs, epsrel=epsrel, limit=limit, full_output=1)
    val, err, info = out[0], out[1], out[2]
    ier = out[3] if len(out) > 3 else 0
    return val, err, ier, info["neval"]


def eval_cbf_scalar(rep, lam: complex, *, tol: float | None = None, epsabs: float | None = None,
                    max_evals: int | None = None) -> complex:
    """Evaluate the Stieltjes integral at ``lam`` with ``Re lam > 0``.

    The ``u`` axis is split at ``log|lam|``, at the density's singular points
    and at the support ends; each piece is integrated adaptively.
    """
    if isinstance(rep, CbfCatalogEntry):
        rep = rep.rep
    lam = complex(lam)
    if not lam.real > 0:
        raise DomainError("eval_cbf_scalar requires Re(lam) > 0")
    tol = DEFAULT.tol_quad if tol is None else tol
    epsabs = DEFAULT.tol_abs if epsabs is None else epsabs
    max_evals = DEFAULT.max_evals if max_evals is None else max_evals

    value = rep.a + rep.b * lam
    if not rep.has_measure:
        return complex(value)
    kernel, L = _scalar_kernel(rep, lam)
    lo, hi = rep.u_support
    pieces = _intervals(lo, hi, [L, *rep.breakpoints()])
    total, err_total, evals = 0j, 0.0, 0
    for a, b in pieces:
        re, e1, ier1, n1 = _quad_real(lambda u: kernel(u).real, a, b, epsabs, tol, 500)
        im, e2, ier2, n2 = _quad_real(lambda u: kernel(u).imag, a, b, epsabs, tol, 500)
        total += complex(re, im)
        err_total += e1 + e2
        evals += n1 + n2
        if ier1 not in (0, 2) or ier2 not in (0, 2) or not np.isfinite(re + im):
            raise QuadratureNonConvergence(f"quadrature failed on [{a}, {b}] at lam={lam}")
    if evals > max_evals:
        raise QuadratureNonConvergence(f"evaluation budget {max_evals} exhausted")
    if err_total > max(epsabs * len(pieces) * 10, 10 * tol * abs(total)):
        raise QuadratureNonConvergence(f"error estimate {err_total:.3g} above tolerance at lam={lam}")
    return complex(value + total)


def integrability_check(rep: StieltjesRep, tol: float = 1e-8) -> float:
    """Return ``int 1/(1+s) dmu(s)``; raise if it does not converge."""
    def g(u):
        if abs(u) > _U_FAR:
            return 0.0
        if u <= 0:
            return rep.m_u(u) / (1 + math.exp(u))
        return rep.w_u(u) / (1 + math.exp(-u))

    if not rep.has_measure:
        return 0.0
    lo, hi = rep.u_support
    total = 0.0
    for a, b in _intervals(lo, hi, rep.breakpoints()):
        val, err, ier, _ = _quad_real(g, a, b, 1e-12, tol, 500)
        if ier not in (0, 2) or not math.isfinite(val):
            raise IntegrabilityRejected(f"int 1/(1+s) dmu diverges for {rep.label}")
        total += val
    return total


def probe_table(entry: CbfCatalogEntry, lambdas: Sequence[complex]) -> list:
    rows = []
    for lam in lambdas:
        q = eval_cbf_scalar(entry.rep, lam)
        c = complex(entry.closed_form(lam))
        rows.append({
            "lambda": [float(complex(lam).real), float(complex(lam).imag)],
            "quadrature": [q.real, q.imag],
            "closed_form": [c.real, c.imag],
            "rel_err": abs(q - c) / max(abs(c), 1e-300),
        })
    return rows


# ---------------------------------------------------------------------------
# operators
# ---------------------------------------------------------------------------

def apply_cbf_operator(rep, A: OperatorModel, x, *, tol: float | None = None,
                       epsabs: float | None = None) -> np.ndarray:
    """``f(A) x = a x + b A x + int A (A + s)^{-1} x dmu(s)`` by quadrature."""
    if isinstance(rep, CbfCatalogEntry):
        rep = rep.rep
    tol = DEFAULT.tol_quad if tol is None else tol
    epsabs = DEFAULT.tol_abs if epsabs is None else epsabs
    x = np.asarray(x, dtype=complex)
    Ax = A.matvec(x)
    out = rep.a * x + rep.b * Ax
    if not rep.has_measure or A.dim == 0:
        return out

    zeros = np.zeros(2 * A.dim)

    def integrand(u):
        if abs(u) > _U_FAR:
            return zeros
        if u <= 0:
            inv = shifted_inverse_batch(A, 1.0, max(math.exp(u), 1e-300))
            v = apply_batch(A.kind, inv, Ax)[0] * rep.m_u(u)
        else:
            inv = shifted_inverse_batch(A, math.exp(-u), 1.0)
            v = apply_batch(A.kind, inv, Ax)[0] * rep.w_u(u)
        return np.concatenate([v.real, v.imag])

    ev = np.abs(A.eigenvalues)
    logs = np.log(ev[ev > 0]) if np.any(ev > 0) else np.zeros(0)
    marks = np.unique(np.round(logs * 2) / 2) if logs.size else np.zeros(0)
    if marks.size > 40:
        marks = np.quantile(marks, np.linspace(0, 1, 40))
    lo, hi = rep.u_support
    scale = max(float(np.max(np.abs(Ax))), 1e-300)
    total = np.zeros(2 * A.dim)
    for a, b in _intervals(lo, hi, [*marks.tolist(), *rep.breakpoints()]):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            res, err, info = integrate.quad_vec(integrand, a, b, epsabs=epsabs * scale, epsrel=tol,
                                                norm="max", limit=2000, full_output=True)
        if not info.success:
            raise QuadratureNonConvergence(f"operator quadrature failed on [{a}, {b}]: {info.message}")
        total += res
    return out + total[:A.dim] + 1j * total[A.dim:]


def _gl_panels(U: float, nodes: int, panel: float):
    n_panels = max(int(math.ceil(U / panel)), 1)
    xg, wg = np.polynomial.legendre.leggauss(nodes)
    left = np.arange(n_panels) * panel
    u = (left[:, None] + (xg[None, :] + 1) * panel / 2).ravel()
    w = np.tile(wg * panel / 2, n_panels)
    return u, w, n_panels * panel


def _spectral_extent(A: OperatorModel) -> tuple:
    mods = np.abs(A.eigenvalues)
    if A.kind != "diagonal" and A.dim:
        hi = max(float(np.linalg.norm(np.asarray(A), 2)), float(mods.max()))
    else:
        hi = float(mods.max()) if mods.size else 0.0
    nz = mods[mods > 0]
    lo = float(nz.min()) if nz.size else 0.0
    return lo, hi


def nollau_log1p_operator(A: OperatorModel, *, extra: float = 40.0, nodes: int = 16,
                          panel: float = 1.0) -> OperatorModel:
    """``log(1 + A) = int_1^inf A (A + t)^{-1} dt / t`` as an operator.

    Fixed composite Gauss-Legendre panels in ``u = log t`` on ``[0, U]`` plus
    a two-term tail expansion; independent of :func:`apply_cbf_operator`.
    """
    if A.dim == 0:
        return A
    _, hi = _spectral_extent(A)
    U = (max(math.log(hi), 0.0) if hi > 0 else 0.0) + extra
    u, w, U = _gl_panels(U, nodes, panel)
    # A (A + s)^{-1} = I - s (A + s)^{-1}; use (1 + A/s)^{-1} A / s to avoid cancellation
    total = np.zeros(A.data.shape, complex)
    for lo in range(0, u.size, 256):
        s = np.exp(u[lo:lo + 256])
        inv = shifted_inverse_batch(A, 1.0 / s, 1.0)  # (1 + A/s)^{-1}
        total += np.tensordot(w[lo:lo + 256] / s, inv, axes=1)
    acc = A.like(total) @ A
    tail = A * math.exp(-U) - (A @ A) * (math.exp(-2 * U) / 2)
    return acc + tail


def nollau_log1p(A: OperatorModel, x, **kw) -> np.ndarray:
    """``log(1 + A) x`` via :func:`nollau_log1p_operator`."""
    return nollau_log1p_operator(A, **kw).matvec(x)


# ---------------------------------------------------------------------------
# Pick property and closures
# ---------------------------------------------------------------------------

@dataclass
class CheckReport:
    name: str
    passed: bool
    checked: int
    violations: list = field(default_factory=list)
    failures: list = field(default_factory=list)
    note: str = ""
    details: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        def enc(z):
            z = complex(z)
            return [z.real, z.imag]
        return {
            "name": self.name,
            "passed": self.passed,
            "checked": self.checked,
            "violations": [{"z": enc(z), "value": enc(v), "reason": r} for z, v, r in self.violations],
            "failures": [{"z": enc(z), "error": e} for z, e in self.failures],
            "note": self.note,
            "details": self.details,
        }


def default_pick_grid(n_radii: int = 10, n_angles: int = 10) -> list:
    radii = np.logspace(-3, 3, n_radii)
    angles = np.linspace(0.05, math.pi - 0.05, n_angles)
    return [complex(r * np.exp(1j * t)) for r in radii for t in angles]


def pick_property_check(f: Callable, grid: Sequence[complex] | None = None, *, tol: float = 1e-12,
                        positive: Sequence[float] | None = None, name: str = "") -> CheckReport:
    """Numerical falsifier for the Pick property of a complete Bernstein function.

    Checks ``Im f(z) >= -tol*max(1, |f(z)|)`` on the upper half-plane grid and
    ``f(x) >= -tol`` on positive reals.  Passing means no violation was found.
    """
    grid = default_pick_grid() if grid is None else list(grid)
    positive = np.logspace(-3, 3, 13) if positive is None else positive
    violations, failures = [], []
    checked = 0
    for z in grid:
        z = complex(z)
        if not z.imag > 0:
            continue
        try:
            v = complex(f(z))
        except Exception as exc:  # recorded, not fatal
            failures.append((z, f"{type(exc).__name__}: {exc}"))
            continue
        checked += 1
        if not np.isfinite(v):
            failures.append((z, "non-finite value"))
        elif v.imag < -tol * max(1.0, abs(v)):
            violations.append((z, v, "Im f(z) < 0"))
    for xr in positive:
        try:
            v = complex(f(float(xr)))
        except Exception as exc:
            failures.append((complex(xr), f"{type(exc).__name__}: {exc}"))
            continue
        checked += 1
        if v.real < -tol * max(1.0, abs(v)) or abs(v.imag) > 1e-9 * max(1.0, abs(v)):
            violations.append((complex(xr), v, "f(x) not >= 0 on (0, inf)"))
    passed = not violations and not failures
    note = "no violation found" if passed else f"{len(violations)} violations, {len(failures)} failures"
    return CheckReport(name or getattr(f, "__name__", "f"), passed, checked, violations, failures, note)


def _as_callable(f):
    if isinstance(f, CbfCatalogEntry):
        return f.closed_form
    return f


def cbf_closure_transforms(f, probes: Sequence[float] | None = None):
    """Return ``(lam -> lam / f(lam), lam -> lam * f(1/lam))``."""
    g = _as_callable(f)
    probes = np.logspace(-3, 3, 13) if probes is None else probes
    for p in probes:
        if complex(g(p)) == 0:
            raise DivisionByZero(f"f vanishes at probe point {p}")

    def ratio(lam):
        return lam / complex(g(lam))

    def reflect(lam):
        return lam * complex(g(1 / lam))

    return ratio, reflect


def cbf_power_product(f, g, a1: float, a2: float) -> Callable:
    """``lam -> f(lam)**a1 * g(lam)**a2`` with principal powers."""
    if not (a1 > 0 and a2 > 0):
        raise ParameterDomain("a1 and a2 must be positive")
    if a1 + a2 > 1 + 1e-12:
        raise ParameterDomain(f"a1 + a2 = {a1 + a2} exceeds 1")
    F, G = _as_callable(f), _as_callable(g)

    def product(lam):
        return complex(F(lam)) ** a1 * complex(G(lam)) ** a2

    return product
