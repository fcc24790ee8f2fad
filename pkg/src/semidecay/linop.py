"""Finite-dimensional model operators.

An :class:`OperatorModel` is stored in one of three layouts:

* ``"diagonal"`` -- ``data`` has shape ``(n,)``;
* ``"block"``    -- ``data`` has shape ``(k, m, m)`` (``k`` equal-size blocks);
* ``"dense"``    -- ``data`` has shape ``(n, n)``.

Every matrix function of an operator keeps the layout of its argument, so the
same class doubles as the container for resolvents, weights and semigroup
matrices.  ``np.asarray(op)`` gives the dense matrix.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np
import scipy.linalg

from .errors import (
    ConvergenceFailure,
    DomainError,
    NotInjective,
    SingularShift,
    SpectrumOutsideSector,
)

DIAGONAL = "diagonal"
BLOCK = "block"
DENSE = "dense"
KINDS = (DIAGONAL, BLOCK, DENSE)

#: tag asserting every eigenvalue has positive real part
LEFT_HALF_PLANE_RESOLVENT = "leftHalfPlaneResolvent"

_EPS = np.finfo(float).eps
_SINGULAR_FACTOR = 1e3


@dataclass(frozen=True, eq=False)
class OperatorModel:
    kind: str
    data: np.ndarray
    injective: bool | None = None
    tags: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown operator kind {self.kind!r}")
        data = np.array(self.data, dtype=complex)
        expected_ndim = {DIAGONAL: 1, BLOCK: 3, DENSE: 2}[self.kind]
        if data.ndim != expected_ndim:
            raise ValueError(f"{self.kind} data must have {expected_ndim} dims, got {data.shape}")
        if self.kind == BLOCK and data.shape[1] != data.shape[2]:
            raise ValueError("blocks must be square")
        if self.kind == DENSE and data.shape[0] != data.shape[1]:
            raise ValueError("dense operator must be square")
        if not np.all(np.isfinite(data)):
            raise ValueError("operator data contains NaN or Inf")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "tags", frozenset(self.tags))

        if LEFT_HALF_PLANE_RESOLVENT in self.tags and data.size:
            if np.any(self.eigenvalues.real <= 0):
                raise SpectrumOutsideSector("leftHalfPlaneResolvent set but some Re(lambda) <= 0")
        detected = self._detect_injective()
        if self.injective is None:
            object.__setattr__(self, "injective", detected)
        elif self.injective and not detected:
            raise NotInjective("operator flagged injective but 0 is an eigenvalue")

    # -- constructors -----------------------------------------------------
    @classmethod
    def diagonal(cls, values, injective=None, tags=()):
        return cls(DIAGONAL, np.asarray(values, dtype=complex).ravel(), injective, frozenset(tags))

    @classmethod
    def block_diagonal(cls, blocks, injective=None, tags=()):
        blocks = [np.atleast_2d(np.asarray(b, dtype=complex)) for b in blocks]
        sizes = {b.shape for b in blocks}
        if len(sizes) > 1:
            raise ValueError(f"blocks must share one size, got {sorted(sizes)}")
        return cls(BLOCK, np.stack(blocks) if blocks else np.zeros((0, 1, 1)), injective, frozenset(tags))

    @classmethod
    def dense(cls, matrix, injective=None, tags=()):
        return cls(DENSE, np.atleast_2d(np.asarray(matrix, dtype=complex)), injective, frozenset(tags))

    def like(self, data, **kw):
        """New operator with this layout and new ``data``."""
        return OperatorModel(self.kind, data, kw.get("injective", None), kw.get("tags", frozenset()))

    def identity_like(self):
        if self.kind == DIAGONAL:
            return self.like(np.ones(self.dim))
        if self.kind == BLOCK:
            k, m, _ = self.data.shape
            return self.like(np.broadcast_to(np.eye(m), (k, m, m)))
        return self.like(np.eye(self.dim))

    # -- basic properties -------------------------------------------------
    @property
    def dim(self) -> int:
        if self.kind == DIAGONAL:
            return self.data.shape[0]
        if self.kind == BLOCK:
            return self.data.shape[0] * self.data.shape[1]
        return self.data.shape[0]

    @property
    def shape(self):
        return (self.dim, self.dim)

    @cached_property
    def eigenvalues(self) -> np.ndarray:
        """Eigenvalues in layout order (unsorted); see :func:`spectrum`."""
        if self.kind == DIAGONAL:
            return self.data.copy()
        try:
            if self.kind == BLOCK:
                if self.data.shape[0] == 0:
                    return np.zeros(0, complex)
                return np.linalg.eigvals(self.data).ravel()
            return np.linalg.eigvals(self.data)
        except np.linalg.LinAlgError as exc:
            raise ConvergenceFailure(str(exc)) from exc

    def _detect_injective(self) -> bool:
        if self.data.size == 0:
            return True
        ev = self.eigenvalues
        scale = max(float(np.max(np.abs(ev))), 1.0)
        return bool(np.min(np.abs(ev)) > _SINGULAR_FACTOR * _EPS * scale)

    def to_dense(self) -> np.ndarray:
        if self.kind == DIAGONAL:
            return np.diag(self.data)
        if self.kind == BLOCK:
            return scipy.linalg.block_diag(*self.data) if len(self.data) else np.zeros((0, 0), complex)
        return np.array(self.data)

    def __array__(self, dtype=None, copy=None):
        out = self.to_dense()
        return out if dtype is None else out.astype(dtype)

    def __repr__(self):
        return f"OperatorModel(kind={self.kind!r}, dim={self.dim}, injective={self.injective})"

    # -- arithmetic (same layout only) -----------------------------------
    def _check_layout(self, other):
        if not isinstance(other, OperatorModel):
            raise TypeError("expected OperatorModel")
        if other.kind != self.kind or other.data.shape != self.data.shape:
            raise ValueError("operators have different layouts")

    def __matmul__(self, other):
        if isinstance(other, OperatorModel):
            self._check_layout(other)
            if self.kind == DIAGONAL:
                return self.like(self.data * other.data)
            return self.like(self.data @ other.data)
        return self.matvec(other)

    def __add__(self, other):
        self._check_layout(other)
        return self.like(self.data + other.data)

    def __sub__(self, other):
        self._check_layout(other)
        return self.like(self.data - other.data)

    def __neg__(self):
        return self.like(-self.data)

    def __mul__(self, scalar):
        return self.like(self.data * complex(scalar))

    __rmul__ = __mul__

    def matvec(self, x) -> np.ndarray:
        """Apply to a vector ``(n,)`` or to the columns of ``(n, j)``."""
        x = np.asarray(x, dtype=complex)
        if x.shape[0] != self.dim:
            raise ValueError(f"vector length {x.shape[0]} != dim {self.dim}")
        if self.kind == DIAGONAL:
            return self.data.reshape((-1,) + (1,) * (x.ndim - 1)) * x
        if self.kind == BLOCK:
            k, m, _ = self.data.shape
            xb = x.reshape((k, m) + x.shape[1:])
            if x.ndim == 1:
                return np.einsum("kij,kj->ki", self.data, xb).reshape(x.shape)
            return np.einsum("kij,kj...->ki...", self.data, xb).reshape(x.shape)
        return self.data @ x

    def commutator_norm(self, other) -> float:
        return operator_norm(self @ other - other @ self, 2)

    # -- serialization ----------------------------------------------------
    def to_json(self) -> dict:
        if self.kind == DIAGONAL:
            payload = _pairs(self.data)
        elif self.kind == BLOCK:
            payload = [[_pairs(row) for row in block] for block in self.data]
        else:
            payload = [_pairs(row) for row in self.data]
        return {
            "kind": self.kind,
            "dim": self.dim,
            "data": payload,
            "injective": bool(self.injective),
            "tags": sorted(self.tags),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "OperatorModel":
        kind = _normalize_kind(obj["kind"])
        raw = obj["data"]
        if kind == DIAGONAL:
            data = _unpairs(raw)
        elif kind == BLOCK:
            data = np.array([[_unpairs(row) for row in block] for block in raw])
        else:
            data = np.array([_unpairs(row) for row in raw])
        op = cls(kind, data, obj.get("injective"), frozenset(obj.get("tags", ())))
        if "dim" in obj and int(obj["dim"]) != op.dim:
            raise ValueError(f"declared dim {obj['dim']} != actual {op.dim}")
        return op


def _normalize_kind(kind: str) -> str:
    key = kind.lower().replace("_", "")
    aliases = {"diagonal": DIAGONAL, "blockdiagonal": BLOCK, "block": BLOCK, "dense": DENSE}
    if key not in aliases:
        raise ValueError(f"unknown operator kind {kind!r}")
    return aliases[key]


def _pairs(values) -> list:
    return [[float(z.real), float(z.imag)] for z in np.asarray(values, dtype=complex)]


def _unpairs(pairs) -> np.ndarray:
    out = []
    for p in pairs:
        if isinstance(p, (int, float)):
            out.append(complex(p))
        else:
            out.append(complex(p[0], p[1]))
    return np.array(out, dtype=complex)


def as_operator(M) -> OperatorModel:
    """Wrap a plain array as a dense :class:`OperatorModel`."""
    if isinstance(M, OperatorModel):
        return M
    return OperatorModel.dense(M)


# ---------------------------------------------------------------------------
# batched shifted inverses
# ---------------------------------------------------------------------------

def shifted_inverse_batch(A: OperatorModel, c, d) -> np.ndarray:
    """Data of ``(c_j A + d_j I)^{-1}`` for every ``j``.

    Returns an array of shape ``(M,) + A.data.shape``.  No singularity check;
    callers keep the shifts away from the spectrum.
    """
    c = np.atleast_1d(np.asarray(c, dtype=complex))
    d = np.atleast_1d(np.asarray(d, dtype=complex))
    c, d = np.broadcast_arrays(c, d)
    if A.kind == DIAGONAL:
        return 1.0 / (c[:, None] * A.data[None, :] + d[:, None])
    if A.kind == BLOCK:
        k, m, _ = A.data.shape
        mats = c[:, None, None, None] * A.data[None] + d[:, None, None, None] * np.eye(m)
        if m == 2:
            return _inv2x2(mats)
        return np.linalg.inv(mats)
    n = A.dim
    mats = c[:, None, None] * A.data[None] + d[:, None, None] * np.eye(n)
    return np.linalg.inv(mats)


def _inv2x2(m):
    a, b = m[..., 0, 0], m[..., 0, 1]
    c, d = m[..., 1, 0], m[..., 1, 1]
    det = a * d - b * c
    out = np.empty_like(m)
    out[..., 0, 0] = d / det
    out[..., 0, 1] = -b / det
    out[..., 1, 0] = -c / det
    out[..., 1, 1] = a / det
    return out


def batch_norms(kind: str, batch: np.ndarray, p=2) -> np.ndarray:
    """Operator norms of a stack of same-layout operator data."""
    p = _as_p(p)
    if kind == DIAGONAL:
        if batch.shape[-1] == 0:
            return np.zeros(batch.shape[0])
        return np.max(np.abs(batch), axis=-1)
    if kind == BLOCK:
        if batch.shape[1] == 0:
            return np.zeros(batch.shape[0])
        per_block = _stack_norms(batch.reshape((-1,) + batch.shape[-2:]), p)
        return per_block.reshape(batch.shape[:2]).max(axis=1)
    return _stack_norms(batch, p)


def _stack_norms(mats: np.ndarray, p) -> np.ndarray:
    if mats.shape[-1] == 0:
        return np.zeros(mats.shape[0])
    if p == 2:
        if mats.shape[-1] == 2:
            return _norm2x2(mats)
        return np.linalg.norm(mats, ord=2, axis=(-2, -1))
    if p == 1:
        return np.abs(mats).sum(axis=-2).max(axis=-1)
    if math.isinf(p):
        return np.abs(mats).sum(axis=-1).max(axis=-1)
    return np.array([_pnorm_estimate(m, p) for m in mats])


def _norm2x2(m):
    # largest singular value of 2x2 matrices in closed form
    fro2 = np.sum(np.abs(m) ** 2, axis=(-2, -1))
    det = np.abs(m[..., 0, 0] * m[..., 1, 1] - m[..., 0, 1] * m[..., 1, 0])
    disc = np.sqrt(np.maximum(fro2 ** 2 - 4 * det ** 2, 0.0))
    return np.sqrt((fro2 + disc) / 2)


# ---------------------------------------------------------------------------
# public operations
# ---------------------------------------------------------------------------

def resolvent_shift(A: OperatorModel, lam: complex) -> OperatorModel:
    """``(lam*I + A)^{-1}`` in the layout of ``A``.

    Raises :class:`SingularShift` when ``-lam`` is numerically an eigenvalue.
    """
    lam = complex(lam)
    if A.kind == DIAGONAL:
        shifted = lam + A.data
        scale = np.maximum(np.maximum(abs(lam), np.abs(A.data)), np.finfo(float).tiny)
        bad = np.abs(shifted) <= _SINGULAR_FACTOR * _EPS * scale
        if np.any(bad):
            raise SingularShift(f"-{lam} is an eigenvalue of A")
        return A.like(1.0 / shifted)
    if A.kind == BLOCK:
        m = A.data.shape[1]
        mats = A.data + lam * np.eye(m)
        _check_conditioning(mats, lam)
        return A.like(np.linalg.inv(mats))
    mats = A.data + lam * np.eye(A.dim)
    _check_conditioning(mats[None], lam)
    lu = scipy.linalg.lu_factor(mats, check_finite=False)
    return A.like(scipy.linalg.lu_solve(lu, np.eye(A.dim, dtype=complex)))


def _check_conditioning(mats, lam):
    if mats.shape[0] == 0:
        return
    with np.errstate(all="ignore"):
        cond = np.linalg.cond(mats)
    if np.any(~np.isfinite(cond)) or np.any(cond * _EPS * _SINGULAR_FACTOR >= 1.0):
        raise SingularShift(f"-{lam} is (numerically) an eigenvalue of A")


@dataclass(frozen=True)
class NormSpace:
    """Coordinate space with the l^p norm, ``1 <= p <= inf``."""

    p: float = 2.0

    def __post_init__(self):
        if not (self.p >= 1):
            raise DomainError(f"p must be >= 1, got {self.p}")

    @property
    def conjugate(self) -> float:
        if self.p == 1:
            return math.inf
        if math.isinf(self.p):
            return 1.0
        return self.p / (self.p - 1)


def _as_p(space) -> float:
    if isinstance(space, NormSpace):
        return float(space.p)
    p = float(space)
    if not p >= 1:
        raise DomainError(f"p must be >= 1, got {p}")
    return p


def operator_norm(M, space=2, *, full_output=False, seed=0):
    """Induced ``l^p`` operator norm.

    Exact for ``p`` in ``{1, 2, inf}``.  Other ``p`` use a dual-norm power
    iteration that returns a lower bound; with ``full_output=True`` the
    result is ``(value, estimated)``.
    """
    p = _as_p(space)
    exact = p in (1.0, 2.0) or math.isinf(p)
    if isinstance(M, OperatorModel):
        value = float(batch_norms(M.kind, M.data[None], p)[0])
    else:
        M = np.atleast_2d(np.asarray(M, dtype=complex))
        if M.size == 0:
            value = 0.0
        elif exact:
            value = float(_stack_norms(M[None], p)[0])
        else:
            value = _pnorm_estimate(M, p, seed=seed)
    return (value, not exact) if full_output else value


def _dual(y, p):
    # vector z with ||z||_q = 1 and z^H y = ||y||_p
    ay = np.abs(y)
    norm = np.linalg.norm(y, p)
    if norm == 0:
        return np.zeros_like(y)
    phase = np.where(ay > 0, y / np.where(ay > 0, ay, 1), 0)
    return phase * (ay / norm) ** (p - 1)


def _pnorm_estimate(M, p, seed=0, starts=4, maxiter=100):
    M = np.asarray(M, dtype=complex)
    n = M.shape[1]
    q = p / (p - 1)
    rng = np.random.default_rng(seed)
    candidates = [np.ones(n, complex)]
    candidates += [rng.standard_normal(n) + 1j * rng.standard_normal(n) for _ in range(starts - 1)]
    best = 0.0
    for x in candidates:
        x = x / np.linalg.norm(x, p)
        est = 0.0
        for _ in range(maxiter):
            y = M @ x
            est_new = np.linalg.norm(y, p)
            z = M.conj().T @ _dual(y, p)
            if np.linalg.norm(z, q) <= abs(np.vdot(z, x)) * (1 + 1e-12) or est_new <= est * (1 + 1e-14):
                est = max(est, est_new)
                break
            est = est_new
            x = _dual(z, q)
        best = max(best, est)
    return float(best)


def spectrum(A: OperatorModel) -> np.ndarray:
    """Eigenvalues sorted lexicographically by (Re, Im)."""
    ev = np.asarray(A.eigenvalues)
    if ev.size == 0:
        return ev
    scale = max(float(np.max(np.abs(ev))), 1.0)
    tol = 1e-12 * scale
    key_re = np.round(ev.real / tol) * tol
    order = np.lexsort((ev.imag, key_re))
    return ev[order]


# ---------------------------------------------------------------------------
# sectoriality
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SamplingPlan:
    """Radii and ray angles for sampling ``||lambda R(lambda, A)||``.

    Rays sit at ``omega + gap*(pi - omega)`` on both sides of the real axis.
    With ``refine_spectrum`` the moduli of the eigenvalues are added to the
    radii, which catches the peaks that a log grid alone would straddle.
    """

    r_min: float = 1e-8
    r_max: float = 1e8
    per_decade: int = 64
    gaps: tuple = (1e-3, 1e-2, 1e-1, 0.5)
    refine_spectrum: bool = True

    @classmethod
    def empty(cls):
        return cls(per_decade=0, gaps=(), refine_spectrum=False)

    def radii(self, eigenvalues=()) -> np.ndarray:
        if self.per_decade <= 0:
            base = np.zeros(0)
        else:
            decades = math.log10(self.r_max / self.r_min)
            count = max(int(round(decades * self.per_decade)) + 1, 2)
            base = np.logspace(math.log10(self.r_min), math.log10(self.r_max), count)
        if self.refine_spectrum:
            mods = np.abs(np.asarray(eigenvalues))
            mods = mods[(mods >= self.r_min) & (mods <= self.r_max)]
            base = np.union1d(base, mods)
        return base


@dataclass
class SectorialityReport:
    omega: float
    M_constant: float
    samples: list
    valid: bool = True
    sampled: bool = True
    note: str = "sampled lower bound for M(A, omega); not a proof"


def sectoriality(A: OperatorModel, omega: float, space=2, sampling: SamplingPlan | None = None,
                 *, chunk: int = 4096) -> SectorialityReport:
    """Sampled lower bound for the sectoriality constant ``M(A, omega)``."""
    if not 0 < omega < math.pi:
        raise DomainError("omega must lie in (0, pi)")
    sampling = sampling or SamplingPlan()
    ev = A.eigenvalues
    nonzero = ev[np.abs(ev) > 0]
    if nonzero.size and np.any(np.abs(np.angle(nonzero)) > omega + 1e-12):
        raise SpectrumOutsideSector(f"spectrum not contained in closed sector of angle {omega}")

    radii = sampling.radii(ev)
    angles = [omega + g * (math.pi - omega) for g in sampling.gaps]
    rays = np.array([s * a for a in angles for s in (1, -1)])
    if radii.size == 0 or rays.size == 0:
        return SectorialityReport(omega, 0.0, [], valid=False)

    lams = (radii[None, :] * np.exp(1j * rays[:, None])).ravel()
    values = np.empty(lams.size)
    for lo in range(0, lams.size, chunk):
        part = lams[lo:lo + chunk]
        inv = shifted_inverse_batch(A, -1.0, part)  # (lam - A)^{-1}
        values[lo:lo + chunk] = np.abs(part) * batch_norms(A.kind, inv, space)
    samples = list(zip(lams.tolist(), values.tolist()))
    return SectorialityReport(omega, float(values.max()), samples)


def fourier_r(p: float) -> float:
    """``r`` with ``1/r = 1/p - 1/p'`` for a space of Fourier type ``p``."""
    if not 1 <= p <= 2:
        raise DomainError(f"Fourier type p must lie in [1, 2], got {p}")
    inv_r = 2.0 / p - 1.0
    if inv_r <= 0:
        return math.inf
    return 1.0 / inv_r


def inv_r(p: float) -> float:
    """``1/r`` for Fourier type ``p`` (0 for Hilbert spaces)."""
    r = fourier_r(p)
    return 0.0 if math.isinf(r) else 1.0 / r


def apply_batch(kind: str, batch: np.ndarray, x) -> np.ndarray:
    """Apply each operator of a same-layout stack to ``x``; shape ``(M, n)``."""
    x = np.asarray(x, dtype=complex)
    if kind == DIAGONAL:
        return batch * x[None, :]
    if kind == BLOCK:
        M, k, m, _ = batch.shape
        return np.einsum("bkij,kj->bki", batch, x.reshape(k, m)).reshape(M, k * m)
    return np.einsum("bij,j->bi", batch, x)
