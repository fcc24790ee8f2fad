"""Run-wide numerical settings.

Defaults can be overridden with ``SEMIDECAY_<FIELD>`` environment variables
(e.g. ``SEMIDECAY_TOL_QUAD=1e-8``) or by passing a modified copy explicitly.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, fields, replace


@dataclass(frozen=True)
class Config:
    tol_quad: float = 1e-9
    tol_abs: float = 1e-10
    max_evals: int = 200_000
    workers: int = 1
    seed: int = 0
    moment_K: int = 10
    delta: float = 0.1
    epsilon: float = 0.1
    c_logonly: float = 0.25
    t0: float = 10.0

    def with_(self, **kw) -> "Config":
        return replace(self, **{k: v for k, v in kw.items() if v is not None})


def from_env(base: Config | None = None, environ=None) -> Config:
    environ = os.environ if environ is None else environ
    base = base or Config()
    updates = {}
    for f in fields(Config):
        key = "SEMIDECAY_" + f.name.upper()
        if key in environ:
            cast = int if f.type in (int, "int") else float
            updates[f.name] = cast(environ[key])
    return replace(base, **updates)


DEFAULT = Config()
