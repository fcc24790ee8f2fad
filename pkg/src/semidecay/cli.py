"""Command line entry point: ``semidecay <command> [options]``."""
from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import tempfile

import numpy as np

from . import cbf, funcalc, profiles, verify
from .config import from_env
from .errors import SemidecayError
from .linop import OperatorModel
from .semigroup import decay_curve, default_t_grid

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2

SCHEMA = """\
input schemas (JSON; complex numbers are [re, im]):
  operator : {"kind": "diagonal|block|dense", "dim": n, "data": [...]}
  calc     : {"operator": operator, "task": "dunford|oracle|log|frac_power_inv|weight|cbf",
              "symbol": {"alpha", "beta", "upsilon1", "upsilon2"}   (dunford, oracle)
              "tau": x (frac_power_inv), "family"/"params" (weight), "name"/"alpha" (cbf)}
  decay    : {"operator": operator, "weight": {"family", "params"} | null,
              "t_grid": [t_min, t_max, per_decade], "p": 2}
  suite    : [ExperimentSpec, ...]  (see `verify --preset paper-suite -o out` for examples)
"""


class ConfigError(Exception):
    pass


def _write(path: str, text: str) -> None:
    """Write atomically (temp file in the same directory, then rename)."""
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-")
    with os.fdopen(fd, "w", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=1) + "\n"


def _load(path):
    if path is None:
        raise ConfigError("an input file is required (-i)")
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from exc


def _window(text: str) -> tuple:
    try:
        lo, hi = (float(x) for x in text.split(":"))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"window must look like 1e2:1e6, got {text!r}") from exc
    if not 0 < lo < hi:
        raise argparse.ArgumentTypeError("window needs 0 < lo < hi")
    return lo, hi


def _cpair(z) -> list:
    z = complex(z)
    return [z.real, z.imag]


def _matrix_json(M: OperatorModel) -> dict:
    return M.to_json()


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_catalog(args, cfg) -> int:
    entries = cbf.catalog(args.alpha)
    listing = [{"name": e.name, "a": e.rep.a, "b": e.rep.b, "support": list(e.rep.support),
                "formula": e.rep.formula, "params": e.params} for e in entries]
    _write(os.path.join(args.output_dir, "catalog.json"), _dump(listing))
    if args.probe:
        lams = [10.0 ** k for k in range(-3, 4)]
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["name", "lambda", "quadrature_re", "quadrature_im", "closed_re", "closed_im", "rel_err"])
        for e in entries:
            for row in cbf.probe_table(e, lams):
                w.writerow([e.name, repr(row["lambda"][0]), *map(repr, row["quadrature"]),
                            *map(repr, row["closed_form"]), repr(row["rel_err"])])
        _write(os.path.join(args.output_dir, "catalog_probe.csv"), buf.getvalue())
    return EXIT_OK


def _symbol(d) -> funcalc.HInftyZeroSymbol:
    d = d or {}
    return funcalc.HInftyZeroSymbol(float(d.get("alpha", 0)), float(d.get("beta", 1)),
                                    float(d.get("upsilon1", 0)), float(d.get("upsilon2", 0)))


def cmd_calc(args, cfg) -> int:
    spec = _load(args.input)
    if "operator" not in spec:
        raise ConfigError("calc input needs an 'operator' entry")
    A = OperatorModel.from_json(spec["operator"])
    task = spec.get("task", "dunford")
    out = {"task": task}
    if task == "dunford":
        sym = _symbol(spec.get("symbol"))
        M, info = funcalc.dunford_apply(sym, A, tol=float(spec.get("tol", 1e-10)), full_output=True)
        out.update(result=_matrix_json(M), info=info.to_json(), symbol=sym.to_json())
    elif task == "oracle":
        sym = _symbol(spec.get("symbol"))
        out.update(result=_matrix_json(funcalc.matrix_function_oracle(sym, A)), symbol=sym.to_json())
    elif task == "log":
        out.update(result=_matrix_json(funcalc.log_operator(A)))
    elif task == "frac_power_inv":
        out.update(result=_matrix_json(funcalc.frac_power_inv(A, float(spec["tau"]))))
    elif task == "weight":
        W = funcalc.weight_operator(A, spec["family"], spec["params"])
        out.update(result=_matrix_json(W.matrix), family=W.family, params=W.params,
                   max_commutator=W.max_commutator())
    elif task == "cbf":
        entry = cbf.catalog_entry(spec["name"], float(spec.get("alpha", 0.5)))
        x = np.asarray([complex(*v) for v in spec["vector"]]) if "vector" in spec else np.ones(A.dim, complex)
        y = cbf.apply_cbf_operator(entry.rep, A, x, tol=cfg.tol_quad, epsabs=cfg.tol_abs)
        out.update(name=entry.name, result=[_cpair(v) for v in y])
    else:
        raise ConfigError(f"unknown calc task {task!r}")
    _write(os.path.join(args.output_dir, "calc.json"), _dump(out))
    return EXIT_OK


def cmd_profile(args, cfg) -> int:
    A = OperatorModel.from_json(_load(args.input))
    prof = profiles.resolvent_profile(A, space=args.p)
    errors = {}
    for side, window, fit in (("inf", args.window_inf, profiles.fit_growth_infinity),
                              ("zero", args.window_zero, profiles.fit_growth_zero)):
        if side == "zero" and not A.injective:
            continue
        try:
            fit(prof, window)
        except SemidecayError as exc:
            errors[side] = str(exc)
    data = prof.to_json()
    data["fit_errors"] = errors
    _write(os.path.join(args.output_dir, "profile.json"), _dump(data))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["s", "n", "M"])
    for row in zip(prof.s, prof.n, prof.M):
        w.writerow([repr(float(v)) for v in row])
    _write(os.path.join(args.output_dir, "profile.csv"), buf.getvalue())
    return EXIT_OK


def cmd_decay(args, cfg) -> int:
    spec = _load(args.input)
    if "operator" not in spec:
        raise ConfigError("decay input needs an 'operator' entry")
    A = OperatorModel.from_json(spec["operator"])
    W = None
    if spec.get("weight"):
        W = funcalc.weight_operator(A, spec["weight"]["family"], spec["weight"]["params"])
    lo, hi, per = spec.get("t_grid", (1.0, 1e4, 25))
    curve = decay_curve(A, W, default_t_grid(float(lo), float(hi), int(per)), spec.get("p", 2),
                        workers=cfg.workers)
    _write(os.path.join(args.output_dir, "decay.json"), _dump(curve.to_json()))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", "norm"])
    for t, v in zip(curve.t_grid, curve.values):
        w.writerow([repr(float(t)), repr(float(v))])
    _write(os.path.join(args.output_dir, "decay.csv"), buf.getvalue())
    return EXIT_OK


def cmd_predict(args, cfg) -> int:
    try:
        params = json.loads(args.params)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"--params is not valid JSON: {exc}") from exc
    pred = profiles.predict_decay(args.theorem, params)
    _write(os.path.join(args.output_dir, "prediction.json"), _dump(pred.to_json()))
    return EXIT_OK


def cmd_verify(args, cfg) -> int:
    if args.preset:
        specs = verify.PRESETS[args.preset]()
    else:
        raw = _load(args.input)
        if not isinstance(raw, list):
            raise ConfigError("suite file must hold a JSON list of experiments")
        try:
            specs = [verify.ExperimentSpec.from_json(d) for d in raw]
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"bad experiment entry: {exc}") from exc
    if args.predict:
        preds = {s.name: profiles.predict_decay(s.theorem_id, s.params_for_prediction()).to_json() for s in specs}
        text = _dump(preds)
        _write(os.path.join(args.output_dir, "predictions.json"), text)
        sys.stdout.write(text)
    reports = verify.run_suite(specs, workers=cfg.workers)
    for r in reports:
        _write(os.path.join(args.output_dir, f"{r.spec.name}.json"), r.dumps() + "\n")
    summary = verify.summary_csv(reports)
    _write(os.path.join(args.output_dir, "summary.csv"), summary)
    sys.stdout.write(summary)
    return EXIT_OK if all(r.verdict == verify.PASS for r in reports) else EXIT_FAIL


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-o", "--output-dir", default="out")
    common.add_argument("--tol-quad", type=float, default=None)
    common.add_argument("--workers", type=int, default=None)
    common.add_argument("--seed", type=int, default=None)

    parser = argparse.ArgumentParser(prog="semidecay", description=__doc__, epilog=SCHEMA,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("catalog", parents=[common], help="list the CBF catalog")
    p.add_argument("--probe", action="store_true", help="also write quadrature vs closed form table")
    p.add_argument("--alpha", type=float, default=0.5)
    p.set_defaults(func=cmd_catalog)

    p = sub.add_parser("calc", parents=[common], help="operator functional calculus")
    p.add_argument("-i", "--input")
    p.set_defaults(func=cmd_calc)

    p = sub.add_parser("profile", parents=[common], help="resolvent growth profile and fits")
    p.add_argument("-i", "--input")
    p.add_argument("--window-inf", type=_window, default=(1e2, 1e6))
    p.add_argument("--window-zero", type=_window, default=(1e-6, 1e-2))
    p.add_argument("--p", type=float, default=2.0)
    p.set_defaults(func=cmd_profile)

    p = sub.add_parser("decay", parents=[common], help="measure ||T(t) W||")
    p.add_argument("-i", "--input")
    p.set_defaults(func=cmd_decay)

    p = sub.add_parser("predict", parents=[common], help="decay envelope for a theorem")
    p.add_argument("--theorem", required=True, choices=profiles.THEOREMS)
    p.add_argument("--params", default="{}")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("verify", parents=[common], help="run a decay-bound suite")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("-i", "--input")
    g.add_argument("--preset", choices=sorted(verify.PRESETS))
    p.add_argument("--predict", action="store_true", help="also print each predicted envelope as JSON")
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        if exc.code not in (0, None):
            sys.stderr.write(SCHEMA)
        return EXIT_OK if exc.code in (0, None) else EXIT_CONFIG
    try:
        cfg = from_env().with_(tol_quad=args.tol_quad, workers=args.workers, seed=args.seed)
        if cfg.workers < 1:
            raise ConfigError("--workers must be >= 1")
        return args.func(args, cfg)
    except (ConfigError, ValueError, KeyError) as exc:
        sys.stderr.write(f"semidecay: configuration error: {exc}\n")
        return EXIT_CONFIG
    except SemidecayError as exc:
        sys.stderr.write(f"semidecay: {type(exc).__name__}: {exc}\n")
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
