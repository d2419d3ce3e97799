"""Command line entry point ``relaxbc``.

Every subcommand reads one JSON run config, validates it against
:data:`CONFIG_SCHEMA` (unknown keys are rejected) and writes JSON/CSV/SVG
artifacts under ``--out``.  Exit codes: 0 success or PASS, 1 FAIL,
2 INCONCLUSIVE, 3 configuration error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import os
import sys

import jsonschema
import numpy as np

from . import __version__
from .asymptotics import residual
from .construct import PRESET_FAMILIES
from .errors import ConfigError, InconclusiveStudy, RelaxBCError
from .gkc import SamplingSpec, certify
from .harness import BUILTIN_PROBLEMS, ExperimentSpec, GridPolicy, convergence_study, emit_report, load_problem
from .solver import Grid1D, energy, h1_norm, l2_norm, run_problem, symmetrizer

EXIT_OK, EXIT_FAIL, EXIT_INCONCLUSIVE, EXIT_CONFIG = 0, 1, 2, 3

_NUM = {"type": "number"}
_MATRIX = {"type": ["number", "array"]}
_SIGNAL_TERM = {
    "type": "object",
    "additionalProperties": False,
    "properties": {k: {"type": "array", "items": _NUM} for k in ("poly", "poly_imag", "exponent", "exponent_imag")}
    | {k: _NUM for k in ("rate", "freq", "phase")},
}
_SIGNAL = {
    "type": "object",
    "additionalProperties": False,
    "required": ["components"],
    "properties": {"dim": {"type": "integer"},
                   "components": {"type": "array", "items": {"type": "array", "items": _SIGNAL_TERM}}},
}
_PROFILE_TERM = {
    "type": "object",
    "additionalProperties": False,
    "properties": {"poly": {"type": "array", "items": _NUM}, "exponent": {"type": "array", "items": _NUM},
                   "center": _NUM, "width": _NUM, "decay": _NUM},
}
_PROFILE = {
    "type": "object",
    "additionalProperties": False,
    "required": ["components"],
    "properties": {"dim": {"type": "integer"},
                   "components": {"type": "array", "items": {"type": "array", "items": _PROFILE_TERM}}},
}
_PRESET_KEYS = ("B_p", "Ctilde", "Bp_tilde", "Bu1", "Bp1", "Bp2", "Bu2", "Bu11", "Bp11", "Bp22", "star", "Bu22")

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "problem": {"type": "string", "enum": sorted(BUILTIN_PROBLEMS)},
        "model": {
            "type": "object", "additionalProperties": False, "required": ["T", "lambda", "a"],
            "properties": {"T": {"type": "array"}, "lambda": {"type": "array", "items": _NUM},
                           "a": {"type": "array", "items": _NUM}},
        },
        "given": {"type": "object", "additionalProperties": False,
                  "properties": {"Bhat": {"type": "array"}, "bhat": _SIGNAL}},
        "bc": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "family": {"type": "string", "enum": sorted(PRESET_FAMILIES)},
                "params": {"type": "object", "additionalProperties": False,
                           "properties": {k: _MATRIX for k in _PRESET_KEYS} | {"D": _SIGNAL}},
                "construct": {"type": "object", "additionalProperties": False,
                              "properties": {"Ctilde": _MATRIX, "BpU_free": _MATRIX, "D": _SIGNAL,
                                             "annihilator": {"enum": ["qr", "svd"]}}},
                "B_u": {"type": "array"}, "B_p": {"type": "array"}, "Ctilde": _MATRIX, "D": _SIGNAL,
            },
        },
        "u0": _PROFILE,
        "gkc": {
            "type": "object", "additionalProperties": False,
            "properties": {"deltas": {"type": "array", "items": _NUM}, "n_re": {"type": "integer"},
                           "n_im": {"type": "integer"}, "im_range": {"type": "array", "items": _NUM},
                           "re_max_exp": _NUM, "tol_pass": _NUM, "tol_fail": _NUM, "n_local": {"type": "integer"}},
        },
        "grid": {
            "type": "object", "additionalProperties": False,
            "properties": {"X": _NUM, "N": {"type": "integer"}, "ratio": _NUM, "cfl": _NUM, "t_star": _NUM,
                           "eps": _NUM, "order": {"enum": [1, 2]}, "stride": {"type": "integer", "minimum": 1},
                           "times": {"type": "array", "items": _NUM}},
        },
        "asymptotic": {
            "type": "object", "additionalProperties": False,
            "properties": {"eps": _NUM, "times": {"type": "array", "items": _NUM}, "X": _NUM,
                           "N": {"type": "integer", "minimum": 2}},
        },
        "experiment": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "eps": {"type": "array", "items": _NUM},
                "grid": {"type": "object", "additionalProperties": False,
                         "properties": {"kind": {"enum": ["ratio", "power"]}, "ratio": _NUM, "power": _NUM,
                                        "n_min": {"type": "integer"}}},
                "norms": {"type": "array", "items": {"enum": ["L2", "H1", "L2_vs_u0bar"]}},
                "t_star": _NUM, "n_times": {"type": "integer", "minimum": 1}, "cfl": _NUM,
                "order": {"enum": [1, 2]}, "refine_tol": _NUM, "margin": _NUM,
                "bands": {"type": "object", "additionalProperties": {"type": "array", "items": _NUM}},
                "svg": {"type": "boolean"},
            },
        },
    },
}

_PROBLEM_KEYS = ("model", "given", "bc", "u0")


class RunConfig:
    """Validated config document plus its canonical hash."""

    def __init__(self, doc: dict):
        try:
            jsonschema.validate(doc, CONFIG_SCHEMA)
        except jsonschema.ValidationError as exc:
            where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
            raise ConfigError(f"config invalid at {where}: {exc.message}") from exc
        if "problem" not in doc and not all(k in doc for k in ("model", "u0")):
            raise ConfigError("config needs either 'problem' (builtin name) or 'model' and 'u0' sections")
        self.doc = doc
        canon = json.dumps(doc, sort_keys=True, separators=(",", ":"))
        self.hash = hashlib.sha256(canon.encode()).hexdigest()

    @classmethod
    def load(cls, path: str) -> "RunConfig":
        try:
            with open(path, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: malformed JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
        if not isinstance(doc, dict):
            raise ConfigError(f"{path}: top level must be a JSON object")
        return cls(doc)

    def problem_ref(self):
        if "model" in self.doc:
            return {k: self.doc[k] for k in _PROBLEM_KEYS if k in self.doc}
        return self.doc["problem"]

    def section(self, name: str) -> dict:
        return dict(self.doc.get(name, {}))


class Context:
    def __init__(self, cfg: RunConfig, out: str, seed: int, jobs: int):
        self.cfg = cfg
        self.out = out
        self.seed = seed
        self.jobs = jobs
        self._problem = None

    @property
    def problem(self):
        if self._problem is None:
            self._problem = load_problem(self.cfg.problem_ref())
        return self._problem

    def header(self, stage: str) -> dict:
        return {"stage": stage, "config_hash": self.cfg.hash, "version": __version__}

    def path(self, name: str) -> str:
        return os.path.join(self.out, name)

    def write_json(self, name: str, stage: str, body: dict) -> str:
        os.makedirs(self.out, exist_ok=True)
        doc = {**self.header(stage), **body}
        path = self.path(name)
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(json.dumps(_plain(doc), indent=2, sort_keys=True) + "\n")
        return path

    def write_text(self, name: str, text: str) -> str:
        os.makedirs(self.out, exist_ok=True)
        path = self.path(name)
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
        return path

    def completed(self, name: str, stage: str) -> dict | None:
        """Existing artifact for this stage and config hash, if any."""
        try:
            with open(self.path(name), encoding="utf-8") as fh:
                doc = json.load(fh)
        except (OSError, json.JSONDecodeError):
            return None
        if doc.get("config_hash") == self.cfg.hash and doc.get("version") == __version__ and doc.get("stage") == stage:
            return doc
        return None


def _plain(obj):
    """JSON-safe copy: numpy scalars and arrays to builtins, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if np.isfinite(v) else str(v)
    return obj


# -- stages ------------------------------------------------------------------


def stage_construct(ctx: Context) -> tuple:
    p = ctx.problem
    body = {"bc": p.bc.to_json(), "model": p.model.to_json(), "given": p.given.to_json(), "cond_T": p.model.cond_T}
    return EXIT_OK, ctx.write_json("construct_bc.json", "construct-bc", body), body


def stage_gkc(ctx: Context) -> tuple:
    p = ctx.problem
    cert = certify(p.bc, p.model, SamplingSpec.from_json(ctx.cfg.section("gkc")))
    body = {"certificate": cert.to_json()}
    code = {"PASS": EXIT_OK, "FAIL": EXIT_FAIL}.get(cert.verdict, EXIT_INCONCLUSIVE)
    return code, ctx.write_json("gkc.json", "verify-gkc", body), body


def stage_compat(ctx: Context) -> tuple:
    from .compat import compat_pipeline

    p = ctx.problem
    _, _, rep = compat_pipeline(p.model, p.given, p.bc, p.u0)
    body = {"report": rep.to_json(), "D": p.bc.D.to_json()}
    return (EXIT_OK if rep.passed else EXIT_FAIL), ctx.write_json("compat.json", "compat-check", body), body


def stage_build_data(ctx: Context) -> tuple:
    p = ctx.problem
    body = {
        "u0": p.init.u_init.to_json(),
        "p01": p.init.p01.to_json(),
        "p02": p.init.p02.to_json(),
        "b0": p.bc.b0.to_json(),
        "b1": p.bc.b1.to_json(),
        "b2": p.bc.b2.to_json(),
        "compat_passed": p.compat_passed,
    }
    return EXIT_OK, ctx.write_json("data.json", "build-data", body), body


def _snapshot_csv(x, times, fields: list, n: int, stride: int) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", "x"] + [f"u{j + 1}" for j in range(n)] + [f"p{j + 1}" for j in range(n)])
    for t, (u, pp) in zip(times, fields):
        for i in range(0, len(x), stride):
            w.writerow([f"{t:.10g}", f"{x[i]:.10g}"] + [f"{v:.12e}" for v in u[:, i]] + [f"{v:.12e}" for v in pp[:, i]])
    return buf.getvalue()


def stage_asymptotic(ctx: Context) -> tuple:
    p = ctx.problem
    sec = ctx.cfg.section("asymptotic")
    eps = float(sec.get("eps", 1e-2))
    times = [float(t) for t in sec.get("times", [0.5, 1.0])]
    X = float(sec.get("X", p.domain_length(max(times))))
    N = int(sec.get("N", 400))
    dx = X / N
    x = (np.arange(N) + 0.5) * dx
    asym = p.asymptotic()
    fields = [asym.fields(x, t, eps) for t in times]
    res = []
    for t in times:
        computed, predicted, l2 = residual(asym, eps, x, t)
        res.append({"t": t, "residual_l2": l2, "mismatch_max": float(np.abs(computed - predicted).max())})
    ctx.write_text("asymptotic.csv", _snapshot_csv(x, times, fields, p.model.n, 1))
    body = {"eps": eps, "times": times, "X": X, "N": N, "residual": res,
            "boundary_residual": asym.boundary_residual(np.array(times), eps)}
    return EXIT_OK, ctx.write_json("asymptotic.json", "run-asymptotic", body), body


def stage_stiff(ctx: Context) -> tuple:
    p = ctx.problem
    sec = ctx.cfg.section("grid")
    t_star = float(sec.get("t_star", 1.0))
    eps = float(sec.get("eps", 1e-2))
    X = float(sec.get("X", p.domain_length(t_star)))
    N = int(sec.get("N", GridPolicy(ratio=float(sec.get("ratio", 8.0))).cells(X, eps)))
    grid = Grid1D(X, N, float(sec.get("cfl", 0.9)), t_star)
    grid.check_support(p.model, p.u0.support_bound())
    times = [float(t) for t in sec.get("times", [t_star])]
    sol = run_problem(p.model, p.bc, p.init, grid, eps, times=times, order=int(sec.get("order", 2)))
    asym = p.asymptotic()
    A0 = symmetrizer(p.model) if np.all(p.model.a > p.model.lam**2) else None
    summary = []
    for t in times:
        u, pp = sol.state(t)
        ua, pa = asym.fields(sol.x, t, eps)
        e = np.concatenate([u - ua, pp - pa])
        row = {"t": t, "L2": sol.l2(t), "H1": sol.h1(t), "err_L2": l2_norm(e, grid.dx), "err_H1": h1_norm(e, grid.dx)}
        if A0 is not None:
            row["energy"] = energy(p.model, u, pp, grid.dx, A0)
        summary.append(row)
    stride = int(sec.get("stride", max(1, N // 500)))
    ctx.write_text("stiff.csv", _snapshot_csv(sol.x, times, [sol.state(t) for t in times], p.model.n, stride))
    body = {"eps": eps, "X": X, "N": N, "steps": sol.steps, "norms": summary}
    return EXIT_OK, ctx.write_json("stiff.json", "run-stiff", body), body


def stage_converge(ctx: Context) -> tuple:
    sec = ctx.cfg.section("experiment")
    svg = bool(sec.pop("svg", True))
    spec = ExperimentSpec.from_json({**sec, "problem": ctx.cfg.problem_ref()})
    try:
        table = convergence_study(spec, jobs=ctx.jobs)
    except InconclusiveStudy as exc:
        body = {"verdict": "INCONCLUSIVE", "reason": str(exc)}
        return EXIT_INCONCLUSIVE, ctx.write_json("rates.json", "converge", body), body
    emit_report(table, ctx.out, "rates", svg=svg, extra=_plain(ctx.header("converge")))
    body = table.to_json()
    code = {"PASS": EXIT_OK, "FAIL": EXIT_FAIL}.get(table.verdict, EXIT_INCONCLUSIVE)
    return code, ctx.path("rates.json"), body


PIPELINE = [
    ("construct-bc", "construct_bc.json", stage_construct),
    ("verify-gkc", "gkc.json", stage_gkc),
    ("compat-check", "compat.json", stage_compat),
    ("run-asymptotic", "asymptotic.json", stage_asymptotic),
    ("run-stiff", "stiff.json", stage_stiff),
    ("converge", "rates.json", stage_converge),
]
STAGES = {name: fn for name, _, fn in PIPELINE} | {"build-data": stage_build_data}


def _verdict_code(stage: str, doc: dict) -> int:
    if stage == "verify-gkc":
        v = doc["certificate"]["verdict"]
    elif stage == "compat-check":
        v = "PASS" if doc["report"]["passed"] else "FAIL"
    elif stage == "converge":
        v = doc.get("verdict", "PASS")
    else:
        v = "PASS"
    return {"PASS": EXIT_OK, "FAIL": EXIT_FAIL}.get(v, EXIT_INCONCLUSIVE)


def run_pipeline(ctx: Context) -> int:
    """Run every stage in order, reusing artifacts whose hash matches; stop at the first FAIL."""
    worst = EXIT_OK
    for stage, name, fn in PIPELINE:
        done = ctx.completed(name, stage)
        if done is not None:
            code = _verdict_code(stage, done)
            print(f"[{stage}] reused {ctx.path(name)}")
        else:
            try:
                code, path, _ = fn(ctx)
            except RelaxBCError as exc:
                raise RelaxBCError(f"stage {stage}: {exc}") from exc
            print(f"[{stage}] wrote {path}")
        if code == EXIT_FAIL:
            print(f"[{stage}] FAIL; stopping")
            return EXIT_FAIL
        worst = max(worst, code)
    return worst


def _print_summary(stage: str, body: dict) -> None:
    if stage == "verify-gkc":
        c = body["certificate"]
        print(f"GKC {c['verdict']}: c_hat = {c['c_hat']:.6g}")
    elif stage == "compat-check":
        print("compatibility " + ("PASS" if body["report"]["passed"] else "FAIL"))
    elif stage == "converge" and "slopes" in body:
        for k, s in body["slopes"].items():
            print(f"slope {k}: {s}")
        print(f"verdict: {body['verdict']}")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", default="artifacts", help="output directory (default: artifacts)")
    common.add_argument("--seed", type=int, default=0, help="seed for randomized checks")
    common.add_argument("--jobs", type=int, default=1, help="worker processes for convergence studies")
    parser = argparse.ArgumentParser(prog="relaxbc", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command")
    sub.add_parser("preset-list", help="list the preset boundary-matrix families")
    for name in list(STAGES) + ["pipeline"]:
        sp = sub.add_parser(name, parents=[common], help=f"run the {name} stage" if name != "pipeline" else
                            "run all stages, reusing completed artifacts")
        sp.add_argument("config", help="run config (JSON)")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_CONFIG
    if args.command == "preset-list":
        for name, desc in PRESET_FAMILIES.items():
            print(f"{name:16s} {desc}")
        return EXIT_OK
    try:
        cfg = RunConfig.load(args.config)
        ctx = Context(cfg, args.out, args.seed, max(1, args.jobs))
        np.random.seed(args.seed)
        if args.command == "pipeline":
            return run_pipeline(ctx)
        code, path, body = STAGES[args.command](ctx)
        _print_summary(args.command, body)
        print(f"wrote {path}")
        return code
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except RelaxBCError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except (ValueError, KeyError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
