"""Convergence experiments: stiff solver against the asymptotic expansion.

A study runs the solver for each ``eps`` on a grid from the policy, repeats
the run with ``dx`` halved, and keeps a row only when every reported error
changes by less than ``refine_tol`` under the halving.  Slopes are least
squares fits of ``log(error)`` against ``log(eps)`` over the kept rows.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .asymptotics import AsymptoticSolution, build_asymptotic
from .compat import RelaxationInitialData, compat_pipeline
from .construct import ConstructedBC, ConstructionParams, bc_from_json, construct, preset
from .errors import ConfigError, DomainError, InconclusiveStudy
from .model import GivenBoundaryCondition, SpectralModel, given_bc_from_json
from .signals import SmoothProfile, SmoothSignal
from .solver import Grid1D, GridSolution, h1_norm, l2_norm, run_problem

NORMS = ("L2", "H1", "L2_vs_u0bar")


@dataclass
class Problem:
    """Model, boundary conditions and data, ready for the solver."""

    name: str
    model: SpectralModel
    given: GivenBoundaryCondition
    bc: ConstructedBC
    u0: SmoothProfile
    init: RelaxationInitialData
    compat_passed: bool
    doc: dict = field(default_factory=dict, repr=False)

    def asymptotic(self) -> AsymptoticSolution:
        return build_asymptotic(self.model, self.given, self.bc, self.u0)

    def domain_length(self, t_star: float, margin: float = 0.5) -> float:
        return self.u0.support_bound() + t_star * float(np.sqrt(self.model.a).max()) + margin


_P1 = {"T": [[1, 0], [0, 1]], "lambda": [1, -1], "a": [4, 4]}
_P1_U0 = {"components": [[{"poly": [1.0], "center": 3.5, "width": 0.5}],
                         [{"poly": [0.5], "center": 3.5, "width": 0.5}]]}


def _layer_datum(k: float) -> dict:
    """``D = (0, k t^4 e^{-2t})``: vanishing 3-jet at ``t = 0``, so compatible as given."""
    return {"components": [[], [{"poly": [0, 0, 0, 0, k], "rate": -2.0}]]}


# The data are flat at x = 0 (compatible with bhat = 0).  "P1_GEN_CZERO" has a
# moderate layer datum and is resolved in H1 at dx = eps/5; the "LAYERED"
# variant makes the O(eps^{1/2}) layer dominate u - u0bar over the eps range.
BUILTIN_PROBLEMS = {
    "P1_GEN_CZERO": {
        "model": _P1,
        "given": {"Bhat": [[1, 1]]},
        "bc": {"family": "GEN_CZERO", "params": {"D": _layer_datum(5.0)}},
        "u0": _P1_U0,
    },
    "P1_GEN_CZERO_LAYERED": {
        "model": _P1,
        "given": {"Bhat": [[1, 1]]},
        "bc": {"family": "GEN_CZERO", "params": {"D": _layer_datum(50.0)}},
        "u0": _P1_U0,
    },
    "P1_GEN_CZERO_NO_D": {
        "model": _P1,
        "given": {"Bhat": [[1, 1]]},
        "bc": {"family": "GEN_CZERO", "params": {}},
        "u0": _P1_U0,
    },
    "LEQN_BP0": {
        "model": {"T": [[1, 0.3], [-0.2, 1]], "lambda": [1, 2], "a": [2, 5]},
        "given": {"Bhat": [[1, 0], [0, 1]]},
        "bc": {"family": "L_EQ_N", "params": {"B_p": [[0, 0], [0, 0]]}},
        "u0": {"components": [[{"poly": [1.0], "center": 7.0, "width": 1.0}],
                              [{"poly": [-0.5], "center": 7.0, "width": 1.0}]]},
    },
    "N1_POS_COUNTER": {
        "model": {"T": [[1]], "lambda": [1], "a": [4]},
        "given": {"Bhat": [[1]]},
        "bc": {"family": "N1_POS", "params": {"B_p": [[-1]]}},
        "u0": {"components": [[{"poly": [1.0], "center": 3.5, "width": 0.5}]]},
    },
}


def _matrix_or_none(v):
    return None if v is None else np.asarray(v, dtype=float)


def build_bc(model: SpectralModel, given: GivenBoundaryCondition, doc: dict) -> ConstructedBC:
    """``{"family": ..., "params": ...}``, ``{"construct": {...}}`` or an explicit matrix pair."""
    if "family" in doc:
        return preset(model, given, doc["family"], doc.get("params", {}))
    if "construct" in doc:
        c = doc["construct"]
        D = SmoothSignal.from_json(c["D"]) if "D" in c else None
        params = ConstructionParams(
            Ctilde=_matrix_or_none(c.get("Ctilde")),
            D=D,
            BpU_free=_matrix_or_none(c.get("BpU_free")),
            annihilator_choice=c.get("annihilator", "qr"),
        )
        return construct(model, given, params)
    if "B_u" in doc:
        return bc_from_json(model, given, doc)
    raise ConfigError("bc section needs 'family', 'construct' or explicit 'B_u'/'B_p'")


def problem_from_json(doc: dict, name: str = "custom") -> Problem:
    model = SpectralModel.from_json(doc["model"])
    given = given_bc_from_json(model, doc.get("given", {}))
    u0 = SmoothProfile.from_json(doc["u0"])
    if u0.dim != model.n:
        raise ConfigError(f"u0 has {u0.dim} components, model has n = {model.n}")
    bc = build_bc(model, given, doc.get("bc", {"family": "GEN_CZERO"}))
    bc, init, rep = compat_pipeline(model, given, bc, u0)
    return Problem(name, model, given, bc, u0, init, rep.passed, doc)


def load_problem(ref) -> Problem:
    """A builtin name or an inline problem document."""
    if isinstance(ref, str):
        if ref not in BUILTIN_PROBLEMS:
            raise ConfigError(f"unknown problem {ref!r}; builtin: {sorted(BUILTIN_PROBLEMS)}")
        return problem_from_json(BUILTIN_PROBLEMS[ref], ref)
    return problem_from_json(ref)


@dataclass(frozen=True)
class GridPolicy:
    """``ratio``: N = ceil(ratio X / eps); ``power``: N = max(n_min, ceil(X eps^-power))."""

    kind: str = "ratio"
    ratio: float = 8.0
    power: float = 0.9
    n_min: int = 2000

    def cells(self, X: float, eps: float) -> int:
        if self.kind == "ratio":
            return int(math.ceil(self.ratio * X / eps))
        if self.kind == "power":
            return max(self.n_min, int(math.ceil(X * eps ** (-self.power))))
        raise ConfigError(f"unknown grid policy {self.kind!r}")


@dataclass(frozen=True)
class ExperimentSpec:
    problem: object = "P1_GEN_CZERO"
    eps: tuple = (2e-2, 1e-2, 5e-3, 2.5e-3)
    grid: GridPolicy = GridPolicy()
    norms: tuple = NORMS
    t_star: float = 1.0
    n_times: int = 5
    cfl: float = 0.9
    order: int = 2
    refine_tol: float = 0.05
    margin: float = 0.5
    bands: dict = field(default_factory=dict)

    def __post_init__(self):
        eps = tuple(float(e) for e in self.eps)
        if not eps or any(e <= 0 for e in eps):
            raise ConfigError("eps values must be positive")
        if any(b >= a for a, b in zip(eps, eps[1:])):
            raise ConfigError("eps list must be strictly decreasing")
        bad = set(self.norms) - set(NORMS)
        if bad:
            raise ConfigError(f"unknown norms {sorted(bad)}")
        if self.n_times < 1 or self.t_star <= 0:
            raise ConfigError("need t_star > 0 and at least one sample time")
        object.__setattr__(self, "eps", eps)
        object.__setattr__(self, "norms", tuple(self.norms))

    @property
    def times(self) -> np.ndarray:
        return self.t_star * np.arange(1, self.n_times + 1) / self.n_times

    @classmethod
    def from_json(cls, doc: dict) -> "ExperimentSpec":
        doc = dict(doc)
        if "grid" in doc:
            doc["grid"] = GridPolicy(**doc["grid"])
        for k in ("eps", "norms"):
            if k in doc:
                doc[k] = tuple(doc[k])
        if "bands" in doc:
            doc["bands"] = {k: tuple(v) for k, v in doc["bands"].items()}
        return cls(**doc)

    def to_json(self) -> dict:
        return {
            "problem": self.problem,
            "eps": list(self.eps),
            "grid": {"kind": self.grid.kind, "ratio": self.grid.ratio, "power": self.grid.power,
                     "n_min": self.grid.n_min},
            "norms": list(self.norms),
            "t_star": self.t_star,
            "n_times": self.n_times,
            "cfl": self.cfl,
            "order": self.order,
            "refine_tol": self.refine_tol,
            "margin": self.margin,
            "bands": {k: list(v) for k, v in self.bands.items()},
        }


def error_norms(sol: GridSolution, asym: AsymptoticSolution, t: float, norms=NORMS) -> dict:
    """Discrete norms of ``(u, p) - (u_eps, p_eps)`` at cell centers, and of ``u - u0bar``."""
    try:
        u, p = sol.state(t)
    except KeyError as exc:
        raise DomainError(f"time {t} was not stored by the run") from exc
    x, dx = sol.x, sol.grid.dx
    out = {}
    if "L2" in norms or "H1" in norms:
        ua, pa = asym.fields(x, t, sol.eps)
        e = np.concatenate([u - ua, p - pa])
        if "L2" in norms:
            out["L2"] = l2_norm(e, dx)
        if "H1" in norms:
            out["H1"] = h1_norm(e, dx)
    if "L2_vs_u0bar" in norms:
        out["L2_vs_u0bar"] = l2_norm(u - asym.outer0(x, t), dx)
    return out


def _max_errors(problem: Problem, asym, spec: ExperimentSpec, eps: float, N: int, X: float) -> dict:
    grid = Grid1D(X, N, spec.cfl, spec.t_star)
    times = spec.times
    sol = run_problem(problem.model, problem.bc, problem.init, grid, eps, times=times, order=spec.order)
    worst = {k: 0.0 for k in spec.norms}
    for t in times:
        for k, v in error_norms(sol, asym, float(t), spec.norms).items():
            worst[k] = max(worst[k], v)
    return worst


def _study_row(spec_doc: dict, eps: float) -> dict:
    spec = ExperimentSpec.from_json(spec_doc)
    problem = load_problem(spec.problem)
    asym = problem.asymptotic()
    X = problem.domain_length(spec.t_star, spec.margin)
    N = spec.grid.cells(X, eps)
    coarse = _max_errors(problem, asym, spec, eps, N, X)
    fine = _max_errors(problem, asym, spec, eps, 2 * N, X)
    change = {k: abs(coarse[k] - fine[k]) / max(fine[k], 1e-300) for k in spec.norms}
    return {
        "eps": eps,
        "N": N,
        "X": X,
        "errors": coarse,
        "refined": fine,
        "change": change,
        "passed": all(c < spec.refine_tol for c in change.values()),
    }


def _fit(eps, errs) -> float:
    if len(eps) < 2:
        return float("nan")
    return float(np.polyfit(np.log(eps), np.log(errs), 1)[0])


@dataclass
class RateTable:
    norms: tuple
    rows: list
    bands: dict = field(default_factory=dict)

    def passed_rows(self) -> list:
        return [r for r in self.rows if r["passed"]]

    @property
    def slopes(self) -> dict:
        ok = self.passed_rows()
        return {k: _fit([r["eps"] for r in ok], [r["errors"][k] for r in ok]) for k in self.norms}

    @property
    def slopes_without_largest(self) -> dict:
        ok = self.passed_rows()[1:]
        return {k: _fit([r["eps"] for r in ok], [r["errors"][k] for r in ok]) for k in self.norms}

    @property
    def log2_ratios(self) -> dict:
        """Pairwise ``log2(e_i / e_{i+1}) / log2(eps_i / eps_{i+1})`` over consecutive rows."""
        out = {}
        for k in self.norms:
            vals = []
            for r0, r1 in zip(self.rows, self.rows[1:]):
                vals.append(math.log2(r0["errors"][k] / r1["errors"][k]) / math.log2(r0["eps"] / r1["eps"]))
            out[k] = vals
        return out

    def monotone(self, norm: str) -> bool:
        errs = [r["errors"][norm] for r in self.passed_rows()]
        return all(b < a for a, b in zip(errs, errs[1:]))

    def band_status(self) -> dict:
        """Per norm: ``pass``, ``fail`` or ``flagged`` (L2 slope above its band)."""
        out = {}
        slopes = self.slopes
        for k, (lo, hi) in self.bands.items():
            s = slopes.get(k, float("nan"))
            if not math.isfinite(s) or s < lo:
                out[k] = "fail"
            elif s > hi:
                out[k] = "flagged" if k == "L2" else "fail"
            else:
                out[k] = "pass"
        return out

    @property
    def verdict(self) -> str:
        if len(self.passed_rows()) < 2:
            return "INCONCLUSIVE"
        return "FAIL" if "fail" in self.band_status().values() else "PASS"

    def to_json(self) -> dict:
        return {
            "norms": list(self.norms),
            "rows": self.rows,
            "slopes": self.slopes,
            "slopes_without_largest_eps": self.slopes_without_largest,
            "log2_ratios": self.log2_ratios,
            "bands": {k: list(v) for k, v in self.bands.items()},
            "band_status": self.band_status(),
            "verdict": self.verdict,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "RateTable":
        return cls(tuple(doc["norms"]), list(doc["rows"]), {k: tuple(v) for k, v in doc.get("bands", {}).items()})


def convergence_study(spec: ExperimentSpec, jobs: int = 1) -> RateTable:
    """Run every ``eps`` (optionally in worker processes) and fit the rates."""
    problem = load_problem(spec.problem)
    if not problem.compat_passed:
        raise ConfigError("problem data fail the corner compatibility checks")
    doc = spec.to_json()
    if jobs > 1 and len(spec.eps) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_study_row, [doc] * len(spec.eps), spec.eps))
    else:
        rows = [_study_row(doc, e) for e in spec.eps]
    table = RateTable(spec.norms, rows, dict(spec.bands))
    if not table.passed_rows():
        raise InconclusiveStudy("every row failed the grid refinement check")
    return table


def _fmt(v: float) -> str:
    return "nan" if not math.isfinite(v) else f"{v:.10e}"


def table_csv(table: RateTable) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["eps", "N"] + [f"err_{k}" for k in table.norms] + [f"change_{k}" for k in table.norms] + ["passed"])
    for r in table.rows:
        w.writerow([_fmt(r["eps"]), r["N"]] + [_fmt(r["errors"][k]) for k in table.norms]
                   + [_fmt(r["change"][k]) for k in table.norms] + [int(r["passed"])])
    if table.rows:
        slopes = table.slopes
        w.writerow(["slope", ""] + [_fmt(slopes[k]) for k in table.norms] + [""] * len(table.norms) + [""])
    return buf.getvalue()


def table_svg(table: RateTable, width: int = 480, height: int = 360) -> str:
    """Log-log error plot; plain SVG text so the output is byte-stable."""
    pad = 50
    pts = [(r["eps"], r["errors"][k]) for r in table.rows for k in table.norms if r["errors"][k] > 0]
    head = f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">\n'
    if not pts:
        return head + "</svg>\n"
    lx = [math.log10(p[0]) for p in pts]
    ly = [math.log10(p[1]) for p in pts]
    x0, x1 = min(lx), max(lx) if max(lx) > min(lx) else min(lx) + 1
    y0, y1 = min(ly), max(ly) if max(ly) > min(ly) else min(ly) + 1

    def sx(v):
        return pad + (math.log10(v) - x0) / (x1 - x0) * (width - 2 * pad)

    def sy(v):
        return height - pad - (math.log10(v) - y0) / (y1 - y0) * (height - 2 * pad)

    colors = ["#1f77b4", "#d62728", "#2ca02c"]
    parts = [head, f'<rect x="{pad}" y="{pad}" width="{width - 2 * pad}" height="{height - 2 * pad}" '
             'fill="none" stroke="black"/>\n']
    slopes = table.slopes
    for i, k in enumerate(table.norms):
        c = colors[i % len(colors)]
        xy = [(sx(r["eps"]), sy(r["errors"][k])) for r in table.rows if r["errors"][k] > 0]
        parts.append(f'<polyline fill="none" stroke="{c}" points="'
                     + " ".join(f"{a:.2f},{b:.2f}" for a, b in xy) + '"/>\n')
        for a, b in xy:
            parts.append(f'<circle cx="{a:.2f}" cy="{b:.2f}" r="3" fill="{c}"/>\n')
        parts.append(f'<text x="{pad + 5}" y="{pad + 15 + 15 * i}" fill="{c}" font-size="12">'
                     f'{k}: slope {slopes[k]:.3f}</text>\n')
    parts.append(f'<text x="{width / 2:.0f}" y="{height - 15}" font-size="12" text-anchor="middle">log10 eps</text>\n')
    parts.append("</svg>\n")
    return "".join(parts)


def emit_report(table: RateTable, out_dir: str, stem: str = "rates", svg: bool = False,
                extra: dict | None = None) -> list:
    """Write ``stem.csv`` and ``stem.json`` (plus ``stem.svg``); returns the paths."""
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    doc = table.to_json()
    if extra:
        doc = {**extra, **doc}
    outputs = [("csv", table_csv(table)), ("json", json.dumps(doc, indent=2, sort_keys=True) + "\n")]
    if svg:
        outputs.append(("svg", table_svg(table)))
    for ext, text in outputs:
        path = os.path.join(out_dir, f"{stem}.{ext}")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
        paths.append(path)
    return paths


__all__ = [
    "BUILTIN_PROBLEMS",
    "ExperimentSpec",
    "GridPolicy",
    "NORMS",
    "Problem",
    "RateTable",
    "build_bc",
    "convergence_study",
    "emit_report",
    "error_norms",
    "load_problem",
    "problem_from_json",
    "table_csv",
    "table_svg",
]
