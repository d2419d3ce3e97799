"""Corner compatibility of initial and boundary data at ``(x, t) = (0, 0)``.

Initial data for the relaxation system are taken as

    u(x, 0) = u0,   p(x, 0) = eps p01 + eps^2 p02,
    p01 = -(Abar - F^2) u0_x,   p02 = -2 F (Abar - F^2) u0_xx,

and the boundary signals ``b1``, ``b2`` are the quadratics whose 2-jets at
``t = 0`` make the order-2 compatibility identities hold for every ``eps``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .construct import ConstructedBC, build_b0
from .model import GivenBoundaryCondition, SpectralModel
from .signals import SmoothProfile, SmoothSignal

COMPAT_TOL = 1e-10


@dataclass
class CompatibilityReport:
    entries: list = field(default_factory=list)

    def add(self, name: str, i: int, residual: float, tol: float = COMPAT_TOL, scale: float = 1.0):
        self.entries.append(
            {"identity": name, "order": i, "residual": float(residual), "tol": tol * max(1.0, scale),
             "passed": bool(np.isfinite(residual) and residual <= tol * max(1.0, scale))}
        )

    @property
    def passed(self) -> bool:
        return all(e["passed"] for e in self.entries)

    def max_residual(self, name: str | None = None) -> float:
        vals = [e["residual"] for e in self.entries if name is None or e["identity"] == name]
        return max(vals, default=0.0)

    def merged(self, other: "CompatibilityReport") -> "CompatibilityReport":
        return CompatibilityReport(self.entries + other.entries)

    def to_json(self) -> dict:
        return {"passed": self.passed, "entries": self.entries}


def _equilibrium_jet(model: SpectralModel, u0: SmoothProfile, order: int) -> np.ndarray:
    """Rows ``(-F d/dx)^i u0(0)`` for ``i = 0..order``."""
    F = model.F
    out = []
    Fi = np.eye(model.n)
    for i in range(order + 1):
        out.append(Fi @ u0(0.0, i))
        Fi = -F @ Fi
    return np.array(out)


def check_given_compat(model: SpectralModel, given: GivenBoundaryCondition, u0: SmoothProfile,
                       order: int = 3, tol: float = COMPAT_TOL) -> CompatibilityReport:
    """``|Bhat (-F d/dx)^i u0(0) - bhat^(i)(0)|`` for ``i = 0..order``."""
    if order > 3:
        raise ValueError("compatibility beyond order 3 is not supported")
    rep = CompatibilityReport()
    jet = _equilibrium_jet(model, u0, order)
    for i in range(order + 1):
        lhs = given.Bhat @ jet[i]
        rhs = given.bhat(0.0, i)
        rep.add("given", i, float(np.abs(lhs - rhs).max(initial=0.0)), tol, float(np.abs(lhs).max(initial=0.0)))
    return rep


def compatible_bhat(model: SpectralModel, Bhat, u0: SmoothProfile, order: int = 3) -> SmoothSignal:
    """Minimal-degree ``bhat`` compatible with ``u0`` to the given order."""
    jet = _equilibrium_jet(model, u0, order)
    return SmoothSignal.from_jet(jet @ np.asarray(Bhat, dtype=float).T)


@dataclass(frozen=True)
class RelaxationInitialData:
    u_init: SmoothProfile
    p01: SmoothProfile
    p02: SmoothProfile

    def u(self, x, k: int = 0):
        return self.u_init(x, k)

    def p(self, x, eps: float, k: int = 0):
        return eps * self.p01(x, k) + eps * eps * self.p02(x, k)


def build_initial_data(model: SpectralModel, u0: SmoothProfile) -> RelaxationInitialData:
    G = model.Abar - model.F @ model.F
    p01 = u0.derivative(1).apply(-G).as_type(SmoothProfile)
    p02 = u0.derivative(2).apply(-2.0 * model.F @ G).as_type(SmoothProfile)
    return RelaxationInitialData(u0, p01, p02)


def m_vectors(model: SpectralModel, init: RelaxationInitialData) -> dict:
    """The stacked vectors ``m_ik`` (``i = 0, 1, 2``; ``k = 1, 2``) at ``x = 0``."""
    F, Abar = model.F, model.Abar
    G = Abar - F @ F
    u = init.u_init
    p02 = init.p02
    zero = np.zeros(model.n)
    return {
        (0, 1): np.concatenate([zero, -G @ u(0.0, 1)]),
        (1, 1): np.concatenate([G @ u(0.0, 2), -F @ G @ u(0.0, 2) - p02(0.0)]),
        (2, 1): np.concatenate([p02(0.0, 1), -Abar @ G @ u(0.0, 3) - 2.0 * F @ p02(0.0, 1)]),
        (0, 2): np.concatenate([zero, p02(0.0)]),
        (1, 2): np.concatenate([-p02(0.0, 1), F @ p02(0.0, 1)]),
        (2, 2): np.concatenate([zero, Abar @ p02(0.0, 2)]),
    }


def build_b1_b2(model: SpectralModel, bc: ConstructedBC, init: RelaxationInitialData):
    """Quadratics with ``b_k^(i)(0) = (B_u, B_p) m_ik``."""
    m = m_vectors(model, init)
    B = bc.B
    jets = {k: np.array([B @ m[(i, k)] for i in range(3)]) for k in (1, 2)}
    for k, jet in jets.items():
        if not np.all(np.isfinite(jet)):
            raise ValueError(f"non-finite jet for b{k}")
    return SmoothSignal.from_jet(jets[1]), SmoothSignal.from_jet(jets[2])


def check_D_constraint(model: SpectralModel, bc: ConstructedBC, u0: SmoothProfile,
                       tol: float = COMPAT_TOL) -> CompatibilityReport:
    """``D^(i)(0) + C L1S (-F d/dx)^i u0(0)`` for ``i = 0, 1, 2``."""
    rep = CompatibilityReport()
    if model.l == model.n:
        return rep
    jet = _equilibrium_jet(model, u0, 2)
    for i in range(3):
        target = -bc.C @ model.L1S @ jet[i]
        rep.add("layer_datum", i, float(np.abs(bc.D(0.0, i) - target).max()), tol, float(np.abs(target).max()))
    return rep


def regenerate_D(model: SpectralModel, given: GivenBoundaryCondition, bc: ConstructedBC,
                 u0: SmoothProfile) -> ConstructedBC:
    """Replace ``D`` by the quadratic matching its required 2-jet and rebuild ``b0``.

    The datum is kept when it already satisfies the constraint.
    """
    if model.l == model.n or check_D_constraint(model, bc, u0).passed:
        return bc
    jet = _equilibrium_jet(model, u0, 2)
    D = SmoothSignal.from_jet(np.array([-bc.C @ model.L1S @ jet[i] for i in range(3)]))
    return bc.replace(D=D, b0=build_b0(model, bc.B_u, bc.B_p, given, D))


def _laurent_time_derivatives(model: SpectralModel, init: RelaxationInitialData, order: int = 2) -> list:
    """``d^i/dt^i (u, p)(0, 0)`` as maps ``power of eps -> 2n vector``.

    Applies ``L = -A d/dx + S / eps`` (``S = diag(0, -I)``) to the
    eps-polynomial of initial jets; independent of the ``m``-vector formulas.
    """
    n = model.n
    A = np.block([[model.F, np.eye(n)], [model.Abar - model.F @ model.F, -model.F]])
    S = np.diag(np.concatenate([np.zeros(n), -np.ones(n)]))
    depth = order + 2
    zero = np.zeros(n)

    def jet(prof_u, prof_p):
        return np.array([
            np.concatenate([prof_u(0.0, d) if prof_u is not None else zero,
                            prof_p(0.0, d) if prof_p is not None else zero])
            for d in range(depth + 1)
        ])

    state = {0: jet(init.u_init, None), 1: jet(None, init.p01), 2: jet(None, init.p02)}
    out = []
    for _ in range(order + 1):
        out.append({k: v[0].copy() for k, v in state.items()})
        new: dict = {}
        for k, v in state.items():
            adv = -(A @ v[1:].T).T
            new[k] = new.get(k, 0) + np.vstack([adv, np.zeros((1, 2 * n))])
            new[k - 1] = new.get(k - 1, 0) + (S @ v.T).T
        state = new
    return out


def verify_relaxation_compat(model: SpectralModel, bc: ConstructedBC, init: RelaxationInitialData,
                             order: int = 2, tol: float = COMPAT_TOL) -> CompatibilityReport:
    """Order-``order`` compatibility as coefficient identities in ``eps``."""
    rep = CompatibilityReport()
    derivs = _laurent_time_derivatives(model, init, order)
    signals = {0: bc.b0, 1: bc.b1, 2: bc.b2}
    B = bc.B
    for i, coeffs in enumerate(derivs):
        worst = 0.0
        scale = 0.0
        powers = set(coeffs) | set(signals)
        for k in sorted(powers):
            lhs = B @ coeffs[k] if k in coeffs else np.zeros(model.n)
            rhs = signals[k](0.0, i) if k in signals else np.zeros(model.n)
            worst = max(worst, float(np.abs(lhs - rhs).max()))
            scale = max(scale, float(np.abs(rhs).max()))
        rep.add("relaxation", i, worst, tol, scale)
    return rep


def relaxation_residual_at(model: SpectralModel, bc: ConstructedBC, init: RelaxationInitialData,
                           eps: float, order: int = 2) -> list:
    """Residual vectors of the compatibility identities at a fixed ``eps``."""
    derivs = _laurent_time_derivatives(model, init, order)
    out = []
    for i, coeffs in enumerate(derivs):
        lhs = sum(bc.B @ v * eps**k for k, v in coeffs.items())
        rhs = bc.b0(0.0, i) + eps * bc.b1(0.0, i) + eps**2 * bc.b2(0.0, i)
        out.append(lhs - rhs)
    return out


def compat_pipeline(model: SpectralModel, given: GivenBoundaryCondition, bc: ConstructedBC,
                    u0: SmoothProfile):
    """Regenerate ``D`` if needed, then attach ``b1``, ``b2``.

    Returns ``(bc, init, report)`` where the report covers the given-BC,
    layer-datum and relaxation identities.
    """
    bc = regenerate_D(model, given, bc, u0)
    init = build_initial_data(model, u0)
    b1, b2 = build_b1_b2(model, bc, init)
    bc = bc.replace(b1=b1, b2=b2)
    rep = check_given_compat(model, given, u0, 2)
    rep = rep.merged(check_D_constraint(model, bc, u0))
    rep = rep.merged(verify_relaxation_compat(model, bc, init))
    return bc, init, rep


__all__ = [
    "CompatibilityReport",
    "RelaxationInitialData",
    "build_b1_b2",
    "build_initial_data",
    "check_D_constraint",
    "check_given_compat",
    "compat_pipeline",
    "compatible_bhat",
    "m_vectors",
    "regenerate_D",
    "relaxation_residual_at",
    "verify_relaxation_compat",
]
