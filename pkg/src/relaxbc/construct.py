"""Boundary matrices ``B = (B_u, B_p)`` and data ``b0`` for the relaxation system.

Generic route (``l < n``)::

    Z = build_Z(model, Bhat, Ctilde)          # (2n-l) x (n-l), full column rank
    Bbar = complete_annihilator(Z)            # n x (2n-l), Bbar Z = 0
    B_u, B_p = assemble_B(model, Bbar, BpU)   # Bbar = (B_u, B_p R1S)

The preset families reproduce the matrix shapes for which a Kreiss-condition
proof is available; their hypotheses are checked and reported, never enforced.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import DegenerateConstruction, InvalidGivenBC, InvalidLayerDatum
from .model import GivenBoundaryCondition, SpectralModel, checked_inverse
from .signals import SmoothSignal

SQRT2P1 = math.sqrt(2.0) + 1.0

PRESET_FAMILIES = {
    "L_EQ_N": "l = n: B_u = Bhat, B_p free (spectral-radius or triangular bound)",
    "N1_POS": "n = 1, F > 0: B_u = 1, B_p > 1/(F - sqrt(a))",
    "N1_NEG": "n = 1, F < 0: constraint with Ctilde > F - F^2/sqrt(a)",
    "N2_L1_CZERO": "n = 2, l = 1, Ctilde = 0: (Bu1, Bp2) invertible, Bp1 small",
    "N2_L1_CNONZERO": "n = 2, l = 1, Ctilde != 0: B_u invertible, Bp1 small, Bp2 from the constraint",
    "GEN_CZERO": "l < n, Ctilde = 0: block-triangular tilde-B with rho(Bu11^-1 Bp11) bound",
    "GEN_CLAMBDA": "l < n, Ctilde = Lambda_-: block-triangular tilde-B with rho(Bu11^-1 Bp11) bound",
}


@dataclass(frozen=True)
class ConstructionParams:
    Ctilde: np.ndarray | None = None
    D: SmoothSignal | None = None
    BpU_free: np.ndarray | None = None
    annihilator_choice: str = "qr"


@dataclass(frozen=True)
class ConstructedBC:
    B_u: np.ndarray
    B_p: np.ndarray
    b0: SmoothSignal
    b1: SmoothSignal
    b2: SmoothSignal
    Ctilde: np.ndarray
    D: SmoothSignal
    H: np.ndarray
    J: SmoothSignal
    C: np.ndarray
    family: str | None = None
    hypothesis: str = ""
    warnings: tuple = field(default=())

    @property
    def B(self) -> np.ndarray:
        return np.hstack([self.B_u, self.B_p])

    @property
    def n(self) -> int:
        return self.B_u.shape[0]

    def b_eps(self, eps: float) -> SmoothSignal:
        return self.b0 + self.b1.scale(eps) + self.b2.scale(eps * eps)

    def replace(self, **changes) -> "ConstructedBC":
        return dataclasses.replace(self, **changes)

    def to_json(self) -> dict:
        return {
            "B_u": self.B_u.tolist(),
            "B_p": self.B_p.tolist(),
            "b0": self.b0.to_json(),
            "b1": self.b1.to_json(),
            "b2": self.b2.to_json(),
            "Ctilde": self.Ctilde.tolist(),
            "D": self.D.to_json(),
            "H": self.H.tolist(),
            "family": self.family,
            "hypothesis": self.hypothesis,
            "warnings": list(self.warnings),
        }


def bc_from_json(model: SpectralModel, given: GivenBoundaryCondition, doc) -> ConstructedBC:
    n, l = model.n, model.l
    H, J = h_and_j(model, given)
    Ct = np.asarray(doc.get("Ctilde", np.zeros((n - l, n - l))), dtype=float).reshape(n - l, n - l)
    D = SmoothSignal.from_json(doc["D"]) if "D" in doc else SmoothSignal.zero(n)
    B_u = np.asarray(doc["B_u"], dtype=float).reshape(n, n)
    B_p = np.asarray(doc["B_p"], dtype=float).reshape(n, n)
    zero = SmoothSignal.zero(n)
    b0 = SmoothSignal.from_json(doc["b0"]) if "b0" in doc else build_b0(model, B_u, B_p, given, D)
    return ConstructedBC(
        B_u=B_u,
        B_p=B_p,
        b0=b0,
        b1=SmoothSignal.from_json(doc["b1"]) if "b1" in doc else zero,
        b2=SmoothSignal.from_json(doc["b2"]) if "b2" in doc else zero,
        Ctilde=Ct,
        D=D,
        H=H,
        J=J,
        C=model.R1S @ Ct,
        family=doc.get("family"),
        hypothesis=doc.get("hypothesis", ""),
        warnings=tuple(doc.get("warnings", ())),
    )


def h_and_j(model: SpectralModel, given: GivenBoundaryCondition):
    """``H = -(Bhat R1U)^-1 Bhat R1S`` and ``J(t) = (Bhat R1U)^-1 bhat(t)``."""
    K, _ = checked_inverse(given.Bhat @ model.R1U, "Bhat R1U", exc=InvalidGivenBC)
    H = -K @ given.Bhat @ model.R1S
    J = given.bhat.apply(K) if model.l else SmoothSignal.zero(0)
    return H, J


def build_Z(model: SpectralModel, Bhat, Ctilde) -> np.ndarray:
    n, l = model.n, model.l
    if l >= n:
        raise ValueError("build_Z requires l < n")
    Bhat = np.asarray(Bhat, dtype=float).reshape(l, n)
    Ct = np.asarray(Ctilde, dtype=float).reshape(n - l, n - l)
    K, _ = checked_inverse(Bhat @ model.R1U, "Bhat R1U", exc=InvalidGivenBC)
    top = -model.R1U @ K @ Bhat @ model.R1S + model.R1S - model.Finv @ model.R1S @ Ct
    return np.vstack([top, Ct])


def _normalize_rows(M: np.ndarray) -> np.ndarray:
    M = M.copy()
    for row in M:
        k = int(np.argmax(np.abs(row) > np.abs(row).max() * (1 - 1e-12)))
        if row[k] < 0:
            row *= -1.0
    return M


def complete_annihilator(Z, choice: str = "qr", tol: float = 1e-10) -> np.ndarray:
    """Orthonormal rows spanning the orthogonal complement of ``col(Z)``."""
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    m, r = Z.shape
    if choice == "qr":
        Q, R, _ = scipy.linalg.qr(Z, mode="full", pivoting=True)
        diag = np.abs(np.diag(R)) if r else np.zeros(0)
        scale = max(1.0, float(np.abs(Z).max(initial=0.0)))
        if np.any(diag < tol * scale):
            raise DegenerateConstruction("Z is rank deficient")
        Bbar = Q[:, r:].T
    elif choice == "svd":
        U, s, _ = np.linalg.svd(Z, full_matrices=True)
        if r and s[-1] < tol * max(1.0, s[0]):
            raise DegenerateConstruction("Z is rank deficient")
        Bbar = U[:, r:].T
    else:
        raise ValueError(f"unknown annihilator choice {choice!r}")
    return _normalize_rows(Bbar)


def assemble_B(model: SpectralModel, Bbar, BpU_free=None):
    """Split ``Bbar = (B_u, B_p R1S)`` and rebuild ``B_p`` with ``B_p R1U = BpU_free``."""
    n, l = model.n, model.l
    Bbar = np.asarray(Bbar, dtype=float)
    BpU = np.zeros((n, l)) if BpU_free is None else np.asarray(BpU_free, dtype=float).reshape(n, l)
    B_u = Bbar[:, :n]
    BpS = Bbar[:, n:]
    B_p = np.hstack([BpU, BpS]) @ model.Tinv
    if np.linalg.matrix_rank(np.hstack([B_u, B_p])) != n:
        raise DegenerateConstruction("assembled boundary matrix (B_u, B_p) is rank deficient")
    return B_u, B_p


def _check_D(model: SpectralModel, D: SmoothSignal) -> None:
    if model.l == 0:
        return
    resid = D.apply(model.L1U).coefficient_norm()
    if resid > 1e-12 * max(1.0, D.coefficient_norm()):
        raise InvalidLayerDatum(f"layer datum D has a component along R1U (|L1U D| = {resid:.3e})")


def build_b0(model: SpectralModel, B_u, B_p, given: GivenBoundaryCondition, D: SmoothSignal | None = None):
    """``b0 = B_u R1U J + (B_p - B_u F^-1) D``; equals ``bhat`` when ``l = n``."""
    n = model.n
    D = SmoothSignal.zero(n) if D is None else D
    if model.l == n:
        return given.bhat
    _check_D(model, D)
    _, J = h_and_j(model, given)
    B_u = np.asarray(B_u, dtype=float)
    B_p = np.asarray(B_p, dtype=float)
    out = D.apply(B_p - B_u @ model.Finv)
    if model.l:
        out = J.apply(B_u @ model.R1U) + out
    return out


def check_constraint(model: SpectralModel, bc: ConstructedBC, Ctilde=None) -> float:
    """Infinity norm of ``tB_p (0; Ct) + tB_u (H; I - Lambda_-^-1 Ct)``."""
    n, l = model.n, model.l
    if l == n:
        return 0.0
    Ct = bc.Ctilde if Ctilde is None else np.asarray(Ctilde, dtype=float).reshape(n - l, n - l)
    tBu = bc.B_u @ model.T
    tBp = bc.B_p @ model.T
    lower = np.eye(n - l) - np.diag(1.0 / model.lam_minus) @ Ct
    resid = tBp @ np.vstack([np.zeros((l, n - l)), Ct]) + tBu @ np.vstack([bc.H, lower])
    return float(np.abs(resid).max(initial=0.0))


def _finish(model, given, tBu, tBp, Ct, D, family, hypothesis, warnings) -> ConstructedBC:
    n, l = model.n, model.l
    B_u = tBu @ model.Tinv
    B_p = tBp @ model.Tinv
    if np.linalg.matrix_rank(np.hstack([B_u, B_p])) != n:
        raise DegenerateConstruction(f"{family}: boundary matrix is rank deficient")
    D = SmoothSignal.zero(n) if D is None else D
    H, J = h_and_j(model, given)
    b0 = build_b0(model, B_u, B_p, given, D)
    zero = SmoothSignal.zero(n)
    return ConstructedBC(
        B_u=B_u,
        B_p=B_p,
        b0=b0,
        b1=zero,
        b2=zero,
        Ctilde=Ct,
        D=D,
        H=H,
        J=J,
        C=model.R1S @ Ct,
        family=family,
        hypothesis=hypothesis,
        warnings=tuple(warnings),
    )


def construct(model: SpectralModel, given: GivenBoundaryCondition, params: ConstructionParams | None = None):
    """Generic construction from ``(Bhat, bhat)`` and the free parameters."""
    params = params or ConstructionParams()
    n, l = model.n, model.l
    if l == n:
        B_u = np.array(given.Bhat)
        B_p = np.zeros((n, n)) if params.BpU_free is None else np.asarray(params.BpU_free, float).reshape(n, n)
        return _finish(model, given, B_u @ model.T, B_p @ model.T, np.zeros((0, 0)), params.D, None, "", ())
    Ct = np.zeros((n - l, n - l)) if params.Ctilde is None else np.asarray(params.Ctilde, float).reshape(n - l, n - l)
    Z = build_Z(model, given.Bhat, Ct)
    Bbar = complete_annihilator(Z, params.annihilator_choice)
    B_u, B_p = assemble_B(model, Bbar, params.BpU_free)
    return _finish(model, given, B_u @ model.T, B_p @ model.T, Ct, params.D, None, "", ())


# -- preset families ----------------------------------------------------------


def _mat(params, key, shape, default):
    if key in params and params[key] is not None:
        return np.asarray(params[key], dtype=float).reshape(shape)
    return default


def _rho(m) -> float:
    return float(np.abs(np.linalg.eigvals(m)).max(initial=0.0)) if m.size else 0.0


def _radius_bound(a) -> float:
    return 1.0 / (SQRT2P1 * math.sqrt(float(np.max(a))))


def _invertible(m) -> bool:
    return m.size == 0 or np.linalg.cond(m) < 1e12


def preset(model: SpectralModel, given: GivenBoundaryCondition, family: str, params: dict | None = None) -> ConstructedBC:
    """Boundary matrix of one of the families in :data:`PRESET_FAMILIES`."""
    params = dict(params or {})
    n, l = model.n, model.l
    lam, a = model.lam, model.a
    H, _ = h_and_j(model, given)
    D = params.get("D")
    if isinstance(D, dict):
        D = SmoothSignal.from_json(D)
    warnings = []

    if family in ("L_EQ_N", "N1_POS"):
        if l != n or (family == "N1_POS" and n != 1):
            raise ValueError(f"{family} requires l = n" + (" = 1" if family == "N1_POS" else ""))
        B_p = _mat(params, "B_p", (n, n), np.zeros((n, n)))
        tBu = given.Bhat @ model.T
        tBp = B_p @ model.T
        rho_ok = _rho(B_p) < _radius_bound(a)
        inner = model.Tinv @ B_p @ model.T
        tri = np.allclose(np.triu(inner), inner) or np.allclose(np.tril(inner), inner)
        delta = np.diag(inner)
        diag_ok = tri and all(d == 0 or d > 1.0 / (lj - math.sqrt(aj)) for d, lj, aj in zip(delta, lam, a))
        if rho_ok:
            hyp = "spectral radius of B_p below 1/max((sqrt2+1) sqrt a_j)"
        elif diag_ok:
            hyp = "T^-1 B_p T triangular with delta_j > 1/(lambda_j - sqrt a_j)"
        else:
            hyp = ""
            warnings.append("B_p satisfies neither the spectral-radius nor the triangular-diagonal bound")
        return _finish(model, given, tBu, tBp, np.zeros((0, 0)), D, family, hyp, warnings)

    if family == "N1_NEG":
        if n != 1 or l != 0:
            raise ValueError("N1_NEG requires n = 1 with a negative speed")
        F = float(lam[0])
        Ct = float(params.get("Ctilde", F))
        if Ct == F:
            tBu, tBp = np.array([[1.0]]), np.array([[0.0]])
        else:
            bp = float(params.get("Bp_tilde", 1.0))
            tBu, tBp = np.array([[F * Ct / (Ct - F) * bp]]), np.array([[bp]])
        bound = F - F * F / math.sqrt(a[0])
        hyp = f"Ctilde > F - F^2/sqrt(a) = {bound:.6g}"
        if not Ct > bound:
            warnings.append(f"Ctilde = {Ct} violates {hyp}")
            hyp = ""
        return _finish(model, given, tBu, tBp, np.array([[Ct]]), D, family, hyp, warnings)

    if family in ("N2_L1_CZERO", "N2_L1_CNONZERO"):
        if n != 2 or l != 1:
            raise ValueError(f"{family} requires n = 2, l = 1")
        h = float(H[0, 0])
        lam2 = float(lam[1])
        Bu1 = _mat(params, "Bu1", (2,), np.array([1.0, 0.0]))
        Bp1 = _mat(params, "Bp1", (2,), np.zeros(2))
        if family == "N2_L1_CZERO":
            Bp2 = _mat(params, "Bp2", (2,), np.array([0.0, 1.0]))
            Bu2 = -h * Bu1
            Ct = 0.0
            ok = abs(np.linalg.det(np.column_stack([Bu1, Bp2]))) > 1e-12
            hyp = "(tBu1, tBp2) invertible and tBp1 small"
            if not ok:
                warnings.append("(tBu1, tBp2) is singular")
                hyp = ""
        else:
            Ct = float(params.get("Ctilde", lam2 / 2.0))
            if Ct == 0:
                raise ValueError("N2_L1_CNONZERO needs Ctilde != 0")
            Bu2 = _mat(params, "Bu2", (2,), np.array([0.0, 1.0]))
            Bp2 = -Bu1 * h / Ct + Bu2 * (Ct - lam2) / (lam2 * Ct)
            lo = lam2 - lam2**2 / math.sqrt(a[1])
            ok_c = (lo < Ct < 0) or Ct > 0
            ok_u = abs(np.linalg.det(np.column_stack([Bu1, Bu2]))) > 1e-12
            hyp = f"B_u invertible, Ctilde in ({lo:.6g}, 0) U (0, inf), tBp1 small"
            if not (ok_c and ok_u):
                warnings.append("hypothesis violated: " + ("Ctilde out of range" if not ok_c else "B_u singular"))
                hyp = ""
        if np.linalg.norm(Bp1) > 0:
            warnings.append(f"|tBp1| = {np.linalg.norm(Bp1):.3g}; 'close to zero' is decided by the certifier")
        tBu = np.column_stack([Bu1, Bu2])
        tBp = np.column_stack([Bp1, Bp2])
        return _finish(model, given, tBu, tBp, np.array([[Ct]]), D, family, hyp, warnings)

    if family in ("GEN_CZERO", "GEN_CLAMBDA"):
        if l >= n:
            raise ValueError(f"{family} requires l < n")
        m = n - l
        Lm = np.diag(model.lam_minus)
        if l == 0:
            if family == "GEN_CZERO":
                tBu, tBp, Ct = np.zeros((n, n)), np.eye(n), np.zeros((n, n))
            else:
                tBu, tBp, Ct = np.eye(n), np.zeros((n, n)), Lm
            return _finish(model, given, tBu, tBp, Ct, D, family, "l = 0 closed form", warnings)
        Bu11 = _mat(params, "Bu11", (l, l), np.eye(l))
        Bp11 = _mat(params, "Bp11", (l, l), np.zeros((l, l)))
        star = _mat(params, "star", (l, m), np.zeros((l, m)))
        zlm, zml, zmm = np.zeros((l, m)), np.zeros((m, l)), np.zeros((m, m))
        if family == "GEN_CZERO":
            Bp22 = _mat(params, "Bp22", (m, m), np.eye(m))
            tBu = np.block([[Bu11, -Bu11 @ H], [zml, zmm]])
            tBp = np.block([[Bp11, star], [zml, Bp22]])
            Ct = np.zeros((m, m))
            inv_ok = _invertible(Bu11) and _invertible(Bp22)
        else:
            Bu22 = _mat(params, "Bu22", (m, m), np.eye(m))
            tBu = np.block([[Bu11, star], [zml, Bu22]])
            tBp = np.block([[Bp11, -Bu11 @ H @ np.linalg.inv(Lm)], [zml, zmm]])
            Ct = Lm.copy()
            inv_ok = _invertible(Bu11) and _invertible(Bu22)
        ratio = np.linalg.solve(Bu11, Bp11) if _invertible(Bu11) else np.full((l, l), np.inf)
        rho_ok = _rho(ratio) < _radius_bound(a[:l])
        relaxed_ok = l == 1 and (ratio[0, 0] == 0 or ratio[0, 0] > 1.0 / (lam[0] - math.sqrt(a[0])))
        if inv_ok and rho_ok:
            hyp = "diagonal blocks invertible, rho(Bu11^-1 Bp11) < 1/max_{j<=l}((sqrt2+1) sqrt a_j)"
        elif inv_ok and relaxed_ok:
            hyp = "l = 1 relaxed bound Bu11^-1 Bp11 > 1/(lambda_1 - sqrt a_1)"
        else:
            hyp = ""
            warnings.append("preset hypothesis violated (invertibility or spectral-radius bound)")
        return _finish(model, given, tBu, tBp, Ct, D, family, hyp, warnings)

    raise ValueError(f"unknown preset family {family!r}; known: {sorted(PRESET_FAMILIES)}")
