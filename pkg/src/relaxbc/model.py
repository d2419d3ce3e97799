"""Diagonalized conservation law ``u_t + F u_x = 0`` and its relaxation system.

The model is given by its eigendecomposition ``F = T diag(lambda) T^-1`` and
``Abar = T diag(a) T^-1``.  Positive speeds come first; ``l`` is their count.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    InvalidGivenBC,
    InvalidRelaxationSpeed,
    NonCharacteristicViolation,
    NumericsError,
    OrderingError,
    SingularEigenbasis,
)
from .signals import SmoothSignal

COND_LIMIT = 1e12


def checked_inverse(m, what: str = "matrix", limit: float = COND_LIMIT, exc=NumericsError):
    """Inverse via LU with partial pivoting; refuses ill-conditioned input.

    Returns ``(inverse, condition_number)``.
    """
    m = np.asarray(m)
    if m.shape[0] != m.shape[1]:
        raise exc(f"{what} is not square: {m.shape}")
    if m.size == 0:
        return np.zeros_like(m, dtype=float), 1.0
    cond = float(np.linalg.cond(m))
    if not np.isfinite(cond) or cond > limit:
        raise exc(f"{what} is singular or ill-conditioned (cond={cond:.3e})")
    return np.linalg.inv(m), cond


class SubcharStatus(enum.Enum):
    STRICT = "Strict"
    WEAK = "Weak"
    VIOLATED = "Violated"


def _readonly(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class SpectralModel:
    T: np.ndarray
    lam: np.ndarray
    a: np.ndarray
    l: int
    Tinv: np.ndarray = field(repr=False)
    cond_T: float = field(repr=False)

    @property
    def n(self) -> int:
        return self.lam.size

    @property
    def F(self) -> np.ndarray:
        return self.T @ np.diag(self.lam) @ self.Tinv

    @property
    def Abar(self) -> np.ndarray:
        return self.T @ np.diag(self.a) @ self.Tinv

    @property
    def Finv(self) -> np.ndarray:
        return self.T @ np.diag(1.0 / self.lam) @ self.Tinv

    @property
    def R1U(self) -> np.ndarray:
        return self.T[:, : self.l]

    @property
    def R1S(self) -> np.ndarray:
        return self.T[:, self.l :]

    @property
    def L1U(self) -> np.ndarray:
        return self.Tinv[: self.l, :]

    @property
    def L1S(self) -> np.ndarray:
        return self.Tinv[self.l :, :]

    @property
    def lam_minus(self) -> np.ndarray:
        return self.lam[self.l :]

    def to_json(self) -> dict:
        return {"T": self.T.tolist(), "lambda": self.lam.tolist(), "a": self.a.tolist()}

    @classmethod
    def from_json(cls, doc) -> "SpectralModel":
        return build_model(doc["T"], doc["lambda"], doc["a"])


def build_model(T, lam, a) -> SpectralModel:
    T = np.atleast_2d(np.asarray(T, dtype=float))
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    a = np.atleast_1d(np.asarray(a, dtype=float))
    n = lam.size
    if T.shape != (n, n) or a.size != n:
        raise ValueError(f"inconsistent sizes: T {T.shape}, lambda {lam.size}, a {a.size}")
    if np.any(lam == 0):
        raise NonCharacteristicViolation("zero wave speed: boundary is characteristic")
    pos = lam > 0
    l = int(pos.sum())
    if not (np.all(pos[:l]) and not np.any(pos[l:])):
        raise OrderingError("wave speeds must list the positive block before the negative block")
    if np.any(a <= 0):
        raise InvalidRelaxationSpeed("relaxation speeds a_j must be positive")
    Tinv, cond = checked_inverse(T, "eigenvector matrix T", exc=SingularEigenbasis)
    return SpectralModel(_readonly(T), _readonly(lam), _readonly(a), l, _readonly(Tinv), cond)


def subcharacteristic_status(model: SpectralModel) -> SubcharStatus:
    sq = model.lam**2
    if np.any(model.a < sq):
        return SubcharStatus.VIOLATED
    if np.any(model.a == sq):
        return SubcharStatus.WEAK
    return SubcharStatus.STRICT


def relaxation_coefficient_matrix(model: SpectralModel) -> np.ndarray:
    """Block matrix ``A = [[F, I], [Abar - F^2, -F]]``."""
    F = model.F
    n = model.n
    return np.block([[F, np.eye(n)], [model.Abar - F @ F, -F]])


@dataclass(frozen=True)
class GivenBoundaryCondition:
    """``Bhat u(0, t) = bhat(t)`` for the equilibrium law (``l`` rows)."""

    Bhat: np.ndarray
    bhat: SmoothSignal
    cond: float = 1.0

    def to_json(self) -> dict:
        return {"Bhat": np.asarray(self.Bhat).tolist(), "bhat": self.bhat.to_json()}


def given_bc(model: SpectralModel, Bhat, bhat: SmoothSignal | None = None) -> GivenBoundaryCondition:
    Bhat = np.asarray(Bhat, dtype=float).reshape(model.l, model.n)
    if bhat is None:
        bhat = SmoothSignal.zero(model.l)
    if bhat.dim != model.l:
        raise InvalidGivenBC(f"bhat has dimension {bhat.dim}, expected {model.l}")
    if model.l and np.linalg.matrix_rank(Bhat) != model.l:
        raise InvalidGivenBC("Bhat must have full row rank")
    _, cond = checked_inverse(Bhat @ model.R1U, "Bhat R1U", exc=InvalidGivenBC)
    Bhat = _readonly(Bhat)
    return GivenBoundaryCondition(Bhat, bhat, cond)


def given_bc_from_json(model: SpectralModel, doc) -> GivenBoundaryCondition:
    bhat = SmoothSignal.from_json(doc["bhat"]) if "bhat" in doc else None
    return given_bc(model, doc.get("Bhat", np.zeros((model.l, model.n))), bhat)
