"""Finite-volume solver for the relaxation IBVP on ``[0, X]``.

State is kept in characteristic variables ``c_j^+ = (lambda_j + sqrt a_j) uh_j + ph_j``
and ``c_j^- = (lambda_j - sqrt a_j) uh_j + ph_j`` with ``(uh, ph) = (T^-1 u, T^-1 p)``,
which travel with speeds ``+sqrt a_j`` and ``-sqrt a_j``.  One Strang step is

    half relaxation  ->  full transport  ->  half relaxation      (splitting="RTR")

with exact relaxation ``ph <- ph exp(-tau/eps)``.  The ordering
``splitting="TRT"`` (half transport, full relaxation, half transport) is kept
for comparison; it loses accuracy in the derivative of the boundary layer.

Transport is Fromm's scheme (central slopes, no limiter) or first-order
upwind.  At ``x = 0`` the incoming ``c^+`` face value comes from solving the
boundary rows ``B (u, p) = b_eps`` together with the outgoing ``c^-`` face
values; at ``x = X`` the incoming ``c^-`` is extrapolated (the support margin
keeps that boundary inactive).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import BoundarySolveFailure, ConfigError, SymmetrizerUnavailable
from .model import SpectralModel, SubcharStatus, subcharacteristic_status, relaxation_coefficient_matrix
from .signals import SmoothProfile, SmoothSignal


@dataclass(frozen=True)
class CharacteristicFrame:
    L: np.ndarray
    Linv: np.ndarray
    speeds: np.ndarray
    plus: np.ndarray
    minus: np.ndarray


def characteristic_frame(model: SpectralModel) -> CharacteristicFrame:
    sq = np.sqrt(model.a)
    plus = model.lam + sq
    minus = model.lam - sq
    Ti = model.Tinv
    L = np.block([[np.diag(plus) @ Ti, Ti], [np.diag(minus) @ Ti, Ti]])
    return CharacteristicFrame(L, np.linalg.inv(L), np.concatenate([sq, -sq]), plus, minus)


def symmetrizer(model: SpectralModel, check: bool = True) -> np.ndarray:
    """``A0 = blockdiag(T^-T (Abar_diag - Lambda^2) T^-1, T^-T T^-1)``."""
    if subcharacteristic_status(model) is not SubcharStatus.STRICT:
        raise SymmetrizerUnavailable("symmetrizer needs the strict sub-characteristic condition")
    Ti = model.Tinv
    n = model.n
    top = Ti.T @ np.diag(model.a - model.lam**2) @ Ti
    A0 = np.block([[top, np.zeros((n, n))], [np.zeros((n, n)), Ti.T @ Ti]])
    if check:
        A = relaxation_coefficient_matrix(model)
        S = A0 @ A
        if np.abs(S - S.T).max() > 1e-10 * max(1.0, np.abs(S).max()):
            raise SymmetrizerUnavailable("A0 A is not symmetric")
        if np.linalg.eigvalsh((A0 + A0.T) / 2).min() <= 0:
            raise SymmetrizerUnavailable("A0 is not positive definite")
    return A0


@dataclass(frozen=True)
class Grid1D:
    X: float
    N: int
    cfl: float = 0.9
    t_star: float = 1.0

    def __post_init__(self):
        if not (0 < self.cfl <= 1):
            raise ConfigError("CFL number must lie in (0, 1]")
        if self.N < 4 or self.X <= 0:
            raise ConfigError("grid needs X > 0 and at least 4 cells")

    @property
    def dx(self) -> float:
        return self.X / self.N

    @property
    def x(self) -> np.ndarray:
        return (np.arange(self.N) + 0.5) * self.dx

    def dt_max(self, model: SpectralModel) -> float:
        return self.cfl * self.dx / float(np.sqrt(model.a).max())

    def check_support(self, model: SpectralModel, x_max: float, margin: float = 0.0) -> None:
        need = x_max + self.t_star * float(np.sqrt(model.a).max()) + margin
        if self.X <= need:
            raise ConfigError(f"domain length {self.X} does not exceed support bound {need:.4g}")


def l2_norm(field_: np.ndarray, dx: float) -> float:
    """Midpoint-rule L2 norm over cells (last axis), all components."""
    return float(np.sqrt(np.sum(np.asarray(field_) ** 2) * dx))


def h1_norm(field_: np.ndarray, dx: float) -> float:
    """H1 norm with second-order one-sided differences at the ends."""
    f = np.asarray(field_)
    fx = np.gradient(f, dx, axis=-1, edge_order=2)
    return float(np.sqrt(np.sum(f**2) * dx + np.sum(fx**2) * dx))


@dataclass
class GridSolution:
    grid: Grid1D
    times: np.ndarray
    u: np.ndarray
    p: np.ndarray
    eps: float
    steps: int = 0
    boundary_states: list = field(default_factory=list, repr=False)

    @property
    def x(self) -> np.ndarray:
        return self.grid.x

    def index(self, t: float) -> int:
        k = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[k] - t) > 1e-12 * max(1.0, abs(t)):
            raise KeyError(f"time {t} not stored")
        return k

    def state(self, t: float) -> tuple:
        k = self.index(t)
        return self.u[k], self.p[k]

    def l2(self, t: float) -> float:
        u, p = self.state(t)
        return l2_norm(np.concatenate([u, p]), self.grid.dx)

    def h1(self, t: float) -> float:
        u, p = self.state(t)
        return h1_norm(np.concatenate([u, p]), self.grid.dx)


class _Transport:
    """Fromm (order 2) or upwind (order 1) advection for the c^+ and c^- blocks."""

    def __init__(self, speeds: np.ndarray, dx: float, order: int):
        self.s = speeds[:, None]
        self.dx = dx
        self.order = order

    def slopes(self, q):
        if self.order == 1:
            return np.zeros_like(q)
        sig = np.empty_like(q)
        sig[:, 1:-1] = 0.5 * (q[:, 2:] - q[:, :-2])
        sig[:, 0] = q[:, 1] - q[:, 0]
        sig[:, -1] = q[:, -1] - q[:, -2]
        return sig

    def outgoing_left(self, qm, dt):
        """Face value of ``c^-`` at ``x = 0`` for a step of size ``dt``."""
        nu = self.s[:, 0] * dt / self.dx
        sig = self.slopes(qm[:, :2]) if self.order == 2 else np.zeros((qm.shape[0], 1))
        return qm[:, 0] - 0.5 * (1.0 - nu) * sig[:, 0]

    def plus(self, q, face0, dt):
        nu = self.s * dt / self.dx
        f = q + 0.5 * (1.0 - nu) * self.slopes(q)
        out = q.copy()
        out[:, 0] -= nu[:, 0] * (f[:, 0] - face0)
        out[:, 1:] -= nu * (f[:, 1:] - f[:, :-1])
        return out

    def minus(self, q, dt):
        nu = self.s * dt / self.dx
        f = q - 0.5 * (1.0 - nu) * self.slopes(q)
        right = q[:, -1]
        out = q.copy()
        out[:, :-1] += nu * (f[:, 1:] - f[:, :-1])
        out[:, -1] += nu[:, 0] * (right - f[:, -1])
        return out


class BoundarySolver:
    """LU-factored system ``[B T_blk; (diag(lambda - sqrt a), I)] (uh, ph) = (b, c^-)``."""

    def __init__(self, model: SpectralModel, frame: CharacteristicFrame, B_u, B_p, cond_limit: float = 1e12):
        n = model.n
        tB = np.hstack([B_u @ model.T, B_p @ model.T])
        rows = np.hstack([np.diag(frame.minus), np.eye(n)])
        self.M = np.vstack([tB, rows])
        cond = np.linalg.cond(self.M)
        if not np.isfinite(cond) or cond > cond_limit:
            raise BoundarySolveFailure(f"boundary system is singular (cond={cond:.3e}); the GKC is likely violated")
        self.cond = float(cond)
        self.lu = scipy.linalg.lu_factor(self.M)
        self.n = n
        self.plus = frame.plus

    def solve(self, b: np.ndarray, c_minus: np.ndarray) -> np.ndarray:
        """Return ``(uh, ph)`` at ``x = 0``; ``b`` and ``c_minus`` may carry a batch axis."""
        rhs = np.concatenate([b, c_minus])
        return scipy.linalg.lu_solve(self.lu, rhs)

    def incoming(self, b, c_minus):
        z = self.solve(b, c_minus)
        return self.plus * z[: self.n] + z[self.n :]


def boundary_solve(model: SpectralModel, B_u, B_p, c_minus, b) -> tuple:
    """Ghost state ``(u, p)(0)`` with ``B (u, p) = b`` and the given outgoing values."""
    frame = characteristic_frame(model)
    z = BoundarySolver(model, frame, B_u, B_p).solve(np.asarray(b, float), np.asarray(c_minus, float))
    n = model.n
    return model.T @ z[:n], model.T @ z[n:]


def _to_char(model, frame, u, p):
    uh = model.Tinv @ u
    ph = model.Tinv @ p
    return frame.plus[:, None] * uh + ph, frame.minus[:, None] * uh + ph


def _from_char(model, frame, cp, cm):
    sq2 = (frame.plus - frame.minus)[:, None]
    uh = (cp - cm) / sq2
    ph = cp - frame.plus[:, None] * uh
    return model.T @ uh, model.T @ ph


def run(model: SpectralModel, B_u, B_p, b_eps: SmoothSignal | None, u_init, p_init, grid: Grid1D,
        eps: float, times=None, order: int = 2, transport: bool = True, relax: bool = True,
        dt: float | None = None, splitting: str = "RTR") -> GridSolution:
    """Integrate to each time in ``times`` (default ``[t_star]``); returns stored snapshots.

    ``u_init``/``p_init`` are arrays ``(n, N)`` of cell values.  ``b_eps = None``
    means homogeneous boundary data.  ``eps = inf`` disables relaxation and
    ``eps = 0`` projects onto equilibrium (``p = 0``) at every relaxation substep,
    which is the fixed-grid limit scheme.
    """
    if order not in (1, 2):
        raise ConfigError("order must be 1 or 2")
    if splitting not in ("RTR", "TRT"):
        raise ConfigError("splitting must be 'RTR' or 'TRT'")
    if eps < 0:
        raise ConfigError("eps must be non-negative")
    n = model.n
    frame = characteristic_frame(model)
    dt_max = grid.dt_max(model)
    if dt is not None:
        if dt > dt_max * (1 + 1e-12):
            raise ConfigError(f"time step {dt} violates the CFL limit {dt_max}")
        dt_max = dt
    times = np.array([grid.t_star] if times is None else sorted(times), dtype=float)
    bsolve = BoundarySolver(model, frame, np.asarray(B_u, float), np.asarray(B_p, float))
    tp = _Transport(np.sqrt(model.a), grid.dx, order)
    cp, cm = _to_char(model, frame, np.asarray(u_init, float), np.asarray(p_init, float))
    zero_b = np.zeros(n)

    snaps_u, snaps_p = [], []
    t = 0.0
    steps = 0
    for t_next in times:
        if t_next < t - 1e-14:
            raise ConfigError("snapshot times must be non-negative and increasing")
        m = int(math.ceil((t_next - t) / dt_max - 1e-9)) if t_next > t else 0
        h = (t_next - t) / m if m else 0.0
        if m:
            if splitting == "TRT":
                offs, tau, rel = np.array([0.25, 0.75]), h / 2, h
            else:
                offs, tau, rel = np.array([0.5]), h, h / 2
            mids = t + h * (np.arange(m)[:, None] + offs[None, :])
            bvals = b_eps(mids.ravel()).reshape(n, m, offs.size) if b_eps is not None else None
            if not relax or math.isinf(eps):
                decay = 1.0
            else:
                decay = math.exp(-rel / eps) if eps > 0 else 0.0

        def relax_step(cp, cm):
            if decay == 1.0:
                return cp, cm
            uh = (cp - cm) / (frame.plus - frame.minus)[:, None]
            dp = (decay - 1.0) * (cp - frame.plus[:, None] * uh)
            return cp + dp, cm + dp

        def transport_step(cp, cm, b):
            face_p = bsolve.incoming(b, tp.outgoing_left(cm, tau))
            return tp.plus(cp, face_p, tau), tp.minus(cm, tau)

        for k in range(m):
            if splitting == "TRT":
                if transport:
                    cp, cm = transport_step(cp, cm, bvals[:, k, 0] if bvals is not None else zero_b)
                cp, cm = relax_step(cp, cm)
                if transport:
                    cp, cm = transport_step(cp, cm, bvals[:, k, 1] if bvals is not None else zero_b)
            else:
                cp, cm = relax_step(cp, cm)
                if transport:
                    cp, cm = transport_step(cp, cm, bvals[:, k, 0] if bvals is not None else zero_b)
                cp, cm = relax_step(cp, cm)
            steps += 1
        t = t_next
        u, p = _from_char(model, frame, cp, cm)
        snaps_u.append(u)
        snaps_p.append(p)
    return GridSolution(grid, times, np.array(snaps_u), np.array(snaps_p), eps, steps)


def run_problem(model, bc, init, grid: Grid1D, eps: float, times=None, order: int = 2, **kw) -> GridSolution:
    """Convenience wrapper: cell values from the compat initial data, ``b_eps`` from ``bc``."""
    x = grid.x
    u_init = init.u(x)
    p_init = init.p(x, eps)
    return run(model, bc.B_u, bc.B_p, bc.b_eps(eps), u_init, p_init, grid, eps, times, order, **kw)


def energy(model: SpectralModel, u: np.ndarray, p: np.ndarray, dx: float, A0: np.ndarray | None = None) -> float:
    """Discrete ``sum (u, p)^T A0 (u, p) dx``."""
    A0 = symmetrizer(model) if A0 is None else A0
    U = np.concatenate([u, p])
    return float(np.einsum("ik,ij,jk->", U, A0, U) * dx)


def cell_average(profile: SmoothProfile, grid: Grid1D, points: int = 3) -> np.ndarray:
    """Gauss-Legendre cell averages of a profile, shape ``(dim, N)``."""
    xg, wg = np.polynomial.legendre.leggauss(points)
    x = grid.x
    acc = 0.0
    for xi, wi in zip(xg, wg):
        acc = acc + 0.5 * wi * profile(x + 0.5 * xi * grid.dx)
    return acc
