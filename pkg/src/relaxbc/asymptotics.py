"""Two-term matched asymptotic solution of the relaxation IBVP.

    u_eps = u0bar + eps u1bar + mu0(x/eps, t) + eps mu1(x/eps, t)
    p_eps =         eps p1bar + nu0(x/eps, t) + eps nu1(x/eps, t)

Everything is evaluated in the diagonal coordinates ``w = T^-1 (.)`` where the
outer problems decouple into scalar transport equations with speed
``lambda_j`` and the layer problems into scalar ODEs in ``xi`` with rate
``r_j = lambda_j / a_j``.  Boundary traces such as ``alpha^+(t)`` are kept as
exact :class:`SmoothSignal` objects, so no quadrature or sampling is involved.

Notation: ``g = T^-1 u0``, ``s_j = a_j - lambda_j^2``, ``beta = T^-1 nu0(0, t)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .construct import ConstructedBC, h_and_j
from .errors import DomainError, InvalidLayerDatum, ReductionFailure
from .model import GivenBoundaryCondition, SpectralModel, checked_inverse
from .signals import SmoothProfile, SmoothSignal


def _check_domain(x, t):
    if np.any(np.asarray(x) < 0) or np.any(np.asarray(t) < 0):
        raise DomainError("asymptotic fields are defined for x >= 0, t >= 0 only")


def _to_physical(T, w):
    return np.tensordot(T, w, axes=(1, 0))


def _signals(series, cls=SmoothSignal):
    return [series.restrict([j]).as_type(cls) for j in range(series.dim)]


class OuterU0:
    """Characteristic solution of ``u_t + F u_x = 0`` with the given BC."""

    def __init__(self, model: SpectralModel, given: GivenBoundaryCondition, u0: SmoothProfile):
        self.model = model
        self.u0 = u0
        n, l = model.n, model.l
        self.g = u0.apply(model.Tinv)
        self.gj = _signals(self.g, SmoothProfile)
        lam = model.lam
        self.alpha_minus = SmoothSignal.stack(
            *[self.gj[k].composed(-lam[k], 0.0, SmoothSignal) for k in range(l, n)]
        ) if l < n else SmoothSignal.zero(0)
        H, J = h_and_j(model, given)
        self.H = H
        if l:
            self.alpha_plus = (self.alpha_minus.apply(H) if l < n else SmoothSignal.zero(l)) + J
        else:
            self.alpha_plus = SmoothSignal.zero(0)
        self.apj = _signals(self.alpha_plus)

    def w(self, x, t, p: int = 0, q: int = 0):
        """Diagonal components, ``d^p/dx^p d^q/dt^q``; shape ``(n,) + shape``."""
        _check_domain(x, t)
        x, t = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(t, dtype=float))
        out = np.zeros((self.model.n,) + x.shape)
        with np.errstate(over="ignore", invalid="ignore"):
            for j, lam in enumerate(self.model.lam):
                z = x - lam * t
                val_a = (-lam) ** q * self.gj[j](z, p + q)[0]
                if j < self.model.l:
                    tau = t - x / lam
                    val_b = (-1.0 / lam) ** p * self.apj[j](tau, p + q)[0]
                    region_a = (z > 0) | (t == 0)
                    out[j] = np.where(region_a, val_a, val_b)
                else:
                    out[j] = val_a
        return out

    def __call__(self, x, t, p: int = 0, q: int = 0):
        return _to_physical(self.model.T, self.w(x, t, p, q))

    def trace_w(self) -> SmoothSignal:
        """``T^-1 u0bar(0, t)`` as a signal."""
        return SmoothSignal.stack(self.alpha_plus, self.alpha_minus)

    def trace_wx(self) -> SmoothSignal:
        """``T^-1 d/dx u0bar(0, t)`` as a signal."""
        l, n, lam = self.model.l, self.model.n, self.model.lam
        up = self.alpha_plus.derivative().component_scaled(-1.0 / lam[:l])
        down = SmoothSignal.stack(
            *[self.gj[k].derivative().composed(-lam[k], 0.0, SmoothSignal) for k in range(l, n)]
        ) if l < n else SmoothSignal.zero(0)
        return SmoothSignal.stack(up, down)


def solve_u0(model: SpectralModel, given: GivenBoundaryCondition, u0: SmoothProfile) -> OuterU0:
    return OuterU0(model, given, u0)


def p1_bar(model: SpectralModel, outer0: OuterU0):
    """Evaluator for ``p1bar = -(Abar - F^2) u0bar_x`` (with derivatives)."""
    s = model.a - model.lam**2

    def evaluate(x, t, p: int = 0, q: int = 0):
        w = outer0.w(x, t, p + 1, q)
        return _to_physical(model.T, -s.reshape((-1,) + (1,) * (w.ndim - 1)) * w)

    return evaluate


@dataclass(frozen=True)
class ReductionMatrices:
    Bhat1: np.ndarray
    Bhat2: np.ndarray
    K1: np.ndarray
    K2: np.ndarray
    cond1: float
    cond2: float

    def identity_residuals(self, model: SpectralModel, bc: ConstructedBC) -> tuple:
        N = (bc.B_p - bc.B_u @ model.Finv) @ model.R1S
        r1 = float(np.abs(self.Bhat1 @ N).max(initial=0.0))
        full = np.vstack([self.Bhat1, self.Bhat2])
        r2 = float(np.abs(full @ full.T - np.eye(model.n)).max())
        return r1, r2


def _sign_rows(M):
    M = M.copy()
    for row in M:
        k = int(np.argmax(np.abs(row)))
        if row[k] < 0:
            row *= -1.0
    return M


def reduction_matrices(model: SpectralModel, bc: ConstructedBC, tol: float = 1e-10) -> ReductionMatrices:
    """``Bhat1`` annihilates ``(B_p - B_u F^-1) R1S``; ``Bhat2`` completes it."""
    n, l = model.n, model.l
    N = (bc.B_p - bc.B_u @ model.Finv) @ model.R1S
    if l == n:
        K1, c1 = checked_inverse(bc.B_u @ model.R1U, "B_u R1U", exc=ReductionFailure)
        return ReductionMatrices(np.eye(n), np.zeros((0, n)), K1, np.zeros((0, 0)), c1, 1.0)
    U, sv, _ = np.linalg.svd(N, full_matrices=True)
    rank = int(np.sum(sv > tol * max(1.0, sv[0] if sv.size else 0.0)))
    if n - rank != l:
        raise ReductionFailure(f"left null space of (B_p - B_u F^-1) R1S has dimension {n - rank}, expected {l}")
    Bhat1 = _sign_rows(U[:, rank:].T)
    Bhat2 = _sign_rows(U[:, :rank].T)
    K1, c1 = checked_inverse(Bhat1 @ bc.B_u @ model.R1U, "Bhat1 B_u R1U", exc=ReductionFailure)
    K2, c2 = checked_inverse(Bhat2 @ N, "Bhat2 (B_p - B_u F^-1) R1S", exc=ReductionFailure)
    return ReductionMatrices(Bhat1, Bhat2, K1, K2, c1, c2)


def nu0_boundary(model: SpectralModel, bc: ConstructedBC, outer0: OuterU0, red: ReductionMatrices) -> SmoothSignal:
    """``nu0(0, t) = R1S K2 Bhat2 (b0 - B_u u0bar(0, t))``."""
    n, l = model.n, model.l
    if l == n:
        return SmoothSignal.zero(n)
    u_trace = outer0.trace_w().apply(model.T)
    alpha = (bc.b0 - u_trace.apply(bc.B_u)).apply(red.K2 @ red.Bhat2)
    return alpha.apply(model.R1S)


def nu0_consistency(model: SpectralModel, bc: ConstructedBC, outer0: OuterU0, nu0_at0: SmoothSignal, times) -> float:
    """Max deviation of ``nu0(0, t)`` from ``C alpha^-(t) + D(t)``."""
    if model.l == model.n:
        return 0.0
    alt = outer0.alpha_minus.apply(bc.C) + bc.D
    return float(np.abs(nu0_at0(times) - alt(times)).max())


class LayerNu0:
    """``nu0(xi, t)`` with ``nu0_xi = F Abar^-1 nu0``; ``mu0 = -F^-1 nu0``."""

    def __init__(self, model: SpectralModel, nu0_at0: SmoothSignal):
        self.model = model
        self.at0 = nu0_at0
        beta = nu0_at0.apply(model.Tinv)
        l = model.l
        if l and beta.restrict(slice(0, l)).coefficient_norm() > 1e-12 * max(1.0, beta.coefficient_norm()):
            raise InvalidLayerDatum("nu0(0, t) has a component along R1U")
        self.beta = beta
        self.bj = _signals(beta)
        self.rate = model.lam / model.a

    def w(self, xi, t, p: int = 0, q: int = 0):
        xi, t = np.broadcast_arrays(np.asarray(xi, dtype=float), np.asarray(t, dtype=float))
        out = np.zeros((self.model.n,) + xi.shape)
        for j in range(self.model.l, self.model.n):
            r = self.rate[j]
            out[j] = r**p * np.exp(r * xi) * self.bj[j](t, q)[0]
        return out

    def __call__(self, xi, t, p: int = 0, q: int = 0):
        return _to_physical(self.model.T, self.w(xi, t, p, q))

    def mu_w(self, xi, t, p: int = 0, q: int = 0):
        w = self.w(xi, t, p, q)
        return -w / self.model.lam.reshape((-1,) + (1,) * (w.ndim - 1))

    def mu(self, xi, t, p: int = 0, q: int = 0):
        return _to_physical(self.model.T, self.mu_w(xi, t, p, q))

    def mu_t_integral(self) -> SmoothSignal:
        """``int_0^inf mu0_t(s, t) ds = T diag(a / lambda^2) beta'(t)``."""
        fac = self.model.a / self.model.lam**2
        return self.beta.derivative().component_scaled(fac).apply(self.model.T)


def layer_nu0(model: SpectralModel, nu0_at0: SmoothSignal) -> LayerNu0:
    return LayerNu0(model, nu0_at0)


class OuterU1:
    """``u1bar`` solving ``u_t + F u_x = (Abar - F^2) u0bar_xx`` with zero data.

    Diagonal component ``j``: ``s_j t g_j''(x - lambda_j t)`` ahead of the
    characteristic through the corner, ``gamma^+_j(tau) + (s_j/lambda_j^3) x
    alpha^+_j''(tau)`` with ``tau = t - x/lambda_j`` behind it.
    """

    def __init__(self, model: SpectralModel, outer0: OuterU0, gamma_plus: SmoothSignal):
        self.model = model
        self.outer0 = outer0
        self.gamma_plus = gamma_plus
        self.s = model.a - model.lam**2
        self.Gj = [gj.derivative(2).scale(float(sj)) for gj, sj in zip(outer0.gj, self.s)]
        self.gpj = _signals(gamma_plus)
        self.Kj = [ap.derivative(2) for ap in outer0.apj]

    def w(self, x, t, p: int = 0, q: int = 0):
        _check_domain(x, t)
        x, t = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(t, dtype=float))
        out = np.zeros((self.model.n,) + x.shape)
        with np.errstate(over="ignore", invalid="ignore"):
            for j, lam in enumerate(self.model.lam):
                z = x - lam * t
                G = self.Gj[j]
                val_a = t * (-lam) ** q * G(z, p + q)[0]
                if q:
                    val_a = val_a + q * (-lam) ** (q - 1) * G(z, p + q - 1)[0]
                if j < self.model.l:
                    tau = t - x / lam
                    m = -1.0 / lam
                    c = self.s[j] / lam**3
                    K = self.Kj[j]
                    val_b = m**p * self.gpj[j](tau, p + q)[0] + c * x * m**p * K(tau, p + q)[0]
                    if p:
                        val_b = val_b + c * p * m ** (p - 1) * K(tau, p + q - 1)[0]
                    out[j] = np.where((z > 0) | (t == 0), val_a, val_b)
                else:
                    out[j] = val_a
        return out

    def __call__(self, x, t, p: int = 0, q: int = 0):
        return _to_physical(self.model.T, self.w(x, t, p, q))


def _gamma_minus(model: SpectralModel, outer0: OuterU0) -> SmoothSignal:
    l, n, lam = model.l, model.n, model.lam
    if l == n:
        return SmoothSignal.zero(0)
    s = model.a - lam**2
    parts = [
        outer0.gj[k].derivative(2).composed(-lam[k], 0.0, SmoothSignal).times([0.0, 1.0]).scale(float(s[k]))
        for k in range(l, n)
    ]
    return SmoothSignal.stack(*parts)


def _u1_rhs(model, bc, outer0, layer0) -> SmoothSignal:
    """``b1 + B_p (Abar - F^2) u0bar_x(0, t) - B_u F^-1 int_0^inf mu0_t``."""
    s = model.a - model.lam**2
    u0x = outer0.trace_wx().component_scaled(s).apply(model.T)
    out = bc.b1 + u0x.apply(bc.B_p)
    return out - layer0.mu_t_integral().apply(bc.B_u @ model.Finv)


def solve_u1(model: SpectralModel, bc: ConstructedBC, outer0: OuterU0, layer0: LayerNu0, red: ReductionMatrices) -> OuterU1:
    l = model.l
    gm = _gamma_minus(model, outer0)
    rhs = _u1_rhs(model, bc, outer0, layer0)
    if l:
        gp = rhs.apply(red.K1 @ red.Bhat1)
        if l < model.n:
            gp = gp - gm.apply(red.K1 @ red.Bhat1 @ bc.B_u @ model.R1S)
    else:
        gp = SmoothSignal.zero(0)
    out = OuterU1(model, outer0, gp)
    out.gamma_minus = gm
    return out


class LayerNu1:
    """``nu1_xi = F Abar^-1 nu1 + F^-1 nu0_t`` with resonant forcing.

    Diagonal ``j > l``: ``(zeta_j(t) + beta_j'(t) xi / lambda_j) exp(r_j xi)``;
    ``mu1 = -F^-1 nu1 + F^-1 int_xi^inf mu0_t``, whose tail integral is
    ``(a_j / lambda_j^3) beta_j'(t) exp(r_j xi)`` per component.
    """

    def __init__(self, model: SpectralModel, layer0: LayerNu0, zeta_w: SmoothSignal):
        self.model = model
        self.layer0 = layer0
        self.zeta = zeta_w
        self.zj = _signals(zeta_w)
        self.rate = model.lam / model.a

    def w(self, xi, t, p: int = 0, q: int = 0):
        xi, t = np.broadcast_arrays(np.asarray(xi, dtype=float), np.asarray(t, dtype=float))
        out = np.zeros((self.model.n,) + xi.shape)
        for j in range(self.model.l, self.model.n):
            r, lam = self.rate[j], self.model.lam[j]
            A = self.zj[j](t, q)[0]
            B = self.layer0.bj[j](t, q + 1)[0] / lam
            e = np.exp(r * xi)
            out[j] = (r**p * A + (p * r ** (p - 1) if p else 0.0) * B + r**p * B * xi) * e
        return out

    def __call__(self, xi, t, p: int = 0, q: int = 0):
        return _to_physical(self.model.T, self.w(xi, t, p, q))

    def mu_w(self, xi, t, p: int = 0, q: int = 0):
        xi, t = np.broadcast_arrays(np.asarray(xi, dtype=float), np.asarray(t, dtype=float))
        out = -self.w(xi, t, p, q) / self.model.lam.reshape((-1,) + (1,) * xi.ndim)
        for j in range(self.model.l, self.model.n):
            r, lam, a = self.rate[j], self.model.lam[j], self.model.a[j]
            out[j] += (a / lam**3) * r**p * np.exp(r * xi) * self.layer0.bj[j](t, q + 1)[0]
        return out

    def mu(self, xi, t, p: int = 0, q: int = 0):
        return _to_physical(self.model.T, self.mu_w(xi, t, p, q))


def layer_nu1(model: SpectralModel, bc: ConstructedBC, outer0: OuterU0, outer1: OuterU1,
              layer0: LayerNu0, red: ReductionMatrices) -> LayerNu1:
    n, l = model.n, model.l
    if l == n:
        return LayerNu1(model, layer0, SmoothSignal.zero(n))
    rhs = _u1_rhs(model, bc, outer0, layer0)
    u1_trace = SmoothSignal.stack(outer1.gamma_plus, outer1.gamma_minus).apply(model.T)
    zeta = (rhs - u1_trace.apply(bc.B_u)).apply(red.K2 @ red.Bhat2)
    zeta_w = SmoothSignal.stack(SmoothSignal.zero(l), zeta)
    return LayerNu1(model, layer0, zeta_w)


class AsymptoticSolution:
    def __init__(self, model, bc, outer0, outer1, layer0, layer1, red):
        self.model = model
        self.bc = bc
        self.outer0 = outer0
        self.outer1 = outer1
        self.layer0 = layer0
        self.layer1 = layer1
        self.reduction = red
        self.p1 = p1_bar(model, outer0)

    def fields(self, x, t, eps: float, p: int = 0, q: int = 0):
        """``(u_eps, p_eps)`` or their derivatives; each of shape ``(n,) + shape``."""
        x, t = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(t, dtype=float))
        xi = x / eps
        lay = eps ** (-p)
        u = self.outer0(x, t, p, q) + eps * self.outer1(x, t, p, q)
        u = u + lay * (self.layer0.mu(xi, t, p, q) + eps * self.layer1.mu(xi, t, p, q))
        pp = eps * self.p1(x, t, p, q) + lay * (self.layer0(xi, t, p, q) + eps * self.layer1(xi, t, p, q))
        return u, pp

    def boundary_residual(self, t, eps: float) -> float:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        u, p = self.fields(np.zeros_like(t), t, eps)
        lhs = self.bc.B_u @ u + self.bc.B_p @ p
        rhs = self.bc.b0(t) + eps * self.bc.b1(t)
        return float(np.abs(lhs - rhs).max())


def assemble(model, bc, outer0, outer1, layer0, layer1, red) -> AsymptoticSolution:
    return AsymptoticSolution(model, bc, outer0, outer1, layer0, layer1, red)


def build_asymptotic(model: SpectralModel, given: GivenBoundaryCondition, bc: ConstructedBC,
                     u0: SmoothProfile) -> AsymptoticSolution:
    """Run every stage: ``u0bar``, reduction, ``nu0``, ``u1bar``, ``nu1``."""
    outer0 = solve_u0(model, given, u0)
    red = reduction_matrices(model, bc)
    layer0 = layer_nu0(model, nu0_boundary(model, bc, outer0, red))
    outer1 = solve_u1(model, bc, outer0, layer0, red)
    layer1 = layer_nu1(model, bc, outer0, outer1, layer0, red)
    return assemble(model, bc, outer0, outer1, layer0, layer1, red)


def residual(asym: AsymptoticSolution, eps: float, x, t):
    """Residual of the relaxation system and its predicted form ``eps (0; y) + eps Y``.

    Returns ``(computed, predicted, l2)`` with fields of shape ``(2n,) + shape``
    and ``l2`` the midpoint-rule L2 norm in ``x`` (``x`` uniform cell centers).
    """
    model = asym.model
    F, Abar = model.F, model.Abar
    G = Abar - F @ F
    u, p = asym.fields(x, t, eps)
    ut, pt = asym.fields(x, t, eps, q=1)
    ux, px = asym.fields(x, t, eps, p=1)

    def mm(M, v):
        return np.tensordot(M, v, axes=(1, 0))

    r_u = ut + mm(F, ux) + px
    r_p = pt + mm(G, ux) - mm(F, px) + p / eps
    computed = np.concatenate([r_u, r_p])
    x_arr, t_arr = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(t, dtype=float))
    y = asym.p1(x_arr, t_arr, 0, 1) + mm(G, asym.outer1(x_arr, t_arr, 1, 0)) - mm(F, asym.p1(x_arr, t_arr, 1, 0))
    xi = x_arr / eps
    Y = np.concatenate([asym.layer1.mu(xi, t_arr, 0, 1), asym.layer1(xi, t_arr, 0, 1)])
    predicted = eps * np.concatenate([np.zeros_like(y), y]) + eps * Y
    xs = np.atleast_1d(x_arr)
    dx = float(xs[1] - xs[0]) if xs.size > 1 else 1.0
    l2 = float(np.sqrt(np.sum(computed**2) * dx))
    return computed, predicted, l2
