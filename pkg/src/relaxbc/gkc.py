"""Stable eigenstructure of ``M(eta, xi0)`` and the generalized Kreiss ratio.

Per diagonal mode ``j`` the stable eigenvalue ``kappa_j^-`` of
``M = A^-1 (eta S - xi0 I)`` and its eigenvector ``(e_j; q_j e_j)`` (in
``T``-coordinates) are available in closed form from the quadratic

    kappa^2 - (eta lambda / a) kappa - (eta + xi0) xi0 / a = 0.

The ratio ``|det(tB_u + tB_p Q)| / sqrt(prod(1 + |q_j|^2))`` is invariant under
``(eta, xi0) -> (s eta, s xi0)``, so the frequency domain reduces to the point
``eta = 0`` together with the half-plane ``{eta = 1, Re xi0 > 0}``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .errors import EigenSplitFailure, NumericsError
from .model import SpectralModel, relaxation_coefficient_matrix

TIE_TOL = 1e-14
SQRT2P1 = math.sqrt(2.0) + 1.0


@dataclass(frozen=True)
class FrequencyPoint:
    eta: float
    xi0: complex

    def __post_init__(self):
        if self.eta < 0:
            raise ValueError("eta must be non-negative")
        if complex(self.xi0).real < 0:
            raise ValueError("Re xi0 must be non-negative")

    @property
    def on_boundary(self) -> bool:
        return complex(self.xi0).real == 0

    def normalized(self) -> "FrequencyPoint":
        r = math.hypot(self.eta, abs(self.xi0))
        return FrequencyPoint(self.eta / r, complex(self.xi0) / r)


def kappa_pm(a, lam, eta, xi0):
    """Roots ``(kappa+, kappa-)`` labelled by the sign of their real part.

    Broadcasts over array arguments.  Uses the cancellation-free form
    ``r1 = -(b + sign * sqrt(disc)) / 2``, ``r2 = c / r1``.
    """
    a = np.asarray(a, dtype=float)
    lam = np.asarray(lam, dtype=float)
    eta = np.asarray(eta, dtype=float)
    xi0 = np.asarray(xi0, dtype=complex)
    b = -eta * lam / a
    c = -(eta + xi0) * xi0 / a
    sq = np.sqrt(b * b - 4.0 * c + 0j)
    sgn = np.where((np.conj(b) * sq).real >= 0, 1.0, -1.0)
    r1 = -(b + sgn * sq) / 2.0
    safe = np.where(r1 == 0, 1.0, r1)
    r2 = np.where(r1 == 0, 0.0, c / safe)
    scale = np.maximum(np.abs(r1), np.abs(r2))
    tie = (np.abs(r1.real) <= TIE_TOL * scale) | (np.abs(r2.real) <= TIE_TOL * scale)
    same = np.sign(r1.real) == np.sign(r2.real)
    if np.any(tie | same | (scale == 0)):
        raise EigenSplitFailure("roots do not split across the imaginary axis")
    plus = np.where(r1.real > 0, r1, r2)
    minus = np.where(r1.real > 0, r2, r1)
    return plus, minus


def q_value(a, lam, eta, xi0):
    """``q = a kappa+ / (xi0 + eta) - lambda``."""
    kp, _ = kappa_pm(a, lam, eta, xi0)
    return np.asarray(a) * kp / (np.asarray(xi0, dtype=complex) + np.asarray(eta)) - np.asarray(lam)


def q_matrix(model: SpectralModel, eta, xi0) -> np.ndarray:
    """``q_j`` for a batch of points; shape ``(npts, n)``."""
    eta = np.atleast_1d(np.asarray(eta, dtype=float))[:, None]
    xi0 = np.atleast_1d(np.asarray(xi0, dtype=complex))[:, None]
    return q_value(model.a[None, :], model.lam[None, :], eta, xi0)


@dataclass(frozen=True)
class StableBundle:
    kappa_plus: np.ndarray
    kappa_minus: np.ndarray
    q: np.ndarray
    Q: np.ndarray = field(repr=False)
    Rtilde: np.ndarray = field(repr=False)
    RMS: np.ndarray = field(repr=False)
    eigen_residual: float = 0.0


def stable_bundle(model: SpectralModel, eta: float, xi0: complex, check: bool = True) -> StableBundle:
    n = model.n
    kp, km = kappa_pm(model.a, model.lam, eta, xi0)
    q = model.a * kp / (xi0 + eta) - model.lam
    Q = np.diag(q)
    Rt = np.vstack([np.eye(n), Q])
    blk = np.block([[model.T, np.zeros((n, n))], [np.zeros((n, n)), model.T]])
    R = blk @ Rt
    resid = 0.0
    if check:
        A = relaxation_coefficient_matrix(model)
        S = np.diag(np.concatenate([np.zeros(n), -np.ones(n)]))
        M = np.linalg.solve(A, eta * S - xi0 * np.eye(2 * n))
        lhs = M @ R
        rhs = R @ np.diag(km)
        resid = float(np.abs(lhs - rhs).max() / max(1.0, np.abs(rhs).max()))
        if resid > 1e-8:
            raise NumericsError(f"stable eigen-identity residual {resid:.3e} exceeds 1e-8")
    return StableBundle(kp, km, q, Q, Rt, R, resid)


def _tilde(bc, model):
    return bc.B_u @ model.T, bc.B_p @ model.T


def ratio_from_q(tBu, tBp, q) -> np.ndarray:
    """GKC ratio for a batch of ``q`` rows (shape ``(npts, n)``)."""
    q = np.atleast_2d(q)
    mats = tBu[None, :, :] + tBp[None, :, :] * q[:, None, :]
    det = np.abs(np.linalg.det(mats))
    vol = np.sqrt(np.prod(1.0 + np.abs(q) ** 2, axis=1))
    return det / vol


def gkc_ratio(bc, model: SpectralModel, eta, xi0):
    """Scalar or batched ratio ``|det(tB_u + tB_p Q)| / sqrt(prod(1 + |q|^2))``."""
    scalar = np.ndim(eta) == 0 and np.ndim(xi0) == 0
    tBu, tBp = _tilde(bc, model)
    eta_b, xi_b = np.broadcast_arrays(np.asarray(eta, dtype=float), np.asarray(xi0, dtype=complex))
    out = ratio_from_q(tBu, tBp, q_matrix(model, eta_b.ravel(), xi_b.ravel())).reshape(eta_b.shape)
    return float(out) if scalar else out


def q_boundary_curve(a: float, lam: float, eta: float, theta) -> np.ndarray:
    """``h(i theta) - lambda``: the image of the imaginary axis under ``q``.

    Evaluated as the one-sided limit from ``Re xi0 > 0`` (a relative offset
    of 1e-12), which selects the branch continuous with the interior.
    """
    theta = np.asarray(theta, dtype=float)
    if eta == 0:
        return np.full(theta.shape, math.sqrt(a) - lam, dtype=complex)
    off = 1e-12 * np.maximum(1.0, np.maximum(np.abs(theta), eta))
    return q_value(a, lam, eta, off + 1j * theta)


# -- certification ------------------------------------------------------------


@dataclass(frozen=True)
class SamplingSpec:
    deltas: tuple = (1e-2, 1e-4, 1e-6)
    n_re: int = 40
    n_im: int = 60
    im_range: tuple = (-6.0, 4.0)
    re_max_exp: float = 3.0
    tol_pass: float = 1e-3
    tol_fail: float = 1e-6
    n_local: int = 5

    def refined(self) -> "SamplingSpec":
        return SamplingSpec(self.deltas, 2 * self.n_re, 2 * self.n_im, self.im_range, self.re_max_exp,
                            self.tol_pass, self.tol_fail, self.n_local)

    @classmethod
    def from_json(cls, doc) -> "SamplingSpec":
        doc = dict(doc or {})
        for key in ("deltas", "im_range"):
            if key in doc:
                doc[key] = tuple(doc[key])
        return cls(**doc)


@dataclass
class Certificate:
    c_hat: float
    argmin: FrequencyPoint
    verdict: str
    samples_used: int
    per_delta: dict
    c_refined: float

    def to_json(self) -> dict:
        return {
            "c_hat": self.c_hat,
            "argmin": {"eta": self.argmin.eta, "xi0_re": self.argmin.xi0.real, "xi0_im": self.argmin.xi0.imag},
            "verdict": self.verdict,
            "samples_used": self.samples_used,
            "per_delta": {f"{k:g}": v for k, v in self.per_delta.items()},
            "c_refined": self.c_refined,
        }


def half_plane_samples(delta: float, spec: SamplingSpec):
    """Points ``xi0`` (with ``eta = 1``) covering ``Re xi0 >= delta``."""
    re = np.unique(np.concatenate([[delta], np.logspace(math.log10(delta), spec.re_max_exp, spec.n_re)]))
    im_pos = np.logspace(spec.im_range[0], spec.im_range[1], spec.n_im)
    im = np.concatenate([-im_pos[::-1], [0.0], im_pos])
    R, I = np.meshgrid(re, im, indexing="ij")
    return (R + 1j * I).ravel()


def _local_refine(f, xi_start, delta, spec: SamplingSpec):
    """Nelder-Mead on ``(log Re xi0, asinh Im xi0)`` inside the sampled box."""
    re_hi = math.log(10.0**spec.re_max_exp)
    im_hi = math.asinh(10.0 ** spec.im_range[1])

    def unpack(z):
        re = math.exp(min(max(z[0], math.log(delta)), re_hi))
        return re + 1j * math.sinh(min(max(z[1], -im_hi), im_hi))

    def obj(z):
        try:
            return f(unpack(z))
        except EigenSplitFailure:
            return math.inf

    z0 = np.array([math.log(max(delta, xi_start.real)), math.asinh(xi_start.imag)])
    res = optimize.minimize(obj, z0, method="Nelder-Mead",
                            options={"xatol": 1e-10, "fatol": 1e-14, "maxiter": 2000})
    return float(res.fun), unpack(res.x)


def _real_axis_zeros(det_real, xs):
    """Roots of a real function on a sorted grid, bracketed by sign changes."""
    vals = np.array([det_real(x) for x in xs])
    out = []
    for i in np.nonzero(np.sign(vals[:-1]) * np.sign(vals[1:]) < 0)[0]:
        out.append(optimize.brentq(det_real, xs[i], xs[i + 1], xtol=1e-14, rtol=1e-15))
    out.extend(xs[vals == 0])
    return out


def _scan(bc, model, spec: SamplingSpec):
    tBu, tBp = _tilde(bc, model)

    def f(xi):
        return float(ratio_from_q(tBu, tBp, q_matrix(model, [1.0], [xi]))[0])

    eta0 = float(ratio_from_q(tBu, tBp, q_matrix(model, [0.0], [1.0]))[0])
    per_delta = {}
    best = (eta0, FrequencyPoint(0.0, 1.0 + 0j))
    used = 1
    real_case = np.isrealobj(tBu) and np.isrealobj(tBp)
    for delta in spec.deltas:
        pts = half_plane_samples(delta, spec)
        vals = ratio_from_q(tBu, tBp, q_matrix(model, np.ones(pts.size), pts))
        used += pts.size
        order = np.argsort(vals)
        cands = [(float(vals[k]), complex(pts[k])) for k in order[: spec.n_local]]
        refined = [_local_refine(f, xi, delta, spec) for _, xi in cands]
        cands.extend(refined)
        if real_case:
            # along the real xi0 axis the determinant is real and may cross zero
            xs = np.logspace(math.log10(delta), spec.re_max_exp, 8 * spec.n_re)

            def det_real(x):
                q = q_matrix(model, [1.0], [x])[0].real
                return float(np.linalg.det(tBu + tBp * q[None, :]))

            for x in _real_axis_zeros(det_real, xs):
                cands.append((f(x), complex(x)))
        cmin, xmin = min(cands, key=lambda c: c[0])
        per_delta[delta] = min(cmin, eta0)
        if cmin < best[0]:
            best = (cmin, FrequencyPoint(1.0, xmin).normalized())
    return best, per_delta, used


def certify(bc, model: SpectralModel, spec: SamplingSpec | None = None) -> Certificate:
    """Sampling estimate of ``inf ratio`` with a PASS/FAIL/INCONCLUSIVE verdict."""
    spec = spec or SamplingSpec()
    (c_hat, arg), per_delta, used = _scan(bc, model, spec)
    (c_ref, arg_ref), _, used_ref = _scan(bc, model, spec.refined())
    c_fin = min(c_hat, c_ref)
    if c_ref < c_hat:
        arg = arg_ref
    deltas = sorted(per_delta)
    stable_ref = c_hat > 0 and abs(c_ref - c_hat) / c_hat < 0.1
    stable_delta = len(deltas) < 2 or (
        per_delta[deltas[1]] > 0 and abs(per_delta[deltas[0]] - per_delta[deltas[1]]) / per_delta[deltas[1]] < 0.1
    )
    if c_fin < spec.tol_fail:
        verdict = "FAIL"
    elif c_fin > spec.tol_pass and stable_ref and stable_delta:
        verdict = "PASS"
    else:
        verdict = "INCONCLUSIVE"
    return Certificate(c_fin, arg, verdict, used + used_ref, per_delta, c_ref)
