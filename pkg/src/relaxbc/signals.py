"""Closed-form smooth functions of one variable with exact derivatives.

Both boundary signals (functions of ``t``) and initial profiles (functions of
``x``) are vectors of finite sums of terms ``Re[P(s) exp(Q(s))]`` with complex
polynomials ``P`` and ``Q``.  The family is closed under differentiation
(``(P e^Q)' = (P' + Q'P) e^Q``) and under constant linear maps, so every
derivative needed at the corner ``(0, 0)`` is exact.

JSON schema for a signal component term::

    {"poly": [c0, c1, ...], "poly_imag": [...]?, "rate": r?, "freq": w?, "phase": phi?}

meaning ``poly(t) * exp(r t) * cos(w t + phi)``, or the general form
``{"poly": [...], "exponent": [q0, q1, ...], "exponent_imag": [...]?}``.  A profile term is one of::

    {"poly": [...], "center": c, "width": w}      # poly(x) exp(-((x-c)/w)^2)
    {"poly": [...], "decay": k}                   # poly(x) exp(-k x)
    {"poly": [...], "exponent": [q0, q1, q2]}     # poly(x) exp(q0 + q1 x + q2 x^2)
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from numpy.polynomial import polynomial as npoly

_ZERO_COEF = 0.0


def _trim(c: np.ndarray) -> np.ndarray:
    c = np.asarray(c, dtype=complex)
    nz = np.nonzero(c)[0]
    if nz.size == 0:
        return np.zeros(1, dtype=complex)
    return c[: nz[-1] + 1]


@dataclass(frozen=True)
class ExpPolyTerm:
    """One term ``Re[P(s) exp(Q(s))]``; coefficients are ascending."""

    poly: tuple
    expo: tuple

    @classmethod
    def make(cls, poly, expo=(0.0,)) -> "ExpPolyTerm":
        return cls(tuple(_trim(poly).tolist()), tuple(_trim(expo).tolist()))

    def is_zero(self) -> bool:
        return all(c == 0 for c in self.poly)

    def derivative(self) -> "ExpPolyTerm":
        p = np.array(self.poly)
        q = np.array(self.expo)
        dp = npoly.polyder(p) if p.size > 1 else np.zeros(1, dtype=complex)
        dq = npoly.polyder(q) if q.size > 1 else np.zeros(1, dtype=complex)
        new = npoly.polyadd(dp, npoly.polymul(dq, p))
        return ExpPolyTerm.make(new, q)

    def scaled(self, c: complex) -> "ExpPolyTerm":
        return ExpPolyTerm.make(np.array(self.poly) * c, self.expo)

    def composed(self, c: float, d: float = 0.0) -> "ExpPolyTerm":
        """The term evaluated at ``c s + d``."""
        return ExpPolyTerm.make(_compose(self.poly, c, d), _compose(self.expo, c, d))

    def times(self, poly) -> "ExpPolyTerm":
        return ExpPolyTerm.make(npoly.polymul(np.array(self.poly), np.asarray(poly, dtype=complex)), self.expo)

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        p = npoly.polyval(s, np.array(self.poly))
        if len(self.expo) == 1 and self.expo[0] == 0:
            return p.real
        return (p * np.exp(npoly.polyval(s, np.array(self.expo)))).real


def _compose(coeffs, c: float, d: float) -> np.ndarray:
    """Coefficients of ``p(c s + d)`` by Horner's rule."""
    out = np.zeros(1, dtype=complex)
    lin = np.array([d, c], dtype=complex)
    for coef in reversed(coeffs):
        out = npoly.polyadd(npoly.polymul(out, lin), [coef])
    return out


def _collect(terms: Iterable[ExpPolyTerm]) -> tuple:
    """Merge terms sharing an exponent and drop zero polynomials."""
    groups: dict = {}
    for term in terms:
        if term.expo in groups:
            groups[term.expo] = npoly.polyadd(groups[term.expo], np.array(term.poly))
        else:
            groups[term.expo] = np.array(term.poly, dtype=complex)
    out = []
    for expo, poly in groups.items():
        term = ExpPolyTerm.make(poly, expo)
        if not term.is_zero():
            out.append(term)
    return tuple(out)


class ExpPolySeries:
    """Vector of exp-polynomial sums.  Immutable apart from a derivative cache."""

    def __init__(self, components: Sequence[Sequence[ExpPolyTerm]]):
        self.components = tuple(_collect(c) for c in components)
        self._derivs: dict = {0: self}

    @property
    def dim(self) -> int:
        return len(self.components)

    @classmethod
    def zero(cls, dim: int):
        return cls([() for _ in range(dim)])

    def derivative(self, k: int = 1):
        if k < 0:
            raise ValueError("derivative order must be non-negative")
        if k not in self._derivs:
            prev = self.derivative(k - 1)
            self._derivs[k] = type(self)(
                [[t.derivative() for t in comp] for comp in prev.components]
            )
        return self._derivs[k]

    def __call__(self, s, k: int = 0) -> np.ndarray:
        """Evaluate the ``k``-th derivative; shape ``(dim,)`` or ``(dim, m)``."""
        target = self.derivative(k)
        s_arr = np.asarray(s, dtype=float)
        out = np.zeros((self.dim,) + s_arr.shape)
        for i, comp in enumerate(target.components):
            for term in comp:
                out[i] += term(s_arr)
        return out

    def jet(self, s: float, order: int) -> np.ndarray:
        """Derivatives ``0..order`` at ``s``, shape ``(order+1, dim)``."""
        return np.array([self(s, k) for k in range(order + 1)])

    # linear structure -----------------------------------------------------

    def apply(self, matrix):
        """Return ``matrix @ self`` as a new series of the same type."""
        m = np.atleast_2d(np.asarray(matrix, dtype=complex))
        if m.shape[1] != self.dim:
            raise ValueError(f"matrix has {m.shape[1]} columns, series has dim {self.dim}")
        comps = []
        for row in m:
            terms = []
            for coef, comp in zip(row, self.components):
                if coef != 0:
                    terms.extend(t.scaled(coef) for t in comp)
            comps.append(terms)
        return type(self)(comps)

    def __add__(self, other):
        if other.dim != self.dim:
            raise ValueError("dimension mismatch")
        return type(self)([a + b for a, b in zip(self.components, other.components)])

    def __neg__(self):
        return self.scale(-1.0)

    def __sub__(self, other):
        return self + (-other)

    def scale(self, c: float):
        return type(self)([[t.scaled(c) for t in comp] for comp in self.components])

    def restrict(self, idx):
        """Sub-vector of components (list of indices or slice)."""
        comps = list(self.components)
        if isinstance(idx, slice):
            return type(self)(comps[idx])
        return type(self)([comps[i] for i in idx])

    def composed(self, c: float, d: float = 0.0, cls=None):
        """Series in a new variable: ``s -> self(c s + d)``."""
        cls = cls or type(self)
        return cls([[t.composed(c, d) for t in comp] for comp in self.components])

    def times(self, poly):
        """Multiply every component by the real polynomial ``poly`` (ascending)."""
        return type(self)([[t.times(poly) for t in comp] for comp in self.components])

    def component_scaled(self, factors):
        """Scale component ``i`` by ``factors[i]``."""
        return type(self)(
            [[t.scaled(f) for t in comp] for f, comp in zip(factors, self.components)]
        )

    def as_type(self, cls):
        return cls(self.components)

    @classmethod
    def stack(cls, *parts):
        comps = []
        for p in parts:
            comps.extend(p.components)
        return cls(comps)

    def coefficient_norm(self) -> float:
        """Largest polynomial coefficient magnitude over all terms."""
        best = 0.0
        for comp in self.components:
            for term in comp:
                best = max(best, max(abs(c) for c in term.poly))
        return best

    def __repr__(self) -> str:
        n_terms = sum(len(c) for c in self.components)
        return f"{type(self).__name__}(dim={self.dim}, terms={n_terms})"


class SmoothSignal(ExpPolySeries):
    """Vector-valued time signal (boundary data, layer data, ...)."""

    @classmethod
    def polynomial(cls, coeffs) -> "SmoothSignal":
        """``coeffs[i]`` is the vector multiplying ``t**i``."""
        c = np.atleast_2d(np.asarray(coeffs, dtype=float))
        return cls([[ExpPolyTerm.make(c[:, i])] for i in range(c.shape[1])])

    @classmethod
    def from_jet(cls, jet) -> "SmoothSignal":
        """Minimal-degree polynomial whose derivatives at 0 are ``jet[k]``."""
        jet = np.atleast_2d(np.asarray(jet, dtype=float))
        coeffs = np.array([jet[k] / math.factorial(k) for k in range(jet.shape[0])])
        return cls.polynomial(coeffs)

    @classmethod
    def from_json(cls, doc) -> "SmoothSignal":
        comps = []
        for comp in doc["components"]:
            terms = []
            for t in comp:
                poly = np.asarray(t.get("poly", [0.0]), dtype=complex)
                if "poly_imag" in t:
                    imag = np.asarray(t["poly_imag"], dtype=float)
                    poly = npoly.polyadd(poly, 1j * imag)
                phase = float(t.get("phase", 0.0))
                if phase:
                    poly = poly * complex(math.cos(phase), math.sin(phase))
                if "exponent" in t:
                    expo = tuple(float(v) for v in t["exponent"])
                    if "exponent_imag" in t:
                        expo = tuple(npoly.polyadd(expo, 1j * np.asarray(t["exponent_imag"], dtype=float)))
                    terms.append(ExpPolyTerm.make(poly, expo))
                    continue
                rate = complex(float(t.get("rate", 0.0)), float(t.get("freq", 0.0)))
                terms.append(ExpPolyTerm.make(poly, (0.0, rate)))
            comps.append(terms)
        if "dim" in doc and doc["dim"] != len(comps):
            raise ValueError("signal 'dim' disagrees with number of components")
        return cls(comps)

    def to_json(self) -> dict:
        comps = []
        for comp in self.components:
            terms = []
            for term in comp:
                poly = np.array(term.poly)
                entry = {"poly": [float(v) for v in poly.real]}
                if np.any(poly.imag != 0):
                    entry["poly_imag"] = [float(v) for v in poly.imag]
                expo = np.array(term.expo)
                if expo.size > 2 or expo[0] != 0:
                    entry["exponent"] = [float(v) for v in expo.real]
                    if np.any(expo.imag != 0):
                        entry["exponent_imag"] = [float(v) for v in expo.imag]
                    terms.append(entry)
                    continue
                rate = complex(expo[1]) if expo.size > 1 else 0j
                if rate.real:
                    entry["rate"] = rate.real
                if rate.imag:
                    entry["freq"] = rate.imag
                terms.append(entry)
            comps.append(terms)
        return {"dim": self.dim, "components": comps}


class SmoothProfile(ExpPolySeries):
    """Vector-valued spatial profile (initial data ``u0`` and its relatives)."""

    @classmethod
    def gaussian(cls, amplitudes, center: float, width: float) -> "SmoothProfile":
        amps = np.atleast_1d(np.asarray(amplitudes, dtype=float))
        expo = (-(center**2) / width**2, 2 * center / width**2, -1.0 / width**2)
        return cls([[ExpPolyTerm.make([a], expo)] for a in amps])

    @classmethod
    def from_json(cls, doc) -> "SmoothProfile":
        comps = []
        for comp in doc["components"]:
            terms = []
            for t in comp:
                poly = np.asarray(t.get("poly", [1.0]), dtype=float)
                if "center" in t:
                    c, w = float(t["center"]), float(t["width"])
                    if w <= 0:
                        raise ValueError("bump width must be positive")
                    expo = (-(c**2) / w**2, 2 * c / w**2, -1.0 / w**2)
                elif "decay" in t:
                    expo = (0.0, -float(t["decay"]))
                else:
                    expo = tuple(float(v) for v in t.get("exponent", [0.0]))
                terms.append(ExpPolyTerm.make(poly, expo))
            comps.append(terms)
        if "dim" in doc and doc["dim"] != len(comps):
            raise ValueError("profile 'dim' disagrees with number of components")
        return cls(comps)

    def to_json(self) -> dict:
        comps = []
        for comp in self.components:
            comps.append(
                [
                    {
                        "poly": [float(v) for v in np.real(term.poly)],
                        "exponent": [float(v) for v in np.real(term.expo)],
                    }
                    for term in comp
                ]
            )
        return {"dim": self.dim, "components": comps}

    def support_bound(self, tol: float = 1e-15, max_order: int = 4, x_hi: float = 1e4) -> float:
        """Smallest ``x`` beyond which the profile and its first ``max_order``
        derivatives stay below ``tol`` (absolute)."""
        hi = 1.0
        while True:
            xs = np.linspace(0.0, hi, 4001)
            big = np.zeros(xs.shape, dtype=bool)
            for k in range(max_order + 1):
                big |= np.any(np.abs(self(xs, k)) >= tol, axis=0)
            idx = np.nonzero(big)[0]
            if idx.size == 0:
                return 0.0
            last = idx[-1]
            if last < xs.size * 0.9 or hi >= x_hi:
                return float(xs[min(last + 1, xs.size - 1)])
            hi *= 2.0
