import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from relaxbc.model import build_model, given_bc
from relaxbc.signals import SmoothProfile, SmoothSignal

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

ACCEPTANCE_LINES = []


def random_model(rng, n=None, l=None, strict=True):
    """Well-conditioned model with ``l`` positive speeds first."""
    n = int(rng.integers(1, 7)) if n is None else n
    l = int(rng.integers(0, n + 1)) if l is None else l
    T = np.eye(n) + 0.3 * rng.standard_normal((n, n))
    while np.linalg.cond(T) > 50:
        T = np.eye(n) + 0.3 * rng.standard_normal((n, n))
    lam = np.concatenate([rng.uniform(0.3, 2.0, l), -rng.uniform(0.3, 2.0, n - l)])
    factor = rng.uniform(1.2, 4.0, n) if strict else np.ones(n)
    a = lam**2 * factor
    return build_model(T, lam, a)


def random_given(rng, model, bhat=None):
    l, n = model.l, model.n
    while True:
        Bhat = rng.standard_normal((l, n))
        if l == 0 or np.linalg.cond(Bhat @ model.R1U) < 100:
            return given_bc(model, Bhat, bhat)


def layer_datum(rng, model):
    """Random ``D(t)`` in span(R1S): polynomial-times-exponential components."""
    m = model.n - model.l
    parts = []
    for _ in range(m):
        c = rng.standard_normal(3)
        parts.append([{"poly": c.tolist(), "rate": -float(rng.uniform(0.5, 2))}])
    sig = SmoothSignal.from_json({"components": parts}) if m else SmoothSignal.zero(0)
    return sig.apply(model.R1S) if m else SmoothSignal.zero(model.n)


@pytest.fixture
def p1():
    return build_model(np.eye(2), [1.0, -1.0], [4.0, 4.0])


@pytest.fixture
def p1_given(p1):
    return given_bc(p1, [[1.0, 1.0]])


@pytest.fixture
def bump2():
    return SmoothProfile.gaussian([1.0, 0.5], 3.5, 0.5)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def random_problem(rng, n_max=4):
    """Random model with ``1 <= l < n``, non-flat data and a compatible ``bhat``."""
    from relaxbc.compat import compat_pipeline, compatible_bhat
    from relaxbc.construct import ConstructionParams, construct

    n = int(rng.integers(2, n_max + 1))
    m = random_model(rng, n=n, l=int(rng.integers(1, n)))
    u0 = SmoothProfile.gaussian(rng.standard_normal(n), float(rng.uniform(0.3, 1.5)), float(rng.uniform(0.4, 1.0)))
    Bhat = random_given(rng, m).Bhat
    g = given_bc(m, Bhat, compatible_bhat(m, Bhat, u0))
    Ct = 0.5 * rng.standard_normal((n - m.l, n - m.l))
    bc = construct(m, g, ConstructionParams(Ctilde=Ct, D=layer_datum(rng, m)))
    bc, init, rep = compat_pipeline(m, g, bc, u0)
    return m, g, bc, u0, rep


def layer_ode_profiles(asym, t, xis):
    """Integrate the layer ODEs for ``(nu0, nu0_t, nu1)`` from their values at ``xi = 0``.

    Uses only the boundary values.  Modes along ``R1U`` grow in ``xi``; the
    term ``-gamma R1U L1U`` vanishes on the exact solution and keeps round-off
    in those modes from being amplified.
    """
    from scipy.integrate import solve_ivp

    m = asym.model
    n = m.n
    M = m.F @ np.linalg.inv(m.Abar)
    gamma = 1.0 + 2.0 * max(np.max(np.abs(m.lam / m.a)), 0.0)
    Ms = M - gamma * m.R1U @ m.L1U
    Fi = m.Finv

    def rhs(_, y):
        v0, v0t, v1 = y[:n], y[n:2 * n], y[2 * n:]
        return np.concatenate([Ms @ v0, Ms @ v0t, Ms @ v1 + Fi @ v0t])

    y0 = np.concatenate([asym.layer0(0.0, t), asym.layer0(0.0, t, 0, 1), asym.layer1(0.0, t)])
    sol = solve_ivp(rhs, (0.0, float(xis[-1])), y0, method="DOP853", t_eval=xis, rtol=1e-12, atol=1e-14)
    return sol.y[:n], sol.y[2 * n:]
