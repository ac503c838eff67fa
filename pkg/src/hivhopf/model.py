"""Parameters, state vectors and the delayed right-hand side of the HIV/CTL model.

The five populations are uninfected cells ``x``, latently infected cells ``p``,
productively infected cells ``y``, free virions ``v`` and CTL cells ``z``.
Latent infection sees the state lagged by ``tau1``, productive infection the
state lagged by ``tau2`` and CTL proliferation the state lagged by ``tau3``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields, replace
from typing import NamedTuple

import numpy as np
from numba import njit

# Order of the packed parameter vector consumed by the compiled kernels.
PARAM_ORDER = (
    "lam", "beta1", "beta2", "rho", "m1", "m2", "alpha", "a", "k", "h", "c",
    "eta", "mu1", "mu2", "mu3", "mu4", "mu5",
)
RATE_FIELDS = tuple(n for n in PARAM_ORDER if n != "rho")
DELAY_FIELDS = ("tau1", "tau2", "tau3")
COMPONENTS = ("x", "p", "y", "v", "z")


@dataclass(frozen=True)
class Parameters:
    """Model constants and delays.

    ``lam`` is the recruitment rate (``lambda`` in configuration files).
    Defaults are the basic rate set used for every numerical experiment, with
    ``lam=7.5``, ``c=0.05``, ``eta=0.003`` and no delays.
    """

    lam: float = 7.5
    beta1: float = 0.001
    beta2: float = 0.001
    rho: float = 0.4
    m1: float = 4.0
    m2: float = 4.0
    alpha: float = 0.05
    a: float = 0.2
    k: float = 0.02
    h: float = 0.01
    c: float = 0.05
    eta: float = 0.003
    mu1: float = 0.01
    mu2: float = 0.02
    mu3: float = 0.04
    mu4: float = 0.02
    mu5: float = 0.005
    tau1: float = 0.0
    tau2: float = 0.0
    tau3: float = 0.0

    def replace(self, **changes) -> "Parameters":
        if "lambda" in changes:
            changes["lam"] = changes.pop("lambda")
        return replace(self, **changes)

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, n) for n in PARAM_ORDER], dtype=float)

    @property
    def delays(self) -> tuple[float, float, float]:
        return (self.tau1, self.tau2, self.tau3)

    @property
    def survival1(self) -> float:
        return math.exp(-self.m1 * self.tau1)

    @property
    def survival2(self) -> float:
        return math.exp(-self.m2 * self.tau2)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["lambda"] = d.pop("lam")
        return d

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in fields(cls)]


class State(NamedTuple):
    """Population levels."""

    x: float
    p: float
    y: float
    v: float
    z: float


class StateDerivative(NamedTuple):
    """Rates of change of the five populations (levels per unit time)."""

    dx: float
    dp: float
    dy: float
    dv: float
    dz: float


@dataclass
class ValidationReport:
    ok: bool
    violations: list[str] = field(default_factory=list)

    def __bool__(self) -> bool:
        return self.ok


@dataclass(frozen=True)
class OmegaBounds:
    """Componentwise ultimate bounds of the positively invariant region."""

    x_max: float
    p_max: float
    y_max: float
    v_max: float
    z_max: float

    def as_array(self) -> np.ndarray:
        return np.array([self.x_max, self.p_max, self.y_max, self.v_max, self.z_max])

    def contains(self, state, slack: float = 0.0) -> bool:
        s = np.asarray(state, dtype=float)
        return bool(np.all(s <= self.as_array() * (1.0 + slack)))


def validate(params: Parameters) -> ValidationReport:
    """Check every parameter invariant and list all violations."""
    violations = []
    for name in Parameters.field_names():
        if not math.isfinite(getattr(params, name)):
            violations.append(f"{name} must be finite")
    for name in RATE_FIELDS:
        if not getattr(params, name) > 0:
            violations.append(f"{name} > 0")
    if not 0.0 < params.rho < 1.0:
        violations.append("rho in (0,1)")
    for name in DELAY_FIELDS:
        if not getattr(params, name) >= 0:
            violations.append(f"{name} >= 0")
    if not params.c > params.eta * params.h:
        violations.append("c > eta*h")
    return ValidationReport(ok=not violations, violations=violations)


@njit(cache=True, nogil=True)
def rhs_kernel(par, e1, e2, now, lag1, lag2, lag3, out):
    """Fill ``out`` with the five rates; ``e1``/``e2`` are the survival factors."""
    lam, b1, b2, rho = par[0], par[1], par[2], par[3]
    alpha, a, k, h, c, eta = par[6], par[7], par[8], par[9], par[10], par[11]
    mu1, mu2, mu3, mu4, mu5 = par[12], par[13], par[14], par[15], par[16]
    x, p, y, v, z = now[0], now[1], now[2], now[3], now[4]
    inf1 = lag1[0] * (b1 * lag1[3] + b2 * lag1[2])
    inf2 = lag2[0] * (b1 * lag2[3] + b2 * lag2[2])
    out[0] = lam - x * (b1 * v + b2 * y) - mu1 * x
    out[1] = rho * e1 * inf1 - (alpha + mu2) * p
    out[2] = (1.0 - rho) * e2 * inf2 + alpha * p - mu3 * y - a * y * z
    out[3] = k * y - mu4 * v
    out[4] = c * lag3[2] * lag3[4] / (h + lag3[4]) - mu5 * z - eta * y * z


def rhs(params: Parameters, s_now, s_tau1, s_tau2, s_tau3) -> StateDerivative:
    """Rates of system (x, p, y, v, z) given the current and lagged states."""
    args = [np.asarray(s, dtype=float) for s in (s_now, s_tau1, s_tau2, s_tau3)]
    for a in args:
        if a.shape != (5,):
            raise ValueError(f"state must have 5 components, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise ValueError(f"non-finite state component in {a}")
    out = np.empty(5)
    rhs_kernel(params.as_array(), params.survival1, params.survival2, *args, out)
    return StateDerivative(*out)


def rhs_jacobians(params: Parameters, state) -> tuple[np.ndarray, ...]:
    """Partial derivatives of the rates with respect to the current state and
    the three lagged states, all evaluated at the constant history ``state``.

    Returns four 5x5 arrays ``(a0, a1, a2, a3)``.
    """
    x, p, y, v, z = (float(s) for s in state)
    P = params
    inf_rate = P.beta1 * v + P.beta2 * y
    a0 = np.zeros((5, 5))
    a0[0] = [-inf_rate - P.mu1, 0.0, -P.beta2 * x, -P.beta1 * x, 0.0]
    a0[1, 1] = -(P.alpha + P.mu2)
    a0[2] = [0.0, P.alpha, -P.mu3 - P.a * z, 0.0, -P.a * y]
    a0[3] = [0.0, 0.0, P.k, -P.mu4, 0.0]
    a0[4] = [0.0, 0.0, -P.eta * z, 0.0, -P.mu5 - P.eta * y]

    infection_row = np.array([inf_rate, 0.0, P.beta2 * x, P.beta1 * x, 0.0])
    a1 = np.zeros((5, 5))
    a1[1] = P.rho * P.survival1 * infection_row
    a2 = np.zeros((5, 5))
    a2[2] = (1.0 - P.rho) * P.survival2 * infection_row
    a3 = np.zeros((5, 5))
    a3[4, 2] = P.c * z / (P.h + z)
    a3[4, 4] = P.c * y * P.h / (P.h + z) ** 2
    return a0, a1, a2, a3


def omega_bounds(params: Parameters) -> OmegaBounds:
    """Ultimate bounds of the invariant region.

    The virion bound uses ``mu4`` as the clearance rate in both of its terms.
    """
    P = params
    lam, rho, alpha = P.lam, P.rho, P.alpha
    s1 = min(P.mu1, P.alpha + P.mu2)
    s2 = min(P.mu1, P.mu3)
    e1 = math.exp(-P.m1 * P.tau1)
    e2 = math.exp(-P.m2 * P.tau2)
    x_max = min(
        lam / s1,
        lam / s2 + alpha * rho * lam * math.exp(P.m2 * P.tau2 - P.m1 * P.tau1)
        / ((1.0 - rho) * s1 * s2),
    )
    p_max = rho * lam / s1 * e1
    y_max = (1.0 - rho) * lam / s2 * e2 + alpha * rho * lam / (s2 * s1) * e1
    v_max = P.k * y_max / P.mu4
    z_max = P.c * y_max / P.mu5
    return OmegaBounds(x_max, p_max, y_max, v_max, z_max)
