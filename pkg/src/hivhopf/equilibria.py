"""Reproduction numbers and steady states."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .model import Parameters, State, rhs_jacobians

NEWTON_TOL = 1e-12
NEWTON_MAXITER = 50


class EquilibriumError(RuntimeError):
    """The closed-form steady state is inconsistent with the parameters."""


@dataclass(frozen=True)
class ReproductionNumbers:
    gamma: float
    r0: float
    r01: float
    r02: float
    r1: Optional[float]
    x0: float


@dataclass(frozen=True)
class EquilibriumSet:
    e0: State
    e1: Optional[State]
    e2: Optional[State]
    quadratic: tuple[float, float, float]


def gamma(params: Parameters) -> float:
    """Fraction of new infections that survive the latent or eclipse delay and
    become productive (weighted by the activation probability)."""
    P = params
    return (P.alpha * P.rho / (P.alpha + P.mu2) * math.exp(-P.m1 * P.tau1)
            + (1.0 - P.rho) * math.exp(-P.m2 * P.tau2))


def _infection_scale(P: Parameters) -> float:
    return P.beta1 * P.k + P.beta2 * P.mu4


def _y1(P: Parameters, r0: float) -> float:
    return P.mu1 * P.mu4 / _infection_scale(P) * (r0 - 1.0)


def r0_closed_form(params: Parameters) -> ReproductionNumbers:
    P = params
    g = gamma(P)
    x0 = P.lam / P.mu1
    r01 = P.k * P.beta1 * x0 * g / (P.mu3 * P.mu4)
    r02 = P.beta2 * x0 * g / P.mu3
    r0 = r01 + r02
    r1 = None
    if r0 > 1.0:
        y1 = _y1(P, r0)
        r1 = P.c * y1 / (P.h * (P.mu5 + P.eta * y1))
    return ReproductionNumbers(gamma=g, r0=r0, r01=r01, r02=r02, r1=r1, x0=x0)


def next_generation_matrices(params: Parameters) -> tuple[np.ndarray, np.ndarray]:
    """New-infection matrix F and transition matrix V over (p, y, v) at E0."""
    P = params
    x0 = P.lam / P.mu1
    e1, e2 = P.survival1, P.survival2
    F = np.array([
        [0.0, P.rho * P.beta2 * e1 * x0, P.rho * P.beta1 * e1 * x0],
        [0.0, (1 - P.rho) * P.beta2 * e2 * x0, (1 - P.rho) * P.beta1 * e2 * x0],
        [0.0, 0.0, 0.0],
    ])
    V = np.array([
        [P.alpha + P.mu2, 0.0, 0.0],
        [-P.alpha, P.mu3, 0.0],
        [0.0, -P.k, P.mu4],
    ])
    return F, V


def r0_spectral_oracle(params: Parameters) -> float:
    """Spectral radius of F V^-1, computed numerically."""
    F, V = next_generation_matrices(params)
    if abs(np.linalg.det(V)) == 0.0:
        raise np.linalg.LinAlgError("transition matrix V is singular")
    K = F @ np.linalg.inv(V)
    return float(np.max(np.abs(np.linalg.eigvals(K))))


def residual(params: Parameters, state) -> np.ndarray:
    """Left-hand sides of the steady-state equations at ``state``."""
    P = params
    x, p, y, v, z = (float(s) for s in state)
    inf = x * (P.beta1 * v + P.beta2 * y)
    return np.array([
        P.lam - inf - P.mu1 * x,
        P.rho * P.survival1 * inf - (P.alpha + P.mu2) * p,
        (1 - P.rho) * P.survival2 * inf + P.alpha * p - P.mu3 * y - P.a * y * z,
        P.k * y - P.mu4 * v,
        P.c * y * z / (P.h + z) - P.mu5 * z - P.eta * y * z,
    ])


def steady_jacobian(params: Parameters, state) -> np.ndarray:
    return sum(rhs_jacobians(params, state))


def newton_refine(params: Parameters, state, tol: float = NEWTON_TOL,
                  maxiter: int = NEWTON_MAXITER) -> np.ndarray:
    """Polish a steady state by Newton iteration on the residual.

    Stops when the correction is below ``tol`` relative to the state norm.
    """
    s = np.asarray(state, dtype=float).copy()
    for _ in range(maxiter):
        r = residual(params, s)
        step = np.linalg.solve(steady_jacobian(params, s), r)
        s -= step
        if np.max(np.abs(step)) <= tol * (1.0 + np.max(np.abs(s))):
            break
    return s


def residual_ok(params: Parameters, state, rel: float = 1e-9) -> bool:
    s = np.asarray(state, dtype=float)
    return float(np.max(np.abs(residual(params, s)))) < rel * (1.0 + np.max(np.abs(s)))


def e2_quadratic(params: Parameters) -> tuple[float, float, float]:
    """Coefficients (b1, b2, b3) of the quadratic whose positive root is y2."""
    P = params
    S = _infection_scale(P)
    g = gamma(P)
    a, c, h, eta, lam = P.a, P.c, P.h, P.eta, P.lam
    mu1, mu3, mu4, mu5 = P.mu1, P.mu3, P.mu4, P.mu5
    b1 = a * c * S + mu3 * eta * S - a * h * eta * S
    b2 = (a * c * mu1 * mu4 + mu3 * mu5 * S + mu1 * mu3 * mu4 * eta - g * eta * lam * S
          - a * h * mu5 * S - a * h * mu1 * mu4 * eta)
    b3 = -g * mu5 * lam * S + mu1 * mu3 * mu4 * mu5 - a * h * mu1 * mu4 * mu5
    return b1, b2, b3


def _closed_form_e2(P: Parameters, b1: float, b2: float, b3: float, denom: float):
    disc = b2 * b2 - 4.0 * b1 * b3
    if disc < 0:
        return None
    y2 = (-b2 + math.sqrt(disc)) / denom
    z2 = P.c * y2 / (P.mu5 + P.eta * y2) - P.h
    v2 = P.k * y2 / P.mu4
    x2 = P.lam / (P.mu1 + P.beta1 * v2 + P.beta2 * y2)
    S_y = (P.beta1 * P.k + P.beta2 * P.mu4) * y2
    p2 = (P.rho * P.survival1 / (P.alpha + P.mu2)
          * (P.lam * S_y / (P.mu1 * P.mu4 + S_y)))
    return np.array([x2, p2, y2, v2, z2])


def equilibria(params: Parameters) -> EquilibriumSet:
    """E0 always; E1 when R0 > 1; E2 when R1 > 1.

    Raises EquilibriumError when R1 > 1 but the quadratic gives no admissible
    interior state, including the diagnostic of whether the alternative
    denominator ``b1`` (instead of ``2*b1``) would have satisfied the
    steady-state equations.
    """
    P = params
    rn = r0_closed_form(P)
    e0 = State(rn.x0, 0.0, 0.0, 0.0, 0.0)
    quad = e2_quadratic(P)
    e1 = e2 = None
    if rn.r0 > 1.0:
        y1 = _y1(P, rn.r0)
        e1_arr = np.array([
            rn.x0 / rn.r0,
            P.rho * P.lam * P.survival1 / ((P.alpha + P.mu2) * rn.r0) * (rn.r0 - 1.0),
            y1,
            P.k / P.mu4 * y1,
            0.0,
        ])
        e1 = State(*map(float, newton_refine(P, e1_arr)))
    if rn.r1 is not None and rn.r1 > 1.0:
        b1, b2, b3 = quad
        cand = _closed_form_e2(P, b1, b2, b3, 2.0 * b1)
        if cand is None or cand[2] <= 0 or cand[4] <= 0:
            raise EquilibriumError(_e2_diagnostic(P, quad, cand))
        refined = newton_refine(P, cand)
        if not residual_ok(P, refined) or np.max(np.abs(refined - cand)) > 1e-6 * (
                1 + np.max(np.abs(cand))):
            raise EquilibriumError(_e2_diagnostic(P, quad, cand))
        e2 = State(*map(float, refined))
    return EquilibriumSet(e0=e0, e1=e1, e2=e2, quadratic=quad)


def _e2_diagnostic(P, quad, cand) -> str:
    b1, b2, b3 = quad
    alt = _closed_form_e2(P, b1, b2, b3, b1)
    msg = f"R1 > 1 but closed-form E2 is inadmissible (b={quad}, candidate={cand})"
    if alt is not None and residual_ok(P, alt):
        msg += "; the variant with denominator b1 satisfies the steady-state equations"
    return msg


def f1_curve(params: Parameters, y: float) -> float:
    """CTL level balancing the z equation at infected-cell level y."""
    return params.c * y / (params.mu5 + params.eta * y) - params.h


def f2_curve(params: Parameters, z: float) -> float:
    """Infected-cell level balancing the infection equations at CTL level z."""
    P = params
    S = _infection_scale(P)
    q = P.mu3 + P.a * z
    return (gamma(P) * P.lam * S - P.mu1 * P.mu4 * q) / (q * S)
