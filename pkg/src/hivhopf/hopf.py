"""Hopf normal form at the first crossing of the interior equilibrium
(``tau1 = tau2 = 0``), following the center-manifold reduction for
retarded functional differential equations.

Eigenvectors are built by back-substitution through the rows of the
linearization and then checked against the matrix equation. Nonlinear terms
are expanded about the equilibrium through the symmetric forms ``B2`` and
``B3`` acting on the stacked pair (current deviation, tau3-lagged deviation).
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .charstab import (
    CharStabError,
    CriticalDelay,
    critical_tau0,
    e2_coeffs,
    jacobian_blocks,
    track_root,
)
from .equilibria import equilibria
from .model import Parameters, State

COND_LIMIT = 1e12


class HopfError(RuntimeError):
    pass


@dataclass(frozen=True)
class EigenPair:
    rho: np.ndarray  # (1, rho2..rho5), right eigenvector for i*w0
    rho_star: np.ndarray  # (1, rho2*..rho5*), adjoint direction
    tbar: complex  # normalization constant
    residual: float
    adjoint_residual: float


@dataclass(frozen=True)
class NormalForm:
    g20: complex
    g11: complex
    g02: complex
    g21: complex
    h1: np.ndarray
    h2: np.ndarray
    w20_0: np.ndarray
    w11_0: np.ndarray
    w20_tau: np.ndarray
    w11_tau: np.ndarray
    c1: complex
    xi_prime: complex
    gamma1: float
    gamma2: float
    t_period: float
    cond_d1: float
    cond_d2: float
    mode: str

    @property
    def direction(self) -> str:
        return "supercritical" if self.gamma1 > 0 else "subcritical"

    @property
    def orbit_stability(self) -> str:
        return "stable" if self.gamma2 < 0 else "unstable"

    @property
    def period_trend(self) -> str:
        return "decreasing" if self.t_period < 0 else "increasing"


def _blocks(params: Parameters, e2):
    jac = jacobian_blocks(params, e2)
    return jac.a0 + jac.a1 + jac.a2, jac.a3


def _scale(params: Parameters, e2) -> float:
    a, b = _blocks(params, e2)
    return 1.0 + float(np.abs(a).sum() + np.abs(b).sum())


def eigen_pair(params: Parameters, e2, w0: float, tau0: float) -> EigenPair:
    """Right and adjoint eigenvectors for the root i*w0 at tau3 = tau0,
    normalized so that the bilinear pairing of the two equals one."""
    P = params
    x2, p2, y2, v2, z2 = (float(c) for c in e2)
    iw = 1j * w0
    E = cmath.exp(-iw * tau0)
    hz = P.h + z2
    inf = P.beta1 * v2 + P.beta2 * y2
    d11 = P.mu1 + inf
    am = P.alpha + P.mu2
    scale = _scale(P, e2)

    def safe(den: complex, what: str) -> complex:
        if abs(den) < 1e-12 * scale:
            raise HopfError(f"degenerate eigenvector: vanishing denominator in {what}")
        return den

    rho3 = -(d11 + iw) * (P.mu4 + iw) / safe(
        P.beta2 * x2 * (P.mu4 + iw) + P.k * P.beta1 * x2, "rho3")
    rho4 = P.k * rho3 / safe(P.mu4 + iw, "rho4")
    rho2 = (P.rho * inf / safe(am + iw, "rho2")
            + (P.rho * P.beta2 * x2 * (P.mu4 + iw) + P.k * P.rho * P.beta1 * x2) * rho3
            / ((am + iw) * (P.mu4 + iw)))
    rho5 = -((-P.eta * z2 * hz ** 2 + P.c * z2 * hz * E) * rho3
             / safe(P.c * y2 * P.h * E - hz ** 2 * (P.mu5 + P.eta * y2 + iw), "rho5"))
    rho = np.array([1.0, rho2, rho3, rho4, rho5], dtype=complex)

    Es = cmath.exp(iw * tau0)
    s3 = ((d11 - iw) * (iw - am)
          / safe((1 - P.rho) * inf * (iw - am) - P.alpha * P.rho * inf, "rho3*"))
    s2 = -P.alpha / safe(iw - am, "rho2*") * s3
    s4 = ((P.beta1 * x2 - P.rho * P.beta1 * x2 * s2 - (1 - P.rho) * P.beta1 * x2 * s3)
          / safe(iw - P.mu4, "rho4*"))
    s5 = (P.a * y2 * hz ** 2 * s3
          / safe(P.c * y2 * P.h * Es + (iw - P.mu5 - P.eta * y2) * hz ** 2, "rho5*"))
    rho_star = np.array([1.0, s2, s3, s4, s5], dtype=complex)

    A, B = _blocks(P, e2)
    res = float(np.linalg.norm((A + B * E - iw * np.eye(5)) @ rho))
    res_star = float(np.linalg.norm((A.T + B.T * Es + iw * np.eye(5)) @ rho_star))
    if res > 1e-8 * scale * np.linalg.norm(rho) or res_star > 1e-8 * scale * np.linalg.norm(rho_star):
        raise HopfError(f"eigenvector residuals too large ({res:.3g}, {res_star:.3g}); "
                        "(i w0, tau0) is not a verified crossing")

    bracket = (np.conj(rho_star) @ rho
               + tau0 * E * np.conj(s5) * (P.c * z2 / hz * rho3 + P.c * P.h * y2 / hz ** 2 * rho5))
    tbar = 1.0 / bracket
    return EigenPair(rho=rho, rho_star=rho_star, tbar=complex(tbar),
                     residual=res, adjoint_residual=res_star)


def bilinear_form(psi0: np.ndarray, a: complex, phi0: np.ndarray, b: complex,
                  B: np.ndarray, tau: float) -> complex:
    """Pairing of psi(s) = psi0 e^{a s} (s in [0, tau]) with
    phi(l) = phi0 e^{b l} (l in [-tau, 0]) for the operator whose delayed part
    is ``B`` at lag ``tau``; closed form of the double integral."""
    lam = np.conj(a) + b
    if abs(lam) * tau < 1e-12:
        kernel = tau
    else:
        kernel = (1.0 - cmath.exp(-lam * tau)) / lam
    kernel *= cmath.exp(np.conj(a) * tau)
    return complex(np.conj(psi0) @ phi0 + kernel * (np.conj(psi0) @ B @ phi0))


def adjoint_vector(eig: EigenPair) -> np.ndarray:
    """rho*(0) including the normalization, so that conj(rho*(0)) = tbar * conj(rho_star)."""
    return np.conj(eig.tbar) * eig.rho_star


# --- nonlinear terms ------------------------------------------------------


def _sat_coeffs(params: Parameters, e2, mode: str):
    """Coefficients of the saturated CTL term in the deviations (U3, U5) of the
    lagged state: quadratic (U3U5, U5^2) and cubic (U3U5^2, U5^3)."""
    P = params
    y, z = float(e2[2]), float(e2[4])
    hz = P.h + z
    if mode == "taylor":
        return (P.c * P.h / hz ** 2, -P.c * y * P.h / hz ** 3,
                -P.c * P.h / hz ** 3, P.c * y * P.h / hz ** 4)
    if mode == "printed":
        return (P.c / hz, P.c * y * z / hz ** 3, 0.0, 0.0)
    raise ValueError(f"unknown nonlinearity mode {mode!r}")


def _b2(params: Parameters, sat, u: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Symmetric bilinear form of the nonlinearity; u, w are stacked 10-vectors
    (current deviation, lagged deviation)."""
    P = params
    q35, q55 = sat[0], sat[1]
    inf = (u[0] * (P.beta1 * w[3] + P.beta2 * w[2])
           + w[0] * (P.beta1 * u[3] + P.beta2 * u[2]))
    yz = u[2] * w[4] + w[2] * u[4]
    lag_yz = u[7] * w[9] + w[7] * u[9]
    return np.array([
        -inf,
        P.rho * inf,
        (1 - P.rho) * inf - P.a * yz,
        0.0,
        q35 * lag_yz + 2.0 * q55 * u[9] * w[9] - P.eta * yz,
    ], dtype=complex)


def _b3(params: Parameters, sat, u, w, r) -> np.ndarray:
    c355, c555 = sat[2], sat[3]
    lag = 2.0 * c355 * (u[7] * w[9] * r[9] + w[7] * u[9] * r[9] + r[7] * u[9] * w[9])
    lag += 6.0 * c555 * u[9] * w[9] * r[9]
    return np.array([0, 0, 0, 0, lag], dtype=complex)


def printed_d_matrices(params: Parameters, e2, w0: float, tau0: float):
    """The two correction-vector matrices assembled entry by entry."""
    P = params
    x2, p2, y2, v2, z2 = (float(c) for c in e2)
    hz = P.h + z2
    inf = P.beta1 * v2 + P.beta2 * y2
    E2 = cmath.exp(-2j * w0 * tau0)
    D11, D22 = P.mu1 + inf, P.alpha + P.mu2
    D33 = -((1 - P.rho) * P.beta2 * x2 - P.mu3 - P.a * z2)
    D44 = P.mu4
    D55 = P.mu5 + P.eta * y2 - P.c * y2 * P.h * E2 / hz ** 2

    def build(diag, e_row5):
        m = np.zeros((5, 5), dtype=complex)
        m[0] = [diag[0], 0, P.beta2 * x2, P.beta1 * x2, 0]
        m[1] = [-P.rho * inf, diag[1], -P.rho * P.beta2 * x2, -P.rho * P.beta1 * x2, 0]
        m[2] = [-(1 - P.rho) * inf, -P.alpha, diag[2], -(1 - P.rho) * P.beta1 * x2, P.a * y2]
        m[3] = [0, 0, -P.k, diag[3], 0]
        m[4] = [0, 0, P.eta * z2 - P.c * z2 * e_row5 / hz, 0, diag[4]]
        return m

    iw2 = 2j * w0
    d1 = build([iw2 + D11, iw2 + D22, iw2 + D33, iw2 + D44, iw2 + D55], E2)
    d2 = build([D11, D22, D33, D44, P.mu5 + P.eta * y2 - P.c * y2 * P.h / hz ** 2], 1.0)
    return d1, d2


def xi_prime(params: Parameters, e2, w0: float, tau0: float) -> complex:
    """d(root)/d tau3 at the crossing, from the inverse-derivative expression."""
    co = e2_coeffs(params, e2)
    p = co.p_poly()
    q = co.q_poly()
    xi = 1j * w0
    P_d = np.polyval(np.polyder(p), xi)
    Q = np.polyval(q, xi)
    Q_d = np.polyval(np.polyder(q), xi)
    inv = P_d * cmath.exp(xi * tau0) / (xi * Q) + Q_d / (xi * Q) - tau0 / xi
    return 1.0 / inv


def xi_prime_numeric_oracle(params: Parameters, e2, w0: float, tau0: float,
                            delta: Optional[float] = None) -> complex:
    """Central difference of the root tracked to tau0 +- delta."""
    if delta is None:
        delta = 1e-3 * max(1.0, tau0) / tau0
    jac = jacobian_blocks(params, e2)
    try:
        up = track_root(jac, (0.0, 0.0, tau0), 1j * w0, tau0 + delta)
        dn = track_root(jac, (0.0, 0.0, tau0), 1j * w0, tau0 - delta)
    except CharStabError as exc:
        raise HopfError(f"root tracking diverged: {exc}") from exc
    return (up - dn) / (2 * delta)


def normal_form(params: Parameters, e2, eigen: EigenPair, w0: float, tau0: float,
                mode: str = "taylor") -> NormalForm:
    """Cubic normal-form coefficient C1(0) and the verdict quantities.

    ``mode="taylor"`` expands the saturated CTL term exactly to third order;
    ``mode="printed"`` uses the quadratic coefficients as printed and no cubic
    part, for comparison.
    """
    P = params
    A, B = _blocks(P, e2)
    sat = _sat_coeffs(P, e2, mode)
    q = eigen.rho
    qb = np.conj(q)
    E = cmath.exp(-1j * w0 * tau0)
    qs = np.concatenate([q, q * E])
    qbs = np.conj(qs)
    left = eigen.tbar * np.conj(eigen.rho_star)  # conj(rho*(0))

    f20 = _b2(P, sat, qs, qs)
    f11 = _b2(P, sat, qs, qbs)
    f02 = _b2(P, sat, qbs, qbs)
    g20 = complex(left @ f20)
    g11 = complex(left @ f11)
    g02 = complex(left @ f02)

    d1 = 2j * w0 * np.eye(5) - A - B * cmath.exp(-2j * w0 * tau0)
    d2 = -(A + B)
    pd1, pd2 = printed_d_matrices(P, e2, w0, tau0)
    guard = 1e-10 * _scale(P, e2)
    if np.max(np.abs(pd1 - d1)) > guard or np.max(np.abs(pd2 - d2)) > guard:
        raise HopfError("printed D1/D2 disagree with the linearization")
    cond1, cond2 = float(np.linalg.cond(d1)), float(np.linalg.cond(d2))
    if cond1 > COND_LIMIT or cond2 > COND_LIMIT:
        raise HopfError(f"singular correction system (cond {cond1:.3g}, {cond2:.3g})")
    h1 = np.linalg.solve(d1, f20)
    h2 = np.linalg.solve(d2, f11)

    def w20(l):
        return (1j * g20 * q / w0 * cmath.exp(1j * w0 * l)
                + 1j * np.conj(g02) * qb / (3 * w0) * cmath.exp(-1j * w0 * l)
                + h1 * cmath.exp(2j * w0 * l))

    def w11(l):
        return (-1j * g11 * q / w0 * cmath.exp(1j * w0 * l)
                + 1j * np.conj(g11) * qb / w0 * cmath.exp(-1j * w0 * l) + h2)

    w20s = np.concatenate([w20(0.0), w20(-tau0)])
    w11s = np.concatenate([w11(0.0), w11(-tau0)])
    f21 = (_b2(P, sat, w20s, qbs) + 2.0 * _b2(P, sat, w11s, qs) + _b3(P, sat, qs, qs, qbs))
    g21 = complex(left @ f21)

    c1 = (1j / (2 * w0)) * (g20 * g11 - 2 * abs(g11) ** 2 - abs(g02) ** 2 / 3) + g21 / 2
    xp = xi_prime(P, e2, w0, tau0)
    if abs(xp.real) < 1e-12:
        raise HopfError("degenerate transversality: Re xi'(tau0) = 0")
    gamma1 = -c1.real / xp.real
    gamma2 = 2 * c1.real
    t_period = -(c1.imag + gamma1 * xp.imag) / w0
    return NormalForm(
        g20=g20, g11=g11, g02=g02, g21=g21, h1=h1, h2=h2,
        w20_0=w20s[:5], w11_0=w11s[:5], w20_tau=w20s[5:], w11_tau=w11s[5:],
        c1=complex(c1), xi_prime=complex(xp), gamma1=float(gamma1),
        gamma2=float(gamma2), t_period=float(t_period),
        cond_d1=cond1, cond_d2=cond2, mode=mode)


def predicted_amplitude(nf: NormalForm, eigen: EigenPair, tau3: float, tau0: float) -> Optional[float]:
    """Leading-order peak-to-peak amplitude of y on the bifurcating orbit at
    ``tau3``; None when no orbit exists on that side."""
    eps = tau3 - tau0
    mod2 = -nf.xi_prime.real * eps / nf.c1.real
    if mod2 <= 0:
        return None
    return 4.0 * math.sqrt(mod2) * abs(eigen.rho[2])


@dataclass
class HopfReport:
    critical: CriticalDelay
    eigen: EigenPair
    normal_form: NormalForm
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        nf = self.normal_form
        cx = lambda z: [float(z.real), float(z.imag)]  # noqa: E731
        return {
            "tau0": self.critical.tau0,
            "w0": self.critical.w0,
            "h0": self.critical.h0,
            "transversality_sign": self.critical.transversality_sign,
            "rho": [cx(z) for z in self.eigen.rho],
            "rho_star": [cx(z) for z in self.eigen.rho_star],
            "tbar": cx(self.eigen.tbar),
            "g20": cx(nf.g20), "g11": cx(nf.g11), "g02": cx(nf.g02), "g21": cx(nf.g21),
            "c1": cx(nf.c1),
            "xi_prime": cx(nf.xi_prime),
            "gamma1": nf.gamma1,
            "gamma2": nf.gamma2,
            "t_period": nf.t_period,
            "direction": nf.direction,
            "orbit_stability": nf.orbit_stability,
            "period_trend": nf.period_trend,
            "cond_d1": nf.cond_d1,
            "cond_d2": nf.cond_d2,
            "nonlinearity": nf.mode,
            "notes": list(self.notes),
        }


def hopf_analysis(params: Parameters, mode: str = "taylor") -> Optional[HopfReport]:
    """Critical delay plus normal form; None when no crossing exists."""
    e2 = equilibria(params).e2
    if e2 is None:
        raise HopfError("interior equilibrium absent (R1 <= 1)")
    crit = critical_tau0(params, e2)
    if crit is None:
        return None
    eig = eigen_pair(params, e2, crit.w0, crit.tau0)
    nf = normal_form(params, e2, eig, crit.w0, crit.tau0, mode=mode)
    return HopfReport(critical=crit, eigen=eig, normal_form=nf)
