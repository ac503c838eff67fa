"""Linear stability of the delayed system at an equilibrium.

The generic path works for any delays: the characteristic function is
``det(s I - a0 - a1 e^{-s tau1} - a2 e^{-s tau2} - a3 e^{-s tau3})``.
For the interior equilibrium with ``tau1 = tau2 = 0`` the quasi-polynomial
``P(s) + Q(s) e^{-s tau3}`` is also available in closed form, together with the
quintic ``F(h)`` whose positive roots give the imaginary-axis crossings.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import brentq

from .equilibria import equilibria, r0_closed_form
from .model import Parameters, State, rhs_jacobians


class CharStabError(RuntimeError):
    pass


@dataclass(frozen=True)
class DelayJacobian:
    a0: np.ndarray
    a1: np.ndarray
    a2: np.ndarray
    a3: np.ndarray

    @property
    def blocks(self) -> tuple[np.ndarray, ...]:
        return (self.a0, self.a1, self.a2, self.a3)

    def norm_bound(self) -> float:
        """Any root with Re s >= 0 satisfies |s| <= this bound."""
        return float(sum(np.linalg.norm(a, 2) for a in self.blocks))


def jacobian_blocks(params: Parameters, equilibrium) -> DelayJacobian:
    return DelayJacobian(*rhs_jacobians(params, equilibrium))


def _matrices(jac: DelayJacobian, delays: Sequence[float], s: np.ndarray) -> np.ndarray:
    s = np.asarray(s, dtype=complex)
    eye = np.eye(5)
    m = s[..., None, None] * eye - jac.a0
    for a, tau in zip(jac.blocks[1:], delays):
        m = m - a * np.exp(-s * tau)[..., None, None]
    return m


def char_value(jac: DelayJacobian, delays: Sequence[float], s):
    """Characteristic determinant at ``s`` (scalar or array) via LU."""
    out = np.linalg.det(_matrices(jac, delays, s))
    return complex(out) if np.ndim(s) == 0 else out


def _adjugate(m: np.ndarray) -> np.ndarray:
    """adj(M) from the SVD; well defined when M is singular, as it is at a root."""
    u, sv, vh = np.linalg.svd(m)
    others = np.array([np.prod(np.delete(sv, j)) for j in range(len(sv))])
    phase = np.linalg.det(u) * np.linalg.det(vh)
    return phase * (vh.conj().T * others) @ u.conj().T


def char_derivatives(jac: DelayJacobian, delays: Sequence[float], s: complex):
    """Value D, dD/ds and dD/dtau3 at ``s`` by Jacobi's formula,
    dD = tr(adj(M) dM)."""
    m = _matrices(jac, delays, s)
    d = np.linalg.det(m)
    ms = np.eye(5, dtype=complex)
    for a, tau in zip(jac.blocks[1:], delays):
        ms = ms + tau * a * np.exp(-s * tau)
    mt = s * jac.a3 * np.exp(-s * delays[2])
    adj = _adjugate(m)
    return complex(d), complex(np.trace(adj @ ms)), complex(np.trace(adj @ mt))


def _char_scale(s) -> np.ndarray:
    return (1.0 + np.abs(s)) ** 5


def count_unstable_roots(jac: DelayJacobian, delays: Sequence[float],
                         sigma_max: Optional[float] = None,
                         omega_max: Optional[float] = None,
                         n_boundary: int = 1024, max_samples: int = 2 ** 16) -> int:
    """Number of characteristic roots inside [1e-6, sigma_max] x [-omega_max, omega_max]
    by the argument principle.

    Defaults: sigma_max = 5 * largest diagonal rate, omega_max = 50, each raised
    to the a-priori root bound when that is larger, so the default rectangle
    holds every root with Re s >= 1e-6.
    """
    eps = 1e-6
    bound = 1.05 * jac.norm_bound() + 1.0
    if sigma_max is None:
        sigma_max = max(5.0 * float(np.max(np.abs(np.diag(jac.a0)))), bound)
    if omega_max is None:
        omega_max = max(50.0, bound)
    corners = np.array([eps - 1j * omega_max, sigma_max - 1j * omega_max,
                        sigma_max + 1j * omega_max, eps + 1j * omega_max])

    def contour(u):
        k = np.minimum(np.floor(u).astype(int), 3)
        f = u - k
        return corners[k] + f * (corners[(k + 1) % 4] - corners[k])

    # Log-spaced samples near the axes resolve roots clustered at the origin.
    lin = np.linspace(0.0, 1.0, n_boundary + 1)
    geo_s = (np.geomspace(eps, sigma_max, n_boundary) - eps) / (sigma_max - eps)
    geo_w = np.geomspace(1e-9 * omega_max, omega_max, n_boundary) / omega_max
    half = np.concatenate([0.5 - 0.5 * geo_w, 0.5 + 0.5 * geo_w, [0.5]])
    u = np.unique(np.concatenate([
        np.concatenate([lin, geo_s]),
        1.0 + np.concatenate([lin, half]),
        3.0 - np.concatenate([lin, geo_s]),
        3.0 + np.concatenate([lin, half]),
    ]))
    vals = char_value(jac, delays, contour(u))
    while True:
        small = np.abs(vals) < 1e-12 * _char_scale(contour(u))
        if np.any(small):
            where = contour(u)[np.argmax(small)]
            raise CharStabError(f"characteristic root suspected on the contour near {where}")
        dphi = np.angle(vals[1:] / vals[:-1])
        bad = np.abs(dphi) > math.pi / 2
        if not np.any(bad):
            break
        if len(u) + int(bad.sum()) > max_samples:
            raise CharStabError("argument refinement cap reached; winding unresolved")
        mids = 0.5 * (u[:-1][bad] + u[1:][bad])
        mvals = char_value(jac, delays, contour(mids))
        order = np.argsort(np.concatenate([u, mids]), kind="stable")
        u = np.concatenate([u, mids])[order]
        vals = np.concatenate([vals, mvals])[order]
    winding = dphi.sum() / (2 * math.pi)
    n = int(round(winding))
    if abs(winding - n) > 1e-3:
        raise CharStabError(f"non-integer winding number {winding}")
    return n


def newton_root(jac: DelayJacobian, delays: Sequence[float], s0: complex,
                tol: float = 1e-13, maxiter: int = 60) -> complex:
    s = complex(s0)
    for _ in range(maxiter):
        d, ds, _ = char_derivatives(jac, delays, s)
        if ds == 0:
            break
        step = d / ds
        s -= step
        if abs(step) <= tol * (1.0 + abs(s)):
            return s
    raise CharStabError(f"Newton root tracking did not converge from {s0}")


def track_root(jac: DelayJacobian, delays: Sequence[float], s0: complex,
               tau3_target: float, n_sub: int = 8) -> complex:
    """Continue a root from ``delays`` to ``tau3 = tau3_target`` in small steps,
    using the first-order predictor ds/dtau3 = -D_tau / D_s."""
    tau1, tau2, tau3 = delays
    s = newton_root(jac, delays, s0)
    taus = np.linspace(tau3, tau3_target, n_sub + 1)
    for a, b in zip(taus[:-1], taus[1:]):
        _, ds, dt = char_derivatives(jac, (tau1, tau2, a), s)
        s = newton_root(jac, (tau1, tau2, b), s - dt / ds * (b - a))
    return s


def root_velocity(jac: DelayJacobian, delays: Sequence[float], s: complex) -> complex:
    """d s / d tau3 along the root branch through ``s``."""
    _, ds, dt = char_derivatives(jac, delays, s)
    return -dt / ds


# ---------------------------------------------------------------------------
# Closed forms at the interior equilibrium with tau1 = tau2 = 0.


@dataclass(frozen=True)
class CharCoeffsE2:
    i: tuple  # I1..I5
    t: tuple  # T1..T5
    a_quintic: tuple  # A1..A5

    @property
    def f_poly(self) -> np.ndarray:
        """Descending coefficients of F(h)."""
        return np.array([1.0, *self.a_quintic])

    def p_poly(self) -> np.ndarray:
        return np.array([1.0, *self.i])

    def q_poly(self) -> np.ndarray:
        return np.array([0.0, *self.t])


def quintic_coeffs(i: Sequence[float], t: Sequence[float]) -> tuple:
    """A1..A5 from squaring and adding the real and imaginary parts of
    P(iw) + Q(iw) e^{-iw tau} = 0 and substituting h = w^2."""
    I1, I2, I3, I4, I5 = i
    T1, T2, T3, T4, T5 = t
    return (
        I1 ** 2 - 2 * I2 - T1 ** 2,
        I2 ** 2 + 2 * I4 - 2 * I1 * I3 - T2 ** 2 + 2 * T1 * T3,
        I3 ** 2 + 2 * I1 * I5 - 2 * I2 * I4 - T3 ** 2 - 2 * T1 * T5 + 2 * T2 * T4,
        I4 ** 2 - 2 * I3 * I5 - T4 ** 2 + 2 * T3 * T5,
        I5 ** 2 - T5 ** 2,
    )


def _require_instant_infection(params: Parameters) -> None:
    if params.tau1 != 0 or params.tau2 != 0:
        raise CharStabError("closed-form analysis requires tau1 = tau2 = 0")


def _interior(params: Parameters, e2=None) -> State:
    if e2 is not None:
        return State(*map(float, e2))
    eq = equilibria(params).e2
    if eq is None:
        raise CharStabError("interior equilibrium absent (R1 <= 1)")
    return eq


def e2_coeffs(params: Parameters, e2=None) -> CharCoeffsE2:
    """I1..I5 and T1..T5 in their closed forms at the interior equilibrium."""
    _require_instant_infection(params)
    P = params
    x2, p2, y2, v2, z2 = _interior(P, e2)
    b1, b2, rho, al, k, a = P.beta1, P.beta2, P.rho, P.alpha, P.k, P.a
    mu1, mu2, mu3, mu4, mu5 = P.mu1, P.mu2, P.mu3, P.mu4, P.mu5
    c, h, eta = P.c, P.h, P.eta

    d1 = b1 * v2 + b2 * y2 + mu1  # uninfected-cell loss
    am = al + mu2
    q3 = mu3 + a * z2
    q5 = mu5 + eta * y2
    kx = k * b1 * x2
    bx = b2 * x2
    r = 1.0 - rho
    ayez = a * y2 * eta * z2
    sat = c * h * y2 / (h + z2) ** 2
    kill = a * c * y2 * z2 / (h + z2)

    I1 = d1 + am + mu4 + q3 + q5 + rho * bx - bx
    I2 = (d1 * (am + mu4 + q3 + q5) + am * (mu4 + q3 + q5) + mu4 * (q3 + q5) + q3 * q5
          - ayez - al * rho * bx - r * kx - r * bx * (mu1 + am + q5 + mu4))
    I3 = (d1 * am * (mu4 + q3 + q5) + mu4 * am * (q3 + q5) + d1 * q3 * q5
          + mu4 * d1 * (q3 + q5) + am * q3 * q5 - ayez * (d1 + am + mu4) - al * rho * kx
          + mu4 * q3 * q5 - al * rho * bx * (mu1 + q5 + mu4) - r * kx * (mu1 + am + q5)
          - r * bx * (mu1 * (am + q5 + mu4) + am * (q5 + mu4) + q5 * mu4))
    I4 = (mu4 * d1 * am * (q3 + q5) + mu4 * am * q3 * q5 + d1 * am * q3 * q5
          + mu4 * d1 * q3 * q5 - ayez * (d1 * (am + mu4) + mu4 * am)
          - al * rho * kx * (mu1 + q5)
          - r * bx * (mu1 * am * (q5 + mu4) + mu1 * mu4 * q5 + mu4 * am * q5)
          - r * kx * (mu1 * (am + q5) + am * q5)
          - al * rho * bx * (mu1 * (q5 + mu4) + mu4 * q5))
    I5 = (mu4 * d1 * am * q3 * q5 - ayez * mu4 * d1 * am - al * rho * bx * mu1 * mu4 * q5
          - al * rho * kx * mu1 * q5 - r * bx * mu1 * mu4 * am * q5 - r * kx * mu1 * am * q5)

    T1 = -sat
    T2 = kill + sat * (r * bx - (d1 + am + mu4 + q3))
    T3 = (kill * (d1 + am + mu4) + sat * (al * rho * bx + r * kx)
          - sat * (d1 * (am + mu4 + q3) + am * (mu4 + q3))
          + sat * (r * bx * (mu1 + am + mu4) - mu4 * q3))
    T4 = (kill * (d1 * (am + mu4) + am * mu4) + sat * r * kx * (mu1 + am)
          + sat * (al * rho * bx * (mu1 + mu4) + al * rho * kx
                   + r * bx * (mu1 * al + mu1 * mu2 + mu1 * mu4 + al * mu4 + mu2 * mu4))
          - sat * (d1 * am * (mu3 + mu4 + a * z2) + mu4 * d1 * q3)
          - sat * mu4 * am * q3)
    T5 = (kill * mu4 * d1 * am + sat * r * am * (bx * mu1 * mu4 + kx * mu1)
          + sat * (al * rho * mu1 * x2 * (b2 * mu4 + k * b1) - mu4 * d1 * am * q3))
    i = (I1, I2, I3, I4, I5)
    t = (T1, T2, T3, T4, T5)
    return CharCoeffsE2(i=i, t=t, a_quintic=quintic_coeffs(i, t))


def char_poly_e2(coeffs: CharCoeffsE2, s, tau3: float):
    """Closed-form quasi-polynomial P(s) + Q(s) e^{-s tau3}."""
    s = np.asarray(s, dtype=complex)
    out = np.polyval(coeffs.p_poly(), s) + np.polyval(coeffs.q_poly(), s) * np.exp(-s * tau3)
    return complex(out) if out.ndim == 0 else out


def f_identity_sides(coeffs: CharCoeffsE2, w: float) -> tuple[float, float]:
    """(|P(iw)|^2 - |Q(iw)|^2 written in real parts, F(w^2))."""
    I1, I2, I3, I4, I5 = coeffs.i
    T1, T2, T3, T4, T5 = coeffs.t
    lhs = ((-I1 * w ** 4 + I3 * w ** 2 - I5) ** 2 + (w ** 5 - I2 * w ** 3 + I4 * w) ** 2
           - (T1 * w ** 4 - T3 * w ** 2 + T5) ** 2 - (-T2 * w ** 3 + T4 * w) ** 2)
    return lhs, float(np.polyval(coeffs.f_poly, w * w))


def g2_value(params: Parameters, e2, s: complex) -> complex:
    """Characteristic function at the interior equilibrium when tau3 = 0, in
    the factored form (any tau1, tau2)."""
    P = params
    x2, p2, y2, v2, z2 = (float(c) for c in e2)
    sat = P.c * y2 * P.h / (P.h + z2) ** 2
    d1 = s + P.beta1 * v2 + P.beta2 * y2 + P.mu1
    am = s + P.alpha + P.mu2
    zz = s - sat + P.mu5 + P.eta * y2
    inf = P.k * P.beta1 * x2 + (s + P.mu4) * P.beta2 * x2
    return (d1 * am * (s + P.mu4) * (s + P.mu3 + P.a * z2) * zz
            + d1 * am * (s + P.mu4) * P.a * y2 * (P.c * z2 / (P.h + z2) - P.eta * z2)
            - P.alpha * P.rho * np.exp(-(P.m1 + s) * P.tau1) * (s + P.mu1) * zz * inf
            - (1 - P.rho) * np.exp(-(P.m2 + s) * P.tau2) * (s + P.mu1) * am * zz * inf)


@dataclass
class HypothesisReport:
    ok: bool
    items: dict = field(default_factory=dict)


def check_hypothesis_H(coeffs: CharCoeffsE2) -> HypothesisReport:
    """Evaluate the Routh-Hurwitz-type inequalities on the sums I_j + T_j."""
    c1, c2, c3, c4, c5 = (i + t for i, t in zip(coeffs.i, coeffs.t))
    first = c1 * c2 - c3
    items = {
        "(I1+T1)(I2+T2)-(I3+T3) > 0": (first, first > 0),
        "I1+T1 > 0": (c1, c1 > 0),
        "I2+T2 > 0": (c2, c2 > 0),
        "I3+T3 > 0": (c3, c3 > 0),
        "I4+T4 > 0": (c4, c4 > 0),
        "I5+T5 > 0": (c5, c5 > 0),
    }
    last = first * c3 - c1 ** 2 * c4 + c1 * c5
    items["third Hurwitz condition > 0"] = (last, last > 0)
    return HypothesisReport(ok=all(ok for _, ok in items.values()), items=items)


def positive_real_roots(poly_coeffs: Sequence[float]) -> list[float]:
    """Positive real roots of a polynomial (descending coefficients)."""
    p = np.asarray(poly_coeffs, dtype=float)
    if p[0] == 0:
        raise ValueError("leading coefficient must be nonzero")
    dp = np.polyder(p)
    scale = float(np.sum(np.abs(p)))
    found: list[float] = []
    for r in np.roots(p):
        if abs(r.imag) >= 1e-8 * (1 + abs(r.real)) or r.real <= 1e-10:
            continue
        x = float(r.real)
        for _ in range(50):
            fx = np.polyval(p, x)
            mag = float(np.sum(np.abs(p) * np.abs(x) ** np.arange(len(p) - 1, -1, -1)))
            if abs(fx) < 1e-12 * max(mag, 1e-300 * scale):
                break
            d = np.polyval(dp, x)
            if d == 0:
                break
            x -= fx / d
        if x > 1e-10 and not any(abs(x - y) <= 1e-8 * abs(y) for y in found):
            found.append(x)
    return sorted(found)


def crossing_angle(coeffs: CharCoeffsE2, w: float) -> float:
    """Angle theta in [0, 2 pi) with (cos, sin)(theta) solving the crossing
    equations at frequency w; raises when the pair is off the unit circle."""
    I1, I2, I3, I4, I5 = coeffs.i
    T1, T2, T3, T4, T5 = coeffs.t
    a = T1 * w ** 4 - T3 * w ** 2 + T5
    b = -T2 * w ** 3 + T4 * w
    r1 = -I1 * w ** 4 + I3 * w ** 2 - I5
    r2 = w ** 5 - I2 * w ** 3 + I4 * w
    den = a * a + b * b
    if den == 0:
        raise CharStabError("delayed part vanishes at this frequency")
    cos = (a * r1 - b * r2) / den
    sin = (b * r1 + a * r2) / den
    if abs(cos * cos + sin * sin - 1.0) > 1e-6:
        raise CharStabError(f"w={w:g} is not a crossing frequency (cos^2+sin^2={cos*cos+sin*sin:.8g})")
    return math.atan2(sin, cos) % (2 * math.pi)


def _term_scale(coeffs: CharCoeffsE2, w: float) -> float:
    powers = w ** np.arange(5, -1, -1)
    return float(np.sum(np.abs(coeffs.p_poly()) * powers) + np.sum(np.abs(coeffs.q_poly()) * powers))


def tau_ladder(coeffs: CharCoeffsE2, w: float, n_max: int = 5) -> list[float]:
    """Delays tau_n = (theta + 2 pi n) / w, n = 0..n_max, at which +-iw are roots."""
    theta = crossing_angle(coeffs, w)
    ladder = [(theta + 2 * math.pi * n) / w for n in range(n_max + 1)]
    scale = _term_scale(coeffs, w)
    for tau in ladder:
        if abs(char_poly_e2(coeffs, 1j * w, tau)) > 1e-7 * scale:
            raise CharStabError(f"ladder entry tau={tau:g} fails the root check")
    return ladder


def transversality(coeffs: CharCoeffsE2, h0: float) -> int:
    """Sign of F'(h0); equals the sign of d Re(root)/d tau3 at the crossing."""
    p = coeffs.f_poly
    dp = np.polyder(p)
    val = float(np.polyval(dp, h0))
    mag = float(np.sum(np.abs(dp) * abs(h0) ** np.arange(len(dp) - 1, -1, -1)))
    if abs(val) <= 1e-10 * mag:
        return 0
    return 1 if val > 0 else -1


@dataclass(frozen=True)
class CriticalDelay:
    tau0: float
    w0: float
    h0: float
    ladder: tuple  # (m, n, tau) entries
    transversality_sign: int
    crossings: tuple = ()  # (h_m, w_m, sign F'(h_m))


def critical_tau0(params: Parameters, e2=None, n_max: int = 3) -> Optional[CriticalDelay]:
    """Smallest tau3 at which the interior equilibrium has roots on the
    imaginary axis; None when F has no positive root."""
    _require_instant_infection(params)
    rn = r0_closed_form(params)
    if rn.r1 is None or rn.r1 <= 1:
        raise CharStabError("critical delay requires R1 > 1")
    coeffs = e2_coeffs(params, e2)
    roots = positive_real_roots(coeffs.f_poly)
    if not roots:
        return None
    ladder = []
    crossings = []
    for m, hm in enumerate(roots, start=1):
        wm = math.sqrt(hm)
        crossings.append((hm, wm, transversality(coeffs, hm)))
        for n, tau in enumerate(tau_ladder(coeffs, wm, n_max)):
            ladder.append((m, n, tau))
    m0, _, tau0 = min(ladder, key=lambda e: e[2])
    h0 = roots[m0 - 1]
    return CriticalDelay(tau0=tau0, w0=math.sqrt(h0), h0=h0, ladder=tuple(ladder),
                         transversality_sign=transversality(coeffs, h0),
                         crossings=tuple(crossings))


# ---------------------------------------------------------------------------
# Crossings for arbitrary tau1, tau2 by splitting off the tau3 term.


def _split_pq(jac: DelayJacobian, delays: Sequence[float], s: complex):
    """P(s), Q(s) with D(s) = P(s) + Q(s) e^{-s tau3}; exact because the
    tau3 block only touches the last row."""
    m = _matrices(jac, (delays[0], delays[1], 0.0), s) + jac.a3
    p = np.linalg.det(m)
    mq = m.copy()
    mq[..., 4, :] = -jac.a3[4]
    return p, np.linalg.det(mq)


def crossing_delays(jac: DelayJacobian, tau1: float, tau2: float,
                    w_max: float = 10.0, n_grid: int = 20000) -> list[tuple[float, float]]:
    """All (w, smallest tau3) with i w a root, found from |P(iw)| = |Q(iw)|."""
    w = np.geomspace(1e-6, w_max, n_grid)
    p, q = _split_pq(jac, (tau1, tau2), 1j * w)
    g = np.abs(p) - np.abs(q)
    out = []
    for j in np.nonzero(np.sign(g[:-1]) * np.sign(g[1:]) < 0)[0]:
        def fn(x):
            pp, qq = _split_pq(jac, (tau1, tau2), 1j * x)
            return abs(pp) - abs(qq)
        wc = brentq(fn, w[j], w[j + 1], xtol=1e-15, rtol=1e-14)
        pp, qq = _split_pq(jac, (tau1, tau2), 1j * wc)
        # e^{-i w tau} = -P/Q
        tau = (-np.angle(-pp / qq)) % (2 * math.pi) / wc
        out.append((wc, tau))
    return out
