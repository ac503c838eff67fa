"""Fixed-step RK4 integration of the delayed system and long-term classification.

Lagged states are read from the stored solution through cubic Hermite
interpolation between grid points, using the derivative recorded at each
grid point. Before ``t = 0`` the history is the constant initial state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Optional, Union

import numpy as np
from numba import njit

from .model import COMPONENTS, Parameters, State, validate

NEG_FLOOR = 1e-9

# Status codes returned by the compiled integrator.
_OK, _NEGATIVE, _NONFINITE = 0, 1, 2


class IntegrationError(RuntimeError):
    def __init__(self, message: str, time: float, component: str):
        super().__init__(message)
        self.time = time
        self.component = component


@dataclass(frozen=True)
class SimConfig:
    dt: float = 0.01
    t_end: float = 2000.0
    history: tuple = (75.0, 1.0, 1.0, 1.0, 0.5)
    tail_fraction: float = 0.25
    conv_tol: float = 1e-3
    osc_tol: float = 1e-4

    def replace(self, **changes) -> "SimConfig":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return {
            "dt": self.dt,
            "t_end": self.t_end,
            "history": [float(h) for h in self.history],
            "tail_fraction": self.tail_fraction,
            "conv_tol": self.conv_tol,
            "osc_tol": self.osc_tol,
        }


def default_dt(params: Parameters) -> float:
    positive = [t for t in params.delays if t > 0]
    return min(0.01, min(positive) / 4.0) if positive else 0.01


def check_config(config: SimConfig, params: Parameters) -> list[str]:
    problems = []
    if not config.dt > 0:
        problems.append("dt > 0")
    if not config.t_end >= 10 * config.dt:
        problems.append("t_end >= 10*dt")
    if not 0.0 < config.tail_fraction < 1.0:
        problems.append("tail_fraction in (0,1)")
    positive = [t for t in params.delays if t > 0]
    if positive and config.dt > min(positive):
        problems.append("dt <= min positive delay")
    hist = np.asarray(config.history, dtype=float)
    if hist.shape != (5,) or not np.all(np.isfinite(hist)):
        problems.append("history must be 5 finite values")
    elif np.any(hist < 0):
        problems.append("history >= 0")
    return problems


@njit(cache=True, nogil=True)
def _lagged(states, derivs, dt, n, c, lag_steps, stage, hist, out):
    """State at grid coordinate ``n + c - lag_steps``; ``stage`` is the current
    stage state, used verbatim when the lag is zero."""
    if lag_steps == 0.0:
        for j in range(5):
            out[j] = stage[j]
        return
    u = n + c - lag_steps
    if u <= 0.0:
        for j in range(5):
            out[j] = hist[j]
        return
    i = int(math.floor(u))
    th = u - i
    if i >= n or th == 0.0:
        i = min(i, n)
        for j in range(5):
            out[j] = states[i, j]
        return
    h00 = (1.0 + 2.0 * th) * (1.0 - th) * (1.0 - th)
    h10 = th * (1.0 - th) * (1.0 - th)
    h01 = th * th * (3.0 - 2.0 * th)
    h11 = th * th * (th - 1.0)
    for j in range(5):
        out[j] = (h00 * states[i, j] + h10 * dt * derivs[i, j]
                  + h01 * states[i + 1, j] + h11 * dt * derivs[i + 1, j])


@njit(cache=True, nogil=True)
def _eval(par, e1, e2, states, derivs, dt, n, c, lags, stage, hist, out, l1, l2, l3):
    _lagged(states, derivs, dt, n, c, lags[0], stage, hist, l1)
    _lagged(states, derivs, dt, n, c, lags[1], stage, hist, l2)
    _lagged(states, derivs, dt, n, c, lags[2], stage, hist, l3)
    lam, b1, b2, rho = par[0], par[1], par[2], par[3]
    alpha, a, k, h, cc, eta = par[6], par[7], par[8], par[9], par[10], par[11]
    mu1, mu2, mu3, mu4, mu5 = par[12], par[13], par[14], par[15], par[16]
    x, p, y, v, z = stage[0], stage[1], stage[2], stage[3], stage[4]
    out[0] = lam - x * (b1 * v + b2 * y) - mu1 * x
    out[1] = rho * e1 * l1[0] * (b1 * l1[3] + b2 * l1[2]) - (alpha + mu2) * p
    out[2] = ((1.0 - rho) * e2 * l2[0] * (b1 * l2[3] + b2 * l2[2]) + alpha * p
              - mu3 * y - a * y * z)
    out[3] = k * y - mu4 * v
    out[4] = cc * l3[2] * l3[4] / (h + l3[4]) - mu5 * z - eta * y * z


@njit(cache=True, nogil=True)
def _integrate(par, e1, e2, lags, dt, nsteps, hist, states, derivs):
    """RK4 march; returns (status, step, component)."""
    for j in range(5):
        states[0, j] = hist[j]
    k1 = np.empty(5)
    k2 = np.empty(5)
    k3 = np.empty(5)
    k4 = np.empty(5)
    tmp = np.empty(5)
    l1 = np.empty(5)
    l2 = np.empty(5)
    l3 = np.empty(5)
    cur = np.empty(5)
    for n in range(nsteps):
        for j in range(5):
            cur[j] = states[n, j]
        _eval(par, e1, e2, states, derivs, dt, n, 0.0, lags, cur, hist, k1, l1, l2, l3)
        for j in range(5):
            derivs[n, j] = k1[j]
            tmp[j] = cur[j] + 0.5 * dt * k1[j]
        _eval(par, e1, e2, states, derivs, dt, n, 0.5, lags, tmp, hist, k2, l1, l2, l3)
        for j in range(5):
            tmp[j] = cur[j] + 0.5 * dt * k2[j]
        _eval(par, e1, e2, states, derivs, dt, n, 0.5, lags, tmp, hist, k3, l1, l2, l3)
        for j in range(5):
            tmp[j] = cur[j] + dt * k3[j]
        _eval(par, e1, e2, states, derivs, dt, n, 1.0, lags, tmp, hist, k4, l1, l2, l3)
        for j in range(5):
            val = cur[j] + dt / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j])
            if not math.isfinite(val):
                return _NONFINITE, n + 1, j
            if val < 0.0:
                if val < -1e-9:
                    return _NEGATIVE, n + 1, j
                val = 0.0
            states[n + 1, j] = val
    for j in range(5):
        cur[j] = states[nsteps, j]
    _eval(par, e1, e2, states, derivs, dt, nsteps, 0.0, lags, cur, hist, k1, l1, l2, l3)
    for j in range(5):
        derivs[nsteps, j] = k1[j]
    return _OK, nsteps, 0


@dataclass
class Trajectory:
    """Uniform-grid solution with the derivative at every grid point."""

    t: np.ndarray
    states: np.ndarray
    derivs: np.ndarray
    history: np.ndarray

    @property
    def dt(self) -> float:
        return float(self.t[1] - self.t[0])

    def component(self, name: str) -> np.ndarray:
        return self.states[:, COMPONENTS.index(name)]

    def at(self, when) -> np.ndarray:
        """Dense output by cubic Hermite interpolation; grid points are exact."""
        when = np.atleast_1d(np.asarray(when, dtype=float))
        u = (when - self.t[0]) / self.dt
        snapped = np.round(u)
        u = np.where(np.abs(u - snapped) < 1e-9, snapped, u)
        out = np.empty((when.size, 5))
        before = u <= 0
        out[before] = self.history
        i = np.clip(np.floor(u).astype(int), 0, len(self.t) - 2)
        th = (u - i)[:, None]
        h00 = (1 + 2 * th) * (1 - th) ** 2
        h10 = th * (1 - th) ** 2
        h01 = th ** 2 * (3 - 2 * th)
        h11 = th ** 2 * (th - 1)
        dense = (h00 * self.states[i] + h10 * self.dt * self.derivs[i]
                 + h01 * self.states[i + 1] + h11 * self.dt * self.derivs[i + 1])
        out[~before] = dense[~before]
        return out

    def tail(self, fraction: float) -> tuple[np.ndarray, np.ndarray]:
        start = int(len(self.t) * (1.0 - fraction))
        return self.t[start:], self.states[start:]

    def to_csv(self, path, stride: int = 1) -> None:
        if stride < 1:
            raise ValueError("stride must be a positive integer")
        with open(path, "w", newline="\n") as fh:
            fh.write("t," + ",".join(COMPONENTS) + "\n")
            for t, row in zip(self.t[::stride], self.states[::stride]):
                fh.write(",".join(f"{v:.10g}" for v in (t, *row)) + "\n")


def simulate(params: Parameters, config: SimConfig) -> Trajectory:
    """Integrate from the constant history ``config.history`` up to ``t_end``.

    Raises IntegrationError when a component drops below ``-1e-9`` or turns
    non-finite, ValueError for invalid parameters or configuration.
    """
    report = validate(params)
    if not report.ok:
        raise ValueError("invalid parameters: " + "; ".join(report.violations))
    problems = check_config(config, params)
    if problems:
        raise ValueError("invalid simulation config: " + "; ".join(problems))
    dt = float(config.dt)
    nsteps = int(round(config.t_end / dt))
    hist = np.asarray(config.history, dtype=float)
    lags = np.array([t / dt for t in params.delays])
    states = np.empty((nsteps + 1, 5))
    derivs = np.empty((nsteps + 1, 5))
    status, step, comp = _integrate(params.as_array(), params.survival1, params.survival2,
                                    lags, dt, nsteps, hist, states, derivs)
    if status != _OK:
        what = "negative beyond floor" if status == _NEGATIVE else "non-finite"
        t_fail = step * dt
        raise IntegrationError(
            f"component {COMPONENTS[comp]} became {what} at t={t_fail:g}",
            t_fail, COMPONENTS[comp])
    t = np.arange(nsteps + 1) * dt
    return Trajectory(t=t, states=states, derivs=derivs, history=hist)


@dataclass(frozen=True)
class Converged:
    limit: State
    kind: str = "converged"


@dataclass(frozen=True)
class Oscillating:
    amplitude: tuple  # peak-to-peak per component over the tail
    period: float
    envelope_rate: float  # log-amplitude slope of y peaks (per unit time)
    kind: str = "oscillating"


@dataclass(frozen=True)
class Undetermined:
    reason: str = ""
    kind: str = "undetermined"


LongTermVerdict = Union[Converged, Oscillating, Undetermined]


def mean_crossings(t: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Times where ``y`` crosses its mean, by linear interpolation."""
    d = y - y.mean()
    idx = np.nonzero(np.signbit(d[:-1]) != np.signbit(d[1:]))[0]
    frac = d[idx] / (d[idx] - d[idx + 1])
    return t[idx] + frac * (t[idx + 1] - t[idx])


def envelope_rate(t: np.ndarray, y: np.ndarray) -> float:
    """Slope of log(local peak height above the mean), least squares."""
    d = y - y.mean()
    peaks = np.nonzero((d[1:-1] > d[:-2]) & (d[1:-1] >= d[2:]) & (d[1:-1] > 0))[0] + 1
    if len(peaks) < 2:
        return 0.0
    return float(np.polyfit(t[peaks], np.log(d[peaks]), 1)[0])


def classify(traj: Trajectory, config: SimConfig) -> LongTermVerdict:
    t, s = traj.tail(config.tail_fraction)
    if len(t) < 3:
        return Undetermined("tail too short")
    mean = s.mean(axis=0)
    ptp = np.ptp(s, axis=0)
    if np.all(ptp < config.conv_tol * (1.0 + np.abs(mean))):
        return Converged(State(*map(float, mean)))
    y = s[:, COMPONENTS.index("y")]
    if ptp[2] <= config.osc_tol * (1.0 + abs(mean[2])):
        return Undetermined("y amplitude below osc_tol but not converged")
    cross = mean_crossings(t, y)
    if len(cross) < 4:
        return Undetermined(f"only {len(cross)} mean crossings in tail; extend t_end")
    # full periods, so that relaxation cycles with lopsided halves still count
    full = cross[2:] - cross[:-2]
    if full.std() / full.mean() >= 0.2:
        return Undetermined("irregular periods")
    return Oscillating(amplitude=tuple(float(a) for a in ptp),
                       period=float(full.mean()),
                       envelope_rate=envelope_rate(t, y))


RATE_TOL = 1e-7


def unstable_side(verdict: LongTermVerdict, rate_tol: float = RATE_TOL) -> Optional[bool]:
    """True for growing or sustained oscillation, False for convergence or a
    decaying oscillation, None when undetermined.

    Saturated cycles have an envelope slope at round-off level of either sign,
    so only decay faster than ``rate_tol`` counts as stable.
    """
    if isinstance(verdict, Converged):
        return False
    if isinstance(verdict, Oscillating):
        return verdict.envelope_rate > -rate_tol
    return None


class ScanError(RuntimeError):
    pass


def bifurcation_scan(params: Parameters, tau3_lo: float, tau3_hi: float,
                     config: SimConfig, tol: float,
                     side: Callable[[LongTermVerdict], Optional[bool]] = unstable_side,
                     ) -> tuple[float, float]:
    """Bisect on tau3 between a stable and an oscillating endpoint.

    ``side`` maps a verdict to True (unstable side), False (stable side) or
    None. By default a decaying oscillation counts as stable, which lets the
    scan start from a small perturbation of the interior equilibrium.
    """
    if not tau3_lo < tau3_hi:
        raise ScanError("tau3_lo must be strictly below tau3_hi")
    if not tol > 0:
        raise ScanError("tol must be positive")

    def judge(tau3: float) -> Optional[bool]:
        p = params.replace(tau3=tau3)
        cfg = config if config.dt <= tau3 or tau3 == 0 else config.replace(dt=default_dt(p))
        return side(classify(simulate(p, cfg), cfg))

    if judge(tau3_lo) is not False:
        raise ScanError(f"lower endpoint tau3={tau3_lo:g} is not on the stable side")
    if judge(tau3_hi) is not True:
        raise ScanError(f"upper endpoint tau3={tau3_hi:g} is not on the oscillating side")
    lo, hi = float(tau3_lo), float(tau3_hi)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        verdict = judge(mid)
        if verdict is None:
            raise ScanError(f"undetermined behavior at tau3={mid:g}; try a longer t_end")
        if verdict:
            hi = mid
        else:
            lo = mid
    return lo, hi
