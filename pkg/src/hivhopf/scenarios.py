"""Named parameter sets for the reference numerical experiments.

Each scenario carries the printed values it is expected to reproduce as
annotations. These are compared in reports as notes and never enforced.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Optional

import numpy as np

from .dde_sim import SimConfig, default_dt
from .equilibria import equilibria
from .model import Parameters, validate

DEFAULT_HISTORY = (75.0, 1.0, 1.0, 1.0, 0.5)


@dataclass(frozen=True)
class ScanSetup:
    lo: float
    hi: float
    tol: float
    sim: SimConfig


@dataclass(frozen=True)
class Scenario:
    name: str
    params: Parameters
    sim: SimConfig
    expected: dict = field(default_factory=dict)
    notes: tuple = ()
    scan: Optional[ScanSetup] = None

    def with_tau3(self, tau3: float) -> "Scenario":
        p = self.params.replace(tau3=tau3)
        sim = self.sim
        if sim.dt > default_dt(p):
            sim = sim.replace(dt=default_dt(p))
        return Scenario(self.name, p, sim, dict(self.expected), self.notes, self.scan)


def _sim(params: Parameters, t_end: float, **kw) -> SimConfig:
    return SimConfig(dt=default_dt(params), t_end=t_end, history=DEFAULT_HISTORY, **kw)


def scan_config(params: Parameters, dt: float, t_end: float, rel_kick: float = 1e-3) -> SimConfig:
    """Small kick off the interior equilibrium so the scan reads the linear
    growth or decay rate rather than the saturated orbit."""
    e2 = np.asarray(equilibria(params).e2)
    return SimConfig(dt=dt, t_end=t_end, history=tuple(float(v) for v in e2 * (1 + rel_kick)),
                     tail_fraction=0.5, conv_tol=1e-12, osc_tol=1e-12)


CASE1 = Parameters(lam=3.0, c=0.01, eta=0.003)
CASE2 = Parameters(lam=7.5, c=0.005, eta=0.003, tau1=0.25, tau2=0.25)

_UNDERSPECIFIED = ("lambda, c and eta are not restated for these figures; the preset uses "
                   "lambda=7.5, c=0.005, eta=0.003 (the fig5 rates), which puts the "
                   "first crossing inside the reported bracket; override freely")

_CASE1_EXPECTED = {
    "r0": 6.3776,
    "r1": 2.3033,
    "e2": [266.4163, 1.6792, 0.6303, 0.6303, 0.9047],
    "tau0_bracket": [100.0, 101.0],
}
_CASE2_EXPECTED = {
    "r0": 5.8654,
    "r1": 178.7590,
    "e2": [742.7828, 0.1328, 0.0486, 0.0486, 0.7423],
    "tau0_bracket": [42.0, 43.0],
}


def _build() -> dict:
    reg = {}

    def add(s: Scenario):
        report = validate(s.params)
        if not report.ok:
            raise ValueError(f"scenario {s.name}: {report.violations}")
        reg[s.name] = s

    p = Parameters(lam=7.5, c=0.05, eta=0.003, tau1=1.0, tau2=1.0, tau3=2.0)
    add(Scenario("fig3", p, _sim(p, 2000.0),
                 {"r0": 0.2920, "e0": [750.0, 0, 0, 0, 0], "verdict": "converged", "limit": "e0"}))
    p = Parameters(lam=75.0, c=0.005, eta=0.003, tau1=1.0, tau2=1.0, tau3=2.0)
    add(Scenario("fig4", p, _sim(p, 2000.0),
                 {"r0": 2.9202, "r1": 0.1623,
                  "e1": [2568.3, 4.5164, 9.6011, 9.6011, 0.0],
                  "verdict": "converged", "limit": "e1"}))
    p = Parameters(lam=75.0, c=2e-6, eta=1e-4, tau1=1.0, tau2=1.0, tau3=2.0)
    add(Scenario("fig4-e1", p, _sim(p, 8000.0),
                 {"verdict": "converged", "limit": "e1"},
                 notes=("variant of fig4 with c and eta lowered so that R1 < 1 < R0 holds "
                        "for the printed R1 formula",)))
    p = CASE2.replace(tau3=0.0)
    add(Scenario("fig5", p, _sim(p, 4000.0),
                 {"r1": 5.8654, "e2": [708.6670, 0.7603, 0.2916, 0.2916, 0.4864],
                  "verdict": "converged", "limit": "e2"}))

    for fig, tau3, verdict in (("fig6", 70.0, "converged"), ("fig7", 100.0, "converged"),
                               ("fig8", 101.0, "oscillating"), ("fig9", 120.0, "oscillating")):
        p = CASE1.replace(tau3=tau3)
        add(Scenario(fig, p, _sim(p, 20000.0, tail_fraction=0.5),
                     {**_CASE1_EXPECTED, "verdict": verdict}))
    for fig, tau3, verdict in (("fig10", 20.0, "converged"), ("fig11", 42.0, "converged"),
                               ("fig12", 43.0, "oscillating"), ("fig13", 60.0, "oscillating")):
        p = CASE2.replace(tau3=tau3)
        add(Scenario(fig, p, _sim(p, 6000.0), {**_CASE2_EXPECTED, "verdict": verdict},
                     notes=(_UNDERSPECIFIED,)))

    p = CASE1.replace(tau3=100.0)
    add(Scenario("case-1", p, _sim(p, 20000.0, tail_fraction=0.5), dict(_CASE1_EXPECTED),
                 scan=ScanSetup(40.0, 70.0, 1.0, scan_config(p, dt=0.25, t_end=40000.0))))
    p = CASE2.replace(tau3=42.0)
    add(Scenario("case-2", p, _sim(p, 6000.0), dict(_CASE2_EXPECTED), notes=(_UNDERSPECIFIED,),
                 scan=ScanSetup(20.0, 60.0, 1.0, scan_config(p, dt=0.05, t_end=40000.0))))
    return reg


REGISTRY = MappingProxyType(_build())


def get(name: str) -> Scenario:
    try:
        return REGISTRY[name]
    except KeyError:
        raise KeyError(f"unknown scenario {name!r}; choose from {', '.join(sorted(REGISTRY))}") from None
