"""Composite runs: reproduction numbers, equilibria, stability, critical delay,
Hopf coefficients and simulation, collected into a JSON-ready report.

Every section of a report names the operation that produced it under
``"op"`` so each number can be recomputed by calling that function directly.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import svg
from .charstab import (
    CharStabError,
    check_hypothesis_H,
    count_unstable_roots,
    critical_tau0,
    crossing_delays,
    e2_coeffs,
    jacobian_blocks,
)
from .dde_sim import (
    Converged,
    Oscillating,
    ScanError,
    SimConfig,
    bifurcation_scan,
    check_config,
    classify,
    default_dt,
    simulate,
)
from .equilibria import (
    EquilibriumError,
    equilibria,
    r0_closed_form,
    r0_spectral_oracle,
    residual,
)
from .hopf import HopfError, hopf_analysis, predicted_amplitude
from .model import COMPONENTS, Parameters, validate
from .scenarios import DEFAULT_HISTORY, Scenario, get

ANNOTATION_RTOL = 1e-3
NUMBER_RTOL = 1e-3


class ConfigError(ValueError):
    """Configuration document could not be parsed or failed validation."""


@dataclass(frozen=True)
class Outputs:
    csv: bool = True
    svg: bool = False
    stride: int = 1


@dataclass
class RunInput:
    """Everything a run needs; built from a scenario or a config file."""

    name: str
    params: Parameters
    sim: SimConfig
    outputs: Outputs = Outputs()
    expected: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)


# ---------------------------------------------------------------------------
# configuration


_SIM_KEYS = ("dt", "t_end", "history", "tail_fraction", "conv_tol", "osc_tol")
_OUTPUT_KEYS = ("csv", "svg", "stride")


def _number(section: str, key: str, value) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{section}.{key}: expected a number, got {value!r}")
    return float(value)


def parse_config(text: str, source: str = "<config>") -> tuple[dict, dict, Outputs, set]:
    """Parse a config document into (param overrides, sim overrides, outputs,
    names of explicitly given sim fields)."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{source}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"{source}: top level must be an object")
    unknown = set(doc) - {"params", "sim", "outputs"}
    if unknown:
        raise ConfigError(f"{source}: unknown top-level key(s) {sorted(unknown)}")

    def section(name: str) -> dict:
        value = doc.get(name, {})
        if not isinstance(value, dict):
            raise ConfigError(f"{name}: expected an object")
        return value

    names = set(Parameters.field_names()) | {"lambda"}
    params = {}
    for key, value in section("params").items():
        if key not in names:
            raise ConfigError(f"params.{key}: not a model parameter")
        params["lam" if key == "lambda" else key] = _number("params", key, value)

    sim = {}
    for key, value in section("sim").items():
        if key not in _SIM_KEYS:
            raise ConfigError(f"sim.{key}: unknown simulation field")
        if key == "history":
            if not isinstance(value, list) or len(value) != 5:
                raise ConfigError("sim.history: expected an array of 5 numbers")
            sim[key] = tuple(_number("sim", f"history[{i}]", v) for i, v in enumerate(value))
        else:
            sim[key] = _number("sim", key, value)

    out = {}
    for key, value in section("outputs").items():
        if key not in _OUTPUT_KEYS:
            raise ConfigError(f"outputs.{key}: unknown output field")
        if key == "stride":
            if isinstance(value, bool) or not isinstance(value, int) or value < 1:
                raise ConfigError(f"outputs.stride: expected a positive integer, got {value!r}")
        elif not isinstance(value, bool):
            raise ConfigError(f"outputs.{key}: expected true or false, got {value!r}")
        out[key] = value
    return params, sim, Outputs(**out), set(sim)


def build_input(name: str, params: Parameters, sim_overrides: dict, explicit: set,
                outputs: Outputs = Outputs(), base_sim: Optional[SimConfig] = None,
                **flag_overrides) -> RunInput:
    """Apply command-line overrides (``tau3``, ``t_end``) and validate.

    When ``dt`` was not given explicitly it follows the delays.
    """
    if flag_overrides.get("tau3") is not None:
        params = params.replace(tau3=float(flag_overrides["tau3"]))
    report = validate(params)
    if not report.ok:
        raise ConfigError("invalid parameters: " + "; ".join(report.violations))
    sim = base_sim or SimConfig(history=DEFAULT_HISTORY)
    sim = sim.replace(**sim_overrides)
    if flag_overrides.get("t_end") is not None:
        sim = sim.replace(t_end=float(flag_overrides["t_end"]))
    if "dt" not in explicit:
        sim = sim.replace(dt=min(sim.dt, default_dt(params)) if base_sim else default_dt(params))
    problems = check_config(sim, params)
    if problems:
        raise ConfigError("invalid simulation config: " + "; ".join(problems))
    return RunInput(name=name, params=params, sim=sim, outputs=outputs)


def load_config(path, tau3: Optional[float] = None,
                t_end: Optional[float] = None) -> tuple[Parameters, SimConfig, Outputs]:
    """Read a JSON config; unspecified parameters take the base values and
    flags override file values."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None
    params, sim, outputs, explicit = parse_config(text, str(path))
    try:
        base = Parameters().replace(**params)
    except TypeError as exc:  # pragma: no cover - keys already checked
        raise ConfigError(str(exc)) from None
    run = build_input(path.stem, base, sim, explicit, outputs, tau3=tau3, t_end=t_end)
    return run.params, run.sim, run.outputs


def scenario_input(scenario: Scenario, tau3: Optional[float] = None,
                   t_end: Optional[float] = None, outputs: Outputs = Outputs()) -> RunInput:
    run = build_input(scenario.name, scenario.params, {}, set(), outputs,
                      base_sim=scenario.sim, tau3=tau3, t_end=t_end)
    run.expected = dict(scenario.expected)
    run.notes = list(scenario.notes)
    return run


# ---------------------------------------------------------------------------
# report sections


def _clean(obj):
    """JSON-safe copy: tuples to lists, numpy scalars to Python, non-finite to None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, complex):
        return [_clean(obj.real), _clean(obj.imag)]
    return obj


def dumps(report: dict) -> str:
    return json.dumps(_clean(report), indent=2, sort_keys=True, allow_nan=False) + "\n"


def _rel(a: float, b: float) -> float:
    return abs(a - b) / max(abs(b), 1e-300)


def reproduction_section(params: Parameters) -> dict:
    rn = r0_closed_form(params)
    return {
        "op": "r0_closed_form",
        "gamma": rn.gamma, "r0": rn.r0, "r01": rn.r01, "r02": rn.r02, "r1": rn.r1,
        "spectral": {"op": "r0_spectral_oracle", "r0": r0_spectral_oracle(params)},
    }


def equilibria_section(params: Parameters):
    eq = equilibria(params)
    out = {"op": "equilibria", "quadratic": list(eq.quadratic)}
    present = {}
    for label in ("e0", "e1", "e2"):
        state = getattr(eq, label)
        if state is None:
            out[label] = None
            continue
        present[label] = state
        arr = np.asarray(state)
        res = float(np.max(np.abs(residual(params, arr))))
        out[label] = {
            "state": dict(zip(COMPONENTS, map(float, arr))),
            "residual": {"op": "residual", "max_abs": res,
                         "scaled": res / (1.0 + float(np.max(np.abs(arr))))},
        }
    return out, present


def stability_section(params: Parameters, present: dict) -> dict:
    out = {"op": "count_unstable_roots", "delays": list(params.delays)}
    for label, state in present.items():
        try:
            n = count_unstable_roots(jacobian_blocks(params, state), params.delays)
            out[label] = {"unstable_roots": n, "stable": n == 0}
        except CharStabError as exc:
            out[label] = {"error": str(exc)}
    return out


def _dominant(present: dict) -> str:
    return "e2" if "e2" in present else ("e1" if "e1" in present else "e0")


def critical_section(params: Parameters, present: dict, notes: list) -> tuple[Optional[dict], Optional[dict]]:
    """Critical delay plus Hopf coefficients when the instant-infection
    analysis applies; otherwise a note explains why they are absent."""
    if "e2" not in present:
        notes.append("critical delay not computed: interior equilibrium absent")
        return None, None
    if params.tau1 != 0 or params.tau2 != 0:
        notes.append("analytic τ₀ unavailable: τ₁, τ₂ > 0")
        crossings = crossing_delays(jacobian_blocks(params, present["e2"]), params.tau1, params.tau2)
        if not crossings:
            return None, None
        w, tau = min(crossings, key=lambda c: c[1])
        return {"op": "crossing_delays", "tau0_numeric": tau, "w0": w}, None
    coeffs = e2_coeffs(params, present["e2"])
    hyp = check_hypothesis_H(coeffs)
    crit = critical_tau0(params, present["e2"])
    section = {"op": "critical_tau0",
               "hypothesis_H": {"op": "check_hypothesis_H", "ok": hyp.ok,
                                "items": {k: {"value": v, "ok": ok} for k, (v, ok) in hyp.items.items()}}}
    if crit is None:
        notes.append("F has no positive root: no stability switch in tau3")
        section["tau0"] = None
        return section, None
    section.update(tau0=crit.tau0, w0=crit.w0, h0=crit.h0, period=2 * math.pi / crit.w0,
                   transversality_sign=crit.transversality_sign,
                   ladder=[{"m": m, "n": n, "tau": t} for m, n, t in crit.ladder])
    try:
        hop = hopf_analysis(params)
    except (HopfError, CharStabError) as exc:
        notes.append(f"Hopf coefficients unavailable: {exc}")
        return section, None
    hd = {"op": "hopf_analysis", **hop.to_dict()}
    amp = predicted_amplitude(hop.normal_form, hop.eigen, params.tau3, crit.tau0)
    hd["predicted_y_peak_to_peak"] = {"op": "predicted_amplitude", "tau3": params.tau3, "value": amp}
    return section, hd


def simulation_section(run: RunInput, present: dict, out_dir: Optional[Path]) -> dict:
    traj = simulate(run.params, run.sim)
    verdict = classify(traj, run.sim)
    out = {"op": "simulate+classify", "config": run.sim.to_dict(), "verdict": verdict.kind}
    if isinstance(verdict, Converged):
        lim = np.asarray(verdict.limit)
        out["limit"] = dict(zip(COMPONENTS, map(float, lim)))
        dist = {label: float(np.max(np.abs(lim - np.asarray(s)) / (1.0 + np.abs(np.asarray(s)))))
                for label, s in present.items()}
        out["nearest_equilibrium"] = min(dist, key=dist.get)
        out["scaled_distance"] = dist
    elif isinstance(verdict, Oscillating):
        out["amplitude"] = dict(zip(COMPONENTS, verdict.amplitude))
        out["period"] = verdict.period
        out["envelope_rate"] = verdict.envelope_rate
    else:
        out["reason"] = verdict.reason
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        files = []
        if run.outputs.csv:
            traj.to_csv(out_dir / "trajectory.csv", stride=run.outputs.stride)
            files.append("trajectory.csv")
        if run.outputs.svg:
            for name in COMPONENTS:
                (out_dir / f"{name}.svg").write_text(
                    svg.line_plot(traj.t, traj.component(name), f"{run.name}: {name}(t)", "t", name))
                files.append(f"{name}.svg")
            (out_dir / "xpy.svg").write_text(svg.oblique_plot(
                traj.component("x"), traj.component("p"), traj.component("y"),
                f"{run.name}: x-p-y projection"))
            files.append("xpy.svg")
        out["files"] = files
    return out


def annotation_notes(report: dict, expected: dict) -> list[str]:
    """Advisory comparison against reference annotations; never raises."""
    notes = []
    rep = report["reproduction"]
    for key in ("r0", "r1"):
        if key in expected and rep.get(key) is not None:
            got, want = rep[key], expected[key]
            if _rel(got, want) > NUMBER_RTOL:
                notes.append(f"{key}: computed {got:.6g}, reference {want:g} "
                             f"(ratio {got / want:.4g})")
    for key in ("e0", "e1", "e2"):
        if key not in expected:
            continue
        eq = report["equilibria"].get(key)
        if eq is None:
            notes.append(f"{key}: reference value given but equilibrium absent for these parameters")
            continue
        got = [eq["state"][c] for c in COMPONENTS]
        bad = [c for c, g, w in zip(COMPONENTS, got, expected[key])
               if abs(g - w) > ANNOTATION_RTOL * max(abs(w), 1e-12) and not (w == 0 and abs(g) < 1e-9)]
        if bad:
            notes.append(f"{key}: computed {[round(g, 4) for g in got]} differs from reference "
                         f"{expected[key]} beyond 0.1% in {','.join(bad)}")
    sim = report.get("simulation")
    if sim is not None and "verdict" in expected and sim["verdict"] != expected["verdict"]:
        notes.append(f"simulation: verdict {sim['verdict']}, reference reading {expected['verdict']}")
    if sim is not None and "limit" in expected and sim.get("nearest_equilibrium") not in (None, expected["limit"]):
        notes.append(f"simulation: converged near {sim['nearest_equilibrium']}, "
                     f"reference {expected['limit']}")
    crit = report.get("critical") or {}
    tau0 = crit.get("tau0", crit.get("tau0_numeric"))
    if "tau0_bracket" in expected and tau0 is not None:
        lo, hi = expected["tau0_bracket"]
        if not lo <= tau0 <= hi:
            notes.append(f"tau0: computed {tau0:.6g}, reference bracket ({lo:g}, {hi:g})")
    return notes


def run_report(run: RunInput, out_dir=None, simulate_: bool = True) -> dict:
    """Full pipeline; writes report.json (and trajectory files) to ``out_dir``."""
    out_dir = Path(out_dir) if out_dir is not None else None
    notes = list(run.notes)
    report = {"name": run.name, "params": run.params.to_dict(),
              "reproduction": reproduction_section(run.params)}
    try:
        report["equilibria"], present = equilibria_section(run.params)
    except EquilibriumError as exc:
        raise EquilibriumError(f"{run.name}: {exc}") from None
    report["stability"] = stability_section(run.params, present)
    report["critical"], report["hopf"] = critical_section(run.params, present, notes)
    report["simulation"] = simulation_section(run, present, out_dir) if simulate_ else None
    report["notes"] = notes + annotation_notes(report, run.expected)
    report["expected"] = run.expected or None
    text = dumps(report)
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "report.json").write_text(text)
    return json.loads(text)


def run_scenario(which, out_dir=None, outputs: Outputs = Outputs(), **overrides) -> dict:
    """Run a registered scenario by name, or a prepared RunInput."""
    run_input = which if isinstance(which, RunInput) else scenario_input(get(which), outputs=outputs,
                                                                         **overrides)
    return run_report(run_input, out_dir)


def analyze(run_input: RunInput, out_dir=None) -> dict:
    return run_report(run_input, out_dir, simulate_=False)


# ---------------------------------------------------------------------------
# scan and sweep


def scan_tau3(params: Parameters, config: SimConfig, lo: float, hi: float, tol: float,
              expected: Optional[dict] = None) -> dict:
    """Simulation bisection for the onset delay, plus the analytic critical
    delay when tau1 = tau2 = 0 and the relative gap between the two."""
    if not lo < hi:
        raise ScanError("lo must be strictly below hi")
    blo, bhi = bifurcation_scan(params, lo, hi, config, tol)
    out = {"op": "bifurcation_scan", "bracket": [blo, bhi], "width": bhi - blo,
           "config": config.to_dict(), "notes": []}
    e2 = equilibria(params).e2
    if params.tau1 == 0 and params.tau2 == 0:
        crit = critical_tau0(params, e2) if e2 is not None else None
        if crit is not None:
            mid = 0.5 * (blo + bhi)
            out["analytic"] = {"op": "critical_tau0", "tau0": crit.tau0,
                               "inside": blo <= crit.tau0 <= bhi,
                               "relative_gap": abs(mid - crit.tau0) / crit.tau0}
    else:
        out["notes"].append("analytic τ₀ unavailable: τ₁, τ₂ > 0")
        if e2 is not None:
            crossings = crossing_delays(jacobian_blocks(params, e2), params.tau1, params.tau2)
            if crossings:
                w, tau = min(crossings, key=lambda c: c[1])
                out["numeric_crossing"] = {"op": "crossing_delays", "tau0": tau, "w0": w,
                                           "inside": blo <= tau <= bhi}
    if expected and "tau0_bracket" in expected:
        plo, phi = expected["tau0_bracket"]
        pmid = 0.5 * (plo + phi)
        mid = 0.5 * (blo + bhi)
        out["notes"].append(f"reference bracket ({plo:g}, {phi:g}); simulated midpoint {mid:.4g} "
                            f"is {100 * abs(mid - pmid) / pmid:.1f}% from its midpoint")
    return out


def sweep_row(params: Parameters, name: str, value: float) -> dict:
    row = {"value": value}
    try:
        p = params.replace(**{name: value})
        report = validate(p)
        if not report.ok:
            raise ValueError("; ".join(report.violations))
        rn = r0_closed_form(p)
        row.update(r0=rn.r0, r1=rn.r1)
        _, present = equilibria_section(p)
        label = _dominant(present)
        n = count_unstable_roots(jacobian_blocks(p, present[label]), p.delays)
        row.update(equilibrium=label, unstable_roots=n, verdict="stable" if n == 0 else "unstable")
        if label == "e2" and p.tau1 == 0 and p.tau2 == 0:
            crit = critical_tau0(p, present["e2"])
            row["tau0"] = crit.tau0 if crit else None
        row["error"] = None
    except Exception as exc:  # any row failure stays in its row
        row["error"] = f"{type(exc).__name__}: {exc}"
    return row


def sweep(params: Parameters, name: str, values: Sequence[float],
          workers: Optional[int] = None) -> list[dict]:
    """One summary row per grid value, computed concurrently, in grid order."""
    if name == "lambda":
        name = "lam"
    if name not in Parameters.field_names():
        raise ConfigError(f"{name}: not a model parameter")
    values = [float(v) for v in values]
    if not values:
        return []
    workers = workers or min(len(values), os.cpu_count() or 1)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda v: sweep_row(params, name, v), values))
