import json
import re

import numpy as np
import pytest

from hivhopf import svg
from hivhopf.dde_sim import ScanError
from hivhopf.model import Parameters
from hivhopf.pipeline import (
    ConfigError,
    load_config,
    run_report,
    run_scenario,
    scan_tau3,
    scenario_input,
    sweep,
)
from hivhopf.scenarios import REGISTRY, get


def write(tmp_path, doc, name="c.json"):
    path = tmp_path / name
    path.write_text(doc if isinstance(doc, str) else json.dumps(doc))
    return path


def test_registry_is_complete_and_valid():
    for n in range(3, 14):
        assert f"fig{n}" in REGISTRY
    assert {"case-1", "case-2", "fig4-e1"} <= set(REGISTRY)
    with pytest.raises(TypeError):
        REGISTRY["new"] = None
    with pytest.raises(KeyError, match="unknown scenario"):
        get("fig99")


def test_underspecified_presets_say_so():
    for name in ("fig10", "fig11", "fig12", "fig13", "case-2"):
        assert any("not restated" in n for n in get(name).notes)


def test_config_defaults_to_base_rates(tmp_path):
    p, sim, out = load_config(write(tmp_path, {"params": {"lambda": 7.5}}))
    assert p == Parameters()
    assert sim.history == (75.0, 1.0, 1.0, 1.0, 0.5)
    assert out.csv and not out.svg


def test_config_malformed_number_names_field(tmp_path):
    with pytest.raises(ConfigError, match=r"params\.c"):
        load_config(write(tmp_path, {"params": {"c": "fast"}}))


def test_config_syntax_error_has_line(tmp_path):
    with pytest.raises(ConfigError, match="line 2"):
        load_config(write(tmp_path, '{"params":\n {"c": 0.01,}}'))


def test_config_validation_lists_violations(tmp_path):
    with pytest.raises(ConfigError, match=r"rho in \(0,1\)"):
        load_config(write(tmp_path, {"params": {"rho": 1.5}}))


def test_config_unknown_keys(tmp_path):
    with pytest.raises(ConfigError, match="params.zeta"):
        load_config(write(tmp_path, {"params": {"zeta": 1}}))
    with pytest.raises(ConfigError, match="sim.history"):
        load_config(write(tmp_path, {"sim": {"history": [1, 2]}}))
    with pytest.raises(ConfigError, match="outputs.stride"):
        load_config(write(tmp_path, {"outputs": {"stride": 0}}))


def test_flags_override_file(tmp_path):
    path = write(tmp_path, {"params": {"tau3": 5, "tau1": 0.5}, "sim": {"t_end": 100}})
    p, sim, _ = load_config(path, tau3=0.02, t_end=50)
    assert p.tau3 == 0.02 and sim.t_end == 50
    assert sim.dt == pytest.approx(0.005)  # dt follows the shortest delay


def test_fig3_report(tmp_path):
    report = run_scenario("fig3", out_dir=tmp_path)
    sim = report["simulation"]
    assert sim["verdict"] == "converged" and sim["nearest_equilibrium"] == "e0"
    assert sim["limit"]["x"] == pytest.approx(750, rel=1e-3)
    assert report["reproduction"]["op"] == "r0_closed_form"
    assert report["reproduction"]["spectral"]["r0"] == pytest.approx(report["reproduction"]["r0"], rel=1e-10)
    assert any(n.startswith("r0: computed") for n in report["notes"])
    assert json.loads((tmp_path / "report.json").read_text()) == report
    assert (tmp_path / "trajectory.csv").exists()


def test_fig5_report():
    report = run_scenario("fig5")
    e2 = report["equilibria"]["e2"]
    assert e2["residual"]["scaled"] < 1e-9
    assert report["simulation"]["verdict"] == "converged"
    assert report["simulation"]["nearest_equilibrium"] == "e2"


def test_fig9_oscillates():
    assert run_scenario("fig9")["simulation"]["verdict"] == "oscillating"


def test_every_number_names_its_operation():
    report = run_report(scenario_input(get("case-1"), t_end=3000), simulate_=False)
    for key in ("reproduction", "equilibria", "stability", "critical", "hopf"):
        assert "op" in report[key]
    assert report["critical"]["tau0"] == pytest.approx(51.27386, rel=1e-6)
    assert report["hopf"]["direction"] == "supercritical"
    assert report["simulation"] is None


def test_reports_and_csv_are_byte_identical(tmp_path):
    run = scenario_input(get("fig12"), t_end=500)
    run_report(run, tmp_path / "a")
    run_report(run, tmp_path / "b")
    for name in ("report.json", "trajectory.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_svg_outputs(tmp_path):
    from hivhopf.pipeline import Outputs
    run = scenario_input(get("fig3"), t_end=200, outputs=Outputs(svg=True, stride=10))
    run_report(run, tmp_path)
    names = sorted(p.name for p in tmp_path.glob("*.svg"))
    assert names == ["p.svg", "v.svg", "x.svg", "xpy.svg", "y.svg", "z.svg"]
    text = (tmp_path / "x.svg").read_text()
    assert 'viewBox="0 0 800 500"' in text and "<polyline" in text
    assert len((tmp_path / "trajectory.csv").read_text().splitlines()) == 2002


def test_nice_ticks_are_round():
    ticks = svg.nice_ticks(0.0, 2000.0)
    assert ticks == [0, 500, 1000, 1500, 2000]
    for v in svg.nice_ticks(0.013, 0.87):
        m = re.fullmatch(r"0\.\d", f"{v:.1f}")
        assert m and abs(v - round(v, 1)) < 1e-12


def test_scan_case1_contains_analytic_delay():
    s = get("case-1")
    out = scan_tau3(s.params, s.scan.sim, s.scan.lo, s.scan.hi, s.scan.tol, s.expected)
    assert out["width"] <= 1
    assert out["analytic"]["inside"]
    assert out["analytic"]["relative_gap"] < 0.02


@pytest.mark.slow
def test_scan_case2_annotated():
    s = get("case-2")
    out = scan_tau3(s.params, s.scan.sim, s.scan.lo, s.scan.hi, s.scan.tol, s.expected)
    assert "analytic τ₀ unavailable: τ₁, τ₂ > 0" in out["notes"]
    assert "analytic" not in out
    assert out["numeric_crossing"]["inside"]


def test_scan_rejects_equal_ends():
    s = get("case-1")
    with pytest.raises(ScanError):
        scan_tau3(s.params, s.scan.sim, 50, 50, 1)


def test_sweep_delay_lowers_r0():
    rows = sweep(get("fig3").params, "tau1", [0, 0.5, 1])
    r0 = [r["r0"] for r in rows]
    assert r0[0] > r0[1] > r0[2]
    assert [r["value"] for r in rows] == [0, 0.5, 1]


def test_sweep_c_raises_r1():
    rows = sweep(get("case-1").params, "c", [0.005, 0.01, 0.02])
    r1 = [r["r1"] for r in rows]
    assert r1[0] < r1[1] < r1[2]
    assert np.allclose(np.array(r1) / r1[0], [1, 2, 4])
    assert all(r["tau0"] is not None or r["error"] for r in rows)


def test_sweep_empty_and_bad_rows():
    assert sweep(Parameters(), "c", []) == []
    rows = sweep(Parameters(), "rho", [0.5, 1.5])
    assert rows[0]["error"] is None
    assert "rho in (0,1)" in rows[1]["error"]
    with pytest.raises(ConfigError):
        sweep(Parameters(), "gamma", [1])
