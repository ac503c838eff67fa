import json

import pytest

from hivhopf.cli import main


def run(capsys, *argv):
    try:
        code = main(list(argv))
    except SystemExit as exc:  # argparse rejects before dispatch
        code = exc.code
    out, err = capsys.readouterr()
    return code, out, err


def test_list(capsys):
    code, out, _ = run(capsys, "list")
    assert code == 0
    assert out.splitlines()[0].startswith("fig3\t")


def test_simulate_writes_outputs(tmp_path, capsys):
    code, out, _ = run(capsys, "simulate", "--scenario", "fig3", "--t-end", "300", "--out", str(tmp_path))
    assert code == 0
    report = json.loads(out)
    assert report["simulation"]["config"]["t_end"] == 300
    assert (tmp_path / "trajectory.csv").read_text().startswith("t,x,p,y,v,z\n")


def test_run_alias(tmp_path, capsys):
    code, out, _ = run(capsys, "run", "fig3", "--out", str(tmp_path))
    assert code == 0 and json.loads(out)["simulation"]["verdict"] == "converged"


def test_analyze_from_config(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"params": {"lambda": 3, "c": 0.01}}))
    code, out, _ = run(capsys, "analyze", "--config", str(cfg), "--tau3", "60")
    assert code == 0
    report = json.loads(out)
    assert report["simulation"] is None
    assert report["stability"]["e2"]["unstable_roots"] == 2


def test_usage_errors_exit_one(tmp_path, capsys):
    assert run(capsys, "bogus")[0] == 1
    assert run(capsys, "simulate")[0] == 1
    assert run(capsys, "simulate", "--scenario", "nope")[0] == 1
    assert run(capsys, "scan", "--scenario", "case-1", "--lo", "50", "--hi", "50")[0] == 1
    bad = tmp_path / "b.json"
    bad.write_text('{"params": {"c": "x"}}')
    code, _, err = run(capsys, "simulate", "--config", str(bad))
    assert code == 1 and "params.c" in err
    bad.write_text('{"params": {"rho": 1.5}}')
    assert run(capsys, "analyze", "--config", str(bad))[0] == 1
    assert run(capsys, "sweep", "--scenario", "fig3", "--param", "c", "--values", "a,b")[0] == 1


def test_computation_errors_exit_two(capsys):
    code, _, err = run(capsys, "scan", "--scenario", "case-1", "--lo", "60", "--hi", "70")
    assert code == 2 and "stable side" in err


def test_sweep_empty_grid(capsys):
    code, out, _ = run(capsys, "sweep", "--scenario", "fig3", "--param", "c", "--values", "")
    assert code == 0 and json.loads(out)["rows"] == []


def test_scan_uses_preset_bounds(tmp_path, capsys):
    code, out, _ = run(capsys, "scan", "--scenario", "case-1", "--out", str(tmp_path))
    assert code == 0
    result = json.loads(out)
    assert result["analytic"]["inside"]
    assert json.loads((tmp_path / "scan.json").read_text()) == result


@pytest.mark.parametrize("argv", [["--help"], ["simulate", "--help"]])
def test_help_exits_zero(argv, capsys):
    with pytest.raises(SystemExit) as info:
        main(argv)
    assert info.value.code == 0
