import json
from fractions import Fraction

import pytest

from twistrot.cli import EXIT_CONFIG, EXIT_MODULE, INTERVAL_HEADER, main
from twistrot.maps import standard_map
from twistrot.pseudoorbit import revalidate
from twistrot.rotation import plateau_detect, tongue_scan

FLAT = "k=1; phi1=0; phi2=0"
STD = "a=0.5; k=1; phi1=a/(2*pi)*sin(2*pi*x); phi2=a/(2*pi)*sin(2*pi*x)"


def run(tmp_path, *args, name="out"):
    out = tmp_path / name
    code = main([*args, "--out", str(out)])
    return code, out


def test_interval_integrable(tmp_path, capsys):
    code, out = run(tmp_path, "interval", "--map", FLAT + "; t=0.3", "--grid", "4", "4", "--n", "200", "--certify-qmax", "10", "--fibers", "8")
    assert code == 0
    lines = (out / "interval.csv").read_text().splitlines()
    assert lines[0] == ",".join(INTERVAL_HEADER)
    rows = {r.split(",")[0]: r.split(",") for r in lines[1:]}
    inner = rows["inner"]
    assert float(inner[1]) == pytest.approx(0.3) and float(inner[2]) == pytest.approx(0.3)
    outer = rows["outer"]
    assert 0.3 - 0.1 <= float(outer[1]) <= 0.3 <= float(outer[2]) <= 0.3 + 0.1
    cfg = json.loads((out / "config.json").read_text())
    assert cfg["command"] == "interval" and "threads" not in cfg["run"]
    assert "inner within outer: yes" in capsys.readouterr().out


def test_interval_standard_inner_inside_outer(tmp_path):
    code, _ = run(tmp_path, "interval", "--map", STD, "--grid", "8", "8", "--n", "2000", "--certify-qmax", "4", "--fibers", "32")
    assert code == 0


@pytest.mark.parametrize(
    "args",
    [
        ["interval", "--map", "k=1; phi1=sin(x); phi2=0"],
        ["interval", "--map", FLAT, "--n", "-3"],
        ["certify", "--map", FLAT, "--eps-ladder", "0.1", "0.2"],
        ["tongues", "--map", FLAT, "--t-min", "0.2", "--t-max", "0.1"],
        ["interval"],
        ["bogus"],
        ["interval", "--map", FLAT, "--map-file", "x.txt"],
    ],
)
def test_config_errors_exit_64(tmp_path, args):
    assert run(tmp_path, *args)[0] == EXIT_CONFIG


def test_unknown_config_key(tmp_path):
    cfg = tmp_path / "c.toml"
    cfg.write_text('[map]\ntext = "k=1; phi1=0; phi2=0"\n[interval]\nbogus = 1\n')
    assert run(tmp_path, "interval", "--config", str(cfg))[0] == EXIT_CONFIG


def test_config_file_and_flag_override(tmp_path):
    cfg = tmp_path / "c.toml"
    cfg.write_text('[map]\ntext = "k=1; phi1=0; phi2=0; t=-0.3"\n[certify]\np = 0\nq = 1\n')
    code, out = run(tmp_path, "certify", "--config", str(cfg))
    assert code == 0
    code, _ = run(tmp_path, "certify", "--config", str(cfg), "--map", FLAT + "; t=0.3", name="b")
    assert code == 1


def test_certify_exit_codes_and_round_trip(tmp_path):
    code, out = run(tmp_path, "certify", "--map", FLAT + "; t=-0.3")
    assert code == 0
    kind, ok, clearance = revalidate(out / "certificate.txt")
    assert kind == "free-curve" and ok and clearance >= 0.2
    code, out = run(tmp_path, "certify", "--map", FLAT + "; t=0.3", name="up")
    assert code == 1
    kind, ok, _ = revalidate(out / "certificate.txt")
    assert kind == "climbing-path" and ok


def test_certify_indeterminate(tmp_path):
    code, out = run(tmp_path, "certify", "--map", FLAT + "; t=-0.3", "--eps-ladder", "0.01", "--cell-cap", "10")
    assert code == 2
    assert "indeterminate" in (out / "certificate.txt").read_text().splitlines()[0]


def test_certify_at_plateau_midpoint(tmp_path):
    rows = tongue_scan(standard_map(0.9), (-0.2, 0.0), 0.02, n=4000, grid=(12, 12), qmax=16)
    plats = [p for p in plateau_detect(rows, target=Fraction(0)) if p.side == "upper"]
    assert plats
    mid = round(plats[0].midpoint, 6)
    code, _ = run(tmp_path, "certify", "--map", f"a=0.9; k=1; phi1=a/(2*pi)*sin(2*pi*x); phi2=a/(2*pi)*sin(2*pi*x); t={mid}")
    assert code == 0


def test_tongues_header_and_summary(tmp_path):
    code, out = run(tmp_path, "tongues", "--map", FLAT, "--t-min", "0", "--t-max", "0.3", "--step", "0.1", "--n", "100", "--grid", "4", "4")
    assert code == 0
    lines = (out / "tongues.csv").read_text().splitlines()
    assert lines[0] == "t,lower,upper,lower_radius,upper_radius,lower_snap,upper_snap,locked"
    assert len(lines) == 5
    assert "violation" in (out / "summary.txt").read_text()


def test_orbits_census(tmp_path):
    code, out = run(tmp_path, "orbits", "--map", STD)
    assert code == 0
    lines = (out / "orbits.csv").read_text().splitlines()
    assert lines[0] == "s,p,q,x,y,kind,index,lambda_re,lambda_im,residual"
    assert len(lines) == 3
    assert "index sum 0" in (out / "summary.txt").read_text()


def test_manifolds_module_failure(tmp_path):
    # the integrable map has no isolated saddle
    assert run(tmp_path, "manifolds", "--map", FLAT)[0] == EXIT_MODULE


def test_manifolds_artifacts(tmp_path):
    code, out = run(
        tmp_path, "manifolds", "--map", "a=0.9; k=1; phi1=a/(2*pi)*sin(2*pi*x); phi2=a/(2*pi)*sin(2*pi*x); t=-0.07",
        "--arclength", "6", "--attractor-iters", "2",
    )
    assert code == 0
    svg = (out / "manifolds.svg").read_text()
    for layer in ("gamma", "iterates", "unstable", "stable", "crossings"):
        assert f'<g id="{layer}"' in svg
    assert (out / "crossings.csv").read_text().startswith("a,b,x,y,transverse")


@pytest.mark.parametrize(
    "args",
    [
        ["interval", "--map", STD, "--grid", "6", "6", "--n", "500", "--certify-qmax", "3", "--fibers", "16"],
        ["certify", "--map", FLAT + "; t=0.3"],
        ["tongues", "--map", STD, "--t-min", "0", "--t-max", "0.04", "--step", "0.02", "--n", "500", "--grid", "6", "6"],
        ["orbits", "--map", STD, "--q", "2", "--p", "0", "--grid", "16"],
        ["manifolds", "--map", STD, "--arclength", "3", "--attractor-iters", "0"],
    ],
)
def test_byte_determinism(tmp_path, args):
    _, out = run(tmp_path, *args, "--threads", "1")
    first = out.rename(tmp_path / "first")
    run(tmp_path, *args, "--threads", "2")
    files = sorted(p.name for p in first.iterdir())
    assert files == sorted(p.name for p in out.iterdir())
    for name in files:
        assert (first / name).read_bytes() == (out / name).read_bytes(), name


def test_threads_env(tmp_path, monkeypatch):
    monkeypatch.setenv("TWISTROT_THREADS", "zero")
    assert run(tmp_path, "orbits", "--map", STD)[0] == EXIT_CONFIG
