import json
from pathlib import Path

import numpy as np
import pytest

from greendyn import repro
from greendyn.cli import SUBCOMMANDS, main
from greendyn.mapio import load_map_file, map_to_json


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_repro_degree_drop(capsys):
    code, out, _ = run(capsys, "repro", "degree-drop")
    assert code == 0 and "[2, 3]" in out


def test_repro_green_c0(capsys):
    code, out, _ = run(capsys, "repro", "green-c0")
    assert code == 0 and "PASS" in out


def test_repro_mismatch_exit_code(capsys, monkeypatch):
    monkeypatch.setitem(repro.CHECKS, "always-fails", lambda: (False, "stored expectation differs"))
    code, out, _ = run(capsys, "repro", "always-fails")
    assert code == 2 and "FAIL" in out


def test_malformed_json(capsys, tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"dim": 2, "components": [')
    code, _, err = run(capsys, "degree-seq", "--map", str(bad))
    assert code == 1 and "invalid JSON" in err


@pytest.mark.parametrize("doc,needle", [({"dim": 3, "components": []}, "dim"),
                                        ({"dim": 1, "components": [[{"exps": [2, 0]}]]}, "components"),
                                        ({"dim": 1, "components": [[{"exps": [2]}], [{"exps": [0, 2]}]]},
                                         "exponent")])
def test_invalid_map_documents(capsys, tmp_path, doc, needle):
    p = tmp_path / "m.json"
    p.write_text(json.dumps(doc))
    code, _, err = run(capsys, "indet", "--map", str(p))
    assert code == 1 and needle in err


def test_usage_errors(capsys):
    assert run(capsys, "no-such-command")[0] == 1
    assert run(capsys, "degree-seq")[0] == 1
    assert run(capsys, "liouville-theta", "--J", "4")[0] == 1
    assert run(capsys, "indet", "--scenario", "fabc", "--params", "a")[0] == 1


def test_every_subcommand_has_help(capsys):
    for name in SUBCOMMANDS:
        with pytest.raises(SystemExit) as exc:
            main([name, "--help"])
        assert exc.value.code == 0
    capsys.readouterr()


def test_dump_map_round_trip_exact(capsys, tmp_path):
    out = tmp_path / "fabc.json"
    code, _, _ = run(capsys, "indet", "--scenario", "fabc", "--params", "a=1/2,b=-3,c=7/3",
                     "--dump-map", str(out))
    assert code == 0
    f = load_map_file(out)
    again = tmp_path / "again.json"
    run(capsys, "indet", "--map", str(out), "--dump-map", str(again))
    assert again.read_text() == out.read_text()
    assert f.inverse is not None
    assert map_to_json(load_map_file(again)) == map_to_json(f)


def test_dump_map_round_trip_float(capsys, tmp_path):
    out = tmp_path / "q.json"
    run(capsys, "indet", "--scenario", "quadratic", "--params", "c=0.1+0.7i", "--dump-map", str(out))
    again = tmp_path / "q2.json"
    run(capsys, "indet", "--map", str(out), "--dump-map", str(again))
    assert again.read_text() == out.read_text()


def test_map_file_with_scenario_key(capsys, tmp_path):
    p = tmp_path / "s.json"
    p.write_text(json.dumps({"scenario": "degree-drop"}))
    code, out, _ = run(capsys, "degree-seq", "--map", str(p), "--depth", "2")
    assert code == 0 and "degrees 2,3" in out


def test_cache_env(capsys, tmp_path, monkeypatch):
    monkeypatch.setenv("GREENDYN_CACHE", str(tmp_path / "cache"))
    a = run(capsys, "degree-seq", "--scenario", "fabc", "--depth", "3")
    b = run(capsys, "degree-seq", "--scenario", "fabc", "--depth", "3")
    assert a == b and "degrees 2,4,8" in a[1]
    assert any((tmp_path / "cache").iterdir())


def test_manifest_rerun_byte_identical(capsys, tmp_path):
    prefix = tmp_path / "run" / "fit"
    code, _, _ = run(capsys, "modulus-fit", "--scenario", "quadratic", "--params", "c=-2",
                     "--region", "window", "--window", "-2,2,-0.1,0.1", "--count", "200",
                     "--out", str(prefix))
    assert code == 0
    manifest = json.loads(Path(f"{prefix}.manifest.json").read_text())
    assert manifest["subcommand"] == "modulus-fit" and manifest["version"]
    assert manifest["config"]["count"] == 200
    first = {p: Path(p).read_bytes() for p in manifest["outputs"]}
    code, _, _ = run(capsys, "rerun", f"{prefix}.manifest.json")
    assert code == 0
    assert {p: Path(p).read_bytes() for p in manifest["outputs"]} == first


@pytest.mark.parametrize("argv,suffixes", [
    (["green-heatmap", "--scenario", "weakly-regular", "--chart", "2", "--res", "24", "--n", "12",
      "--window", "-1,1,-1,1", "--assume-stable"], [".csv", ".pgm"]),
    (["modulus-fit", "--scenario", "quadratic", "--params", "c=0", "--region", "annulus",
      "--radii", "1.5,3", "--count", "100"], ["_pairs.csv", "_fit.csv"]),
])
def test_threads_byte_identical(capsys, tmp_path, argv, suffixes):
    blobs = []
    for threads in ("1", "4"):
        prefix = tmp_path / f"t{threads}"
        assert run(capsys, *argv, "--threads", threads, "--out", str(prefix))[0] == 0
        blobs.append([Path(f"{prefix}{s}").read_bytes() for s in suffixes])
    assert blobs[0] == blobs[1]


def test_stability_gate(capsys):
    code, _, err = run(capsys, "green-eval", "--scenario", "degree-drop", "--point", "1,1,1")
    assert code == 1 and "VIOLATED(2)" in err
    code, out, _ = run(capsys, "green-eval", "--scenario", "degree-drop", "--point", "1,1,1",
                       "--assume-stable")
    assert code == 0 and out.startswith("g_")


def test_green_eval_p1(capsys):
    code, out, _ = run(capsys, "green-eval", "--scenario", "quadratic", "--params", "c=0",
                       "--point", "1,2", "--n", "30")
    assert code == 0
    value = float(out.split()[1])
    assert value == pytest.approx(np.log(2) - 0.5 * np.log(5), abs=1e-9)
    assert "tail_bound" in out


def test_affine_green_point(capsys):
    code, out, _ = run(capsys, "affine-green", "--c", "-2", "--z", "3")
    lines = dict(line.split() for line in out.splitlines())
    assert code == 0 and float(lines["G"]) == pytest.approx(float(lines["oracle"]), abs=1e-14)


def test_heatmap_outputs(capsys, tmp_path):
    prefix = tmp_path / "h"
    code, _, _ = run(capsys, "green-heatmap", "--scenario", "degree-drop", "--chart", "2",
                     "--window", "-0.5,0.5,-0.5,0.5", "--res", "5", "--n", "6", "--assume-stable",
                     "--out", str(prefix))
    assert code == 0
    lines = Path(f"{prefix}.csv").read_text().splitlines()
    assert lines[0] == "x,y,value" and len(lines) == 26
    assert lines[13].endswith(",NaN")
    raw = Path(f"{prefix}.pgm").read_bytes()
    assert raw.startswith(b"P5\n5 5\n65535\n")
    pix = np.frombuffer(raw[len(b"P5\n5 5\n65535\n"):], dtype=">u2").reshape(5, 5)
    assert pix[2, 2] == 0 and pix.max() == 65535
    side = Path(f"{prefix}.pgm.txt").read_text()
    assert "nan_pixels=1" in side


def test_plot_flag(capsys, tmp_path):
    pytest.importorskip("matplotlib")
    prefix = tmp_path / "p"
    code, _, _ = run(capsys, "green-heatmap", "--scenario", "quadratic", "--params", "c=-1", "--res", "16",
                     "--plot", "--out", str(prefix))
    assert code == 0 and Path(f"{prefix}.png").stat().st_size > 0


def test_other_subcommands_smoke(capsys, tmp_path):
    cases = [
        ["stability", "--scenario", "fabc-rotation", "--depth", "20"],
        ["chi-top", "--scenario", "quadratic", "--params", "c=-2", "--sampler", "julia", "--samples", "200"],
        ["beta-est", "--scenario", "weakly-regular", "--count", "20"],
        ["recurrence", "--scenario", "fabc-rotation", "--params", "theta=golden"],
        ["recurrence", "--scenario", "fabc-rotation", "--params", "theta=liouville"],
        ["liouville-theta", "--J", "2"],
        ["torus-density", "--depth", "1"],
    ]
    for i, argv in enumerate(cases):
        code, out, err = run(capsys, *argv, "--out", str(tmp_path / f"c{i}"))
        assert code == 0, (argv, err)
        assert Path(f"{tmp_path / f'c{i}'}.manifest.json").exists()
