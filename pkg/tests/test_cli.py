import json
import subprocess
import sys

import numpy as np
import pytest

from fblab.cli import (
    RUN_KEYS, RunConfig, SOLVER_KEYS, build_parser, generate, load_config, main, monotone,
    refinement_study, report,
)
from fblab.errors import BadConfig, MissingArtifacts
from fblab.offio import read_off

SMALL = ["--resolution", "400"]


def write_ini(path, text):
    path.write_text(text)
    return str(path)


# -- configuration ---------------------------------------------------------------

def test_defaults():
    c = load_config(env={})
    assert c == RunConfig()
    assert c.seed == 42 and c.solver.seed == 42


def test_precedence(tmp_path):
    ini = write_ini(tmp_path / "c.ini", "[run]\nseed = 5\nresolution = 900\n[solver]\nmax_iter = 7\n")
    c = load_config(ini, env={})
    assert (c.seed, c.resolution, c.solver.max_iter) == (5, 900, 7)
    c = load_config(ini, env={"FBMS_SEED": "9"})
    assert c.seed == 9 and c.solver.seed == 9
    c = load_config(ini, {"seed": 11, "max_iter": 3}, env={"FBMS_SEED": "9"})
    assert (c.seed, c.solver.max_iter, c.resolution) == (11, 3, 900)


def test_config_roundtrip(tmp_path):
    c = load_config(overrides={"body": "ball:0.5", "checks": "theorem1,corollary3",
                               "volume_target": 0.25}, env={})
    ini = write_ini(tmp_path / "r.ini", c.to_ini())
    assert load_config(ini, env={}) == c


def test_bad_config(tmp_path):
    with pytest.raises(BadConfig):
        load_config(write_ini(tmp_path / "a.ini", "[run]\ncolour = red\n"), env={})
    with pytest.raises(BadConfig):
        load_config(write_ini(tmp_path / "b.ini", "[extra]\nx = 1\n"), env={})
    with pytest.raises(BadConfig):
        load_config(overrides={"resolution": 10}, env={})
    with pytest.raises(BadConfig):
        load_config(overrides={"checks": "theorem9"}, env={})
    with pytest.raises(BadConfig):
        load_config(str(tmp_path / "missing.ini"), env={})


def test_every_flag_has_a_config_key():
    p = build_parser()
    run = p._subparsers._group_actions[0].choices["run"]
    dests = {a.dest for a in run._actions} - {"help", "config"}
    assert dests <= set(RUN_KEYS) | set(SOLVER_KEYS)


# -- generation --------------------------------------------------------------------

@pytest.mark.parametrize("surface", ["equatorial-disk", "tilted-disk:30", "spherical-cap:1.0"])
def test_generate(surface):
    mesh, body = generate(RunConfig(surface=surface, resolution=10_000))
    assert (mesh.genus, mesh.r) == (0, 1)
    assert 9000 < mesh.n_vertices < 11000
    assert np.abs(body.psi(mesh.vertices[mesh.boundary_vertices])).max() <= 1e-12


def test_generate_tilted_plane():
    mesh, _ = generate(RunConfig(surface="tilted-disk:30", resolution=400))
    n = np.array([0.0, -np.sin(np.radians(30)), np.cos(np.radians(30))])
    assert np.abs(mesh.vertices @ n).max() < 1e-12


def test_generate_bad_surface():
    with pytest.raises(BadConfig):
        generate(RunConfig(surface="torus"))
    with pytest.raises(BadConfig):
        generate(RunConfig(surface="spherical-cap:1", body="ellipsoid:2,1,1"))


def test_generate_verb(tmp_path):
    assert main(["generate", "--out", str(tmp_path), *SMALL]) == 0
    m = read_off(tmp_path / "initial.off")
    assert m.r == 1
    assert json.loads((tmp_path / "body.json").read_text())["kind"] == "ball"


# -- run -------------------------------------------------------------------------------

def test_run_passes_and_is_deterministic(tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["run", "--out", str(a), *SMALL]) == 0
    assert main(["run", "--out", str(b), *SMALL]) == 0
    out = capsys.readouterr().out
    assert out.count("PASS") == 6
    names = sorted(p.name for p in a.iterdir())
    assert names == sorted(["certificate_corollary2.json", "certificate_corollary3.json",
                            "certificate_theorem1.json", "config.ini", "initial.off", "metadata.json",
                            "solve_log.jsonl", "spectrum.csv", "surface.off"])
    # metadata holds timestamps; config.ini records the output directory
    for name in names:
        if name not in ("metadata.json", "config.ini"):
            assert (a / name).read_bytes() == (b / name).read_bytes(), name
    rec = json.loads((a / "solve_log.jsonl").read_text().splitlines()[0])
    assert set(rec) == {"iter", "area", "grad_norm", "fb_residual"}


def test_seed_changes_perturbation(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    main(["generate", "--out", str(a), *SMALL])
    main(["run", "--out", str(a), "--check", "corollary2", "--seed", "1", *SMALL])
    main(["run", "--out", str(b), "--check", "corollary2", "--seed", "2", *SMALL])
    assert (a / "initial.off").read_bytes() == (b / "initial.off").read_bytes()
    log_a = (a / "solve_log.jsonl").read_text()
    log_b = (b / "solve_log.jsonl").read_text()
    assert log_a != log_b


def test_ellipsoid_aborts_before_solving(tmp_path, capsys):
    code = main(["run", "--check", "theorem1", "--body", "ellipsoid:2,1,1", "--out", str(tmp_path / "e"), *SMALL])
    assert code == 2
    assert "NotStrictlyConvex-for-c=1" in capsys.readouterr().err
    assert not (tmp_path / "e").exists()


def test_cap_run(tmp_path):
    code = main(["run", "--surface", "spherical-cap:1.0", "--check", "theorem2,corollary1",
                 "--resolution", "4000", "--out", str(tmp_path)])
    assert code == 0
    cert = json.loads((tmp_path / "certificate_theorem2.json").read_text())
    assert cert["verdict"] == "PASS"


# -- report ----------------------------------------------------------------------------

def test_report_empty(tmp_path):
    with pytest.raises(MissingArtifacts):
        report(tmp_path)
    assert main(["report", str(tmp_path)]) == 2


def test_report_rows(tmp_path, capsys):
    run = tmp_path / "disk"
    main(["run", "--out", str(run), "--check", "corollary2", *SMALL])
    text, fail = report(tmp_path)
    assert not fail
    assert len(text.splitlines()) == 2 and text.splitlines()[1].rstrip().endswith("PASS")
    # a FAIL row is highlighted and the verb exits 1
    bad = json.loads((run / "certificate_corollary2.json").read_text())
    bad["verdicts"]["area_bound"] = "FAIL"
    (tmp_path / "bad").mkdir()
    (tmp_path / "bad" / "certificate_corollary2.json").write_text(json.dumps(bad))
    text, fail = report(tmp_path)
    assert fail
    rows = text.splitlines()[1:]
    assert sum(r.startswith("!!") for r in rows) == 1
    assert "FAIL: area_bound" in text
    capsys.readouterr()
    assert main(["report", str(tmp_path)]) == 1


# -- refinement study ------------------------------------------------------------------

def test_refinement_study_monotone():
    rows = refinement_study(RunConfig(resolution=2500), 3)
    assert [r["vertices"] for r in rows] == sorted(r["vertices"] for r in rows)
    assert monotone(rows, "length_error") and monotone(rows, "area_error")
    # second order in h for the polygon length
    assert rows[-1]["length_error"] < rows[0]["length_error"] / 8


def test_refine_verb_writes_csv(tmp_path, capsys):
    assert main(["refine-study", "--resolution", "600", "--refine", "2", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "refinement.csv").read_text().startswith("resolution,")
    assert "monotone decrease: PASS" in capsys.readouterr().out


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "fblab", "--help"], capture_output=True, text=True)
    assert r.returncode == 0 and "refine-study" in r.stdout
