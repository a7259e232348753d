import json
import math

import numpy as np
import pytest

from mobmanip.arm_kin import fk_transform
from mobmanip.cli import main
from mobmanip.io import data_path


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_fk_matches_library(capsys):
    code, out, _ = run(capsys, "fk", "--q", "0,0,0,0,0,0")
    assert code == 0
    pose = json.loads(out)["pose"]
    np.testing.assert_allclose(np.array(pose["matrix"]), fk_transform(np.zeros(6)).matrix)


def test_ik_round_trip_and_unreachable(capsys):
    q = [0.3, -1.1, 1.4, -0.6, 1.2, 0.4]
    t = fk_transform(q)
    code, out, _ = run(capsys, "ik", "--pose", json.dumps(t.to_dict()), "--q-ref", ",".join(map(str, q)))
    assert code == 0
    d = json.loads(out)
    assert len(d["solutions"]) == 8
    np.testing.assert_allclose(d["selected"], q, atol=1e-9)
    code, _, err = run(capsys, "ik", "--xyz", "2,0,0")
    assert code == 1 and err.startswith("E_UNREACHABLE") and err.count("\n") == 1


def test_workspace(capsys, tmp_path):
    code, out, _ = run(capsys, "workspace", "--samples", "5000", "--seed", "2", "--points", str(tmp_path / "p.csv"))
    d = json.loads(out)
    assert code == 0 and d["samples"] == 5000 and 0.5 < d["max_reach_m"] < 1.0
    assert (tmp_path / "p.csv").read_text().startswith("x,y,z")


def test_base_wheels(capsys):
    code, out, _ = run(capsys, "base-wheels", "--velocity", "1,2,3", "--wheel-radius", "0.1", "--offset", "0.5")
    w = json.loads(out)["wheels"]
    assert code == 0 and [w[k] for k in ("v1", "v2", "v3", "v4")] == pytest.approx([-25, 45, 5, 15])
    code, out, _ = run(capsys, "base-wheels", "--wheels", "1,0,0,0", "--wheel-radius", "0.1", "--offset", "0.5")
    assert json.loads(out)["residual"] == pytest.approx(0.5)


def test_grasp_adapt(capsys):
    obj = {"r": [1, 0, 0, 0, -1, 0, 0, 0, -1], "t": [0.5, 0, 0.1]}
    grasp = {"r": [1, 0, 0, 0, 1, 0, 0, 0, 1], "t": [0, 0, 0.05]}
    code, out, _ = run(capsys, "grasp-adapt", "--object", json.dumps(obj), "--grasp", json.dumps(grasp))
    assert code == 0
    np.testing.assert_allclose(json.loads(out)["gripper"]["t"], [0.5, 0, 0.05])


def test_simulate_report_and_pose_pipeline(capsys, tmp_path):
    scene = str(data_path("scene_closeup.json"))
    out1, out2 = tmp_path / "a.json", tmp_path / "b.json"
    dump = tmp_path / "dump"
    assert run(capsys, "simulate", "--scene", scene, "--seed", "7", "--out", str(out1), "--dump-dir", str(dump))[0] == 0
    assert run(capsys, "simulate", "--scene", scene, "--seed", "7", "--out", str(out2))[0] == 0
    assert out1.read_bytes() == out2.read_bytes()
    code, text, _ = run(capsys, "report", str(out1))
    assert code == 0 and "Tracking accuracy" in text

    corr = tmp_path / "c.csv"
    assert run(capsys, "match", "--template", str(dump / "template.pgm"), "--frame", str(dump / "frame.pgm"), "--out", str(corr))[0] == 0
    code, out, _ = run(
        capsys, "estimate-pose", "--correspondences", str(corr), "--depth", str(dump / "depth.pgm"),
        "--template", str(dump / "template.json"), "--camera", str(dump / "camera.json"),
    )
    assert code == 0
    pose = json.loads(out)
    np.testing.assert_allclose(pose["position"], [0.01, 0.0, 0.32], atol=2e-3)
    assert math.degrees(pose["euler"]["phi"]) == pytest.approx(math.degrees(0.3), abs=1.0)
    code, _, _ = run(capsys, "estimate-pose", "--correspondences", str(dump / "correspondences.csv"), "--depth", str(dump / "depth.pgm"), "--scene", scene)
    assert code == 0
    code, out2, _ = run(
        capsys, "estimate-pose", "--template-image", str(dump / "template.pgm"), "--frame-image", str(dump / "frame.pgm"),
        "--depth", str(dump / "depth.pgm"), "--scene", scene, "--method", "kdtree",
    )
    assert code == 0 and json.loads(out2)["position"] == pose["position"]
    code, _, err = run(capsys, "estimate-pose", "--depth", str(dump / "depth.pgm"), "--scene", scene)
    assert code == 2 and err.startswith("E_USAGE")


def test_no_consensus_exit_1(capsys, tmp_path):
    rng = np.random.default_rng(0)
    corr = tmp_path / "c.csv"
    corr.write_text("u_t,v_t,u_f,v_f,distance\n" + "\n".join(",".join(map(str, r)) for r in rng.uniform(0, 400, (30, 5))))
    scene = str(data_path("scene_static.json"))
    dump = tmp_path / "d"
    run(capsys, "simulate", "--scene", scene, "--out", str(tmp_path / "m.json"), "--dump-dir", str(dump))
    code, _, err = run(capsys, "estimate-pose", "--correspondences", str(corr), "--depth", str(dump / "depth.pgm"), "--scene", scene)
    assert code == 1 and err.startswith("E_NO_CONSENSUS")


@pytest.mark.parametrize(
    "argv",
    [[], ["bogus"], ["fk"], ["fk", "--q", "1,2"], ["simulate", "--scene", "missing.json"], ["report", "nope.json"], ["ik"]],
)
def test_usage_errors_exit_2(capsys, argv):
    code, _, err = run(capsys, *argv)
    assert code == 2 and err.count("\n") == 1 and err.split(":")[0].startswith("E_")
