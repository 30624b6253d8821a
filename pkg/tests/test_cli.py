import json
import os

import numpy as np
import pytest

from twinforge.cli import (EXIT_INVALID_INPUT, EXIT_OK, EXIT_STAGE_FAILURE,
                           build_pipeline_config, main)
from twinforge.errors import RejectedInput
from twinforge.fileio import save_mask_pgm
from twinforge.camera import BinaryMask
from twinforge.scene import load_scene_spec


@pytest.fixture(scope="module")
def scene_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("scene")
    rc = main(["gen-scene", "--task", "cube-onto-cube", "--seed", "3",
               "--out", str(out)])
    assert rc == EXIT_OK
    return out


def test_build_pipeline_config_sections():
    cfg = build_pipeline_config({"align": {"rotation_count": 24},
                                 "sim": {"surface_samples": 500},
                                 "grasp_top_k": 10})
    assert cfg.align.rotation_count == 24
    assert cfg.sim.surface_samples == 500
    assert cfg.grasp_top_k == 10
    with pytest.raises(RejectedInput):
        build_pipeline_config({"align": {"bogus": 1}})
    with pytest.raises(RejectedInput):
        build_pipeline_config({"bogus": 1})


def test_gen_scene_writes_spec(scene_dir):
    spec = load_scene_spec(scene_dir / "scene.json")
    assert spec.goal[0] == "on_top"


def test_gen_scene_requires_out():
    assert main(["gen-scene", "--task", "cube-onto-cube"]) == EXIT_INVALID_INPUT


def test_unknown_task_is_invalid_input(tmp_path):
    rc = main(["gen-scene", "--task", "juggle", "--out", str(tmp_path)])
    assert rc == EXIT_INVALID_INPUT


def test_unknown_command_is_invalid_input():
    assert main(["frobnicate"]) == EXIT_INVALID_INPUT


def test_missing_scene_file(tmp_path):
    rc = main(["align", "--scene", str(tmp_path / "nope.json"),
               "--out", str(tmp_path)])
    assert rc == EXIT_INVALID_INPUT


def test_bad_config_keys(scene_dir, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"align": {"wat": 1}}))
    rc = main(["align", "--scene", str(scene_dir / "scene.json"),
               "--out", str(tmp_path), "--config", str(cfg)])
    assert rc == EXIT_INVALID_INPUT
    cfg.write_text("[1, 2]")
    rc = main(["align", "--scene", str(scene_dir / "scene.json"),
               "--out", str(tmp_path), "--config", str(cfg)])
    assert rc == EXIT_INVALID_INPUT


def test_align_verb(scene_dir, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"align": {"rotation_count": 24}}))
    out = tmp_path / "align_out"
    rc = main(["align", "--scene", str(scene_dir / "scene.json"),
               "--out", str(out), "--config", str(cfg)])
    assert rc == EXIT_OK
    doc = json.loads((out / "alignment.json").read_text())
    assert set(doc) == {"cube", "base"}
    for rec in doc.values():
        assert {"pose_world", "rmse", "converged", "scale",
                "coarse_similarity", "material_known"} <= set(rec)


def test_simulate_verb_with_explicit_pose(scene_dir, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"align": {"rotation_count": 24},
                               "sim": {"render_size": 64,
                                       "surface_samples": 600}}))
    out = tmp_path / "sim_out"
    rc = main(["simulate", "--scene", str(scene_dir / "scene.json"),
               "--out", str(out), "--config", str(cfg),
               "--pose", "1,0,0,0,0,0,0.15"])
    assert rc == EXIT_OK
    doc = json.loads((out / "simulate.json").read_text())
    assert {"stable", "penetration", "settled_poses", "topple_steps"} <= set(doc)
    assert os.path.exists(out / "outcome_rgb.ppm")


def test_simulate_rejects_short_pose(scene_dir, tmp_path):
    rc = main(["simulate", "--scene", str(scene_dir / "scene.json"),
               "--out", str(tmp_path), "--pose", "1,0,0"])
    assert rc == EXIT_INVALID_INPUT


def test_bench_align_verb(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"trials": 1,
                               "primitives": ["box:0.07,0.05,0.04"],
                               "align": {"rotation_count": 24}}))
    out = tmp_path / "bench_out"
    rc = main(["bench-align", "--out", str(out), "--config", str(cfg)])
    assert rc == EXIT_OK
    text = (out / "benchmark.csv").read_text().strip().splitlines()
    assert len(text) == 3  # header + one object x two arms


def test_plan_stage_failure_exit_code(tmp_path):
    rc = main(["gen-scene", "--task", "cube-onto-cube", "--seed", "4",
               "--out", str(tmp_path)])
    assert rc == EXIT_OK
    spec = load_scene_spec(tmp_path / "scene.json")
    empty = BinaryMask(np.zeros((spec.intrinsics.height,
                                 spec.intrinsics.width), dtype=bool))
    save_mask_pgm(spec.path(spec.manipulated.mask), empty)
    out = tmp_path / "plan_out"
    rc = main(["plan", "--scene", str(tmp_path / "scene.json"),
               "--out", str(out)])
    assert rc == EXIT_STAGE_FAILURE
    doc = json.loads((out / "report.json").read_text())
    assert doc["status"] == "failure"
