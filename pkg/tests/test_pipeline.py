import json

import numpy as np
import pytest

from twinforge.errors import NoFeasibleGrasp, RejectedInput
from twinforge.fileio import save_mask_pgm
from twinforge.camera import BinaryMask
from twinforge.pipeline import (STAGES, PipelineConfig, grasp_with_retry,
                                run_and_write, run_pipeline)
from twinforge.scene import load_scene_spec
from twinforge.synth import generate_synthetic_scene


def test_stage_names():
    assert STAGES == ("segmentation-load", "grasp", "coarse-align",
                      "fine-register", "region", "sampling", "simulation",
                      "result-check", "gp-rank", "select")


def test_pipeline_config_defaults():
    cfg = PipelineConfig()
    assert cfg.align.rotation_count == 384
    assert cfg.sim.render is False
    assert cfg.grasp_top_k == 1000
    assert cfg.grasp_proximity == 0.01


class _Cand:
    def __init__(self, confidence, ok):
        self.confidence = confidence
        self.ok = ok


def test_grasp_with_retry_picks_best_feasible():
    batches = [[_Cand(0.9, False), _Cand(0.5, True)],
               [_Cand(0.8, True)]]
    calls = []

    def provider(attempt):
        calls.append(attempt)
        return batches[attempt]

    chosen = grasp_with_retry(provider, lambda c: c.ok, max_attempts=3)
    assert chosen.confidence == 0.5  # best feasible of the first batch
    assert calls == [0]


def test_grasp_with_retry_exhausts_attempts():
    def provider(attempt):
        return [_Cand(0.9, False)]

    with pytest.raises(NoFeasibleGrasp):
        grasp_with_retry(provider, lambda c: c.ok, max_attempts=2)
    with pytest.raises(RejectedInput):
        grasp_with_retry(provider, lambda c: c.ok, max_attempts=0)


def test_pipeline_failure_report_on_empty_mask(tmp_path):
    scene_path = generate_synthetic_scene("cube-onto-cube", str(tmp_path), seed=1)
    spec = load_scene_spec(scene_path)
    # corrupt the manipulated object's mask: pipeline must fail cleanly
    empty = BinaryMask(np.zeros((spec.intrinsics.height,
                                 spec.intrinsics.width), dtype=bool))
    save_mask_pgm(spec.path(spec.manipulated.mask), empty)

    out_dir = tmp_path / "out"
    result = run_and_write(spec, str(out_dir))
    rep = result.report
    assert rep.status == "failure"
    assert rep.failed_stage == "segmentation-load"
    assert "empty-mask" in rep.failure_reason
    assert rep.stages == ["segmentation-load"]

    doc = json.loads((out_dir / "report.json").read_text())
    assert doc["status"] == "failure"
    assert doc["failed_stage"] == "segmentation-load"


def test_pipeline_seed_defaults_to_spec(tmp_path):
    scene_path = generate_synthetic_scene("cube-onto-cube", str(tmp_path), seed=9)
    spec = load_scene_spec(scene_path)
    empty = BinaryMask(np.zeros((spec.intrinsics.height,
                                 spec.intrinsics.width), dtype=bool))
    save_mask_pgm(spec.path(spec.manipulated.mask), empty)
    rep = run_pipeline(spec).report
    assert rep.seed == 9
    rep2 = run_pipeline(spec, seed=123).report
    assert rep2.seed == 123
