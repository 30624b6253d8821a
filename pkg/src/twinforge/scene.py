"""Scene specification and run report serialization.

A scene spec is a JSON file describing one captured tabletop observation:
camera model and pose, image/mesh/mask asset paths, per-object roles and
materials, the manipulation instruction with its placement goal, and the
sampler/workspace configuration. Run reports are versioned JSON documents;
all fields except the "timings" block are deterministic for a fixed spec
and seed.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .camera import CameraIntrinsics
from .errors import RejectedInput
from .geometry import RigidPose

SCENE_SCHEMA_VERSION = 1
REPORT_SCHEMA_VERSION = 1


def pose_to_json(pose: RigidPose):
    return {"rotation": [float(x) for x in pose.rotation],
            "translation": [float(x) for x in pose.translation]}


def pose_from_json(obj) -> RigidPose:
    return RigidPose(np.asarray(obj["rotation"], dtype=float),
                     np.asarray(obj["translation"], dtype=float))


@dataclass(frozen=True)
class ObjectSpec:
    name: str
    role: str                 # manipulated / interactive / static
    mesh: str                 # canonical-frame mesh asset path
    mask: str                 # instance mask image path
    material: str = "default"


@dataclass(frozen=True)
class SceneSpec:
    intrinsics: CameraIntrinsics
    camera_pose: RigidPose    # world_from_camera
    rgb: str
    depth: str
    region_mask: str
    objects: tuple
    instruction: str
    goal: tuple               # (predicate_name, [object names...])
    workspace: tuple          # ((lo x,y,z), (hi x,y,z))
    grasps: str | None = None
    seed: int = 0
    sampler: dict = field(default_factory=dict)
    base_dir: str = "."

    def path(self, rel):
        return os.path.join(self.base_dir, rel)

    @property
    def manipulated(self) -> ObjectSpec:
        return next(o for o in self.objects if o.role == "manipulated")


def load_scene_spec(path) -> SceneSpec:
    with open(path, "r") as f:
        doc = json.load(f)
    if doc.get("schema_version") != SCENE_SCHEMA_VERSION:
        raise RejectedInput(
            f"unsupported scene schema version {doc.get('schema_version')!r}")
    cam = doc["camera"]
    intr = CameraIntrinsics(fx=float(cam["fx"]), fy=float(cam["fy"]),
                            cx=float(cam["cx"]), cy=float(cam["cy"]),
                            width=int(cam["width"]), height=int(cam["height"]))
    objects = tuple(ObjectSpec(o["name"], o["role"], o["mesh"], o["mask"],
                               o.get("material", "default"))
                    for o in doc["objects"])
    if sum(1 for o in objects if o.role == "manipulated") != 1:
        raise RejectedInput("scene must declare exactly one manipulated object")
    goal = doc["goal"]
    ws = doc["workspace"]
    return SceneSpec(
        intrinsics=intr,
        camera_pose=pose_from_json(doc["camera_pose"]),
        rgb=doc["rgb"], depth=doc["depth"], region_mask=doc["region_mask"],
        objects=objects,
        instruction=doc.get("instruction", ""),
        goal=(goal["predicate"], list(goal["args"])),
        workspace=(tuple(ws[0]), tuple(ws[1])),
        grasps=doc.get("grasps"),
        seed=int(doc.get("seed", 0)),
        sampler=dict(doc.get("sampler", {})),
        base_dir=os.path.dirname(os.path.abspath(path)),
    )


def save_scene_spec(path, spec: SceneSpec):
    intr = spec.intrinsics
    doc = {
        "schema_version": SCENE_SCHEMA_VERSION,
        "camera": {"fx": intr.fx, "fy": intr.fy, "cx": intr.cx, "cy": intr.cy,
                   "width": intr.width, "height": intr.height},
        "camera_pose": pose_to_json(spec.camera_pose),
        "rgb": spec.rgb, "depth": spec.depth, "region_mask": spec.region_mask,
        "objects": [{"name": o.name, "role": o.role, "mesh": o.mesh,
                     "mask": o.mask, "material": o.material}
                    for o in spec.objects],
        "instruction": spec.instruction,
        "goal": {"predicate": spec.goal[0], "args": list(spec.goal[1])},
        "workspace": [list(spec.workspace[0]), list(spec.workspace[1])],
        "seed": spec.seed,
        "sampler": spec.sampler,
    }
    if spec.grasps:
        doc["grasps"] = spec.grasps
    with open(path, "w") as f:
        json.dump(doc, f, indent=2, sort_keys=True)
        f.write("\n")


# ---------------------------------------------------------------------------
# Run reports

@dataclass
class RunReport:
    status: str = "success"            # success / failure
    failed_stage: str | None = None
    failure_reason: str | None = None
    stages: list = field(default_factory=list)   # names in execution order
    seed: int = 0
    data: dict = field(default_factory=dict)     # per-stage result payloads
    timings: dict = field(default_factory=dict)  # stage -> seconds (excluded
                                                 # from determinism checks)

    def to_json(self) -> dict:
        return {
            "schema_version": REPORT_SCHEMA_VERSION,
            "status": self.status,
            "failed_stage": self.failed_stage,
            "failure_reason": self.failure_reason,
            "stages": list(self.stages),
            "seed": self.seed,
            "data": self.data,
            "timings": {k: round(v, 6) for k, v in self.timings.items()},
        }

    def dump(self, path):
        with open(path, "w") as f:
            json.dump(self.to_json(), f, indent=2, sort_keys=True)
            f.write("\n")


def report_determinism_key(report_json: dict) -> str:
    """Canonical serialization of a report with timing data removed."""
    doc = dict(report_json)
    doc.pop("timings", None)
    return json.dumps(doc, sort_keys=True)
