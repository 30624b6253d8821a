"""Quasi-static outcome simulation and weak labeling.

The built-in simulator settles the manipulated object by dropping it along
gravity to first contact (bisection), checks static stability via the
support polygon, and topples over the nearest hull edge in bounded steps
when unstable. Friction and restitution are carried in the material model
but unused here; density only matters through the uniform-density center of
mass. The ground plane z=0 is always present as an implicit static support.

Outcome checking is pluggable; the built-in evaluator tests geometric
placement predicates on the settled scene, standing in for a VLM judge.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.spatial import ConvexHull, QhullError, cKDTree

from . import quaternions as quat
from ._parallel import parallel_map
from .camera import CameraIntrinsics
from .errors import RejectedInput, StageFailureError
from .geometry import RigidPose, TriangleMesh, sample_mesh_surface
from .materials import MaterialProps, material_lookup
from .render import RenderedView, render_scene
from .solids import (is_watertight, point_mesh_distance, points_inside,
                     volume_and_com)
from .strategy import StrategySample

ROLES = ("manipulated", "interactive", "static")
GRAVITY = np.array([0.0, 0.0, -9.81])
UP = np.array([0.0, 0.0, 1.0])


@dataclass(frozen=True)
class SceneObject:
    name: str
    mesh: TriangleMesh
    pose: RigidPose
    material: MaterialProps = field(default_factory=lambda: material_lookup("default")[0])
    role: str = "static"

    def __post_init__(self):
        if self.role not in ROLES:
            raise RejectedInput(f"unknown role {self.role!r}")


@dataclass(frozen=True)
class SceneTwin:
    objects: tuple
    gravity: np.ndarray = field(default_factory=lambda: GRAVITY.copy())

    def __post_init__(self):
        objs = tuple(self.objects)
        if sum(1 for o in objs if o.role == "manipulated") != 1:
            raise RejectedInput("scene must contain exactly one manipulated object")
        object.__setattr__(self, "objects", objs)
        object.__setattr__(self, "gravity", np.asarray(self.gravity, dtype=float))

    @property
    def manipulated(self) -> SceneObject:
        return next(o for o in self.objects if o.role == "manipulated")

    def by_name(self, name) -> SceneObject:
        for o in self.objects:
            if o.name == name:
                return o
        raise RejectedInput(f"no object named {name!r}")


@dataclass(frozen=True)
class SimOutcome:
    settled_poses: dict
    stable: bool
    penetration: bool
    rendered: RenderedView
    contacts: np.ndarray
    scene: SceneTwin
    topple_steps: int = 0


@dataclass(frozen=True)
class SimConfig:
    surface_samples: int = 1200
    seed: int = 0
    render_size: int = 256
    standoff: float = 0.8
    tilt_deg: float = -60.0
    contact_tol: float = 0.001      # contact band, meters
    bisect_tol: float = 0.0005      # drop bisection resolution
    march_step: float = 0.005
    penetration_tol: float = 0.001  # initial-pose rejection depth
    collide_tol: float = 0.00025    # depth counted as collision during drop
    max_topple_steps: int = 6
    topple_step_deg: float = 15.0
    render: bool = True


def checker_viewpoint(scene_center, standoff: float = 0.8,
                      tilt_deg: float = -60.0) -> RigidPose:
    """Fixed front-facing camera pitched tilt_deg from horizontal, looking
    at the scene center from the given standoff."""
    center = np.asarray(scene_center, dtype=float)
    theta = np.deg2rad(-tilt_deg)
    view_dir = np.array([0.0, np.cos(theta), -np.sin(theta)])
    position = center - standoff * view_dir
    x_cam = np.array([1.0, 0.0, 0.0])
    z_cam = view_dir
    y_cam = np.cross(z_cam, x_cam)
    R = np.column_stack([x_cam, y_cam, z_cam])
    return RigidPose.from_rotation_matrix(R, position)


def checker_intrinsics(size: int) -> CameraIntrinsics:
    return CameraIntrinsics(fx=float(size), fy=float(size),
                            cx=size / 2.0, cy=size / 2.0,
                            width=size, height=size)


class _SettleContext:
    """Precomputed geometry for one scene + one candidate pose."""

    def __init__(self, scene: SceneTwin, config: SimConfig):
        self.scene = scene
        self.config = config
        manip = scene.manipulated
        if not is_watertight(manip.mesh):
            raise StageFailureError("simulation", "non-watertight-mesh")
        self.manip = manip
        self.local_samples = sample_mesh_surface(
            manip.mesh, config.surface_samples, config.seed).points
        self.local_tree = cKDTree(self.local_samples)
        _, self.local_com = volume_and_com(manip.mesh)
        self.others = []
        for oi, obj in enumerate(scene.objects):
            if obj.role == "manipulated":
                continue
            world_mesh = obj.mesh.transformed(obj.pose)
            pts = sample_mesh_surface(obj.mesh, config.surface_samples,
                                      config.seed + 1 + oi).points
            world_pts = obj.pose.apply(pts)
            self.others.append((obj, world_mesh, world_pts, cKDTree(world_pts)))

    def penetration_depth(self, pose: RigidPose) -> float:
        """Deepest interpenetration of the manipulated object at this pose
        against the ground and all other objects."""
        pts = pose.apply(self.local_samples)
        depth = max(0.0, float(-pts[:, 2].min()))
        inv = pose.inverse()
        for obj, world_mesh, world_pts, tree in self.others:
            lo = world_mesh.vertices.min(axis=0) - 1e-6
            hi = world_mesh.vertices.max(axis=0) + 1e-6
            inside_box = np.all((pts >= lo) & (pts <= hi), axis=1)
            if inside_box.any():
                inside = points_inside(pts[inside_box], world_mesh)
                if inside.any():
                    d, _ = tree.query(pts[inside_box][inside])
                    depth = max(depth, float(d.max()))
            # symmetric check: the other object's surface inside the manipulated solid
            local_other = inv.apply(world_pts)
            lo2 = self.local_samples.min(axis=0) - 1e-6
            hi2 = self.local_samples.max(axis=0) + 1e-6
            cand = np.all((local_other >= lo2) & (local_other <= hi2), axis=1)
            if cand.any():
                inside = points_inside(local_other[cand], self.manip.mesh)
                if inside.any():
                    d, _ = self.local_tree.query(local_other[cand][inside])
                    depth = max(depth, float(d.max()))
        return depth

    def collides(self, pose: RigidPose) -> bool:
        return self.penetration_depth(pose) > self.config.collide_tol

    def drop(self, pose: RigidPose) -> RigidPose:
        """Translate along gravity to first contact (march + bisection)."""
        g_hat = self.scene.gravity / np.linalg.norm(self.scene.gravity)

        def at(d):
            return RigidPose(pose.rotation, pose.translation + d * g_hat)

        pts = pose.apply(self.local_samples)
        ground_drop = max(0.0, float(pts[:, 2].min()))
        limit = ground_drop + 2 * self.config.collide_tol + 1e-6
        lo = 0.0
        step = self.config.march_step
        while lo < limit:
            hi = min(lo + step, limit)
            if self.collides(at(hi)):
                break
            lo = hi
        else:
            return at(limit)
        while hi - lo > self.config.bisect_tol:
            mid = 0.5 * (lo + hi)
            if self.collides(at(mid)):
                hi = mid
            else:
                lo = mid
        return at(lo)

    def lift_free(self, pose: RigidPose) -> RigidPose:
        """Raise against gravity until collision-free (after a topple step)."""
        g_hat = self.scene.gravity / np.linalg.norm(self.scene.gravity)
        d = 0.0
        while self.collides(RigidPose(pose.rotation, pose.translation - d * g_hat)):
            d += self.config.bisect_tol
            if d > 0.1:
                break
        return RigidPose(pose.rotation, pose.translation - d * g_hat)

    def contact_points(self, pose: RigidPose) -> np.ndarray:
        pts = pose.apply(self.local_samples)
        tol = self.config.contact_tol
        near = pts[:, 2] <= tol
        for obj, world_mesh, world_pts, tree in self.others:
            lo = world_mesh.vertices.min(axis=0) - 2 * tol
            hi = world_mesh.vertices.max(axis=0) + 2 * tol
            cand = np.all((pts >= lo) & (pts <= hi), axis=1) & ~near
            if cand.any():
                d = point_mesh_distance(pts[cand], world_mesh)
                sub = np.zeros(len(pts), dtype=bool)
                sub[np.flatnonzero(cand)[d <= tol]] = True
                near |= sub
        return pts[near]

    def com_world(self, pose: RigidPose) -> np.ndarray:
        return pose.apply(self.local_com)


def _hull_2d(points2d):
    """Ordered convex hull vertices, or None when degenerate."""
    if len(points2d) < 3:
        return None
    try:
        hull = ConvexHull(points2d)
    except QhullError:
        return None
    return points2d[hull.vertices]


def _point_in_hull(p, hull, tol=1e-9):
    n = len(hull)
    for i in range(n):
        a, b = hull[i], hull[(i + 1) % n]
        e = b - a
        # hull vertices are counter-clockwise: inside means left of every edge
        if e[0] * (p[1] - a[1]) - e[1] * (p[0] - a[0]) < -tol:
            return False
    return True


def _nearest_hull_edge(p, hull):
    """(closest point on hull boundary, unit edge direction) nearest to p."""
    best = None
    for i in range(len(hull)):
        a, b = hull[i], hull[(i + 1) % len(hull)]
        e = b - a
        L2 = float(e @ e)
        t = 0.0 if L2 == 0 else float(np.clip((p - a) @ e / L2, 0.0, 1.0))
        q = a + t * e
        d = float(np.linalg.norm(p - q))
        if best is None or d < best[0]:
            best = (d, q, e / max(np.sqrt(L2), 1e-12))
    return best[1], best[2]


def settle_simulate(scene: SceneTwin, sample: StrategySample,
                    config: SimConfig = SimConfig(),
                    _ctx: _SettleContext | None = None) -> SimOutcome:
    """Built-in Simulator: penetration check, gravity drop, support-polygon
    stability with bounded toppling, and fixed-viewpoint outcome rendering."""
    ctx = _SettleContext(scene, config) if _ctx is None else _ctx
    pose = sample.object_pose

    if ctx.penetration_depth(pose) > config.penetration_tol:
        return _finish(ctx, pose, stable=False, penetration=True,
                       contacts=np.empty((0, 3)), topple_steps=0)

    pose = ctx.drop(pose)
    topples = 0
    stable = False
    while True:
        contacts = ctx.contact_points(pose)
        com = ctx.com_world(pose)
        hull = _hull_2d(contacts[:, :2]) if len(contacts) else None
        if hull is not None and _point_in_hull(com[:2], hull):
            stable = True
            break
        if topples >= config.max_topple_steps or len(contacts) == 0:
            break
        if hull is None:
            # degenerate support (point/line): pivot about the contact line
            if len(contacts) >= 2:
                e = np.ptp(contacts[:, :2], axis=0)
                axis2 = e / max(np.linalg.norm(e), 1e-12)
                pivot2 = contacts[:, :2].mean(axis=0)
            else:
                axis2 = np.array([1.0, 0.0])
                pivot2 = contacts[0, :2]
            pivot = np.array([pivot2[0], pivot2[1], float(contacts[:, 2].mean())])
            axis = np.array([axis2[0], axis2[1], 0.0])
        else:
            q2, e2 = _nearest_hull_edge(com[:2], hull)
            pivot = np.array([q2[0], q2[1], float(contacts[:, 2].min())])
            axis = np.array([e2[0], e2[1], 0.0])
        torque = np.cross(com - pivot, scene.gravity)
        sgn = 1.0 if float(torque @ axis) >= 0 else -1.0
        rot = quat.quat_from_axis_angle(axis, sgn * np.deg2rad(config.topple_step_deg))
        step = RigidPose(rot, pivot - quat.quat_rotate(rot, pivot))
        pose = step.compose(pose)
        pose = ctx.lift_free(pose)
        pose = ctx.drop(pose)
        topples += 1

    contacts = ctx.contact_points(pose)
    return _finish(ctx, pose, stable=stable, penetration=False,
                   contacts=contacts, topple_steps=topples)


def _finish(ctx, pose, stable, penetration, contacts, topple_steps):
    scene, config = ctx.scene, ctx.config
    settled = {}
    for obj in scene.objects:
        settled[obj.name] = pose if obj.role == "manipulated" else obj.pose
    rendered = None
    if config.render:
        all_pts = [pose.apply(ctx.local_samples)]
        all_pts += [wp for _, _, wp, _ in ctx.others]
        all_pts = np.vstack(all_pts)
        center = 0.5 * (all_pts.min(axis=0) + all_pts.max(axis=0))
        view = checker_viewpoint(center, config.standoff, config.tilt_deg)
        objects = [(obj.mesh, settled[obj.name]) for obj in scene.objects]
        rendered = render_scene(objects, view, checker_intrinsics(config.render_size))
    return SimOutcome(settled, stable, penetration, rendered, contacts,
                      scene, topple_steps)


class SettleSimulator:
    """Simulator interface wrapper around settle_simulate.

    Caches the per-scene precomputation (surface samples, k-d trees) so
    repeated calls over one scene amortize it. The cache is read-only after
    construction, so concurrent labeling remains deterministic."""

    def __init__(self, config: SimConfig = SimConfig()):
        self.config = config
        self._ctx_scene = None
        self._ctx = None

    def __call__(self, scene, sample):
        if self._ctx_scene is not scene:
            ctx = _SettleContext(scene, self.config)
            self._ctx, self._ctx_scene = ctx, scene
        return settle_simulate(scene, sample, self.config, _ctx=self._ctx)


# ---------------------------------------------------------------------------
# Outcome evaluation

PREDICATES = ("inside", "on_top", "upright", "upside_down", "bridges", "in_gap")
_AXIS_TOL_DEG = 20.0
_SAMPLES = 600


def _world_samples(outcome, name, seed=7):
    obj = outcome.scene.by_name(name)
    pts = sample_mesh_surface(obj.mesh, _SAMPLES, seed).points
    return outcome.settled_poses[name].apply(pts)


def _aabb(points):
    return points.min(axis=0), points.max(axis=0)


def _settled_up(outcome, name):
    return quat.quat_rotate(outcome.settled_poses[name].rotation, UP)


def geometric_evaluator(outcome: SimOutcome, predicate) -> bool:
    """Deterministic placement predicates over the settled scene.

    predicate is (name, args), e.g. ("inside", ["cube", "box"]). All
    predicates require a stable, penetration-free outcome.
    """
    name, args = predicate
    if name not in PREDICATES:
        raise RejectedInput(f"unknown predicate {name!r}")
    if outcome.penetration or not outcome.stable:
        return False

    if name == "inside":
        a, b = args
        pa = _world_samples(outcome, a)
        lo, hi = _aabb(_world_samples(outcome, b))
        margin = 0.002
        ok = np.all((pa >= lo - margin) & (pa <= hi + margin), axis=1)
        ok &= pa[:, 2] <= hi[2] + margin  # below the rim plane
        return bool(np.mean(ok) >= 0.9)

    if name == "on_top":
        a, b = args
        pa = _world_samples(outcome, a)
        lo, hi = _aabb(_world_samples(outcome, b))
        lowest = pa[np.argmin(pa[:, 2])]
        margin = 0.005
        on_face = (lo[0] - margin <= lowest[0] <= hi[0] + margin
                   and lo[1] - margin <= lowest[1] <= hi[1] + margin
                   and abs(lowest[2] - hi[2]) <= margin)
        com_a = _world_samples(outcome, a).mean(axis=0)
        return bool(on_face and com_a[2] > hi[2])

    if name in ("upright", "upside_down"):
        (a,) = args
        up = _settled_up(outcome, a)
        target = UP if name == "upright" else -UP
        ang = np.arccos(np.clip(float(up @ target), -1.0, 1.0))
        return bool(np.rad2deg(ang) <= _AXIS_TOL_DEG)

    if name == "bridges":
        a, b, c = args
        pa = _world_samples(outcome, a)
        lo_a, hi_a = _aabb(pa)
        touches = []
        for support in (b, c):
            lo, hi = _aabb(_world_samples(outcome, support))
            margin = 0.005
            near_top = (np.abs(pa[:, 2] - hi[2]) <= margin) \
                & (pa[:, 0] >= lo[0] - margin) & (pa[:, 0] <= hi[0] + margin) \
                & (pa[:, 1] >= lo[1] - margin) & (pa[:, 1] <= hi[1] + margin)
            overlap = (hi_a[:2] >= lo[:2]).all() and (lo_a[:2] <= hi[:2]).all()
            touches.append(bool(near_top.any() and overlap))
        return all(touches)

    if name == "in_gap":
        a, b, c = args
        com_a = _world_samples(outcome, a).mean(axis=0)
        lo_b, hi_b = _aabb(_world_samples(outcome, b))
        lo_c, hi_c = _aabb(_world_samples(outcome, c))
        cb, cc = 0.5 * (lo_b + hi_b), 0.5 * (lo_c + hi_c)
        axis = cc[:2] - cb[:2]
        norm = np.linalg.norm(axis)
        if norm < 1e-9:
            return False
        axis = axis / norm
        sb = float(cb[:2] @ axis)
        sc = float(cc[:2] @ axis)
        half_b = 0.5 * float((hi_b - lo_b)[:2] @ np.abs(axis))
        half_c = 0.5 * float((hi_c - lo_c)[:2] @ np.abs(axis))
        s = float(com_a[:2] @ axis)
        between = sb + half_b <= s <= sc - half_c
        below = com_a[2] < hi_b[2] and com_a[2] < hi_c[2]
        return bool(between and below)

    raise RejectedInput(f"unhandled predicate {name!r}")


class GeometricEvaluator:
    """OutcomeEvaluator built from a placement predicate spec; the text
    instruction is accepted for interface compatibility but unused."""

    def __init__(self, predicate):
        pname, _ = predicate
        if pname not in PREDICATES:
            raise RejectedInput(f"unknown predicate {pname!r}")
        self.predicate = (predicate[0], list(predicate[1]))

    def __call__(self, outcome, instruction=""):
        return geometric_evaluator(outcome, self.predicate)


def label_samples(scene: SceneTwin, samples, simulator, evaluator,
                  instruction: str = "") -> list[StrategySample]:
    """Simulate and label every sample independently; per-sample failures
    become label=False with a reason instead of aborting the batch."""
    if not samples:
        raise RejectedInput("no samples to label")

    def one(sample):
        try:
            outcome = simulator(scene, sample)
            label = bool(evaluator(outcome, instruction))
            reason = "penetration" if outcome.penetration else None
            return sample.with_outcome(outcome, label, reason)
        except (StageFailureError, RejectedInput) as exc:
            return sample.with_outcome(None, False, str(exc))

    return parallel_map(one, samples)
