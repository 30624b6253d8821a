"""Coarse pose alignment: hypothesis generation, view features, best-pose search.

Stage 1 of the two-stage alignment. Each rotation hypothesis is rendered,
described by an appearance feature vector and scored by cosine similarity
against the (masked) observation; the winner seeds the fine registration
stage with a rendered partial cloud.
"""

from __future__ import annotations

import functools
import itertools
from dataclasses import dataclass

import numpy as np

from . import quaternions as quat
from .camera import BinaryMask, CameraIntrinsics, ColorImage, backproject
from .geometry import PointCloud, RejectedInput, RigidPose, TriangleMesh
from .render import DEFAULT_BACKGROUND, render, render_batch
from ._parallel import parallel_map

DESCRIPTOR_GRID = 8          # cells per side
DESCRIPTOR_BINS = 8          # gradient orientation bins per cell
DESCRIPTOR_DIM = DESCRIPTOR_GRID * DESCRIPTOR_GRID * (DESCRIPTOR_BINS + 1)
_RESIZE_TO = 32

_LUMA = np.array([0.299, 0.587, 0.114])
_SOBEL = np.array([[-1, 0, 1], [-2, 0, 2], [-1, 0, 1]], dtype=float)
_PAD_IDX = np.clip(np.arange(-1, _RESIZE_TO + 1), 0, _RESIZE_TO - 1)
_CELL_IDX = ((np.arange(_RESIZE_TO)[:, None] // (_RESIZE_TO // DESCRIPTOR_GRID))
             * DESCRIPTOR_GRID
             + np.arange(_RESIZE_TO)[None, :] // (_RESIZE_TO // DESCRIPTOR_GRID))


@dataclass(frozen=True)
class PoseHypothesisSet:
    poses: tuple
    anchor_translation: np.ndarray
    rotation_count: int
    seed: int

    def __len__(self):
        return len(self.poses)


@dataclass(frozen=True)
class CoarseAlignment:
    best_pose: RigidPose
    similarity: float
    rendered_partial: PointCloud
    all_scores: tuple  # (hypothesis index, similarity) pairs


def _cube_rotations():
    """The 24 rotation matrices of the cube group, identity first."""
    mats = []
    for perm in itertools.permutations(range(3)):
        for signs in itertools.product((1, -1), repeat=3):
            R = np.zeros((3, 3))
            for row, col in enumerate(perm):
                R[row, col] = signs[row]
            if np.linalg.det(R) > 0.5:
                mats.append(R)
    mats.sort(key=lambda R: round(float(np.linalg.norm(R - np.eye(3))), 9))
    return mats


def generate_hypotheses(anchor_translation, rotation_count: int, seed: int = 0) -> PoseHypothesisSet:
    """Quasi-uniform rotation hypotheses sharing one anchor translation.

    The deterministic base set is 24 cube-group rotations crossed with yaw
    offsets of 0/30/60 degrees (72 rotations); identity comes first. Counts
    beyond 72 are topped up with seeded uniform random rotations.
    """
    if rotation_count < 1:
        raise RejectedInput("rotation_count must be >= 1")
    anchor = np.asarray(anchor_translation, dtype=float).reshape(3)
    quats = []
    for yaw_step in range(3):
        yaw = quat.quat_from_axis_angle([0, 0, 1], np.deg2rad(30.0 * yaw_step))
        for R in _cube_rotations():
            q = quat.quat_multiply(yaw, quat.matrix_to_quat(R))
            quats.append(quat.quat_normalize(q))
            if len(quats) == rotation_count:
                break
        if len(quats) == rotation_count:
            break
    rng = np.random.default_rng(seed)
    while len(quats) < rotation_count:
        quats.append(quat.random_quat(rng))
    poses = tuple(RigidPose(q, anchor) for q in quats[:rotation_count])
    return PoseHypothesisSet(poses, anchor, rotation_count, seed)


@functools.lru_cache(maxsize=64)
def _resize_weights(n_in, n_out):
    Wm = np.zeros((n_out, n_in))
    scale = n_in / n_out
    for i in range(n_out):
        lo, hi = i * scale, (i + 1) * scale
        j0, j1 = int(np.floor(lo)), int(np.ceil(hi))
        for j in range(j0, min(j1, n_in)):
            overlap = min(hi, j + 1) - max(lo, j)
            if overlap > 0:
                Wm[i, j] = overlap
        Wm[i] /= Wm[i].sum()
    Wm.setflags(write=False)
    return Wm


def _area_resize(img, out_h, out_w):
    """Exact area-weighted resampling via interval-overlap averaging matrices."""
    return (_resize_weights(img.shape[0], out_h) @ img
            @ _resize_weights(img.shape[1], out_w).T)


@dataclass(frozen=True)
class FeatureVector:
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).ravel()
        if not np.all(np.isfinite(v)):
            raise RejectedInput("feature vector must be finite")
        object.__setattr__(self, "values", v)
        v.setflags(write=False)

    def __len__(self):
        return len(self.values)


def grid_descriptor(image: ColorImage) -> FeatureVector:
    """Luminance grid descriptor: per-cell mean intensity + 8-bin gradient
    orientation histogram over an 8x8 grid of a 32x32 area-averaged image.

    Dimension 8*8*9 = 576, L2-normalized (all-zero images stay zero).
    """
    lum = image.values @ _LUMA
    small = _area_resize(lum, _RESIZE_TO, _RESIZE_TO)

    padded = small[_PAD_IDX][:, _PAD_IDX]  # edge-replicating pad by one
    kx = _SOBEL
    gx = np.zeros_like(small)
    gy = np.zeros_like(small)
    for dy in range(3):
        for dx in range(3):
            block = padded[dy:dy + _RESIZE_TO, dx:dx + _RESIZE_TO]
            gx += kx[dy, dx] * block
            gy += kx[dx, dy] * block
    mag = np.hypot(gx, gy)
    orient = np.arctan2(gy, gx)  # [-pi, pi]
    bins = np.clip(((orient + np.pi) / (2 * np.pi) * DESCRIPTOR_BINS).astype(int),
                   0, DESCRIPTOR_BINS - 1)

    cell = _RESIZE_TO // DESCRIPTOR_GRID
    hists = np.bincount((_CELL_IDX * DESCRIPTOR_BINS + bins).ravel(),
                        weights=mag.ravel(),
                        minlength=DESCRIPTOR_GRID ** 2 * DESCRIPTOR_BINS)
    hists = hists.reshape(DESCRIPTOR_GRID ** 2, DESCRIPTOR_BINS)
    means = (small.reshape(DESCRIPTOR_GRID, cell, DESCRIPTOR_GRID, cell)
             .mean(axis=(1, 3)).reshape(-1, 1))
    vec = np.concatenate([means, hists], axis=1).ravel()
    norm = np.linalg.norm(vec)
    if norm > 0:
        vec = vec / norm
    return FeatureVector(vec)


def cosine_similarity(a: FeatureVector, b: FeatureVector) -> float:
    va, vb = a.values, b.values
    if len(va) != len(vb):
        raise RejectedInput("feature dimensions differ")
    na, nb = np.linalg.norm(va), np.linalg.norm(vb)
    if na == 0 or nb == 0:
        raise RejectedInput("cosine similarity undefined for zero vectors")
    return float(np.dot(va, vb) / (na * nb))


def mask_observation(observation: ColorImage, mask: BinaryMask,
                     background=DEFAULT_BACKGROUND) -> ColorImage:
    """Replace background pixels with the renderer's background color."""
    out = np.empty_like(observation.values)
    out[:] = background
    out[mask.values] = observation.values[mask.values]
    return ColorImage(out)


def partial_cloud_from_pose(mesh: TriangleMesh, pose: RigidPose,
                            intrinsics: CameraIntrinsics) -> PointCloud:
    """Render the posed mesh and back-project its depth to a partial cloud."""
    view = render(mesh, pose, intrinsics)
    return backproject(view.depth, intrinsics)


_SCORE_MAX_DIM = 40


def _scoring_intrinsics(intrinsics: CameraIntrinsics) -> CameraIntrinsics:
    """Downscale so max(width, height) <= _SCORE_MAX_DIM.

    The descriptor area-averages every image down to 32x32 before scoring,
    so rendering hypotheses above ~40 px per side only costs time.
    """
    s = _SCORE_MAX_DIM / max(intrinsics.width, intrinsics.height)
    if s >= 1.0:
        return intrinsics
    return CameraIntrinsics(intrinsics.fx * s, intrinsics.fy * s,
                            intrinsics.cx * s, intrinsics.cy * s,
                            max(1, round(intrinsics.width * s)),
                            max(1, round(intrinsics.height * s)))


def select_coarse_pose(mesh: TriangleMesh, hypotheses: PoseHypothesisSet,
                       observation: ColorImage, obs_mask: BinaryMask,
                       intrinsics: CameraIntrinsics, extractor=None) -> CoarseAlignment:
    """Render and score every hypothesis against the masked observation.

    Hypotheses are rendered at a scoring resolution capped at 40 px per
    side (the descriptor resamples to 32x32 regardless). Ties are broken
    by lowest hypothesis index. The winning hypothesis's rendered depth is
    back-projected at full resolution into the stage-2 partial cloud.
    """
    if len(hypotheses) == 0:
        raise RejectedInput("empty hypothesis set")
    extract = extractor if extractor is not None else grid_descriptor
    obs_feat = extract(mask_observation(observation, obs_mask))
    score_intr = _scoring_intrinsics(intrinsics)

    views = render_batch(mesh, hypotheses.poses, score_intr, cull=True)

    def score(view):
        return cosine_similarity(extract(view.rgb), obs_feat)

    sims = parallel_map(score, views)
    best_idx = int(np.argmax(sims))
    best_pose = hypotheses.poses[best_idx]
    partial = partial_cloud_from_pose(mesh, best_pose, intrinsics)
    return CoarseAlignment(best_pose, float(sims[best_idx]), partial,
                           tuple(enumerate(float(s) for s in sims)))
