"""Fine registration: scale estimation, FPFH + RANSAC global registration,
ICP refinement, and the two-stage alignment pipeline.

All randomized steps take explicit seeds and are deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from . import quaternions as quat
from .camera import BinaryMask, CameraIntrinsics, ColorImage, DepthImage, backproject
from .coarse import CoarseAlignment, generate_hypotheses, select_coarse_pose
from .errors import RejectedInput, StageFailureError
from .geometry import PointCloud, RigidPose, TriangleMesh, compute_aabb

SCALE_CLAMP = (0.2, 5.0)
RMSE_INF = np.finfo(float).max


@dataclass(frozen=True)
class ScaleEstimate:
    per_axis: np.ndarray
    uniform: float


@dataclass(frozen=True)
class RegistrationResult:
    pose: RigidPose
    rmse: float
    inlier_fraction: float
    converged: bool
    iterations: int
    rmse_history: tuple = ()


@dataclass(frozen=True)
class IcpParams:
    max_iterations: int = 50
    max_correspondence_distance: float = 0.02
    tolerance: float = 1e-6

    def __post_init__(self):
        if self.max_iterations <= 0 or self.max_correspondence_distance <= 0 \
                or self.tolerance <= 0:
            raise RejectedInput("IcpParams must all be positive")


@dataclass(frozen=True)
class RansacParams:
    trials: int = 4096
    inlier_threshold: float = 0.015
    min_inlier_fraction: float = 0.25
    seed: int = 0


def estimate_scale(rendered_partial: PointCloud, observed_partial: PointCloud) -> ScaleEstimate:
    """Per-axis AABB extent ratio (observed / rendered) in the shared camera
    frame; degenerate rendered axes fall back to the median ratio. Clamped
    to [0.2, 5.0]."""
    if len(rendered_partial) == 0 or len(observed_partial) == 0:
        raise RejectedInput("cannot estimate scale from an empty cloud")
    ren = compute_aabb(rendered_partial).extents
    obs = compute_aabb(observed_partial).extents
    ok = ren >= 1e-4
    if not ok.any():
        raise RejectedInput("rendered cloud is degenerate on all axes")
    ratios = np.where(ok, obs / np.where(ok, ren, 1.0), np.nan)
    uniform = float(np.median(ratios[ok]))
    per_axis = np.where(ok, ratios, uniform)
    per_axis = np.clip(per_axis, *SCALE_CLAMP)
    uniform = float(np.clip(np.median(per_axis), *SCALE_CLAMP))
    return ScaleEstimate(per_axis, uniform)


def estimate_normals(cloud: PointCloud, k: int = 15):
    """Per-point unit normals from k-NN covariance, oriented toward the
    camera origin. Returns (normals, valid) where degenerate neighborhoods
    are flagged invalid."""
    pts = cloud.points
    if len(pts) <= k:
        raise RejectedInput(f"need more than k={k} points for normal estimation")
    tree = cKDTree(pts)
    _, nbr = tree.query(pts, k=k + 1)
    neighborhoods = pts[nbr]  # (N, k+1, 3)
    centered = neighborhoods - neighborhoods.mean(axis=1, keepdims=True)
    cov = np.einsum("nki,nkj->nij", centered, centered) / (k + 1)
    eigvals, eigvecs = np.linalg.eigh(cov)
    normals = eigvecs[:, :, 0]  # smallest-eigenvalue eigenvector
    # rank < 2 neighborhoods (two near-zero eigenvalues) give no stable normal
    scale = np.maximum(eigvals[:, 2], 1e-30)
    valid = eigvals[:, 1] / scale > 1e-8
    flip = np.einsum("ni,ni->n", normals, pts) > 0
    normals[flip] *= -1.0
    return normals, valid


def _pair_features(p1, p2, n1, n2):
    """Darboux-frame angle features (alpha, phi, theta) for point pairs."""
    dp = p2 - p1
    d = np.linalg.norm(dp, axis=1)
    ok = d > 1e-12
    dpn = np.zeros_like(dp)
    dpn[ok] = dp[ok] / d[ok, None]
    a1 = np.einsum("ni,ni->n", n1, dpn)
    a2 = np.einsum("ni,ni->n", n2, dpn)
    swap = np.abs(a1) < np.abs(a2)
    src_n = np.where(swap[:, None], n2, n1)
    tgt_n = np.where(swap[:, None], n1, n2)
    dpn = np.where(swap[:, None], -dpn, dpn)
    phi = np.einsum("ni,ni->n", src_n, dpn)
    v = np.cross(dpn, src_n)
    vnorm = np.linalg.norm(v, axis=1)
    ok &= vnorm > 1e-12
    v[ok] = v[ok] / vnorm[ok, None]
    w = np.cross(src_n, v)
    alpha = np.einsum("ni,ni->n", v, tgt_n)
    theta = np.arctan2(np.einsum("ni,ni->n", w, tgt_n),
                       np.einsum("ni,ni->n", src_n, tgt_n))
    return alpha, phi, theta, ok


_BINS = 11


def _bin_index(values, lo, hi):
    return np.clip(((values - lo) / (hi - lo) * _BINS).astype(int), 0, _BINS - 1)


def compute_fpfh(cloud: PointCloud, normals, radius: float | None = None,
                 valid=None) -> np.ndarray:
    """Fast point feature histograms, 33 bins per point, L1-normalized.

    Two passes: per-point simplified histograms over the Darboux angles,
    then distance-weighted aggregation over each point's neighborhood.
    Points with invalid normals or no neighbors get all-zero descriptors.
    """
    pts = cloud.points
    n = len(pts)
    normals = np.asarray(normals, dtype=float)
    if valid is None:
        valid = np.ones(n, dtype=bool)
    tree = cKDTree(pts)
    if radius is None:
        d1, _ = tree.query(pts, k=2)
        radius = 5.0 * float(np.mean(d1[:, 1]))

    neighbor_lists = tree.query_ball_point(pts, radius)
    pi, pj = [], []
    for i, lst in enumerate(neighbor_lists):
        if not valid[i]:
            continue
        for j in lst:
            if j != i and valid[j]:
                pi.append(i)
                pj.append(j)
    spfh = np.zeros((n, 3 * _BINS))
    if not pi:
        return spfh
    pi = np.asarray(pi)
    pj = np.asarray(pj)
    alpha, phi, theta, ok = _pair_features(pts[pi], pts[pj], normals[pi], normals[pj])
    pi, pj = pi[ok], pj[ok]
    ba = _bin_index(alpha[ok], -1.0, 1.0)
    bp = _bin_index(phi[ok], -1.0, 1.0)
    bt = _bin_index(theta[ok], -np.pi, np.pi)
    np.add.at(spfh, (pi, ba), 1.0)
    np.add.at(spfh, (pi, _BINS + bp), 1.0)
    np.add.at(spfh, (pi, 2 * _BINS + bt), 1.0)

    dist = np.linalg.norm(pts[pi] - pts[pj], axis=1)
    counts = np.bincount(pi, minlength=n).astype(float)
    fpfh = spfh.copy()
    weights = 1.0 / np.maximum(dist, 1e-9) / np.maximum(counts[pi], 1.0)
    np.add.at(fpfh, pi, spfh[pj] * weights[:, None])

    sums = fpfh.sum(axis=1, keepdims=True)
    nz = sums[:, 0] > 0
    fpfh[nz] = fpfh[nz] / sums[nz]
    return fpfh


def kabsch(src, tgt):
    """Least-squares rigid transform (R, t) with R @ src + t ~= tgt."""
    src = np.asarray(src, dtype=float)
    tgt = np.asarray(tgt, dtype=float)
    cs = src.mean(axis=0)
    ct = tgt.mean(axis=0)
    H = (src - cs).T @ (tgt - ct)
    U, _, Vt = np.linalg.svd(H)
    d = np.sign(np.linalg.det(Vt.T @ U.T))
    D = np.diag([1.0, 1.0, d])
    R = Vt.T @ D @ U.T
    t = ct - R @ cs
    return R, t


def mutual_correspondences(desc_src, desc_tgt):
    """Indices (i, j) where src i and tgt j are mutual nearest descriptors.

    All-zero descriptors (no neighbors / invalid normals) are excluded.
    """
    src_ok = np.nonzero(desc_src.sum(axis=1) > 0)[0]
    tgt_ok = np.nonzero(desc_tgt.sum(axis=1) > 0)[0]
    if len(src_ok) == 0 or len(tgt_ok) == 0:
        return np.empty(0, int), np.empty(0, int)
    ts = cKDTree(desc_src[src_ok])
    tt = cKDTree(desc_tgt[tgt_ok])
    _, fwd = tt.query(desc_src[src_ok])
    _, bwd = ts.query(desc_tgt[tgt_ok])
    mutual = bwd[fwd] == np.arange(len(src_ok))
    return src_ok[mutual], tgt_ok[fwd[mutual]]


def ransac_register(source: PointCloud, target: PointCloud,
                    source_desc, target_desc,
                    params: RansacParams = RansacParams()) -> RegistrationResult:
    """Global registration by RANSAC over mutual-nearest FPFH correspondences.

    Fixed trial count with a fixed seed; ties in inlier count go to the
    lowest trial index, so the result is order-independent.
    """
    si, ti = mutual_correspondences(source_desc, target_desc)
    if len(si) < 3:
        return RegistrationResult(RigidPose.identity(), RMSE_INF, 0.0, False, 0)
    src = source.points[si]
    tgt = target.points[ti]
    C = len(src)
    rng = np.random.default_rng(params.seed)
    T = params.trials
    idx = rng.integers(0, C, size=(T, 3))
    distinct = (idx[:, 0] != idx[:, 1]) & (idx[:, 0] != idx[:, 2]) & (idx[:, 1] != idx[:, 2])

    a = src[idx]  # (T, 3, 3)
    b = tgt[idx]
    ca = a.mean(axis=1, keepdims=True)
    cb = b.mean(axis=1, keepdims=True)
    H = np.einsum("tki,tkj->tij", a - ca, b - cb)
    U, _, Vt = np.linalg.svd(H)
    det = np.linalg.det(np.einsum("tij,tjk->tik", Vt.transpose(0, 2, 1), U.transpose(0, 2, 1)))
    D = np.repeat(np.eye(3)[None], T, axis=0).copy()
    D[:, 2, 2] = np.sign(det)
    R = np.einsum("tij,tjk,tkl->til", Vt.transpose(0, 2, 1), D, U.transpose(0, 2, 1))
    t = cb[:, 0, :] - np.einsum("tij,tj->ti", R, ca[:, 0, :])

    moved = np.einsum("tij,cj->tci", R, src) + t[:, None, :]
    dists = np.linalg.norm(moved - tgt[None], axis=2)
    inliers = (dists <= params.inlier_threshold) & distinct[:, None]
    counts = inliers.sum(axis=1)
    best = int(np.argmax(counts))
    if counts[best] < 3:
        return RegistrationResult(RigidPose.identity(), RMSE_INF, 0.0, False, params.trials)

    mask = inliers[best]
    Rb, tb = kabsch(src[mask], tgt[mask])
    resid = src[mask] @ Rb.T + tb - tgt[mask]
    rmse = float(np.sqrt(np.mean(np.sum(resid ** 2, axis=1))))
    frac = float(counts[best] / C)
    pose = RigidPose.from_rotation_matrix(Rb, tb)
    return RegistrationResult(pose, rmse, frac, frac >= params.min_inlier_fraction,
                              params.trials)


def icp_refine(source: PointCloud, target: PointCloud, init: RigidPose,
               params: IcpParams = IcpParams()) -> RegistrationResult:
    """Point-to-point ICP with nearest-neighbor correspondences.

    Stops on max iterations, RMSE change below tolerance, or an RMSE
    increase (the previous pose is kept, so reported RMSE never worsens).
    """
    if len(source) == 0 or len(target) == 0:
        raise RejectedInput("ICP needs non-empty clouds")
    tree = cKDTree(target.points)
    pose = init
    history = []
    best_pose, best_rmse, best_frac = init, None, 0.0
    converged = False
    iterations = 0
    for it in range(1, params.max_iterations + 1):
        moved = pose.apply(source.points)
        d, j = tree.query(moved)
        mask = d <= params.max_correspondence_distance
        if not mask.any():
            if best_rmse is None:
                return RegistrationResult(init, RMSE_INF, 0.0, False, 0)
            break
        rmse = float(np.sqrt(np.mean(d[mask] ** 2)))
        if best_rmse is not None and rmse > best_rmse + 1e-12:
            break  # keep the previous (better) pose
        delta = None if best_rmse is None else best_rmse - rmse
        best_pose, best_rmse, best_frac = pose, rmse, float(np.mean(mask))
        history.append(rmse)
        iterations = it
        if delta is not None and abs(delta) < params.tolerance:
            converged = True
            break
        R, t = kabsch(moved[mask], target.points[j[mask]])
        pose = RigidPose.from_rotation_matrix(R, t).compose(pose)
    return RegistrationResult(best_pose, best_rmse, best_frac, converged,
                              iterations, tuple(history))


@dataclass(frozen=True)
class AlignConfig:
    rotation_count: int = 72
    seed: int = 0
    normals_k: int = 15
    fpfh_radius: float | None = None
    ransac: RansacParams = field(default_factory=RansacParams)
    icp: IcpParams = field(default_factory=IcpParams)
    subsample: int = 1200
    min_mask_pixels: int = 100
    skip_coarse: bool = False  # direct-alignment ablation: identity coarse pose


@dataclass(frozen=True)
class TwoStageResult:
    scaled_mesh: TriangleMesh
    final_pose: RigidPose
    registration: RegistrationResult
    coarse: CoarseAlignment
    scale: ScaleEstimate
    ransac: RegistrationResult


def _subsample(cloud: PointCloud, n: int, seed: int) -> PointCloud:
    if len(cloud) <= n:
        return cloud
    rng = np.random.default_rng(seed)
    idx = np.sort(rng.choice(len(cloud), size=n, replace=False))
    colors = cloud.colors[idx] if cloud.colors is not None else None
    return PointCloud(cloud.points[idx], colors)


def _scale_about(points, anchor, factors):
    return anchor + (points - anchor) * factors


def _crop_to_mask(color: ColorImage, mask: BinaryMask,
                  intrinsics: CameraIntrinsics, pad: float = 0.25):
    """Crop the observation to the mask's padded bounding square so the
    object dominates the coarse-scoring images. Returns (color, mask,
    intrinsics) for the cropped viewport (same camera, shifted principal
    point); coordinates and back-projections remain consistent."""
    rows = np.flatnonzero(mask.values.any(axis=1))
    cols = np.flatnonzero(mask.values.any(axis=0))
    side = max(rows[-1] - rows[0] + 1, cols[-1] - cols[0] + 1)
    side = int(np.ceil(side * (1 + 2 * pad)))
    side = min(side, mask.height, mask.width)
    r0 = int(np.clip((rows[0] + rows[-1] + 1 - side) // 2, 0, mask.height - side))
    c0 = int(np.clip((cols[0] + cols[-1] + 1 - side) // 2, 0, mask.width - side))
    # the viewport must keep the principal point inside it
    r1, c1 = r0 + side, c0 + side
    r0 = min(r0, int(np.floor(intrinsics.cy)))
    c0 = min(c0, int(np.floor(intrinsics.cx)))
    r1 = max(r1, int(np.ceil(intrinsics.cy)) + 1)
    c1 = max(c1, int(np.ceil(intrinsics.cx)) + 1)
    r0, c0 = max(r0, 0), max(c0, 0)
    r1, c1 = min(r1, mask.height), min(c1, mask.width)
    cropped_intr = CameraIntrinsics(
        fx=intrinsics.fx, fy=intrinsics.fy,
        cx=intrinsics.cx - c0, cy=intrinsics.cy - r0,
        width=c1 - c0, height=r1 - r0)
    return (ColorImage(color.values[r0:r1, c0:c1]),
            BinaryMask(mask.values[r0:r1, c0:c1]),
            cropped_intr)


def two_stage_align(mesh: TriangleMesh, color: ColorImage, depth: DepthImage,
                    mask: BinaryMask, intrinsics: CameraIntrinsics,
                    config: AlignConfig = AlignConfig()) -> TwoStageResult:
    """Coarse appearance search, bbox scale estimation, then RANSAC + ICP.

    The returned pose maps the scaled mesh (in its original local frame)
    into the camera frame. Raises StageFailureError when a stage cannot
    produce a usable result.
    """
    valid = depth.valid_mask() & mask.values
    if valid.sum() < config.min_mask_pixels:
        raise StageFailureError("segmentation", "segmentation-too-small")
    observed = backproject(depth, intrinsics, mask)
    anchor = observed.points.mean(axis=0)

    if config.skip_coarse:
        from .coarse import partial_cloud_from_pose
        pose0 = RigidPose(quat.IDENTITY.copy(), anchor)
        partial = partial_cloud_from_pose(mesh, pose0, intrinsics)
        coarse = CoarseAlignment(pose0, 1.0, partial, ((0, 1.0),))
    else:
        c_color, c_mask, c_intr = _crop_to_mask(color, mask, intrinsics)
        hyps = generate_hypotheses(anchor, config.rotation_count, config.seed)
        coarse = select_coarse_pose(mesh, hyps, c_color, c_mask, c_intr)
    if len(coarse.rendered_partial) == 0:
        raise StageFailureError("coarse-align", "mesh-not-visible")

    scale = estimate_scale(coarse.rendered_partial, observed)
    Rc = coarse.best_pose.rotation_matrix()
    scaled_vertices = (mesh.vertices @ Rc.T * scale.per_axis) @ Rc
    scaled_mesh = TriangleMesh(scaled_vertices, mesh.triangles,
                               mesh.vertex_colors, mesh.face_labels)
    scaled_partial = PointCloud(
        _scale_about(coarse.rendered_partial.points, anchor, scale.per_axis))

    src = _subsample(scaled_partial, config.subsample, config.seed + 1)
    tgt = _subsample(observed, config.subsample, config.seed + 2)
    try:
        sn, sv = estimate_normals(src, config.normals_k)
        tn, tv = estimate_normals(tgt, config.normals_k)
    except RejectedInput as exc:
        raise StageFailureError("fine-register", f"too-few-points: {exc}")
    sd = compute_fpfh(src, sn, config.fpfh_radius, sv)
    td = compute_fpfh(tgt, tn, config.fpfh_radius, tv)
    ransac = ransac_register(src, tgt, sd, td, config.ransac)
    icp = icp_refine(src, tgt, ransac.pose, config.icp)
    final_pose = icp.pose.compose(coarse.best_pose)
    return TwoStageResult(scaled_mesh, final_pose, icp, coarse, scale, ransac)


def alignment_success(estimated: RigidPose, truth: RigidPose,
                      object_diameter: float) -> bool:
    """Rotation geodesic error <= 15 degrees and translation error <=
    max(0.01 m, 10% of the object diameter)."""
    if object_diameter <= 0:
        raise RejectedInput("object diameter must be positive")
    rot_err = quat.geodesic_angle(estimated.rotation, truth.rotation)
    trans_err = float(np.linalg.norm(estimated.translation - truth.translation))
    return (rot_err <= np.deg2rad(15.0) + 1e-12
            and trans_err <= max(0.01, 0.1 * object_diameter) + 1e-12)
