"""twinforge: digital-twin reconstruction, alignment and manipulation
strategy ranking for desk-scale tabletop scenes."""

__version__ = "0.1.0"

from .camera import BinaryMask, CameraIntrinsics, ColorImage, DepthImage, backproject
from .errors import NoFeasibleGrasp, RejectedInput, StageFailureError
from .geometry import (Aabb, PointCloud, RigidPose, SpatialIndex, TriangleMesh,
                       compute_aabb, nearest_distance, quaternion_chordal_distance,
                       sample_mesh_surface, transform_cloud)
from .render import RenderedView, render, render_scene

__all__ = [
    "Aabb", "BinaryMask", "CameraIntrinsics", "ColorImage", "DepthImage",
    "NoFeasibleGrasp", "PointCloud", "RejectedInput", "RenderedView",
    "RigidPose", "SpatialIndex", "StageFailureError", "TriangleMesh",
    "backproject", "compute_aabb", "nearest_distance",
    "quaternion_chordal_distance", "render", "render_scene",
    "sample_mesh_surface", "transform_cloud",
]
