"""Camera trajectory retargeting for monocular RGBD video.

Stage 1 lifts each RGBD frame to a point cloud, replays it through a
user-authored camera trajectory and splats it back, producing an anchor
video plus per-frame validity masks.  Stage 2 demonstrates masked
fine-tuning of a small video denoiser with spatial and temporal low-rank
adapters on those outputs.
"""

from .geometry import (
    CameraIntrinsics,
    CameraPose,
    DepthMap,
    Frame,
    PointCloud,
    Raymap,
    apply_pose,
    compute_raymap,
    lift_rgbd,
    project_splat,
    render_view,
)
from .trajectory import (
    CompiledTrajectory,
    TrajectoryPrimitive,
    TrajectorySpec,
    compile_trajectory,
    ease,
    parse_trajectory,
    serialize_trajectory,
)
from .anchor import AnchorVideo, MaskSequence, VideoClip, render_anchor_video
from .synthetic import SceneObject, SyntheticScene, make_random_scene, oracle_render
from .diffusion import (
    LoRAAdapter,
    NoiseSchedule,
    ToyDenoiser,
    ToyDenoiserConfig,
    TrainConfig,
    add_noise,
    lora_forward,
    masked_temporal_loss,
    pool_image_prompt,
    sample,
    sdedit,
    spatial_loss,
    train,
)
from .metrics import MetricReport, compare, psnr, ssim

__version__ = "0.1.0"

__all__ = [
    "CameraIntrinsics", "CameraPose", "DepthMap", "Frame", "PointCloud", "Raymap",
    "apply_pose", "compute_raymap", "lift_rgbd", "project_splat", "render_view",
    "CompiledTrajectory", "TrajectoryPrimitive", "TrajectorySpec",
    "compile_trajectory", "ease", "parse_trajectory", "serialize_trajectory",
    "AnchorVideo", "MaskSequence", "VideoClip", "render_anchor_video",
    "SceneObject", "SyntheticScene", "make_random_scene", "oracle_render",
    "LoRAAdapter", "NoiseSchedule", "ToyDenoiser", "ToyDenoiserConfig", "TrainConfig",
    "add_noise", "lora_forward", "masked_temporal_loss", "pool_image_prompt",
    "sample", "sdedit", "spatial_loss", "train",
    "MetricReport", "compare", "psnr", "ssim",
    "__version__",
]
