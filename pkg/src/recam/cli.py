"""Command-line entry points.

Exit codes: 0 success, 1 runtime failure, 2 usage or parse error.  Every
command is deterministic given its flags and seeds.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np
import torch

from . import diffusion, metrics, video_io
from .anchor import MaskSequence, VideoClip, render_anchor_video
from .errors import MissingFrameError, RecamError, TrajectoryParseError
from .synthetic import make_random_scene, oracle_render
from .geometry import CameraIntrinsics, CameraPose
from .trajectory import compile_trajectory, parse_trajectory

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2


def clip_to_tensor(clip: VideoClip) -> torch.Tensor:
    arr = clip.as_array().transpose(0, 3, 1, 2)
    return torch.from_numpy(np.ascontiguousarray(arr)).to(torch.float64)


def tensor_to_clip(t: torch.Tensor) -> VideoClip:
    arr = t.detach().numpy().transpose(0, 2, 3, 1)
    return VideoClip.from_array(np.clip(arr, 0.0, 1.0))


def masks_to_tensor(masks: MaskSequence) -> torch.Tensor:
    return torch.from_numpy(masks.masks.astype(np.float64)[:, None])


def _cmd_synth_scene(args) -> int:
    if not 1 <= args.objects <= 22:
        print(f"error: --objects must be in [1, 22], got {args.objects}", file=sys.stderr)
        return EXIT_USAGE
    k = CameraIntrinsics(args.focal, args.focal, args.width / 2.0, args.height / 2.0,
                         args.width, args.height)
    scene = make_random_scene(args.seed, args.objects, args.frames, k)
    frames, depths = [], []
    for t in range(args.frames):
        frame, depth = oracle_render(scene, k, CameraPose.identity(), t)
        frames.append(frame)
        depths.append(depth)
    out = Path(args.out)
    video_io.save_clip(VideoClip(tuple(frames)), out)
    video_io.save_depths(depths, out)
    video_io.save_meta(k, out)
    print(f"wrote {args.frames} frames + depths to {out}")
    return EXIT_OK


def _cmd_render_anchor(args) -> int:
    try:
        spec = parse_trajectory(Path(args.traj_file).read_bytes())
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except TrajectoryParseError as e:
        print(f"error: trajectory parse failed in {args.traj_file}: {e}", file=sys.stderr)
        return EXIT_USAGE
    clip = video_io.load_clip(args.clip_dir)
    depths = video_io.load_depths(args.clip_dir)
    k_src = video_io.intrinsics_from_meta(video_io.load_meta(args.clip_dir))
    if spec.frame_count != len(clip):
        print(f"error: trajectory frames={spec.frame_count} but clip has {len(clip)} frames",
              file=sys.stderr)
        return EXIT_USAGE
    traj = compile_trajectory(spec, k_src)
    anchor, masks = render_anchor_video(clip, depths, traj, args.splat_radius)
    out = Path(args.out_dir)
    video_io.save_clip(anchor, out)
    video_io.save_masks(masks, out)
    video_io.save_meta(k_src, out)
    report = {"frames": len(clip),
              "valid_fraction": [float(f) for f in masks.valid_fractions()]}
    (out / "render_report.json").write_text(json.dumps(report, indent=2))
    print(f"rendered {len(clip)} anchor frames to {out}")
    return EXIT_OK


def _cmd_train_toy(args) -> int:
    clip = video_io.load_clip(args.clip_dir)
    anchor = video_io.load_clip(args.anchor_dir)
    masks = video_io.load_masks(args.anchor_dir)
    if anchor.shape != clip.shape:
        print(f"error: anchor {anchor.shape} and clip {clip.shape} have different frame sizes",
              file=sys.stderr)
        return EXIT_USAGE
    print(f"flags: rank={args.rank} lr={args.lr} steps={args.steps} seed={args.seed}")

    model_config = diffusion.ToyDenoiserConfig(rank=args.rank, base_seed=args.seed)
    model = diffusion.ToyDenoiser(model_config)
    config = diffusion.TrainConfig(rank=args.rank, learning_rate=args.lr,
                                   steps=args.steps, rng_seed=args.seed)
    trace = diffusion.train(model, clip_to_tensor(anchor), masks_to_tensor(masks),
                            clip_to_tensor(clip), config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    diffusion.save_checkpoint(model, out / "checkpoint.npz")
    diffusion.save_loss_trace(trace, out / "loss_trace.csv")
    if trace:
        _, lt, ls = trace[-1]
        print(f"final losses: temporal={lt:.6f} spatial={ls:.6f} combined={lt + ls:.6f}")
    else:
        print("final losses: no steps run, adapters unchanged")
    return EXIT_OK


def _cmd_metrics(args) -> int:
    a = video_io.load_clip(args.a_dir).as_array()
    b = video_io.load_clip(args.b_dir).as_array()
    mask = None
    if args.mask_dir:
        mask = video_io.load_masks(args.mask_dir).masks
    report = metrics.compare(a, b, mask)
    print(report.to_json())
    return EXIT_OK


def _cmd_sdedit(args) -> int:
    clip = video_io.load_clip(args.in_dir)
    model = diffusion.load_checkpoint(args.checkpoint)
    rng = torch.Generator().manual_seed(args.seed)
    out_tensor = diffusion.sdedit(clip_to_tensor(clip), args.strength,
                                  model.spatial_only(), model.schedule, rng)
    video_io.save_clip(tensor_to_clip(out_tensor), args.out_dir)
    print(f"wrote {len(clip)} refined frames to {args.out_dir}")
    return EXIT_OK


def _cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    app = create_app(args.data_dir)
    uvicorn.run(app, host=args.host, port=args.port)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="recam",
                                     description="Camera trajectory retargeting tools")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth-scene", help="generate a synthetic clip with exact depths")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--objects", type=int, default=8)
    p.add_argument("--frames", type=int, default=14)
    p.add_argument("--width", type=int, default=128)
    p.add_argument("--height", type=int, default=128)
    p.add_argument("--focal", type=float, default=100.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_synth_scene)

    p = sub.add_parser("render-anchor", help="render a clip through a trajectory")
    p.add_argument("clip_dir")
    p.add_argument("traj_file")
    p.add_argument("out_dir")
    p.add_argument("--splat-radius", type=int, default=1)
    p.set_defaults(func=_cmd_render_anchor)

    p = sub.add_parser("train-toy", help="masked fine-tune of the toy denoiser")
    p.add_argument("anchor_dir")
    p.add_argument("clip_dir")
    p.add_argument("--rank", type=int, default=16)
    p.add_argument("--lr", type=float, default=5e-4)
    p.add_argument("--steps", type=int, default=400)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="train_out")
    p.set_defaults(func=_cmd_train_toy)

    p = sub.add_parser("metrics", help="PSNR/SSIM report between two frame dirs")
    p.add_argument("a_dir")
    p.add_argument("b_dir")
    p.add_argument("--mask-dir", default=None)
    p.set_defaults(func=_cmd_metrics)

    p = sub.add_parser("sdedit", help="refine a video with partial renoising")
    p.add_argument("in_dir")
    p.add_argument("checkpoint")
    p.add_argument("--strength", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=_cmd_sdedit)

    p = sub.add_parser("serve", help="HTTP preview service for the studio UI")
    p.add_argument("--port", type=int, default=8008)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--data-dir", default=None)
    p.set_defaults(func=_cmd_serve)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "serve" and args.data_dir is None:
        import os
        args.data_dir = os.environ.get("RECAPTURE_DATA_DIR")
        if args.data_dir is None:
            parser.error("serve requires --data-dir or RECAPTURE_DATA_DIR")
    try:
        return args.func(args)
    except (TrajectoryParseError, MissingFrameError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (RecamError, OSError, RuntimeError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
