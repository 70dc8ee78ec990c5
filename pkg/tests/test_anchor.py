"""Anchor rendering: whole-clip orchestration against analytic expectations."""

import numpy as np
import pytest

from recam import (CameraIntrinsics, CameraPose, DepthMap, Frame, MaskSequence,
                   TrajectoryPrimitive, TrajectorySpec, VideoClip, compile_trajectory,
                   make_random_scene, oracle_render, render_anchor_video)
from recam.errors import DimensionMismatchError
from recam.metrics import psnr

K = CameraIntrinsics(100.0, 100.0, 64.0, 64.0, 128, 128)


def constant_depth_clip(rng, n=6, d=4.0):
    frames = tuple(Frame(rng.uniform(size=(128, 128, 3))) for _ in range(n))
    depths = [DepthMap.from_values(np.full((128, 128), d)) for _ in range(n)]
    return VideoClip(frames), depths, d


class TestRenderAnchorVideo:
    def test_identity_reproduces_clip_bitwise(self, rng):
        clip, depths, _ = constant_depth_clip(rng)
        traj = compile_trajectory(TrajectorySpec((), len(clip)), K)
        anchor, masks = render_anchor_video(clip, depths, traj, splat_radius=0)
        assert masks.masks.all()
        for got, src in zip(anchor.frames, clip.frames):
            assert np.array_equal(got.pixels, src.pixels)

    def test_truck_invalid_fraction_matches_band_width(self, rng):
        clip, depths, d = constant_depth_clip(rng)
        magnitude = -2.0  # camera trucks right two units over the clip
        spec = TrajectorySpec((TrajectoryPrimitive("truck", magnitude, "linear"),),
                              len(clip))
        traj = compile_trajectory(spec, K)
        anchor, masks = render_anchor_video(clip, depths, traj, splat_radius=0)
        n = len(clip)
        fractions = masks.valid_fractions()
        for i in range(n):
            dx = abs(magnitude) * i / (n - 1)
            expected_invalid = K.fx * dx / (d * K.width)
            assert 1.0 - fractions[i] == pytest.approx(expected_invalid, abs=0.02)

    def test_orbit_matches_raycast_oracle(self):
        # orbit around a close pivot: the camera circles the subject; the
        # splat render must agree with the analytic renderer wherever both
        # are valid
        k = CameraIntrinsics(400.0, 400.0, 256.0, 256.0, 512, 512)
        scene = make_random_scene(seed=11, n_objects=8, frames=5, k=k,
                                  depth_range=(5.0, 8.0), size_range=(0.2, 0.45),
                                  palette=(0.2, 0.8))
        spec = TrajectorySpec(
            (TrajectoryPrimitive("orbit", 15.0, "linear", pivot_depth=2.0),), 5)
        traj = compile_trajectory(spec, k)
        frames, depths = [], []
        for t in range(5):
            f, d = oracle_render(scene, k, CameraPose.identity(), t)
            frames.append(f)
            depths.append(d)
        anchor, masks = render_anchor_video(VideoClip(tuple(frames)), depths, traj,
                                            splat_radius=1)
        scores = []
        for t in range(1, 5):
            truth, _ = oracle_render(scene, k, traj[t].pose, t)
            scores.append(psnr(anchor.frames[t].pixels, truth.pixels, masks.masks[t]))
        assert min(scores) >= 30.0

    def test_masks_are_raw_splat_coverage(self, rng):
        clip, depths, _ = constant_depth_clip(rng, n=3)
        spec = TrajectorySpec((TrajectoryPrimitive("pan", 8.0, "linear"),), 3)
        traj = compile_trajectory(spec, K)
        from recam import render_view
        anchor, masks = render_anchor_video(clip, depths, traj, splat_radius=1)
        for i in range(3):
            _, expected = render_view(clip.frames[i], depths[i], K,
                                      traj[i].intrinsics, traj[i].pose, 1)
            assert np.array_equal(masks.masks[i], expected)

    def test_length_mismatch_names_shorter_input(self, rng):
        clip, depths, _ = constant_depth_clip(rng, n=4)
        traj = compile_trajectory(TrajectorySpec((), 4), K)
        with pytest.raises(DimensionMismatchError, match="depths"):
            render_anchor_video(clip, depths[:3], traj)

    def test_small_pose_agreement_invariant(self):
        # rotation <= 20 deg, translation <= 0.2 * mean depth: mutually valid
        # pixels agree with the oracle within 0.05 mean absolute error
        scene = make_random_scene(seed=23, n_objects=6, frames=1, k=K)
        frame, depth = oracle_render(scene, K, CameraPose.identity())
        mean_depth = scene.mean_depth()
        rng = np.random.default_rng(0)
        from recam import render_view
        for _ in range(3):
            angle = np.radians(rng.uniform(-20, 20))
            rot = np.array([[np.cos(angle), 0, np.sin(angle)],
                            [0, 1, 0],
                            [-np.sin(angle), 0, np.cos(angle)]])
            t = rng.uniform(-0.2, 0.2, size=3) * mean_depth * np.array([1, 1, 0.5])
            pose = CameraPose(rot, t)
            rendered, mask = render_view(frame, depth, K, K, pose, splat_radius=0)
            truth, tdepth = oracle_render(scene, K, pose)
            both = mask & tdepth.validity
            mae = np.abs(rendered.pixels - truth.pixels)[both].mean()
            assert mae <= 0.05


class TestTypes:
    def test_clip_requires_uniform_shape(self):
        with pytest.raises(DimensionMismatchError):
            VideoClip((Frame(np.zeros((4, 4, 3))), Frame(np.zeros((4, 5, 3)))))

    def test_mask_sequence_rejects_non_binary(self):
        with pytest.raises(ValueError):
            MaskSequence(np.full((2, 4, 4), 0.5))

    def test_mask_sequence_accepts_zero_one_ints(self):
        seq = MaskSequence(np.ones((2, 4, 4), dtype=np.int64))
        assert seq.masks.dtype == bool

    def test_clip_array_roundtrip(self, rng):
        arr = rng.uniform(size=(3, 8, 8, 3))
        clip = VideoClip.from_array(arr)
        assert np.array_equal(clip.as_array(), arr)
