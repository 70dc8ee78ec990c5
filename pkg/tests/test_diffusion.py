"""Denoiser mechanics: adapters, losses, gradients, training, sampling.

Gradient correctness is checked against central finite differences; the
sampler is checked against an independent reimplementation of the posterior
recursion driven by an analytically perfect noise predictor.
"""

import math

import numpy as np
import pytest
import torch

from recam import (LoRAAdapter, NoiseSchedule, ToyDenoiser, ToyDenoiserConfig,
                   TrainConfig, add_noise, lora_forward, masked_temporal_loss,
                   pool_image_prompt, sample, sdedit, spatial_loss, train)
from recam.diffusion import DTYPE, load_checkpoint, save_checkpoint, save_loss_trace

from gradcheck import fd_max_rel_error

TINY = ToyDenoiserConfig(patch=4, d_model=8, pairs=1, rank=2, max_tokens=16,
                         max_frames=4, content_gain=10.0, mean_gain=10.0,
                         pair_gain=10.0, value_gain=2.0, schedule_steps=50,
                         base_seed=5)


def tiny_model():
    return ToyDenoiser(TINY)


def make_inputs(gen, frames=3, size=8):
    video = torch.rand((frames, 3, size, size), generator=gen, dtype=DTYPE)
    masks = (torch.rand((frames, 1, size, size), generator=gen, dtype=DTYPE) > 0.3).to(DTYPE)
    return video, masks


def perturb_adapters(model, gen, scale=0.05):
    """Give every adapter factor nonzero values so all gradient paths are live."""
    with torch.no_grad():
        for p in model.parameters():
            p += scale * torch.randn(p.shape, generator=gen, dtype=DTYPE)


class TestNoiseSchedule:
    def test_linear_defaults(self):
        s = NoiseSchedule.linear()
        assert s.steps == 1000
        assert s.betas[0] == pytest.approx(1e-4)
        assert s.betas[-1] == pytest.approx(2e-2)
        assert s.alpha_bar(0) == 1.0
        assert np.all(np.diff(s.alpha_bars) < 0)

    def test_rejects_bad_betas(self):
        with pytest.raises(ValueError):
            NoiseSchedule(np.array([0.2, 0.1]))  # decreasing
        with pytest.raises(ValueError):
            NoiseSchedule(np.array([0.0, 0.1]))  # not strictly inside (0,1)

    def test_timestep_range_checked(self):
        s = NoiseSchedule.linear(10)
        with pytest.raises(ValueError):
            s.beta(0)
        with pytest.raises(ValueError):
            s.alpha_bar(11)


class TestLoraForward:
    def test_zero_b_is_exact_base(self):
        gen = torch.Generator().manual_seed(0)
        adapter = LoRAAdapter(4, 3, rank=2, generator=gen)
        w0 = torch.randn(3, 4, generator=gen, dtype=DTYPE)
        x = torch.randn(5, 4, generator=gen, dtype=DTYPE)
        assert torch.equal(lora_forward(x, w0, adapter), x @ w0.T)

    def test_full_rank_recovers_arbitrary_product(self):
        gen = torch.Generator().manual_seed(1)
        d = 4
        adapter = LoRAAdapter(d, d, rank=d, scale=1.0, generator=gen)
        with torch.no_grad():
            adapter.A.copy_(torch.randn(d, d, generator=gen, dtype=DTYPE))
            adapter.B.copy_(torch.randn(d, d, generator=gen, dtype=DTYPE))
        w0 = torch.zeros(d, d, dtype=DTYPE)
        x = torch.randn(7, d, generator=gen, dtype=DTYPE)
        expected = x @ (adapter.B @ adapter.A).T
        torch.testing.assert_close(lora_forward(x, w0, adapter), expected)

    def test_matches_dense_composition(self):
        gen = torch.Generator().manual_seed(2)
        adapter = LoRAAdapter(4, 4, rank=2, scale=0.7, generator=gen)
        with torch.no_grad():
            adapter.B.copy_(torch.randn(4, 2, generator=gen, dtype=DTYPE))
        w0 = torch.randn(4, 4, generator=gen, dtype=DTYPE)
        x = torch.randn(6, 4, generator=gen, dtype=DTYPE)
        dense = w0 + 0.7 * adapter.B @ adapter.A
        torch.testing.assert_close(lora_forward(x, w0, adapter), x @ dense.T,
                                   atol=1e-12, rtol=1e-12)

    def test_shape_mismatch_rejected(self):
        gen = torch.Generator().manual_seed(3)
        adapter = LoRAAdapter(4, 4, rank=2, generator=gen)
        with pytest.raises(ValueError):
            lora_forward(torch.zeros(5, 3, dtype=DTYPE), torch.zeros(4, 4, dtype=DTYPE), adapter)

    def test_rank_bound_enforced(self):
        gen = torch.Generator().manual_seed(4)
        with pytest.raises(ValueError):
            LoRAAdapter(4, 3, rank=5, generator=gen)
        adapter = LoRAAdapter(8, 8, rank=3, generator=gen)
        with torch.no_grad():
            adapter.B.copy_(torch.randn(8, 3, generator=gen, dtype=DTYPE))
        assert np.linalg.matrix_rank(adapter.delta_weight().detach().numpy()) <= 3


class TestAddNoise:
    def test_alpha_bar_one_limit(self):
        sched = NoiseSchedule(np.array([1e-12, 0.5]))
        v = torch.full((2, 3), 0.7, dtype=DTYPE)
        eps = torch.randn(2, 3, generator=torch.Generator().manual_seed(0), dtype=DTYPE)
        torch.testing.assert_close(add_noise(v, 1, sched, eps), v, atol=1e-5, rtol=0)

    def test_zero_signal(self):
        sched = NoiseSchedule.linear(10)
        eps = torch.randn(4, 4, generator=torch.Generator().manual_seed(1), dtype=DTYPE)
        out = add_noise(torch.zeros(4, 4, dtype=DTYPE), 5, sched, eps)
        torch.testing.assert_close(out, math.sqrt(1 - sched.alpha_bar(5)) * eps)

    def test_variance_preserved_monte_carlo(self):
        sched = NoiseSchedule.linear(100)
        gen = torch.Generator().manual_seed(2)
        total = 0.0
        draws = 1000
        for _ in range(draws):
            v = torch.randn(64, generator=gen, dtype=DTYPE)
            eps = torch.randn(64, generator=gen, dtype=DTYPE)
            total += float(add_noise(v, 60, sched, eps).pow(2).mean())
        assert total / draws == pytest.approx(1.0, rel=0.05)

    def test_out_of_range_t(self):
        sched = NoiseSchedule.linear(10)
        v = torch.zeros(2, 2, dtype=DTYPE)
        with pytest.raises(ValueError):
            add_noise(v, 0, sched, v)
        with pytest.raises(ValueError):
            add_noise(v, 11, sched, v)

    def test_eps_shape_checked(self):
        sched = NoiseSchedule.linear(10)
        with pytest.raises(ValueError):
            add_noise(torch.zeros(2, 2, dtype=DTYPE), 1, sched, torch.zeros(3, dtype=DTYPE))


class TestZeroInitNeutrality:
    def test_output_equals_base_on_random_inputs(self):
        model = tiny_model()
        gen = torch.Generator().manual_seed(7)
        y = torch.rand(3, generator=gen, dtype=DTYPE)
        for _ in range(20):
            x = torch.randn(2, 3, 8, 8, generator=gen, dtype=DTYPE)
            t = int(torch.randint(1, 51, (1,), generator=gen))
            with_adapters = model(x, t, y)
            base_only = model(x, t, y, use_spatial_lora=False, use_temporal_lora=False)
            assert torch.equal(with_adapters, base_only)


class TestFactorization:
    def test_spatial_blocks_do_not_mix_frames(self):
        model = tiny_model()
        gen = torch.Generator().manual_seed(8)
        perturb_adapters(model, gen)
        y = torch.rand(3, generator=gen, dtype=DTYPE)
        a = torch.randn(3, 3, 8, 8, generator=gen, dtype=DTYPE)
        b = a.clone()
        b[2] = torch.randn(3, 8, 8, generator=gen, dtype=DTYPE)
        out_a = model(a, 5, y, bypass_temporal=True)
        out_b = model(b, 5, y, bypass_temporal=True)
        assert torch.equal(out_a[0], out_b[0])
        assert torch.equal(out_a[1], out_b[1])

    def test_temporal_blocks_do_not_mix_tokens(self):
        model = tiny_model()
        gen = torch.Generator().manual_seed(9)
        perturb_adapters(model, gen)
        block = model.temporal_blocks[0]
        stream = torch.randn(4, 3, 8, generator=gen, dtype=DTYPE)  # (tokens, frames, d)
        feat = torch.randn(4, 3, 8, generator=gen, dtype=DTYPE)
        idx = torch.arange(4)[:, None] * TINY.max_frames + torch.arange(3)[None, :]
        out_a = block(stream, feat, 1.0, pair_idx=idx)
        stream2, feat2 = stream.clone(), feat.clone()
        stream2[3] = torch.randn(3, 8, generator=gen, dtype=DTYPE)
        feat2[3] = torch.randn(3, 8, generator=gen, dtype=DTYPE)
        out_b = block(stream2, feat2, 1.0, pair_idx=idx)
        assert torch.equal(out_a[:3], out_b[:3])

    def test_bypass_temporal_ignores_other_frames_entirely(self):
        model = tiny_model()
        gen = torch.Generator().manual_seed(10)
        perturb_adapters(model, gen)
        y = torch.rand(3, generator=gen, dtype=DTYPE)
        frame = torch.randn(1, 3, 8, 8, generator=gen, dtype=DTYPE)
        alone = model(frame, 7, y, bypass_temporal=True)
        stacked = torch.cat([frame, torch.randn(2, 3, 8, 8, generator=gen, dtype=DTYPE)])
        together = model(stacked, 7, y, bypass_temporal=True)
        assert torch.equal(alone[0], together[0])


class TestMaskedTemporalLoss:
    def test_full_mask_equals_plain_mse(self):
        model = tiny_model()
        gen = torch.Generator().manual_seed(11)
        perturb_adapters(model, gen)
        video, _ = make_inputs(gen)
        masks = torch.ones(3, 1, 8, 8, dtype=DTYPE)
        y = pool_image_prompt(video, masks)
        eps = torch.randn(video.shape, generator=gen, dtype=DTYPE)
        t = 13
        loss, _ = masked_temporal_loss(model, video, masks, t, eps, y)
        x_t = add_noise(video, t, model.schedule, eps)
        with torch.no_grad():
            pred = model(x_t, t, y)
        plain = float(((eps - pred) ** 2).mean())
        assert loss == pytest.approx(plain, rel=1e-9)

    def test_zero_mask_zero_loss_zero_grads(self):
        model = tiny_model()
        gen = torch.Generator().manual_seed(12)
        perturb_adapters(model, gen)
        video, _ = make_inputs(gen)
        masks = torch.zeros(3, 1, 8, 8, dtype=DTYPE)
        y = torch.zeros(3, dtype=DTYPE)
        eps = torch.randn(video.shape, generator=gen, dtype=DTYPE)
        loss, grads = masked_temporal_loss(model, video, masks, 9, eps, y)
        assert loss == 0.0
        assert all(not g.any() for g in grads)

    def test_masked_content_cannot_influence_gradients(self):
        model = tiny_model()
        gen = torch.Generator().manual_seed(13)
        perturb_adapters(model, gen)
        video, masks = make_inputs(gen)
        y = pool_image_prompt(video, masks)
        eps = torch.randn(video.shape, generator=gen, dtype=DTYPE)
        other = video + (1.0 - masks) * torch.rand(video.shape, generator=gen, dtype=DTYPE)
        other = other.clamp(0, 1)
        y2 = pool_image_prompt(other, masks)
        assert torch.equal(y, y2)
        loss_a, grads_a = masked_temporal_loss(model, video, masks, 21, eps, y)
        loss_b, grads_b = masked_temporal_loss(model, other, masks, 21, eps, y2)
        assert loss_a == loss_b
        assert all(torch.equal(a, b) for a, b in zip(grads_a, grads_b))

    def test_gradients_match_finite_differences(self):
        model = tiny_model()
        gen = torch.Generator().manual_seed(14)
        perturb_adapters(model, gen)
        video, masks = make_inputs(gen)
        y = pool_image_prompt(video, masks)
        eps = torch.randn(video.shape, generator=gen, dtype=DTYPE)
        t = 17
        _, grads = masked_temporal_loss(model, video, masks, t, eps, y)

        def loss_fn():
            val, _ = masked_temporal_loss(model, video, masks, t, eps, y)
            return val

        worst = fd_max_rel_error(loss_fn, model.temporal_parameters(), grads, gen)
        assert worst <= 1e-4

    def test_misaligned_masks_rejected(self):
        model = tiny_model()
        video = torch.zeros(3, 3, 8, 8, dtype=DTYPE)
        with pytest.raises(ValueError):
            masked_temporal_loss(model, video, torch.zeros(2, 1, 8, 8, dtype=DTYPE),
                                 1, video, torch.zeros(3, dtype=DTYPE))


class TestSpatialLoss:
    def test_single_frame_clip_always_selects_it(self):
        model = tiny_model()
        gen = torch.Generator().manual_seed(15)
        clip = torch.rand(1, 3, 8, 8, generator=gen, dtype=DTYPE)
        y = torch.zeros(3, dtype=DTYPE)
        eps = torch.randn(3, 8, 8, generator=gen, dtype=DTYPE)
        a, _ = spatial_loss(model, clip, 5, eps, y, torch.Generator().manual_seed(0))
        b, _ = spatial_loss(model, clip, 5, eps, y, torch.Generator().manual_seed(999))
        assert a == b

    def test_other_frames_do_not_matter(self):
        model = tiny_model()
        gen = torch.Generator().manual_seed(16)
        perturb_adapters(model, gen)
        clip = torch.rand(3, 3, 8, 8, generator=gen, dtype=DTYPE)
        y = torch.rand(3, generator=gen, dtype=DTYPE)
        eps = torch.randn(3, 8, 8, generator=gen, dtype=DTYPE)
        rng_state = torch.Generator().manual_seed(42)
        i = int(torch.randint(3, (1,), generator=torch.Generator().manual_seed(42)))
        loss_a, grads_a = spatial_loss(model, clip, 7, eps, y,
                                       torch.Generator().manual_seed(42))
        other = clip.clone()
        other[(i + 1) % 3] = torch.rand(3, 8, 8, generator=gen, dtype=DTYPE)
        loss_b, grads_b = spatial_loss(model, other, 7, eps, y,
                                       torch.Generator().manual_seed(42))
        assert loss_a == loss_b
        assert all(torch.equal(a, b) for a, b in zip(grads_a, grads_b))

    def test_gradients_match_finite_differences(self):
        model = tiny_model()
        gen = torch.Generator().manual_seed(17)
        perturb_adapters(model, gen)
        clip = torch.rand(3, 3, 8, 8, generator=gen, dtype=DTYPE)
        y = pool_image_prompt(clip)
        eps = torch.randn(3, 8, 8, generator=gen, dtype=DTYPE)
        t = 23
        _, grads = spatial_loss(model, clip, t, eps, y, torch.Generator().manual_seed(3))

        def loss_fn():
            val, _ = spatial_loss(model, clip, t, eps, y, torch.Generator().manual_seed(3))
            return val

        worst = fd_max_rel_error(loss_fn, model.spatial_parameters(), grads, gen)
        assert worst <= 1e-4

    def test_temporal_adapters_get_no_gradient(self):
        model = tiny_model()
        gen = torch.Generator().manual_seed(18)
        perturb_adapters(model, gen)
        clip = torch.rand(2, 3, 8, 8, generator=gen, dtype=DTYPE)
        eps = torch.randn(3, 8, 8, generator=gen, dtype=DTYPE)
        y = torch.zeros(3, dtype=DTYPE)
        x_t = add_noise(clip[0:1], 5, model.schedule, eps[None])
        pred = model(x_t, 5, y, bypass_temporal=True)
        loss = ((eps[None] - pred) ** 2).mean()
        grads = torch.autograd.grad(loss, model.temporal_parameters(),
                                    allow_unused=True)
        assert all(g is None for g in grads)


class TestTrain:
    def test_zero_steps_leaves_adapters_unchanged(self):
        model = tiny_model()
        gen = torch.Generator().manual_seed(19)
        video, masks = make_inputs(gen)
        before = [p.detach().clone() for p in model.parameters()]
        trace = train(model, video, masks, video, TrainConfig(rank=2, steps=0))
        assert trace == []
        for p, b in zip(model.parameters(), before):
            assert torch.equal(p, b)
        for blocks in (model.spatial_blocks, model.temporal_blocks):
            for block in blocks:
                assert not block.out.adapter.B.any()

    def test_identical_seeds_identical_traces(self):
        gen = torch.Generator().manual_seed(20)
        video, masks = make_inputs(gen)
        traces = []
        for _ in range(2):
            model = tiny_model()
            traces.append(train(model, video, masks, video,
                                TrainConfig(rank=2, steps=12, rng_seed=5)))
        assert traces[0] == traces[1]

    def test_base_weights_never_change(self):
        model = tiny_model()
        gen = torch.Generator().manual_seed(21)
        video, masks = make_inputs(gen)
        digest_before = model.base_digest()
        train(model, video, masks, video, TrainConfig(rank=2, steps=8))
        assert model.base_digest() == digest_before

    def test_both_adapter_sets_move(self):
        model = tiny_model()
        gen = torch.Generator().manual_seed(22)
        video, masks = make_inputs(gen)
        train(model, video, masks, video, TrainConfig(rank=2, steps=8))
        assert any(p.detach().abs().sum() > 0 for p in
                   (b.out.adapter.B for b in model.spatial_blocks))
        assert any(p.detach().abs().sum() > 0 for p in
                   (b.out.adapter.B for b in model.temporal_blocks))

    def test_rank_mismatch_rejected(self):
        model = tiny_model()
        video = torch.zeros(2, 3, 8, 8, dtype=DTYPE)
        masks = torch.ones(2, 1, 8, 8, dtype=DTYPE)
        with pytest.raises(ValueError, match="rank"):
            train(model, video, masks, video, TrainConfig(rank=16, steps=1))

    def test_sgd_option_runs(self):
        model = tiny_model()
        gen = torch.Generator().manual_seed(23)
        video, masks = make_inputs(gen)
        trace = train(model, video, masks, video,
                      TrainConfig(rank=2, steps=4, optimizer="sgd"))
        assert len(trace) == 4

    def test_loss_trace_csv(self, tmp_path):
        path = tmp_path / "trace.csv"
        save_loss_trace([(0, 1.5, 2.5), (1, 1.0, 2.0)], path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "step,loss_temp,loss_spatial"
        assert lines[1] == "0,1.5,2.5"


class TestSample:
    def test_shape_and_finiteness(self):
        model = tiny_model()
        sched = model.schedule
        rng = torch.Generator().manual_seed(24)
        out = sample(model, torch.zeros(3, dtype=DTYPE), sched, rng, (2, 3, 8, 8))
        assert out.shape == (2, 3, 8, 8)
        assert torch.isfinite(out).all()

    def test_two_seeds_differ(self):
        model = tiny_model()
        sched = model.schedule
        a = sample(model, torch.zeros(3, dtype=DTYPE), sched,
                   torch.Generator().manual_seed(1), (1, 3, 8, 8))
        b = sample(model, torch.zeros(3, dtype=DTYPE), sched,
                   torch.Generator().manual_seed(2), (1, 3, 8, 8))
        assert not torch.equal(a, b)

    def test_perfect_denoiser_recovers_constant(self):
        # An analytically perfect noise predictor for a constant video makes
        # ancestral sampling converge to that constant; the whole chain must
        # match an independent reimplementation of the posterior recursion.
        sched = NoiseSchedule.linear(200)
        c = 0.6

        def perfect(x, t, y):
            ab = sched.alpha_bar(t)
            return (x - math.sqrt(ab) * c) / math.sqrt(1.0 - ab)

        shape = (1, 3, 4, 4)
        out = sample(perfect, torch.zeros(3, dtype=DTYPE), sched,
                     torch.Generator().manual_seed(77), shape, clip_x0=None)

        # independent simulation with the same draws
        gen = torch.Generator().manual_seed(77)
        x = torch.randn(shape, generator=gen, dtype=DTYPE)
        mads = []
        for t in range(sched.steps, 0, -1):
            ab, ab_prev = sched.alpha_bar(t), sched.alpha_bar(t - 1)
            beta = sched.beta(t)
            x0 = torch.full(shape, c, dtype=DTYPE)  # perfect eps implies x0 = c
            mean = (math.sqrt(ab_prev) * beta * x0
                    + math.sqrt(1 - beta) * (1 - ab_prev) * x) / (1 - ab)
            if t > 1:
                var = (1 - ab_prev) / (1 - ab) * beta
                x = mean + math.sqrt(var) * torch.randn(shape, generator=gen, dtype=DTYPE)
            else:
                x = mean
            mads.append(float((x - c).abs().mean()))
        torch.testing.assert_close(out, x, atol=1e-9, rtol=0)
        assert mads[-1] < mads[0]
        assert mads[-1] == pytest.approx(0.0, abs=1e-9)


class TestSdedit:
    def test_strength_zero_is_identity(self):
        model = tiny_model()
        gen = torch.Generator().manual_seed(25)
        video = torch.rand(2, 3, 8, 8, generator=gen, dtype=DTYPE)
        out = sdedit(video, 0.0, model.spatial_only(), model.schedule,
                     torch.Generator().manual_seed(0))
        assert torch.equal(out, video)

    def test_strength_one_decorrelates(self):
        model = tiny_model()
        gen = torch.Generator().manual_seed(26)
        video = torch.rand(2, 3, 16, 16, generator=gen, dtype=DTYPE)
        out = sdedit(video, 1.0, model.spatial_only(), model.schedule,
                     torch.Generator().manual_seed(1))
        a = video.reshape(-1).numpy()
        b = out.reshape(-1).numpy()
        rho = np.corrcoef(a[:1000], b[:1000])[0, 1]
        assert abs(rho) < 0.1

    def test_partial_strength_denoises_toward_overfit_constant(self):
        # direct simulation oracle: a denoiser pinned to a constant video
        # must strictly reduce the error of a noisy version of that constant
        sched = NoiseSchedule.linear(100)
        c = 0.45

        def overfit(x, t, y):
            ab = sched.alpha_bar(t)
            return (x - math.sqrt(ab) * c) / math.sqrt(1.0 - ab)

        gen = torch.Generator().manual_seed(27)
        clean = torch.full((2, 3, 8, 8), c, dtype=DTYPE)
        noisy = clean + 0.2 * torch.randn(clean.shape, generator=gen, dtype=DTYPE)
        noisy = noisy.clamp(0, 1)
        out = sdedit(noisy, 0.3, overfit, sched, torch.Generator().manual_seed(2))
        assert float(((out - clean) ** 2).mean()) < float(((noisy - clean) ** 2).mean())

    def test_invalid_strength_rejected(self):
        model = tiny_model()
        video = torch.zeros(1, 3, 8, 8, dtype=DTYPE)
        with pytest.raises(ValueError):
            sdedit(video, 1.5, model.spatial_only(), model.schedule,
                   torch.Generator().manual_seed(0))


class TestCheckpoint:
    def test_roundtrip_preserves_adapters_and_base(self, tmp_path):
        model = tiny_model()
        gen = torch.Generator().manual_seed(28)
        video, masks = make_inputs(gen)
        train(model, video, masks, video, TrainConfig(rank=2, steps=5))
        path = tmp_path / "ckpt.npz"
        save_checkpoint(model, path)
        loaded = load_checkpoint(path)
        assert loaded.base_digest() == model.base_digest()
        for a, b in zip(loaded.parameters(), model.parameters()):
            assert torch.equal(a, b)
        x = torch.rand(2, 3, 8, 8, generator=gen, dtype=DTYPE)
        y = torch.zeros(3, dtype=DTYPE)
        assert torch.equal(loaded(x, 3, y), model(x, 3, y))

    def test_digest_mismatch_detected(self, tmp_path):
        model = tiny_model()
        path = tmp_path / "ckpt.npz"
        save_checkpoint(model, path)
        data = dict(np.load(path))
        data["w0_digest"] = np.frombuffer(b"0" * 64, dtype=np.uint8)
        np.savez(path, **data)
        with pytest.raises(ValueError, match="digest"):
            load_checkpoint(path)


def test_tiny_model_parameter_budget():
    # the gradient-check model stays within the small-model regime
    assert tiny_model().n_parameters() <= 10_000
