"""Desk-scale video denoiser with spatial and temporal low-rank adapters.

The model is a small factorized transformer over patch tokens: spatial
attention blocks mix tokens within each frame, temporal attention blocks mix
each token across frames.  Every attention linear carries a low-rank adapter
(``W = W0 + scale * B @ A``); base weights are frozen buffers, so the only
trainable state is the adapter factors.  Fine-tuning couples two losses:

* a masked denoising loss on the rendered anchor video that updates the
  temporal adapters only (invalid pixels are excluded from the loss, and are
  zeroed before noising so they cannot leak through attention), and
* a per-frame denoising loss on source-video frames, with the temporal
  blocks bypassed, that updates the spatial adapters only.

Everything runs in float64 on CPU and is bitwise deterministic for a fixed
seed, which keeps the finite-difference gradient checks meaningful.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass, asdict, field

import numpy as np
import torch
from torch import nn

DTYPE = torch.float64


# ---------------------------------------------------------------------------
# Noise schedule


@dataclass(frozen=True)
class NoiseSchedule:
    """Variance-preserving forward process defined by per-step betas.

    Timesteps are 1-indexed: ``alpha_bar(t)`` is the product of
    ``1 - beta_s`` for s = 1..t, and ``alpha_bar(0) == 1``.
    """

    betas: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.betas, dtype=np.float64)
        if b.ndim != 1 or len(b) < 1:
            raise ValueError("betas must be a non-empty 1-D sequence")
        if (b <= 0).any() or (b >= 1).any():
            raise ValueError("betas must lie strictly inside (0, 1)")
        if (np.diff(b) < 0).any():
            raise ValueError("betas must be monotonically non-decreasing")
        object.__setattr__(self, "betas", b)
        alphas = 1.0 - b
        alpha_bars = np.cumprod(alphas)
        if (np.diff(alpha_bars) >= 0).any():
            raise ValueError("alpha_bar must be strictly decreasing")
        object.__setattr__(self, "alphas", alphas)
        object.__setattr__(self, "alpha_bars", alpha_bars)

    @staticmethod
    def linear(steps: int = 1000, beta_start: float = 1e-4,
               beta_end: float = 2e-2) -> "NoiseSchedule":
        return NoiseSchedule(np.linspace(beta_start, beta_end, steps))

    @property
    def steps(self) -> int:
        return len(self.betas)

    def alpha_bar(self, t: int) -> float:
        self._check(t, allow_zero=True)
        return 1.0 if t == 0 else float(self.alpha_bars[t - 1])

    def beta(self, t: int) -> float:
        self._check(t)
        return float(self.betas[t - 1])

    def _check(self, t: int, allow_zero: bool = False) -> None:
        lo = 0 if allow_zero else 1
        if not lo <= t <= self.steps:
            raise ValueError(f"timestep {t} outside [{lo}, {self.steps}]")


def add_noise(v: torch.Tensor, t: int, schedule: NoiseSchedule,
              eps: torch.Tensor) -> torch.Tensor:
    """Forward-process sample: sqrt(abar_t) v + sqrt(1 - abar_t) eps."""
    if eps.shape != v.shape:
        raise ValueError(f"eps shape {tuple(eps.shape)} != video shape {tuple(v.shape)}")
    schedule._check(t)
    ab = schedule.alpha_bar(t)
    return math.sqrt(ab) * v + math.sqrt(1.0 - ab) * eps


# ---------------------------------------------------------------------------
# Low-rank adapters


class LoRAAdapter(nn.Module):
    """Low-rank factors for one linear map: contributes scale * B @ A @ x.

    A starts gaussian (std 0.02) and B starts zero, so a fresh adapter is an
    exact no-op and rank(delta W) never exceeds ``rank``.
    """

    def __init__(self, d_in: int, d_out: int, rank: int, scale: float = 1.0,
                 generator: torch.Generator | None = None):
        super().__init__()
        if rank < 1 or rank > min(d_in, d_out):
            raise ValueError(f"rank must be in [1, {min(d_in, d_out)}], got {rank}")
        self.rank = rank
        self.scale = scale
        a = torch.empty(rank, d_in, dtype=DTYPE)
        a.normal_(0.0, 0.02, generator=generator)
        self.A = nn.Parameter(a)
        self.B = nn.Parameter(torch.zeros(d_out, rank, dtype=DTYPE))

    def delta(self, x: torch.Tensor) -> torch.Tensor:
        return self.scale * ((x @ self.A.T) @ self.B.T)

    def delta_weight(self) -> torch.Tensor:
        return self.scale * (self.B @ self.A)


def lora_forward(x: torch.Tensor, w0: torch.Tensor, adapter: LoRAAdapter) -> torch.Tensor:
    """Adapted linear map: W0 @ x + scale * B @ (A @ x), batched over leading dims."""
    if x.shape[-1] != w0.shape[1]:
        raise ValueError(f"input dim {x.shape[-1]} != W0 columns {w0.shape[1]}")
    if adapter.A.shape[1] != w0.shape[1] or adapter.B.shape[0] != w0.shape[0]:
        raise ValueError("adapter factors do not match W0 shape")
    return x @ w0.T + adapter.delta(x)


class AdaptedLinear(nn.Module):
    """Frozen base linear (weight and bias live in buffers) plus one adapter."""

    def __init__(self, d_in: int, d_out: int, rank: int, scale: float,
                 generator: torch.Generator, base_std: float):
        super().__init__()
        w = torch.empty(d_out, d_in, dtype=DTYPE)
        if base_std > 0:
            w.normal_(0.0, base_std, generator=generator)
        else:
            w.zero_()
        self.register_buffer("weight", w)
        self.register_buffer("bias", torch.zeros(d_out, dtype=DTYPE))
        self.adapter = LoRAAdapter(d_in, d_out, rank, scale, generator)

    def forward(self, x: torch.Tensor, use_adapter: bool = True) -> torch.Tensor:
        y = x @ self.weight.T + self.bias
        if use_adapter:
            y = y + self.adapter.delta(x)
        return y


class IndexedContent(nn.Module):
    """Adapter over a one-hot slot basis, evaluated by column lookup.

    Equivalent to ``lora_forward(coeff * onehot(idx), 0, adapter)`` but never
    materializes the one-hot matrix; the base weight is zero by definition,
    so this is adapter-only.
    """

    def __init__(self, n_slots: int, d_out: int, rank: int, scale: float,
                 generator: torch.Generator):
        super().__init__()
        self.n_slots = n_slots
        self.adapter = LoRAAdapter(n_slots, d_out, rank, scale, generator)

    def forward(self, idx: torch.Tensor, coeff: float,
                use_adapter: bool = True) -> torch.Tensor:
        if not use_adapter:
            shape = tuple(idx.shape) + (self.adapter.B.shape[0],)
            return torch.zeros(shape, dtype=DTYPE)
        a = self.adapter
        cols = a.A[:, idx.reshape(-1)].T.reshape(*idx.shape, a.rank)
        return (a.scale * coeff) * (cols @ a.B.T)


class MixerBlock(nn.Module):
    """Residual block: self-attention over one axis plus content projections.

    Attention mixes the L entries along the second-to-last axis.  The two
    content projections are linear maps over fixed position features, scaled
    by a caller-supplied modulation: ``content`` reads the mean-centered
    one-hot basis (per-position detail) and ``content_mean`` reads a constant
    feature (shared content).  Centering keeps the shared mode out of the
    detail path, so under plain SGD both learn at comparable rates instead of
    the shared mode hogging the stable step size.  All write paths have zero
    base weights, so an untrained block is an exact identity.
    """

    MEAN_FEATURES = 16

    def __init__(self, d: int, rank: int, scale: float, generator: torch.Generator,
                 n_slots: int, content_gain: float, mean_gain: float,
                 value_gain: float = 1.0, pair_slots: int = 0,
                 pair_gain: float = 0.0):
        super().__init__()
        std = 1.0 / math.sqrt(d)
        self.query = AdaptedLinear(d, d, rank, scale, generator, std)
        self.key = AdaptedLinear(d, d, rank, scale, generator, std)
        self.value = AdaptedLinear(d, d, rank, scale, generator, std)
        self.out = AdaptedLinear(d, d, rank, scale, generator, 0.0)
        self.content = AdaptedLinear(n_slots, d, rank, scale, generator, 0.0)
        self.content_mean = AdaptedLinear(self.MEAN_FEATURES, d,
                                          min(rank, self.MEAN_FEATURES),
                                          scale, generator, 0.0)
        self.pair = (IndexedContent(pair_slots, d, rank, scale, generator)
                     if pair_slots else None)
        self.scale = 1.0 / math.sqrt(d)
        self.n_slots = n_slots
        self.content_gain = content_gain
        self.mean_gain = mean_gain
        self.value_gain = value_gain
        self.pair_gain = pair_gain

    def forward(self, stream: torch.Tensor, image_feat: torch.Tensor,
                modulation: float = 1.0, use_adapter: bool = True,
                pair_idx: torch.Tensor | None = None) -> torch.Tensor:
        """One residual update of the write stream.

        Queries and keys see the stream plus the image features, so attention
        patterns adapt to the noisy input; values read the stream only.  A
        denoiser trained on a single video must not regress onto a linear
        copy of its input (on-distribution that shadows the clean signal and
        at sampling time it freezes the noise in place), and keeping image
        features out of every value path rules that shortcut out
        structurally.
        """
        full = stream + image_feat
        q = self.query(full, use_adapter)
        k = self.key(full, use_adapter)
        v = self.value(self.value_gain * stream, use_adapter)
        att = torch.softmax((q @ k.transpose(-2, -1)) * self.scale, dim=-1)
        length = stream.shape[-2]
        basis = torch.eye(self.n_slots, dtype=DTYPE)[:length]
        basis[:, :length] -= 1.0 / length  # zero-sum rows: no shared mode here
        basis = basis * (self.content_gain * modulation)
        ones = torch.full((1, self.MEAN_FEATURES), self.mean_gain * modulation
                          / math.sqrt(self.MEAN_FEATURES), dtype=DTYPE)
        write = self.content(basis, use_adapter) + self.content_mean(ones, use_adapter)
        if self.pair is not None and pair_idx is not None:
            wp = self.pair(pair_idx, self.pair_gain * modulation, use_adapter)
            # Keep only the interaction part: both marginals are projected
            # out, so this path never competes with the per-position content
            # tables for the same residual.
            wp = (wp - wp.mean(dim=0, keepdim=True) - wp.mean(dim=1, keepdim=True)
                  + wp.mean(dim=(0, 1), keepdim=True))
            write = write + wp
        return stream + self.out(att @ v, use_adapter) + write


# ---------------------------------------------------------------------------
# The denoiser


@dataclass(frozen=True)
class ToyDenoiserConfig:
    """Architecture and schedule hyperparameters; fully determines the base."""

    patch: int = 4
    d_model: int = 64
    pairs: int = 2
    rank: int = 16
    lora_scale: float = 1.0
    max_frames: int = 16
    max_tokens: int = 256
    base_seed: int = 0
    content_gain: float = 300.0
    mean_gain: float = 300.0
    pair_gain: float = 300.0
    value_gain: float = 4.0
    head_gain: float = 1.0
    schedule_steps: int = 1000
    beta_start: float = 1e-4
    beta_end: float = 2e-2

    def to_json(self) -> str:
        return json.dumps(asdict(self))

    @staticmethod
    def from_json(text: str) -> "ToyDenoiserConfig":
        return ToyDenoiserConfig(**json.loads(text))


def _sinusoidal(t: float, dim: int) -> torch.Tensor:
    half = dim // 2
    freqs = torch.exp(-math.log(10000.0) * torch.arange(half, dtype=DTYPE) / half)
    angles = t * freqs
    return torch.cat([torch.sin(angles), torch.cos(angles)])


class ToyDenoiser(nn.Module):
    """Noise predictor eps(x_t, t, y) over video tensors shaped (N, 3, H, W).

    ``y`` is the image-prompt vector (channel means of the first anchor
    frame).  The base network contributes an analytic shrinkage term
    sqrt(1 - abar_t) * x_t; the token blocks add corrections on top, and with
    zeroed adapters those corrections are exactly zero.
    """

    TIME_FEATURES = 32

    def __init__(self, config: ToyDenoiserConfig = ToyDenoiserConfig(),
                 schedule: NoiseSchedule | None = None):
        super().__init__()
        self.config = config
        self.schedule = schedule if schedule is not None else NoiseSchedule.linear(
            config.schedule_steps, config.beta_start, config.beta_end)
        if self.schedule.steps != config.schedule_steps:
            raise ValueError("schedule length does not match the model config")
        gen = torch.Generator().manual_seed(config.base_seed)
        d = config.d_model
        d_patch = 3 * config.patch * config.patch

        def randn(*shape, std):
            w = torch.empty(*shape, dtype=DTYPE)
            w.normal_(0.0, std, generator=gen)
            return w

        self.register_buffer("embed_w", randn(d, d_patch, std=1.0 / math.sqrt(d_patch)))
        self.register_buffer("pos_table", randn(config.max_tokens, d, std=1.0))
        self.register_buffer("frame_table", randn(config.max_frames, d, std=1.0))
        self.register_buffer("time_w", randn(d, self.TIME_FEATURES,
                                             std=1.0 / math.sqrt(self.TIME_FEATURES)))
        self.register_buffer("cond_w", randn(d, 3, std=1.0))
        self.register_buffer("head_w", randn(d_patch, d, std=1.0 / math.sqrt(d)) * config.head_gain)

        spatial, temporal = [], []
        for _ in range(config.pairs):
            spatial.append(MixerBlock(d, config.rank, config.lora_scale, gen,
                                      config.max_tokens, config.content_gain,
                                      config.mean_gain, config.value_gain))
            # Temporal blocks also carry a per-(token, frame) content lookup,
            # which is where frame-specific detail (scene motion) can live
            # without mixing either axis.  Their mean path is disabled: the
            # global component belongs to the spatial blocks alone.
            temporal.append(MixerBlock(d, config.rank, config.lora_scale, gen,
                                       config.max_frames, config.content_gain,
                                       0.0, config.value_gain,
                                       pair_slots=config.max_frames * config.max_tokens,
                                       pair_gain=config.pair_gain))
        self.spatial_blocks = nn.ModuleList(spatial)
        self.temporal_blocks = nn.ModuleList(temporal)

    # -- parameter bookkeeping ------------------------------------------------

    def spatial_parameters(self) -> list[nn.Parameter]:
        return [p for b in self.spatial_blocks for p in b.parameters()]

    def temporal_parameters(self) -> list[nn.Parameter]:
        return [p for b in self.temporal_blocks for p in b.parameters()]

    def n_parameters(self) -> int:
        """Total scalar count: frozen base buffers plus adapter factors."""
        base = sum(b.numel() for b in self.buffers())
        lora = sum(p.numel() for p in self.parameters())
        return base + lora

    def base_digest(self) -> str:
        """SHA-256 over every base buffer, in registration order."""
        h = hashlib.sha256()
        for name, buf in sorted(self.named_buffers()):
            h.update(name.encode())
            h.update(buf.detach().numpy().tobytes())
        return h.hexdigest()

    # -- forward ----------------------------------------------------------------

    def _patchify(self, x: torch.Tensor) -> torch.Tensor:
        n, c, h, w = x.shape
        p = self.config.patch
        gh, gw = h // p, w // p
        t = x.reshape(n, c, gh, p, gw, p).permute(0, 2, 4, 1, 3, 5)
        return t.reshape(n, gh * gw, c * p * p)

    def _unpatchify(self, tokens: torch.Tensor, h: int, w: int) -> torch.Tensor:
        n, s, _ = tokens.shape
        p = self.config.patch
        gh, gw = h // p, w // p
        t = tokens.reshape(n, gh, gw, 3, p, p).permute(0, 3, 1, 4, 2, 5)
        return t.reshape(n, 3, h, w)

    def forward(self, x: torch.Tensor, t: int, y: torch.Tensor, *,
                use_spatial_lora: bool = True, use_temporal_lora: bool = True,
                bypass_temporal: bool = False) -> torch.Tensor:
        if x.ndim != 4 or x.shape[1] != 3:
            raise ValueError(f"expected video tensor (N, 3, H, W), got {tuple(x.shape)}")
        n, _, h, w = x.shape
        p = self.config.patch
        if h % p or w % p:
            raise ValueError(f"spatial dims {h}x{w} must be multiples of patch {p}")
        if n > self.config.max_frames:
            raise ValueError(f"clip of {n} frames exceeds max_frames={self.config.max_frames}")
        tokens = self._patchify(x)
        s = tokens.shape[1]
        if s > self.config.max_tokens:
            raise ValueError(f"{s} tokens exceed max_tokens={self.config.max_tokens}")

        y = y.to(DTYPE).reshape(3)
        image_feat = tokens @ self.embed_w.T
        statics = self.pos_table[:s][None].expand(n, s, -1).clone()
        statics = statics + self.frame_table[:n][:, None]
        statics = statics + (self.time_w @ _sinusoidal(float(t), self.TIME_FEATURES))[None, None]
        statics = statics + (self.cond_w @ y)[None, None]

        # The base predicts eps = x / sqrt(1 - abar), i.e. a clean estimate of
        # exactly zero; the optimal correction is then -sqrt(abar / (1 - abar))
        # times the clean signal, a pure constant in x.  Content writes are
        # modulated by that same factor, so the per-position regression target
        # is identical at every timestep.
        ab = self.schedule.alpha_bar(t)
        modulation = math.sqrt(ab / (1.0 - ab))

        # Pair index for the temporal blocks' per-(token, frame) lookup, laid
        # out token-major so any clip within the configured bounds addresses
        # a stable slot set.  Shape (S, N) to match the transposed stream.
        tokens_idx = torch.arange(s)[:, None] * self.config.max_frames + torch.arange(n)[None, :]

        stream = statics
        for spatial, temporal in zip(self.spatial_blocks, self.temporal_blocks):
            stream = spatial(stream, image_feat, modulation,
                             use_adapter=use_spatial_lora)
            if not bypass_temporal:
                swapped = temporal(stream.transpose(0, 1), image_feat.transpose(0, 1),
                                   modulation, use_adapter=use_temporal_lora,
                                   pair_idx=tokens_idx)
                stream = swapped.transpose(0, 1)

        correction = (stream - statics) @ self.head_w.T
        eps_tokens = self._unpatchify(correction, h, w)
        skip = x / math.sqrt(1.0 - ab)
        return skip + eps_tokens

    def spatial_only(self):
        """Callable view with the temporal adapters detached (base temporal weights)."""
        def fn(x, t, y):
            return self.forward(x, t, y, use_temporal_lora=False)
        return fn


def pool_image_prompt(video: torch.Tensor, masks: torch.Tensor | None = None) -> torch.Tensor:
    """Image-prompt vector: channel means of frame 0, invalid pixels zeroed."""
    f0 = video[0]
    if masks is not None:
        f0 = f0 * masks[0]
    return f0.mean(dim=(1, 2))


# ---------------------------------------------------------------------------
# Losses


def _grads(loss: torch.Tensor, params: list[nn.Parameter]) -> list[torch.Tensor]:
    grads = torch.autograd.grad(loss, params, allow_unused=True,
                                materialize_grads=True)
    return [g.detach() for g in grads]


def masked_temporal_loss(model: ToyDenoiser, anchor: torch.Tensor,
                         masks: torch.Tensor, t: int, eps: torch.Tensor,
                         y: torch.Tensor):
    """Denoising loss on mask-valid anchor pixels; gradients for temporal adapters.

    ``anchor`` is (N, 3, H, W), ``masks`` is (N, 1, H, W) with values {0, 1}.
    Invalid pixels are zeroed before noising, so content there can never
    influence the loss — not even through attention mixing.  The forward pass
    routes through the spatial adapters but their parameters receive no
    update from this loss.
    """
    if masks.shape[0] != anchor.shape[0] or masks.shape[-2:] != anchor.shape[-2:]:
        raise ValueError(f"masks {tuple(masks.shape)} not aligned with anchor {tuple(anchor.shape)}")
    masks = masks.to(DTYPE).reshape(anchor.shape[0], 1, *anchor.shape[-2:])
    canon = anchor * masks
    x_t = add_noise(canon, t, model.schedule, eps)
    pred = model(x_t, t, y)
    weight = masks.expand_as(anchor)
    loss = ((eps - pred) ** 2 * weight).sum() / max(1.0, float(weight.sum()))
    grads = _grads(loss, model.temporal_parameters())
    return float(loss.detach()), grads


def spatial_loss(model: ToyDenoiser, clip: torch.Tensor, t: int,
                 eps: torch.Tensor, y: torch.Tensor, rng: torch.Generator):
    """Per-frame denoising loss on a random source frame, temporal blocks bypassed.

    ``clip`` is (N, 3, H, W); ``eps`` is one frame of noise (3, H, W).
    Gradients are taken for the spatial adapters only.
    """
    n = clip.shape[0]
    i = int(torch.randint(n, (1,), generator=rng))
    frame = clip[i:i + 1]
    x_t = add_noise(frame, t, model.schedule, eps[None])
    pred = model(x_t, t, y, bypass_temporal=True)
    loss = ((eps[None] - pred) ** 2).mean()
    grads = _grads(loss, model.spatial_parameters())
    return float(loss.detach()), grads


# ---------------------------------------------------------------------------
# Training


@dataclass(frozen=True)
class TrainConfig:
    """Fine-tuning hyperparameters; rank, learning rate and steps default to
    the standard adapter-tuning recipe (rank 16, 5e-4, 400 steps).

    ``optimizer`` is "adam" (plain Adam, no weight decay) or "sgd".  5e-4 is
    an Adam-scale rate; plain SGD at that rate moves factorized adapters far
    too little to fit a video in 400 steps, so Adam is the default.
    """

    rank: int = 16
    learning_rate: float = 5e-4
    steps: int = 400
    rng_seed: int = 0
    optimizer: str = "adam"
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    weight_decay: float = 0.1
    grad_clip_norm: float = 0.25
    ema_decay: float = 0.98
    spatial_frames_per_step: int = 1

    def __post_init__(self):
        if self.rank < 1 or self.learning_rate <= 0 or self.steps < 0:
            raise ValueError("rank and learning_rate must be positive, steps >= 0")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"optimizer must be 'adam' or 'sgd', got {self.optimizer!r}")
        if self.spatial_frames_per_step != 1:
            raise ValueError("only one spatial frame per step is supported")


class _Updater:
    """Per-parameter update rule; written out longhand to stay auditable."""

    def __init__(self, params: list[nn.Parameter], config: TrainConfig):
        self.params = params
        self.config = config
        self.step_count = 0
        if config.optimizer == "adam":
            self.m = [torch.zeros_like(p) for p in params]
            self.v = [torch.zeros_like(p) for p in params]

    @torch.no_grad()
    def apply(self, grads: list[torch.Tensor]) -> None:
        c = self.config
        self.step_count += 1
        if c.grad_clip_norm > 0:
            total = math.sqrt(sum(float(g.pow(2).sum()) for g in grads))
            if total > c.grad_clip_norm:
                grads = [g * (c.grad_clip_norm / total) for g in grads]
        if c.optimizer == "sgd":
            for p, g in zip(self.params, grads):
                p -= c.learning_rate * g
            return
        bc1 = 1.0 - c.adam_beta1 ** self.step_count
        bc2 = 1.0 - c.adam_beta2 ** self.step_count
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m.mul_(c.adam_beta1).add_(g, alpha=1.0 - c.adam_beta1)
            v.mul_(c.adam_beta2).addcmul_(g, g, value=1.0 - c.adam_beta2)
            # Decoupled weight decay keeps adapters whose gradients are pure
            # noise from random-walking away from zero.
            p.mul_(1.0 - c.learning_rate * c.weight_decay)
            p -= c.learning_rate * (m / bc1) / ((v / bc2).sqrt() + c.adam_eps)


def train(model: ToyDenoiser, anchor: torch.Tensor, masks: torch.Tensor,
          clip: torch.Tensor, config: TrainConfig = TrainConfig()):
    """Joint fine-tune: masked temporal loss plus per-frame spatial loss.

    Each step draws one timestep and fresh noise, evaluates both losses and
    updates each adapter set with the gradients of its own loss only.  Base
    weights live in buffers and are never touched.  The fitted adapters are
    the exponential moving average of the optimization path (``ema_decay``;
    0 keeps the raw final iterates), which removes the residual oscillation
    of the stochastic updates.  Deterministic for a fixed seed (thread count
    is pinned to 1 for the duration).

    Returns the loss trace as a list of (step, loss_temp, loss_spatial).
    """
    if config.rank != model.config.rank:
        raise ValueError(f"config rank {config.rank} != model rank {model.config.rank}")
    gen = torch.Generator().manual_seed(config.rng_seed)
    y = pool_image_prompt(anchor, masks)
    t_max = model.schedule.steps
    temporal = _Updater(model.temporal_parameters(), config)
    spatial = _Updater(model.spatial_parameters(), config)
    params = model.temporal_parameters() + model.spatial_parameters()
    shadow = [p.detach().clone() for p in params]

    trace = []
    threads = torch.get_num_threads()
    torch.set_num_threads(1)
    try:
        for step in range(config.steps):
            t = int(torch.randint(1, t_max + 1, (1,), generator=gen))
            eps_video = torch.randn(anchor.shape, generator=gen, dtype=DTYPE)
            eps_frame = torch.randn(anchor.shape[1:], generator=gen, dtype=DTYPE)
            loss_t, grads_t = masked_temporal_loss(model, anchor, masks, t, eps_video, y)
            loss_s, grads_s = spatial_loss(model, clip, t, eps_frame, y, gen)
            if not (math.isfinite(loss_t) and math.isfinite(loss_s)):
                raise RuntimeError(f"non-finite loss at step {step}: "
                                   f"temporal={loss_t}, spatial={loss_s}")
            temporal.apply(grads_t)
            spatial.apply(grads_s)
            if config.ema_decay > 0:
                with torch.no_grad():
                    for s, p in zip(shadow, params):
                        s.mul_(config.ema_decay).add_(p, alpha=1.0 - config.ema_decay)
            trace.append((step, loss_t, loss_s))
        if config.ema_decay > 0 and config.steps > 0:
            with torch.no_grad():
                for s, p in zip(shadow, params):
                    p.copy_(s)
    finally:
        torch.set_num_threads(threads)
    return trace


def save_loss_trace(trace, path) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["step", "loss_temp", "loss_spatial"])
        writer.writerows(trace)


# ---------------------------------------------------------------------------
# Sampling and refinement


# Sampling clamps the per-step clean estimate to a band around the data
# range, the usual clip-denoised guard against early-chain blowups.
CLIP_X0 = (-0.25, 1.25)


def _reverse_chain(x: torch.Tensor, t_start: int, model_fn, y: torch.Tensor,
                   schedule: NoiseSchedule, rng: torch.Generator,
                   clip_x0=CLIP_X0) -> torch.Tensor:
    """Ancestral reverse steps from t_start down to 0."""
    for t in range(t_start, 0, -1):
        eps_pred = model_fn(x, t, y)
        ab_t = schedule.alpha_bar(t)
        ab_prev = schedule.alpha_bar(t - 1)
        beta = schedule.beta(t)
        alpha = 1.0 - beta
        x0_hat = (x - math.sqrt(1.0 - ab_t) * eps_pred) / math.sqrt(ab_t)
        if clip_x0 is not None:
            x0_hat = x0_hat.clamp(*clip_x0)
        mean = (math.sqrt(ab_prev) * beta * x0_hat
                + math.sqrt(alpha) * (1.0 - ab_prev) * x) / (1.0 - ab_t)
        if t > 1:
            var = (1.0 - ab_prev) / (1.0 - ab_t) * beta
            noise = torch.randn(x.shape, generator=rng, dtype=DTYPE)
            x = mean + math.sqrt(var) * noise
        else:
            x = mean
        x = x.detach()
    return x


def sample(model_fn, y: torch.Tensor, schedule: NoiseSchedule,
           rng: torch.Generator, shape: tuple, clip_x0=CLIP_X0) -> torch.Tensor:
    """Ancestral sampling from pure noise, conditioned on the prompt vector.

    ``model_fn`` is anything callable as ``model_fn(x, t, y) -> eps``; a
    :class:`ToyDenoiser` works directly.  ``clip_x0`` bounds the per-step
    clean estimate (None disables).
    """
    with torch.no_grad():
        x = torch.randn(shape, generator=rng, dtype=DTYPE)
        return _reverse_chain(x, schedule.steps, model_fn, y, schedule, rng, clip_x0)


def sdedit(video: torch.Tensor, strength: float, model_spatial_only,
           schedule: NoiseSchedule, rng: torch.Generator) -> torch.Tensor:
    """Refine a video by partial noising and per-frame reverse diffusion.

    ``strength`` in [0, 1] maps to the starting step round(strength * T);
    strength 0 returns the input unchanged.  The caller supplies a model view
    with the temporal adapters detached (see :meth:`ToyDenoiser.spatial_only`);
    each frame runs the chain independently.  The prompt vector is pooled
    from the input's first frame.
    """
    if not 0.0 <= strength <= 1.0:
        raise ValueError(f"strength must be within [0, 1], got {strength}")
    t_star = round(strength * schedule.steps)
    if t_star == 0:
        return video.clone()
    y = pool_image_prompt(video)
    frames = []
    with torch.no_grad():
        for i in range(video.shape[0]):
            frame = video[i:i + 1]
            eps = torch.randn(frame.shape, generator=rng, dtype=DTYPE)
            x = add_noise(frame, t_star, schedule, eps)
            frames.append(_reverse_chain(x, t_star, model_spatial_only, y, schedule, rng))
    return torch.cat(frames, dim=0)


# ---------------------------------------------------------------------------
# Checkpoints

CHECKPOINT_VERSION = 1


def save_checkpoint(model: ToyDenoiser, path) -> None:
    """Versioned npz: model config, base-weight digest and adapter tensors."""
    arrays = {"version": np.array([CHECKPOINT_VERSION]),
              "config_json": np.frombuffer(model.config.to_json().encode(), dtype=np.uint8),
              "w0_digest": np.frombuffer(model.base_digest().encode(), dtype=np.uint8)}
    for name, param in model.named_parameters():
        arrays["lora/" + name] = param.detach().numpy()
    np.savez(path, **arrays)


def load_checkpoint(path) -> ToyDenoiser:
    """Rebuild the model from a checkpoint, verifying the base-weight digest."""
    with np.load(path) as data:
        version = int(data["version"][0])
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        config = ToyDenoiserConfig.from_json(bytes(data["config_json"]).decode())
        model = ToyDenoiser(config)
        digest = bytes(data["w0_digest"]).decode()
        if digest != model.base_digest():
            raise ValueError("checkpoint base-weight digest does not match the rebuilt model")
        with torch.no_grad():
            for name, param in model.named_parameters():
                param.copy_(torch.from_numpy(data["lora/" + name]))
    return model
