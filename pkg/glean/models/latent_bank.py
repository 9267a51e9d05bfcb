"""
Generative latent bank.

A style-based generator with one style block per resolution, 4x4 up to the
output size. In GLEAN mode every block takes its own latent vector and the
blocks at or below the input resolution fuse an encoder feature through an
extra convolution. In LIGHT mode the blocks below the input resolution are
never built: f0 enters the block at the input resolution directly and a
learnable set of latent vectors, shared by all inputs, replaces the encoder
latent head.

The pre-trained core weights are frozen during restoration training; only
fusion convolutions, the LIGHT input adapter and shared latents learn.
"""
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import torch
import torch.nn as nn
import torch.nn.functional as F

from glean.models.blocks import ModulatedConv2d, activation, conv3x3
from glean.models.encoder import BASE_RESOLUTION, FeaturePyramid
from glean.utils import ContractViolation, digest, log2_int, require

GLEAN = 'glean'
LIGHT = 'light'

# Parameter name fragments that stay trainable after freezing.
TRAINABLE_KEYS = ('fusion', 'adapter', 'latents')


@dataclass(frozen=True)
class BankMode:
    """
    Attributes:
        variant: GLEAN or LIGHT.
        i0:      First evaluated block; the block whose output resolution is
                 the input resolution in LIGHT mode, 0 in GLEAN mode.
    """
    variant: str = GLEAN
    i0: int = 0

    def __post_init__(self):
        require(self.variant in (GLEAN, LIGHT), f"Unknown bank variant: {self.variant}")
        require(self.variant == LIGHT or self.i0 == 0, f"GLEAN mode starts at block 0, got i0={self.i0}")

    @staticmethod
    def for_variant(variant: str, in_size: int) -> 'BankMode':
        i0 = log2_int(in_size) - 2 if variant == LIGHT else 0
        return BankMode(variant, i0)


@dataclass
class BankConfig:
    """
    Attributes:
        in_size:         Restoration input resolution.
        out_size:        Output resolution of the last style block.
        d_latent:        Latent vector dimension.
        channel_base:    Block width at resolution r is min(channel_max, channel_base // r).
        channel_max:     Width cap.
        mode:            GLEAN or LIGHT routing.
        fusion_channels: Encoder channels per pyramid level (GLEAN fusion inputs).
        fuse_upto:       Blocks 0..fuse_upto fuse encoder features; -1 disables fusion.
                         Defaults to N (all blocks at or below the input resolution).
        f0_channels:     Channels of f0 (LIGHT input adapter).
    """
    in_size: int = 16
    out_size: int = 128
    d_latent: int = 64
    channel_base: int = 2048
    channel_max: int = 128
    mode: BankMode = field(default_factory=BankMode)
    fusion_channels: List[int] = field(default_factory=list)
    fuse_upto: Optional[int] = None
    f0_channels: int = 32

    def __post_init__(self):
        require(self.out_size >= self.in_size >= BASE_RESOLUTION,
                f"Need out_size >= in_size >= {BASE_RESOLUTION}, got {self.in_size} -> {self.out_size}")
        log2_int(self.in_size)
        log2_int(self.out_size)
        if self.mode.variant == LIGHT:
            require(self.mode.i0 == self.N, f"LIGHT mode needs i0 = {self.N}, got {self.mode.i0}")
        if self.fuse_upto is None:
            self.fuse_upto = self.N if self.mode.variant == GLEAN else -1
        require(-1 <= self.fuse_upto <= self.N,
                f"fuse_upto must lie in [-1, {self.N}], got {self.fuse_upto}")

    @property
    def N(self) -> int:
        return log2_int(self.in_size) - 2

    @property
    def k(self) -> int:
        return log2_int(self.out_size) - 1

    def resolution(self, index: int) -> int:
        return BASE_RESOLUTION * 2**index

    def width(self, resolution: int) -> int:
        return max(1, min(self.channel_max, self.channel_base // resolution))

    def active_blocks(self) -> List[int]:
        return list(range(self.mode.i0, self.k))


@dataclass
class BankFeatures:
    """Style block outputs g_i0..g_{k-1}, resolutions doubling from tap to tap."""
    taps: List[torch.Tensor]

    @property
    def resolutions(self) -> List[int]:
        return [g.shape[-1] for g in self.taps]

    def at(self, resolution: int) -> torch.Tensor:
        for g in self.taps:
            if g.shape[-1] == resolution:
                return g
        raise ContractViolation(f"No bank feature at {resolution}px, have {self.resolutions}")


class StyleBlock(nn.Module):
    """
    One generator stage: optional 2x nearest upsampling, optional fusion with
    an encoder feature, then a modulated 3x3 convolution with bias and
    leaky-rectifier.

    Fusion concatenates the incoming feature with the encoder feature and adds
    a 3x3 convolution of that back onto the incoming feature, so a block with
    zeroed fusion weights behaves exactly like the plain block.
    """

    def __init__(self, in_channels: int, out_channels: int, d_latent: int,
                 fusion_channels: Optional[int] = None):
        super().__init__()
        self.conv = ModulatedConv2d(in_channels, out_channels, 3, d_latent)
        self.bias = nn.Parameter(torch.zeros(1, out_channels, 1, 1))
        self.act = activation()
        self.fusion = conv3x3(in_channels + fusion_channels, in_channels) if fusion_channels else None

    def forward(self, x, latent, feature=None, upsample=True):
        if upsample:
            x = F.interpolate(x, scale_factor=2, mode='nearest')
        if self.fusion is not None:
            require(feature is not None and feature.shape[-1] == x.shape[-1],
                    f"Fusion block at {x.shape[-1]}px needs an encoder feature of the same size")
            x = x + self.fusion(torch.cat([x, feature], dim=1))
        return self.act(self.conv(x, latent) + self.bias)


def block_key(index: int) -> str:
    return f"b{index}"


class LatentBank(nn.Module):
    """Style-based generator usable as a latent bank (GLEAN or LIGHT routing)."""

    def __init__(self, cfg: BankConfig):
        super().__init__()
        self.cfg = cfg
        self.mode = cfg.mode

        self.blocks = nn.ModuleDict()
        for i in cfg.active_blocks():
            res = cfg.resolution(i)
            in_channels = cfg.width(max(res // 2, BASE_RESOLUTION))
            fusion = None
            if i <= cfg.fuse_upto:
                fusion = cfg.fusion_channels[cfg.N - i]
            self.blocks[block_key(i)] = StyleBlock(in_channels, cfg.width(res), cfg.d_latent, fusion)

        if self.mode.variant == GLEAN:
            self.const = nn.Parameter(torch.randn(1, cfg.width(BASE_RESOLUTION), BASE_RESOLUTION, BASE_RESOLUTION))
            self.to_rgb = nn.Conv2d(cfg.width(cfg.out_size), 3, kernel_size=1)
        else:
            in_channels = cfg.width(max(cfg.in_size // 2, BASE_RESOLUTION))
            self.adapter = conv3x3(cfg.f0_channels, in_channels)
            self.latents = nn.Parameter(torch.randn(len(cfg.active_blocks()), cfg.d_latent))

    @property
    def k(self) -> int:
        return self.cfg.k

    def fused_indices(self) -> List[int]:
        """Indices of blocks carrying a fusion convolution."""
        return [int(key[1:]) for key, block in self.blocks.items() if block.fusion is not None]

    def block_indices(self) -> List[int]:
        return [int(key[1:]) for key in self.blocks.keys()]

    def forward_glean(self, C: torch.Tensor, pyramid: Optional[FeaturePyramid]) -> BankFeatures:
        """
        g_0 = S0(c_0, f_N), g_i = S_i(c_i, g_{i-1}, f_{N-i}) for 0 < i <= N, and
        g_i = S_i(c_i, g_{i-1}) above the input resolution.

        Args:
            C:       Latent matrix (batch, d_latent, k).
            pyramid: Encoder features f0..fN; may be None when no block fuses.
        """
        require(self.mode.variant == GLEAN, "forward_glean needs a GLEAN-mode bank")
        require(C.shape[-1] == self.k, f"Expected {self.k} latent vectors, got {C.shape[-1]}")
        fused = self.fused_indices()
        if fused:
            require(pyramid is not None and pyramid.N == self.cfg.N,
                    f"Fusion needs a pyramid of depth {self.cfg.N}, got "
                    f"{None if pyramid is None else pyramid.N}")

        x = self.const.expand(C.shape[0], -1, -1, -1)
        taps = []
        for i in self.block_indices():
            feature = pyramid.levels[self.cfg.N - i] if i in fused else None
            x = self.blocks[block_key(i)](x, C[:, :, i], feature, upsample=(i > 0))
            taps.append(x)

        return BankFeatures(taps)

    def forward_light(self, f0: torch.Tensor, latents: Optional[torch.Tensor] = None) -> BankFeatures:
        """
        g_i0 = S_i0(c_i0, f0) and g_i = S_i(c_i, g_{i-1}) for i > i0.

        Args:
            f0:      RRDB feature at the input resolution.
            latents: Override for the shared latents, (n_active, d_latent).
        """
        require(self.mode.variant == LIGHT, "forward_light needs a LIGHT-mode bank")
        require(f0.shape[-1] == self.cfg.in_size,
                f"LIGHT bank expects f0 at {self.cfg.in_size}px, got {f0.shape[-1]}")
        latents = self.latents if latents is None else latents

        x = self.adapter(f0)
        taps = []
        for j, i in enumerate(self.block_indices()):
            latent = latents[j].unsqueeze(0).expand(f0.shape[0], -1)
            x = self.blocks[block_key(i)](x, latent, upsample=(i > self.mode.i0))
            taps.append(x)

        return BankFeatures(taps)

    def generate(self, C: torch.Tensor) -> torch.Tensor:
        """Unconditional image synthesis from latents, fusion skipped (plain generator)."""
        require(self.mode.variant == GLEAN, "Only a GLEAN-mode bank can generate from latents")
        x = self.const.expand(C.shape[0], -1, -1, -1)
        for i in self.block_indices():
            block = self.blocks[block_key(i)]
            x = F.interpolate(x, scale_factor=2, mode='nearest') if i > 0 else x
            x = block.act(block.conv(x, C[:, :, i]) + block.bias)
        return self.to_rgb(x)

    def core_parameters(self):
        """(name, parameter) pairs of the pre-trained generator weights."""
        return [(name, p) for name, p in self.named_parameters()
                if not any(key in name for key in TRAINABLE_KEYS)]

    def load_core(self, state: Dict[str, torch.Tensor], manifest: Optional[Dict[str, str]] = None):
        """
        Copy pre-trained generator weights into this bank.

        Only core weights are read; entries for blocks this bank does not
        build (LIGHT) are ignored. With a manifest, every copied weight is
        checked against its recorded digest.

        Raises:
            ContractViolation if a core weight is missing, has another shape
            or does not match the manifest.
        """
        with torch.no_grad():
            for name, p in self.core_parameters():
                require(name in state, f"Pre-trained bank has no weight {name}")
                require(tuple(state[name].shape) == tuple(p.shape),
                        f"Shape mismatch for {name}: {tuple(state[name].shape)} vs {tuple(p.shape)}")
                p.copy_(state[name].to(p.dtype))

        if manifest is not None:
            core = dict(self.core_parameters())
            problems = [f"unlisted: {name}" for name in core if name not in manifest]
            problems += FrozenManifest({name: manifest[name] for name in core if name in manifest}).diff(core)
            require(not problems, "Pre-trained bank does not match its manifest: " + ", ".join(problems))


class FrozenManifest(dict):
    """Parameter name -> SHA-256 digest of the frozen weights."""

    def diff(self, named_tensors: Dict[str, torch.Tensor]) -> List[str]:
        """Human readable differences between the manifest and `named_tensors`."""
        problems = []
        for name, expected in self.items():
            if name not in named_tensors:
                problems.append(f"missing: {name}")
            elif digest(named_tensors[name]) != expected:
                problems.append(f"changed: {name}")
        return problems


def core_manifest(bank: LatentBank, prefix: str = '') -> FrozenManifest:
    """Digests of the bank's core weights, names prefixed with `prefix`."""
    return FrozenManifest((prefix + name, digest(p)) for name, p in bank.core_parameters())


def freeze(bank: LatentBank, prefix: str = '') -> FrozenManifest:
    """
    Freeze the pre-trained core of a latent bank.

    Core parameters stop requiring gradients; fusion convolutions, the LIGHT
    adapter and shared latents remain trainable.

    Returns:
        A manifest of the frozen weights, names prefixed with `prefix`.
    """
    for _, p in bank.core_parameters():
        p.requires_grad_(False)
        p.grad = None
    return core_manifest(bank, prefix)
