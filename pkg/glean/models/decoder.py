"""
Decoder.

d0 = D0(f0) and d_i = D_i(d_{i-1}, g) for i = 1..S, where g is the bank
feature at the resolution of d_{i-1}. Each D_i concatenates its two inputs,
applies a 3x3 convolution and a 2x pixel shuffle. A final emission
convolution fuses the bank feature at the output resolution and produces the
image without shuffling.

Bank features are looked up by resolution, so GLEAN and LightGLEAN banks
drive the same decoder.
"""
from dataclasses import dataclass, field
from typing import List, Optional

import torch
import torch.nn as nn

from glean.models.blocks import activation, conv3x3
from glean.models.latent_bank import BankFeatures
from glean.utils import log2_int, require


@dataclass
class DecoderConfig:
    """
    Attributes:
        in_size:      Resolution of f0.
        out_size:     Output resolution.
        f0_channels:  Channels of f0.
        width:        Channels of every d_i.
        tap_channels: Bank feature channels at in_size * 2**j, j = 0..S.
        out_channels: Emitted channels.
        taps_upto:    Slots j > taps_upto are not fused; -1 drops every bank
                      feature. Defaults to S (all slots).
    """
    in_size: int = 16
    out_size: int = 128
    f0_channels: int = 32
    width: int = 64
    tap_channels: List[int] = field(default_factory=list)
    out_channels: int = 3
    taps_upto: Optional[int] = None

    def __post_init__(self):
        require(self.out_size >= self.in_size,
                f"Decoder cannot shrink {self.in_size} to {self.out_size}")
        require(self.out_size % self.in_size == 0,
                f"out_size / in_size must be a power of two, got {self.out_size} / {self.in_size}")
        log2_int(self.out_size // self.in_size)
        require(len(self.tap_channels) == self.S + 1,
                f"Expected {self.S + 1} tap widths, got {len(self.tap_channels)}")
        if self.taps_upto is None:
            self.taps_upto = self.S
        require(-1 <= self.taps_upto <= self.S, f"taps_upto must lie in [-1, {self.S}], got {self.taps_upto}")

    @property
    def S(self) -> int:
        """Number of upsampling stages."""
        return log2_int(self.out_size // self.in_size)

    @property
    def stage_count(self) -> int:
        return self.S + 1

    def slot_resolution(self, slot: int) -> int:
        return self.in_size * 2**slot

    def fused(self, slot: int) -> bool:
        return slot <= self.taps_upto

    def fused_channels(self, slot: int) -> int:
        return self.tap_channels[slot] if self.fused(slot) else 0


def tap_selector(taps: BankFeatures, stage: int, cfg: DecoderConfig) -> torch.Tensor:
    """
    Bank feature consumed by decoder stage `stage` (1 <= stage <= S): the
    one at the stage's input resolution.
    """
    require(1 <= stage <= cfg.stage_count - 1,
            f"Stage must lie in [1, {cfg.stage_count - 1}], got {stage}")
    return taps.at(cfg.slot_resolution(stage - 1))


class Decoder(nn.Module):

    def __init__(self, cfg: DecoderConfig):
        super().__init__()
        self.cfg = cfg
        self.head = nn.Sequential(conv3x3(cfg.f0_channels, cfg.width), activation())

        self.stages = nn.ModuleList()
        for stage in range(1, cfg.S + 1):
            self.stages.append(nn.Sequential(
                conv3x3(cfg.width + cfg.fused_channels(stage - 1), 4 * cfg.width),
                nn.PixelShuffle(2),
                activation(),
            ))

        self.emit = conv3x3(cfg.width + cfg.fused_channels(cfg.S), cfg.out_channels)

    def _fuse(self, d, taps: BankFeatures, slot: int):
        if not self.cfg.fused(slot):
            return d
        if slot < self.cfg.S:
            return torch.cat([d, tap_selector(taps, slot + 1, self.cfg)], dim=1)
        return torch.cat([d, taps.at(self.cfg.out_size)], dim=1)

    def forward(self, f0: torch.Tensor, taps: BankFeatures) -> torch.Tensor:
        """
        Returns:
            The unclamped output at out_size; callers clamp at evaluation.

        Raises:
            ContractViolation if a fused bank resolution is missing.
        """
        require(f0.shape[-1] == self.cfg.in_size,
                f"Decoder expects f0 at {self.cfg.in_size}px, got {f0.shape[-1]}")
        d = self.head(f0)
        for stage, layer in enumerate(self.stages, start=1):
            d = layer(self._fuse(d, taps, stage - 1))
        return self.emit(self._fuse(d, taps, self.cfg.S))

    def stage_resolutions(self, f0: torch.Tensor, taps: BankFeatures) -> List[int]:
        """Resolutions of d_0..d_S for one forward."""
        d = self.head(f0)
        resolutions = [d.shape[-1]]
        for stage, layer in enumerate(self.stages, start=1):
            d = layer(self._fuse(d, taps, stage - 1))
            resolutions.append(d.shape[-1])
        return resolutions


COLORIZATION_WIDTHS = (64, 64, 32, 2)


class ColorizationDecoder(nn.Module):
    """
    Four 3x3 convolutions on f0 concatenated with the bank feature at the
    input resolution, emitting the two normalised chroma channels.
    """

    def __init__(self, f0_channels: int, tap_channels: int, in_size: int, use_taps: bool = True):
        super().__init__()
        self.in_size = in_size
        self.use_taps = use_taps
        layers = []
        channels = f0_channels + (tap_channels if use_taps else 0)
        for i, width in enumerate(COLORIZATION_WIDTHS):
            layers.append(conv3x3(channels, width))
            if i < len(COLORIZATION_WIDTHS) - 1:
                layers.append(activation())
            channels = width
        self.body = nn.Sequential(*layers)

    def forward(self, f0: torch.Tensor, taps: BankFeatures) -> torch.Tensor:
        if self.use_taps:
            f0 = torch.cat([f0, taps.at(self.in_size)], dim=1)
        return self.body(f0)


class DirectEmitter(nn.Module):
    """A single convolution turning the bank's last feature into the image (no decoder)."""

    def __init__(self, tap_channels: int, out_size: int, out_channels: int = 3):
        super().__init__()
        self.out_size = out_size
        self.emit = conv3x3(tap_channels, out_channels)

    def forward(self, f0: torch.Tensor, taps: BankFeatures) -> torch.Tensor:
        return self.emit(taps.at(self.out_size))
