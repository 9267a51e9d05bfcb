"""
Encoder.

E0 is an RRDB trunk producing f0 at the input resolution. E1..EN each halve
the resolution (stride-2 then stride-1 convolution), giving the pyramid
f0..fN with fN at 4x4. A convolution followed by a single fully connected
layer maps fN to the latent matrix C, one column per style block of the
latent bank.
"""
from dataclasses import dataclass
from typing import List, Optional

import torch
import torch.nn as nn

from glean.models.blocks import RRDB, activation, conv3x3
from glean.utils import require

# Coarsest pyramid level, matching the first style block of the bank.
BASE_RESOLUTION = 4


@dataclass
class EncoderConfig:
    """
    Attributes:
        in_size:         Input resolution in pixels.
        n_rrdb_blocks:   Number of RRDBs in the trunk.
        base_channels:   Channels of f0.
        N:               Pyramid depth (number of stride-2 stages).
        d_latent:        Dimension of each latent vector.
        k:               Number of latent vectors (style blocks in the bank).
        in_channels:     Input image channels (3, or 1 for colorization).
        growth_channels: Dense block growth; defaults to base_channels // 2.
        full:            False keeps only the RRDB trunk (LightGLEAN).
    """
    in_size: int = 16
    n_rrdb_blocks: int = 4
    base_channels: int = 32
    N: int = 2
    d_latent: int = 64
    k: int = 6
    in_channels: int = 3
    growth_channels: Optional[int] = None
    full: bool = True

    def __post_init__(self):
        require(self.n_rrdb_blocks >= 1, f"Need at least one RRDB, got {self.n_rrdb_blocks}")
        require(self.N >= 0, f"Pyramid depth must be non-negative, got {self.N}")
        require(self.in_size // 2**self.N >= BASE_RESOLUTION and self.in_size % 2**self.N == 0,
                f"in_size {self.in_size} cannot be halved {self.N} times and stay >= {BASE_RESOLUTION}")
        if self.growth_channels is None:
            self.growth_channels = max(1, self.base_channels // 2)

    def channels(self, level: int) -> int:
        """Channels of pyramid level `level`: doubling per level, capped at 8x base."""
        return min(self.base_channels * 2**level, 8 * self.base_channels)

    def resolution(self, level: int) -> int:
        return self.in_size // 2**level


@dataclass
class FeaturePyramid:
    """Encoder features f0..fN, each level at half the resolution of the previous."""
    levels: List[torch.Tensor]

    @property
    def N(self) -> int:
        return len(self.levels) - 1

    @property
    def resolutions(self) -> List[int]:
        return [f.shape[-1] for f in self.levels]


class RRDBTrunk(nn.Module):
    """E0: stem convolution, RRDB body and trunk convolution around a global residual."""

    def __init__(self, cfg: EncoderConfig):
        super().__init__()
        self.stem = conv3x3(cfg.in_channels, cfg.base_channels)
        self.body = nn.Sequential(*[RRDB(cfg.base_channels, cfg.growth_channels)
                                    for _ in range(cfg.n_rrdb_blocks)])
        self.trunk = conv3x3(cfg.base_channels, cfg.base_channels)

    def forward(self, x):
        feature = self.stem(x)
        return feature + self.trunk(self.body(feature))


class DownsampleChain(nn.Module):
    """E1..EN."""

    def __init__(self, cfg: EncoderConfig):
        super().__init__()
        self.stages = nn.ModuleList()
        for level in range(1, cfg.N + 1):
            c_in, c_out = cfg.channels(level - 1), cfg.channels(level)
            self.stages.append(nn.Sequential(
                conv3x3(c_in, c_out, stride=2), activation(),
                conv3x3(c_out, c_out), activation(),
            ))

    def forward(self, f0) -> FeaturePyramid:
        levels = [f0]
        for stage in self.stages:
            levels.append(stage(levels[-1]))
        return FeaturePyramid(levels)


class LatentHead(nn.Module):
    """
    Convolution, flatten and one linear map to k * d_latent values.

    The map is affine end to end (no activation) and is shared by all k
    latent vectors.
    """

    def __init__(self, cfg: EncoderConfig):
        super().__init__()
        channels = cfg.channels(cfg.N)
        size = cfg.resolution(cfg.N)
        self.k = cfg.k
        self.d_latent = cfg.d_latent
        self.conv = conv3x3(channels, channels)
        self.linear = nn.Linear(channels * size * size, cfg.k * cfg.d_latent)

    def forward(self, f_n):
        flat = self.conv(f_n).flatten(start_dim=1)
        # Column i of C is the latent vector of style block i.
        return self.linear(flat).reshape(-1, self.k, self.d_latent).transpose(1, 2)


class Encoder(nn.Module):
    """
    Full encoder (GLEAN) or trunk-only encoder (LightGLEAN, cfg.full = False).

    Latent matrices are returned as (batch, d_latent, k) tensors.
    """

    def __init__(self, cfg: EncoderConfig):
        super().__init__()
        self.cfg = cfg
        self.trunk = RRDBTrunk(cfg)
        if cfg.full:
            self.chain = DownsampleChain(cfg)
            self.head = LatentHead(cfg)
        else:
            self.chain = None
            self.head = None

    def rrdb_extract(self, lr: torch.Tensor) -> torch.Tensor:
        """f0 at the input resolution."""
        require(tuple(lr.shape[-2:]) == (self.cfg.in_size, self.cfg.in_size),
                f"Encoder expects {self.cfg.in_size}x{self.cfg.in_size} input, got {tuple(lr.shape[-2:])}")
        require(lr.shape[1] == self.cfg.in_channels,
                f"Encoder expects {self.cfg.in_channels} channels, got {lr.shape[1]}")
        return self.trunk(lr)

    def downsample_chain(self, f0: torch.Tensor) -> FeaturePyramid:
        require(self.chain is not None, "Trunk-only encoder has no downsample chain")
        return self.chain(f0)

    def latent_head(self, f_n: torch.Tensor) -> torch.Tensor:
        require(self.head is not None, "Trunk-only encoder has no latent head")
        expected = self.cfg.resolution(self.cfg.N)
        require(f_n.shape[-1] == expected,
                f"Latent head expects the {expected}x{expected} level, got {f_n.shape[-1]}")
        return self.head(f_n)

    def forward(self, lr):
        """
        Returns:
            (f0, pyramid, C); pyramid and C are None for a trunk-only encoder.
        """
        f0 = self.rrdb_extract(lr)
        if self.chain is None:
            return f0, None, None

        pyramid = self.downsample_chain(f0)
        return f0, pyramid, self.latent_head(pyramid.levels[-1])
