"""
Image discriminator used by bank pre-training and the adversarial objective.

The resolution ladder mirrors the latent bank in reverse: a 1x1 conversion
from RGB, then one stride-2 stage per octave down to 4x4, and a linear map
to a single probability.
"""
import torch
import torch.nn as nn

from glean.models.blocks import activation, conv3x3
from glean.models.encoder import BASE_RESOLUTION
from glean.utils import log2_int, require


class Discriminator(nn.Module):
    """
    Args:
        size:         Input resolution (power of two, >= 4).
        channel_base: Stage width at resolution r is min(channel_max, channel_base // r).
        channel_max:  Width cap.
        in_channels:  Image channels.
    """

    def __init__(self, size: int, channel_base: int = 2048, channel_max: int = 128, in_channels: int = 3):
        super().__init__()
        require(size >= BASE_RESOLUTION, f"Discriminator input must be at least {BASE_RESOLUTION}px, got {size}")
        log2_int(size)
        self.size = size

        def width(res):
            return max(1, min(channel_max, channel_base // res))

        self.from_rgb = nn.Sequential(nn.Conv2d(in_channels, width(size), kernel_size=1), activation())

        stages = []
        res = size
        while res > BASE_RESOLUTION:
            stages += [
                conv3x3(width(res), width(res)), activation(),
                conv3x3(width(res), width(res // 2), stride=2), activation(),
            ]
            res //= 2
        self.stages = nn.Sequential(*stages)

        channels = width(BASE_RESOLUTION)
        self.head = nn.Sequential(
            conv3x3(channels, channels), activation(),
            nn.Flatten(),
            nn.Linear(channels * BASE_RESOLUTION * BASE_RESOLUTION, 1),
        )

    def logits(self, image: torch.Tensor) -> torch.Tensor:
        require(image.shape[-1] == self.size and image.shape[-2] == self.size,
                f"Discriminator expects {self.size}x{self.size} input, got {tuple(image.shape[-2:])}")
        return self.head(self.stages(self.from_rgb(image))).squeeze(1)

    def forward(self, image: torch.Tensor) -> torch.Tensor:
        """Probability, per sample, that `image` is real."""
        return torch.sigmoid(self.logits(image))
