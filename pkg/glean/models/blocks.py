"""
Network building blocks shared by the encoder, latent bank and discriminator.

The dense blocks follow the residual-in-residual dense block design of
ESRGAN; the modulated convolution follows StyleGAN2 (weight modulation by a
per-sample style, then demodulation).
"""
import math

import torch
import torch.nn as nn
import torch.nn.functional as F

LEAKY_SLOPE = 0.2


def conv3x3(in_channels: int, out_channels: int, stride: int = 1, bias: bool = True) -> nn.Conv2d:
    return nn.Conv2d(in_channels, out_channels, kernel_size=3, stride=stride, padding=1, bias=bias)


def activation() -> nn.LeakyReLU:
    return nn.LeakyReLU(negative_slope=LEAKY_SLOPE)


class DenseBlock(nn.Module):
    """
    Five densely connected 3x3 convolutions with a scaled residual.

    Args:
        channels:        Number of features in and out.
        growth_channels: Features added by each intermediate convolution.
        res_scale:       Residual scaling.
    """

    def __init__(self, channels: int, growth_channels: int, res_scale: float = 0.2):
        super().__init__()
        self.convs = nn.ModuleList([
            conv3x3(channels + i * growth_channels, growth_channels) for i in range(4)
        ])
        self.fuse = conv3x3(channels + 4 * growth_channels, channels)
        self.act = activation()
        self.res_scale = res_scale

    def forward(self, x):
        features = [x]
        for conv in self.convs:
            features.append(self.act(conv(torch.cat(features, dim=1))))
        return x + self.fuse(torch.cat(features, dim=1)) * self.res_scale


class RRDB(nn.Module):
    """Residual in residual dense block: three dense blocks inside a scaled residual."""

    def __init__(self, channels: int, growth_channels: int, res_scale: float = 0.2):
        super().__init__()
        self.dense = nn.Sequential(*[DenseBlock(channels, growth_channels, res_scale) for _ in range(3)])
        self.res_scale = res_scale

    def forward(self, x):
        return x + self.dense(x) * self.res_scale


class ModulatedConv2d(nn.Module):
    """
    Style-modulated convolution with demodulation.

    Each sample's latent vector is mapped to one scale per input channel;
    the scaled kernel is renormalised so every output channel has unit
    expected magnitude. Implemented as a grouped convolution over the batch.
    """

    def __init__(self, in_channels: int, out_channels: int, kernel_size: int, d_latent: int,
                 demodulate: bool = True):
        super().__init__()
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel_size = kernel_size
        self.demodulate = demodulate

        self.weight = nn.Parameter(torch.randn(out_channels, in_channels, kernel_size, kernel_size))
        self.scale = 1.0 / math.sqrt(in_channels * kernel_size * kernel_size)

        self.style = nn.Linear(d_latent, in_channels)
        nn.init.ones_(self.style.bias)

    def forward(self, x, latent):
        batch, _, height, width = x.shape
        style = self.style(latent)

        weight = self.weight.unsqueeze(0) * self.scale * style[:, None, :, None, None]
        if self.demodulate:
            demod = torch.rsqrt(weight.pow(2).sum(dim=(2, 3, 4)) + 1e-8)
            weight = weight * demod[:, :, None, None, None]

        weight = weight.reshape(batch * self.out_channels, self.in_channels,
                                self.kernel_size, self.kernel_size)
        out = F.conv2d(x.reshape(1, batch * self.in_channels, height, width), weight,
                       padding=self.kernel_size // 2, groups=batch)
        return out.reshape(batch, self.out_channels, height, width)
