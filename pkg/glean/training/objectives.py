"""
Training objectives.

The generator minimises

    L_g = L_mse + alpha_percep * L_percep + alpha_gen * L_gen

where L_percep compares images in the feature space of an embedding network
and L_gen = log(1 - D(y_hat)). The discriminator minimises
-(log(1 - D(y_hat)) + log D(y)).
"""
from dataclasses import dataclass
from typing import Dict, Sequence, Tuple

import torch
import torch.nn as nn

from glean.models.blocks import activation, conv3x3
from glean.utils import require

# Probabilities are clamped to [EPSILON, 1 - EPSILON] before taking logs.
EPSILON = 1e-7

SATURATING = 'saturating'
NON_SATURATING = 'non_saturating'


def mse_loss(yhat: torch.Tensor, y: torch.Tensor) -> torch.Tensor:
    """Mean squared error over every pixel and channel."""
    require(yhat.shape == y.shape, f"MSE needs equal shapes, got {tuple(yhat.shape)} and {tuple(y.shape)}")
    return torch.mean((yhat - y) ** 2)


def perceptual_loss(yhat: torch.Tensor, y: torch.Tensor, embedder: nn.Module) -> torch.Tensor:
    """Mean squared distance between the embeddings of `yhat` and `y`."""
    require(yhat.shape == y.shape, f"Perceptual loss needs equal shapes, got {tuple(yhat.shape)} and {tuple(y.shape)}")
    return torch.mean((embedder(yhat) - embedder(y)) ** 2)


def adversarial_losses(d_fake: torch.Tensor, d_real: torch.Tensor,
                       variant: str = SATURATING) -> Tuple[torch.Tensor, torch.Tensor]:
    """
    Generator and discriminator adversarial losses.

    Args:
        d_fake:  Discriminator probabilities on restored images.
        d_real:  Discriminator probabilities on ground truth images.
        variant: SATURATING uses log(1 - D(y_hat)) for the generator;
                 NON_SATURATING uses -log D(y_hat).

    Returns:
        (gen, disc), each averaged over the batch.
    """
    require(variant in (SATURATING, NON_SATURATING), f"Unknown adversarial variant: {variant}")
    d_fake = torch.clamp(d_fake, EPSILON, 1.0 - EPSILON)
    d_real = torch.clamp(d_real, EPSILON, 1.0 - EPSILON)

    if variant == SATURATING:
        gen = torch.mean(torch.log(1.0 - d_fake))
    else:
        gen = -torch.mean(torch.log(d_fake))
    disc = -torch.mean(torch.log(1.0 - d_fake) + torch.log(d_real))
    return gen, disc


@dataclass
class LossBreakdown:
    """
    Attributes:
        mse, percep, gen: Generator loss components.
        total:            mse + alpha_percep * percep + alpha_gen * gen.
        d_loss:           Discriminator loss of the same step.
    """
    mse: torch.Tensor
    percep: torch.Tensor
    gen: torch.Tensor
    total: torch.Tensor
    d_loss: torch.Tensor

    def values(self) -> Dict[str, float]:
        return {name: float(getattr(self, name)) for name in ('mse', 'percep', 'gen', 'total', 'd_loss')}

    def is_finite(self) -> bool:
        return all(torch.isfinite(torch.as_tensor(v)).item() for v in self.values().values())


def total_generator_loss(mse, percep, gen, alpha_percep: float = 1e-2, alpha_gen: float = 1e-2,
                         d_loss=0.0) -> LossBreakdown:
    """Weighted generator objective."""
    mse, percep, gen, d_loss = (torch.as_tensor(v) for v in (mse, percep, gen, d_loss))
    total = mse + alpha_percep * percep + alpha_gen * gen
    return LossBreakdown(mse=mse, percep=percep, gen=gen, total=total, d_loss=d_loss)


class IdentityEmbedder(nn.Module):
    """Embeds an image as itself; the perceptual loss then equals the MSE."""

    def forward(self, image):
        return image


class RandomConvEmbedder(nn.Module):
    """
    A fixed, randomly initialised convolution stack.

    Weights are drawn from a private generator seeded with `seed` and never
    trained, so the embedding is reproducible.
    """

    def __init__(self, in_channels: int = 3, widths: Sequence[int] = (16, 16), seed: int = 0):
        super().__init__()
        generator = torch.Generator().manual_seed(seed)
        layers = []
        channels = in_channels
        for width in widths:
            conv = conv3x3(channels, width)
            bound = 1.0 / (channels * 9) ** 0.5
            with torch.no_grad():
                conv.weight.copy_((torch.rand(conv.weight.shape, generator=generator) * 2 - 1) * bound)
                conv.bias.copy_((torch.rand(conv.bias.shape, generator=generator) * 2 - 1) * bound)
            layers += [conv, activation()]
            channels = width
        self.body = nn.Sequential(*layers)
        self.requires_grad_(False)

    def forward(self, image):
        return self.body(image)


class VGGEmbedder(nn.Module):
    """Convolutional features of an ImageNet VGG16 up to relu5_3."""

    MEAN = (0.485, 0.456, 0.406)
    STD = (0.229, 0.224, 0.225)

    def __init__(self):
        super().__init__()
        from torchvision.models import vgg16

        vgg = vgg16(weights='IMAGENET1K_V1')
        self.features = nn.Sequential(*list(vgg.features)[:30]).eval()
        self.register_buffer('mean', torch.tensor(self.MEAN).view(1, 3, 1, 1))
        self.register_buffer('std', torch.tensor(self.STD).view(1, 3, 1, 1))
        self.requires_grad_(False)

    def forward(self, image):
        return self.features((image - self.mean) / self.std)


EMBEDDERS = {
    'random': RandomConvEmbedder,
    'identity': IdentityEmbedder,
    'vgg': VGGEmbedder,
}


def make_embedder(name: str, seed: int = 0) -> nn.Module:
    """Build a perceptual embedder by name ('random', 'identity' or 'vgg')."""
    require(name in EMBEDDERS, f"Unknown embedder: {name}, expected one of {sorted(EMBEDDERS)}")
    if name == 'random':
        return RandomConvEmbedder(seed=seed)
    return EMBEDDERS[name]()
