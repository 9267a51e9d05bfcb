"""
Latent bank pre-training.

The bank is trained as an unconditional generator against a discriminator
with the non-saturating GAN objective, from latent matrices drawn from a
standard normal distribution.
"""
import logging
from dataclasses import replace
from typing import List, Tuple

import torch
from tqdm import tqdm

from glean.models.assembly import ModelConfig, build_discriminator
from glean.models.discriminator import Discriminator
from glean.models.latent_bank import GLEAN, BankConfig, BankMode, LatentBank
from glean.simulation.data import ImageSet, stack
from glean.training.objectives import NON_SATURATING, adversarial_losses
from glean.training.trainer import NonFiniteLossError, TrainConfig
from glean.utils import item_rng, require

logger = logging.getLogger(__name__)


def generator_config(cfg: ModelConfig) -> BankConfig:
    """Plain generator (GLEAN layout, no fusion) whose core weights fit banks built from `cfg`."""
    return replace(cfg.bank_config(), mode=BankMode(GLEAN, 0), fusion_channels=[], fuse_upto=-1)


def sample_latents(bank: LatentBank, batch_size: int, seed: int, step: int) -> torch.Tensor:
    generator = torch.Generator().manual_seed(int(item_rng(seed, step).integers(2**31)))
    return torch.randn(batch_size, bank.cfg.d_latent, bank.k, generator=generator)


def pretrain_bank(images: ImageSet, cfg: ModelConfig, train: TrainConfig, steps: int,
                  progress: bool = True) -> Tuple[LatentBank, Discriminator, List[dict]]:
    """
    Adversarially train a plain generator on `images`.

    Args:
        images:   Ground truth images at cfg.out_size.
        cfg:      Model config the bank will later be plugged into.
        train:    Optimizer settings (lr0, betas, batch_size, seed).
        steps:    Number of steps; 0 returns the initialization.
        progress: Show a tqdm progress bar.

    Returns:
        (bank, discriminator, loss history).

    Raises:
        ContractViolation if `images` is empty or has the wrong size.
    """
    require(len(images) > 0, "Cannot pre-train a bank without images")
    require(images[0].shape[0] == cfg.out_size,
            f"Bank pre-training needs {cfg.out_size}px images, got {images[0].shape[0]}")
    require(steps >= 0, f"steps must be non-negative, got {steps}")

    torch.manual_seed(train.seed)
    device = torch.device(train.device)
    bank = LatentBank(generator_config(cfg)).to(device)
    disc = build_discriminator(cfg).to(device)
    opt_g = torch.optim.Adam(bank.parameters(), lr=train.lr0, betas=train.betas, eps=train.adam_eps)
    opt_d = torch.optim.Adam(disc.parameters(), lr=train.lr0, betas=train.d_betas, eps=train.adam_eps)

    history = []
    for step in tqdm(range(steps), disable=not progress):
        indices = item_rng(train.seed, step).choice(len(images), size=train.batch_size,
                                                    replace=len(images) < train.batch_size)
        real = stack([images[int(i)] for i in indices]).to(device)
        fake = bank.generate(sample_latents(bank, train.batch_size, train.seed, step).to(device))

        _, d_loss = adversarial_losses(disc(fake.detach()), disc(real), NON_SATURATING)
        if not torch.isfinite(d_loss):
            raise NonFiniteLossError(step, {'d_loss': d_loss.item()})
        opt_d.zero_grad(set_to_none=True)
        d_loss.backward()
        opt_d.step()

        disc.requires_grad_(False)
        g_loss, _ = adversarial_losses(disc(fake), torch.ones(1, device=device), NON_SATURATING)
        values = {'g_loss': g_loss.item(), 'd_loss': d_loss.item()}
        if not torch.isfinite(g_loss):
            disc.requires_grad_(True)
            raise NonFiniteLossError(step, values)
        opt_g.zero_grad(set_to_none=True)
        g_loss.backward()
        opt_g.step()
        disc.requires_grad_(True)

        history.append(values)

    logger.info("Pre-trained latent bank for %d steps", steps)
    return bank, disc, history


def sample_images(bank: LatentBank, count: int, seed: int = 0) -> torch.Tensor:
    """Generate `count` images from fixed latents (seeded)."""
    with torch.no_grad():
        latents = sample_latents(bank, count, seed, 0).to(next(bank.parameters()).device)
        return bank.generate(latents)
