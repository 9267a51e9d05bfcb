"""
Restoration training loop.

Each step updates the discriminator once on (detached restored, ground
truth) images, then the generator once on the weighted objective. The
learning rate of both optimizers follows a cosine annealing schedule.
"""
import logging
import math
from dataclasses import dataclass, asdict, fields
from typing import Callable, List, Optional, Tuple

import numpy as np
import torch
from tqdm import tqdm

from glean.models.assembly import GleanNet
from glean.models.discriminator import Discriminator
from glean.models.latent_bank import FrozenManifest
from glean.training.objectives import (NON_SATURATING, SATURATING, LossBreakdown, adversarial_losses,
                                       make_embedder, mse_loss, perceptual_loss, total_generator_loss)
from glean.utils import require

logger = logging.getLogger(__name__)


class NonFiniteLossError(RuntimeError):
    """Raised when a loss becomes NaN or infinite."""

    def __init__(self, step: int, values: dict):
        components = ", ".join(f"{name}={value}" for name, value in values.items())
        super().__init__(f"Non-finite loss at step {step}: {components}")
        self.step = step
        self.values = values


@dataclass
class TrainConfig:
    """
    Attributes:
        total_iters:      Training steps.
        lr0:              Initial learning rate.
        lr_min:           Final learning rate.
        batch_size:       Pairs per step.
        seed:             Global seed (overridden by GLEAN_SEED).
        betas:            Adam betas of the generator.
        d_betas:          Adam betas of the discriminator.
        adam_eps:         Adam epsilon.
        adversarial:      'saturating' or 'non_saturating'.
        embedder:         Perceptual embedder ('random', 'identity' or 'vgg').
        checkpoint_every: Steps between checkpoints (0 disables).
        workers:          Threads synthesizing blind pairs.
        device:           Torch device.
    """
    total_iters: int = 5000
    lr0: float = 1e-4
    lr_min: float = 1e-7
    batch_size: int = 8
    seed: int = 0
    betas: Tuple[float, float] = (0.9, 0.999)
    d_betas: Tuple[float, float] = (0.0, 0.999)
    adam_eps: float = 1e-8
    adversarial: str = SATURATING
    embedder: str = 'random'
    checkpoint_every: int = 1000
    workers: int = 0
    device: str = 'cpu'

    def __post_init__(self):
        self.betas = tuple(self.betas)
        self.d_betas = tuple(self.d_betas)
        require(self.total_iters >= 1, f"total_iters must be at least 1, got {self.total_iters}")
        require(self.lr0 > self.lr_min >= 0, f"Need lr0 > lr_min >= 0, got {self.lr0}, {self.lr_min}")
        require(self.batch_size >= 1, f"batch_size must be at least 1, got {self.batch_size}")
        require(isinstance(self.seed, int) and self.seed >= 0,
                f"seed must be a non-negative integer, got {self.seed}")
        require(self.adversarial in (SATURATING, NON_SATURATING),
                f"Unknown adversarial variant: {self.adversarial}")
        require(self.checkpoint_every >= 0, f"checkpoint_every must be >= 0, got {self.checkpoint_every}")

    def as_dict(self) -> dict:
        return asdict(self)

    @staticmethod
    def from_dict(values: dict) -> 'TrainConfig':
        known = {f.name for f in fields(TrainConfig)}
        unknown = sorted(set(values) - known)
        require(not unknown, f"Unknown train settings: {unknown}")
        return TrainConfig(**values)


def cosine_lr(t: int, cfg: TrainConfig) -> float:
    """lr_min + (lr0 - lr_min) * (1 + cos(pi * t / total_iters)) / 2."""
    require(0 <= t <= cfg.total_iters, f"Step {t} outside [0, {cfg.total_iters}]")
    return cfg.lr_min + 0.5 * (cfg.lr0 - cfg.lr_min) * (1.0 + math.cos(math.pi * t / cfg.total_iters))


class Trainer:
    """
    Single-writer training loop for one model and its discriminator.

    Args:
        model:    Restoration network; its bank is frozen on construction
                  unless a manifest is passed.
        disc:     Discriminator over model outputs.
        cfg:      Training settings.
        embedder: Perceptual embedder; built from cfg.embedder if omitted.
        manifest: Digests of already frozen bank weights.
    """

    def __init__(self, model: GleanNet, disc: Discriminator, cfg: TrainConfig,
                 embedder: Optional[torch.nn.Module] = None, manifest: Optional[FrozenManifest] = None):
        self.cfg = cfg
        self.device = torch.device(cfg.device)
        self.model = model.to(self.device)
        self.disc = disc.to(self.device)
        self.manifest = manifest if manifest is not None else model.freeze_bank()
        self.embedder = (embedder or make_embedder(cfg.embedder, cfg.seed)).to(self.device)
        self.alpha_percep = model.cfg.alpha_percep
        self.alpha_gen = model.cfg.alpha_gen

        self.opt_g = torch.optim.Adam(model.trainable_parameters(), lr=cfg.lr0,
                                      betas=cfg.betas, eps=cfg.adam_eps)
        self.opt_d = torch.optim.Adam(disc.parameters(), lr=cfg.lr0,
                                      betas=cfg.d_betas, eps=cfg.adam_eps)
        self.step = 0

    def set_lr(self, t: int) -> float:
        lr = cosine_lr(t, self.cfg)
        for optimizer in (self.opt_g, self.opt_d):
            for group in optimizer.param_groups:
                group['lr'] = lr
        return lr

    def train_step(self, lr: torch.Tensor, hr: torch.Tensor) -> LossBreakdown:
        """
        One discriminator update followed by one generator update.

        Raises:
            NonFiniteLossError before applying an update with a non-finite loss.
        """
        self.set_lr(min(self.step, self.cfg.total_iters))
        self.model.train()
        self.disc.train()
        lr, hr = lr.to(self.device), hr.to(self.device)

        yhat = self.model(lr)

        self.disc.requires_grad_(True)
        d_real = self.disc(hr)
        _, d_loss = adversarial_losses(self.disc(yhat.detach()), d_real, self.cfg.adversarial)
        if not torch.isfinite(d_loss):
            raise NonFiniteLossError(self.step, {'d_loss': float(d_loss)})
        self.opt_d.zero_grad(set_to_none=True)
        d_loss.backward()
        self.opt_d.step()

        self.disc.requires_grad_(False)
        gen, _ = adversarial_losses(self.disc(yhat), d_real.detach(), self.cfg.adversarial)
        losses = total_generator_loss(
            mse_loss(yhat, hr),
            perceptual_loss(yhat, hr, self.embedder),
            gen,
            self.alpha_percep,
            self.alpha_gen,
            d_loss.detach(),
        )
        if not losses.is_finite():
            raise NonFiniteLossError(self.step, losses.values())
        self.opt_g.zero_grad(set_to_none=True)
        losses.total.backward()
        self.opt_g.step()
        self.disc.requires_grad_(True)

        self.step += 1
        return losses

    def frozen_diff(self) -> List[str]:
        """Differences between the frozen bank weights and the manifest; empty if untouched."""
        return self.manifest.diff(dict(self.model.named_parameters()))

    def fit(self, dataset, on_checkpoint: Optional[Callable[['Trainer'], None]] = None,
            progress: bool = True) -> List[dict]:
        """
        Train from the current step up to cfg.total_iters.

        Args:
            dataset:       A PairDataset providing `batch(step, batch_size)`.
            on_checkpoint: Called every cfg.checkpoint_every steps and at the end.
            progress:      Show a tqdm progress bar.

        Returns:
            Loss values of every step run.
        """
        history = []
        saved_at = None
        bar = tqdm(total=self.cfg.total_iters, initial=self.step, disable=not progress)
        while self.step < self.cfg.total_iters:
            lr, hr = dataset.batch(self.step, self.cfg.batch_size)
            values = self.train_step(lr, hr).values()
            history.append(values)
            bar.update(1)
            bar.set_postfix(mse=f"{values['mse']:.4f}", total=f"{values['total']:.4f}")

            every = self.cfg.checkpoint_every
            if on_checkpoint is not None and every and self.step % every == 0:
                on_checkpoint(self)
                saved_at = self.step
        bar.close()

        if on_checkpoint is not None and saved_at != self.step:
            on_checkpoint(self)
        logger.info("Finished training at step %d", self.step)
        return history

    def state_dict(self) -> dict:
        return {
            'opt_g': self.opt_g.state_dict(),
            'opt_d': self.opt_d.state_dict(),
            'step': self.step,
            'rng': torch.get_rng_state(),
            'np_rng': np.random.get_state(),
        }

    def load_state_dict(self, state: dict):
        """Resume optimizer state, step counter and RNG state from a checkpoint."""
        if state.get('opt_g') is not None:
            self.opt_g.load_state_dict(state['opt_g'])
        if state.get('opt_d') is not None:
            self.opt_d.load_state_dict(state['opt_d'])
        self.step = int(state.get('step', 0))
        if state.get('rng') is not None:
            torch.set_rng_state(state['rng'])
        if state.get('np_rng') is not None:
            np.random.set_state(state['np_rng'])
        self.set_lr(min(self.step, self.cfg.total_iters))
