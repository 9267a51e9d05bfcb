"""
Model assembly: wires encoder, latent bank and decoder into a GLEAN,
LightGLEAN or colorization network.
"""
import logging
from dataclasses import dataclass, asdict, fields
from typing import Dict, Optional

import kornia
import numpy as np
import torch
import torch.nn as nn

from glean.imaging.color import luminance
from glean.imaging.core import as_image, from_tensor, resize_to, to_tensor
from glean.models.decoder import ColorizationDecoder, Decoder, DecoderConfig, DirectEmitter
from glean.models.discriminator import Discriminator
from glean.models.encoder import Encoder, EncoderConfig
from glean.models.latent_bank import (GLEAN, LIGHT, BankConfig, BankMode, FrozenManifest,
                                      LatentBank, freeze)
from glean.simulation.data import BLIND, COLORIZATION, SR
from glean.utils import log2_int, require

logger = logging.getLogger(__name__)

TASKS = (SR, BLIND, COLORIZATION)
VARIANTS = (GLEAN, LIGHT)

# Chroma emitted by the colorization decoder is scaled by this to Lab units.
AB_SCALE = 128.0
AB_MIN, AB_MAX = -128.0, 127.0

# Sizes and widths of the named presets. `desk` trains on a single machine;
# `replica` matches the published backbones and is only profiled.
PRESETS = {
    'desk': dict(in_size=16, out_size=128, n_rrdb_blocks=4, base_channels=32,
                 d_latent=64, channel_base=2048, channel_max=128),
    'replica': dict(in_size=64, out_size=1024, n_rrdb_blocks=23, base_channels=64,
                    growth_channels=32, d_latent=512, channel_base=8192, channel_max=512),
}


@dataclass
class ModelConfig:
    """
    Attributes:
        variant:          'glean' or 'light'.
        task:             'sr', 'blind' or 'colorization'.
        in_size:          Input resolution.
        out_size:         Output resolution (equal to in_size for colorization).
        n_rrdb_blocks:    RRDBs in the encoder trunk.
        base_channels:    Channels of f0.
        growth_channels:  Dense block growth (defaults to base_channels // 2).
        d_latent:         Latent vector dimension.
        channel_base:     Bank and discriminator width numerator.
        channel_max:      Bank and discriminator width cap.
        decoder_channels: Decoder width; defaults to 2 * base_channels for
                          GLEAN and base_channels // 2 for LightGLEAN.
        enc_feats_upto:   Highest bank block fusing an encoder feature; -1
                          keeps only the latent vectors. Defaults to N.
        bank_taps_upto:   Highest decoder slot fusing a bank feature; -1
                          discards all bank features. Defaults to all.
        use_decoder:      False emits the image from the bank's last feature
                          through a single convolution.
        alpha_percep:     Perceptual loss weight.
        alpha_gen:        Adversarial loss weight.
        bank_checkpoint:  Pre-trained bank archive loaded before training.
    """
    variant: str = GLEAN
    task: str = SR
    in_size: int = 16
    out_size: int = 128
    n_rrdb_blocks: int = 4
    base_channels: int = 32
    growth_channels: Optional[int] = None
    d_latent: int = 64
    channel_base: int = 2048
    channel_max: int = 128
    decoder_channels: Optional[int] = None
    enc_feats_upto: Optional[int] = None
    bank_taps_upto: Optional[int] = None
    use_decoder: bool = True
    alpha_percep: float = 1e-2
    alpha_gen: float = 1e-2
    bank_checkpoint: Optional[str] = None

    def __post_init__(self):
        require(self.variant in VARIANTS, f"Unknown variant: {self.variant}")
        require(self.task in TASKS, f"Unknown task: {self.task}")
        log2_int(self.in_size)
        log2_int(self.out_size)
        require(self.in_size >= 4, f"in_size must be at least 4, got {self.in_size}")
        if self.task == COLORIZATION:
            require(self.out_size == self.in_size,
                    f"Colorization keeps the resolution, got {self.in_size} -> {self.out_size}")
        else:
            require(self.out_size > self.in_size,
                    f"Restoration needs out_size > in_size, got {self.in_size} -> {self.out_size}")
        require(self.alpha_percep >= 0 and self.alpha_gen >= 0,
                f"Loss weights must be non-negative, got {self.alpha_percep}, {self.alpha_gen}")
        if self.variant == LIGHT:
            require(self.enc_feats_upto in (None, -1),
                    f"LightGLEAN has no encoder feature fusion, got enc_feats_upto={self.enc_feats_upto}")
        if self.enc_feats_upto is not None:
            require(-1 <= self.enc_feats_upto <= self.N,
                    f"enc_feats_upto must lie in [-1, {self.N}], got {self.enc_feats_upto}")
        if self.bank_taps_upto is not None:
            require(-1 <= self.bank_taps_upto <= self.S,
                    f"bank_taps_upto must lie in [-1, {self.S}], got {self.bank_taps_upto}")
        if self.decoder_channels is None:
            self.decoder_channels = (2 * self.base_channels if self.variant == GLEAN
                                     else max(1, self.base_channels // 2))

    @property
    def N(self) -> int:
        return log2_int(self.in_size) - 2

    @property
    def S(self) -> int:
        return log2_int(self.out_size // self.in_size)

    @property
    def k(self) -> int:
        return log2_int(self.out_size) - 1

    @property
    def in_channels(self) -> int:
        return 1 if self.task == COLORIZATION else 3

    @property
    def out_channels(self) -> int:
        return 2 if self.task == COLORIZATION else 3

    def as_dict(self) -> dict:
        return asdict(self)

    @staticmethod
    def from_dict(values: dict) -> 'ModelConfig':
        """
        Build a config from a mapping; a `preset` key seeds the defaults.

        Raises:
            ContractViolation on unknown keys or presets.
        """
        values = dict(values)
        preset = values.pop('preset', None)
        known = {f.name for f in fields(ModelConfig)}
        unknown = sorted(set(values) - known)
        require(not unknown, f"Unknown model settings: {unknown}")
        if preset is not None:
            require(preset in PRESETS, f"Unknown preset: {preset}, expected one of {sorted(PRESETS)}")
            values = {**PRESETS[preset], **values}
        return ModelConfig(**values)

    def encoder_config(self) -> EncoderConfig:
        return EncoderConfig(
            in_size=self.in_size,
            n_rrdb_blocks=self.n_rrdb_blocks,
            base_channels=self.base_channels,
            N=self.N,
            d_latent=self.d_latent,
            k=self.k,
            in_channels=self.in_channels,
            growth_channels=self.growth_channels,
            full=(self.variant == GLEAN),
        )

    def bank_config(self) -> BankConfig:
        enc = self.encoder_config()
        return BankConfig(
            in_size=self.in_size,
            out_size=self.out_size,
            d_latent=self.d_latent,
            channel_base=self.channel_base,
            channel_max=self.channel_max,
            mode=BankMode.for_variant(self.variant, self.in_size),
            fusion_channels=[enc.channels(level) for level in range(self.N + 1)],
            fuse_upto=self.enc_feats_upto if self.variant == GLEAN else -1,
            f0_channels=self.base_channels,
        )

    def decoder_config(self) -> DecoderConfig:
        bank = self.bank_config()
        return DecoderConfig(
            in_size=self.in_size,
            out_size=self.out_size,
            f0_channels=self.base_channels,
            width=self.decoder_channels,
            tap_channels=[bank.width(self.in_size * 2**j) for j in range(self.S + 1)],
            out_channels=self.out_channels,
            taps_upto=self.bank_taps_upto,
        )


class GleanNet(nn.Module):
    """
    Encoder, latent bank and decoder.

    Restoration models map (B, 3, in, in) images to (B, 3, out, out) images.
    Colorization models map (B, 1, in, in) luminance in [0, 1] (L / 100) to
    RGB, predicting chroma and reusing the input luminance.
    """

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        self.encoder = Encoder(cfg.encoder_config())
        self.bank = LatentBank(cfg.bank_config())

        if not cfg.use_decoder:
            self.decoder = DirectEmitter(self.bank.cfg.width(cfg.out_size), cfg.out_size, cfg.out_channels)
        elif cfg.task == COLORIZATION:
            self.decoder = ColorizationDecoder(cfg.base_channels, self.bank.cfg.width(cfg.in_size),
                                               cfg.in_size, use_taps=(cfg.bank_taps_upto != -1))
        else:
            self.decoder = Decoder(cfg.decoder_config())

    @property
    def device(self) -> torch.device:
        return next(self.parameters()).device

    def bank_features(self, lr: torch.Tensor):
        f0, pyramid, C = self.encoder(lr)
        if self.cfg.variant == GLEAN:
            return f0, self.bank.forward_glean(C, pyramid)
        return f0, self.bank.forward_light(f0)

    def forward_raw(self, lr: torch.Tensor) -> torch.Tensor:
        """Linear emission of the decoder: RGB for restoration, normalised chroma for colorization."""
        require(lr.ndim == 4, f"Expected a (B, C, H, W) batch, got shape {tuple(lr.shape)}")
        f0, taps = self.bank_features(lr)
        return self.decoder(f0, taps)

    def forward_lab(self, L: torch.Tensor) -> torch.Tensor:
        """
        Colorization in Lab units: the input luminance (times 100) stacked
        with the predicted chroma.
        """
        require(self.cfg.task == COLORIZATION, "forward_lab needs a colorization model")
        ab = torch.clamp(AB_SCALE * self.forward_raw(L), AB_MIN, AB_MAX)
        return torch.cat([L * 100.0, ab], dim=1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        """Unclamped restoration output, or colorization RGB; `infer` clamps this same output."""
        if self.cfg.task == COLORIZATION:
            return kornia.color.lab_to_rgb(self.forward_lab(x), clip=True)
        return self.forward_raw(x)

    def prepare_input(self, image: np.ndarray) -> np.ndarray:
        """
        Bring an (H, W, C) image into the model's input layout.

        Colorization inputs are reduced to luminance; blind restoration inputs
        are resampled to in_size. Super-resolution inputs must already match.
        """
        image = as_image(image)
        size = (self.cfg.in_size, self.cfg.in_size)
        if self.cfg.task == COLORIZATION:
            if image.shape[:2] != size:
                image = resize_to(image, size, 'bicubic')
            return luminance(image)
        if self.cfg.task == BLIND and image.shape[:2] != size:
            image = resize_to(image, size, 'bicubic')
        require(image.shape[:2] == size, f"Expected a {size} input, got {image.shape[:2]}")
        require(image.shape[2] == 3, f"Expected an RGB input, got {image.shape[2]} channels")
        return image

    def infer(self, image: np.ndarray) -> np.ndarray:
        """Restore or colourise one (H, W, C) image, returning an (H', W', 3) image in [0, 1]."""
        x = to_tensor(self.prepare_input(image)).to(self.device)
        with torch.no_grad():
            return np.clip(from_tensor(self.forward(x)), 0.0, 1.0)

    def attach_bank(self, state: Dict[str, torch.Tensor], manifest: Optional[Dict[str, str]] = None):
        """Load pre-trained generator weights into the latent bank, verified against `manifest` if given."""
        self.bank.load_core(state, manifest)
        logger.info("Loaded %d pre-trained bank weights", len(self.bank.core_parameters()))

    def freeze_bank(self) -> FrozenManifest:
        """Freeze the bank core; returns the manifest keyed by model parameter names."""
        return freeze(self.bank, prefix='bank.')

    def trainable_parameters(self):
        return [p for p in self.parameters() if p.requires_grad]


def build(cfg: ModelConfig) -> GleanNet:
    """
    Wire a model for `cfg`.

    Raises:
        ContractViolation on inconsistent sizes or ablation levels.
    """
    model = GleanNet(cfg)
    logger.debug("Built %s/%s model %d -> %d", cfg.variant, cfg.task, cfg.in_size, cfg.out_size)
    return model


def build_discriminator(cfg: ModelConfig) -> Discriminator:
    """Discriminator over the model's RGB outputs."""
    return Discriminator(cfg.out_size, cfg.channel_base, cfg.channel_max)

