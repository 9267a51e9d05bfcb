import numpy as np
import pytest
import torch

from glean.imaging.io import write_png
from glean.models.assembly import ModelConfig, build, build_discriminator
from glean.simulation.data import PairDataset, ingest
from glean.training.trainer import TrainConfig, Trainer
from glean.utils import seed_everything

# Small enough to train a few steps on a CPU in well under a second.
TINY = dict(in_size=8, out_size=32, n_rrdb_blocks=1, base_channels=8, d_latent=8,
            channel_base=128, channel_max=16)


def tiny_config(**overrides) -> ModelConfig:
    return ModelConfig(**{**TINY, **overrides})


def tiny_train(**overrides) -> TrainConfig:
    return TrainConfig(**{**dict(total_iters=4, batch_size=2, seed=7, checkpoint_every=0), **overrides})


def make_trainer(cfg=None, train=None, seed=7) -> Trainer:
    seed_everything(seed)
    cfg = cfg or tiny_config()
    return Trainer(build(cfg), build_discriminator(cfg), train or tiny_train())


def pairs(folder, cfg=None, seed=7) -> PairDataset:
    cfg = cfg or tiny_config()
    return PairDataset(ingest(folder, cfg.out_size), cfg.task, cfg.in_size, seed=seed)


def same_weights(a: torch.nn.Module, b: torch.nn.Module) -> bool:
    sa, sb = a.state_dict(), b.state_dict()
    return sa.keys() == sb.keys() and all(torch.equal(sa[k], sb[k]) for k in sa)


def smooth_image(rng: np.random.Generator, size: int) -> np.ndarray:
    """Random low-frequency RGB image in [0, 1]."""
    y, x = np.mgrid[0:size, 0:size] / size
    channels = []
    for _ in range(3):
        a, b, c = rng.uniform(0.5, 3.0, size=3)
        channels.append(0.5 + 0.4 * np.sin(a * x * np.pi + b) * np.cos(c * y * np.pi))
    return np.stack(channels, axis=2)


def textured_image(rng: np.random.Generator, size: int, waves: int = 6) -> np.ndarray:
    """Sum of random plane waves, mid-frequency detail that bicubic upsampling blurs."""
    y, x = np.mgrid[0:size, 0:size] / size
    channels = []
    for _ in range(3):
        value = np.zeros((size, size))
        for _ in range(waves):
            fx, fy = rng.uniform(-6.0, 6.0, size=2)
            value += np.cos(2 * np.pi * (fx * x + fy * y) + rng.uniform(0, 2 * np.pi))
        channels.append(0.5 + 0.45 * value / waves)
    return np.stack(channels, axis=2)


def write_folder(directory, count: int, size: int, seed: int, make=textured_image) -> str:
    rng = np.random.default_rng(seed)
    directory.mkdir(parents=True, exist_ok=True)
    for i in range(count):
        write_png(str(directory / f"img_{i:04d}.png"), make(rng, size))
    return str(directory)


@pytest.fixture
def image_folder(tmp_path):
    """Six 40x48 png images (non-square, so ingestion has to crop)."""
    rng = np.random.default_rng(3)
    directory = tmp_path / 'images'
    directory.mkdir()
    for i in range(6):
        image = smooth_image(rng, 48)[:40]
        write_png(str(directory / f"img_{i:02d}.png"), image)
    return str(directory)


@pytest.fixture
def val_folder(tmp_path):
    rng = np.random.default_rng(11)
    directory = tmp_path / 'val'
    directory.mkdir()
    for i in range(3):
        write_png(str(directory / f"val_{i}.png"), smooth_image(rng, 32))
    return str(directory)


@pytest.fixture(autouse=True)
def deterministic_torch():
    torch.manual_seed(0)
    yield


def write_config(path, text: str) -> str:
    with open(path, 'w') as fd:
        fd.write(text)
    return str(path)
