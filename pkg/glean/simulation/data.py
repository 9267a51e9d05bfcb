"""
Dataset ingestion and training pair synthesis.
"""
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np
import torch

from glean.imaging.color import luminance
from glean.imaging.core import as_image, clamp, resize_to
from glean.imaging.io import list_images, read_image
from glean.simulation.degradation import DegradationParams, degrade, sample_params
from glean.utils import item_rng, require

logger = logging.getLogger(__name__)

SR = 'sr'
BLIND = 'blind'
COLORIZATION = 'colorization'


@dataclass
class ImageSet:
    """Square RGB images of one size, with the files they were read from."""
    images: List[np.ndarray]
    paths: List[str]

    def __len__(self):
        return len(self.images)

    def __getitem__(self, index):
        return self.images[index]

    @property
    def names(self) -> List[str]:
        return [os.path.splitext(os.path.basename(p))[0] for p in self.paths]


def center_crop(image: np.ndarray) -> np.ndarray:
    """Largest centred square of an (H, W, C) image."""
    height, width = image.shape[:2]
    side = min(height, width)
    top = (height - side) // 2
    left = (width - side) // 2
    return image[top:top + side, left:left + side]


def to_rgb(image: np.ndarray) -> np.ndarray:
    if image.shape[2] == 1:
        return np.repeat(image, 3, axis=2)
    return image


def load_image(filename: str, size: int) -> np.ndarray:
    """Read, centre-crop and bicubic-resize one image to size x size RGB."""
    image = to_rgb(read_image(filename))
    image = center_crop(image)
    if image.shape[0] != size:
        image = clamp(resize_to(image, (size, size), 'bicubic'))
    return image


def ingest(directory: str, size: int) -> ImageSet:
    """
    Load every decodable image in `directory` in lexicographic order.

    Unreadable files are skipped with a warning.

    Raises:
        ContractViolation if the directory holds no usable image.
    """
    require(os.path.isdir(directory), f"Not a directory: {directory}")
    images, paths = [], []
    for filename in list_images(directory):
        try:
            images.append(load_image(filename, size))
            paths.append(filename)
        except (ValueError, OSError) as e:
            logger.warning("Skipping %s: %s", filename, e)

    require(len(images) > 0, f"No usable images in {directory}")
    logger.info("Ingested %d images from %s at %dpx", len(images), directory, size)
    return ImageSet(images, paths)


def disjoint(train: ImageSet, val: ImageSet) -> bool:
    """True if no file is shared between the two sets."""
    real = {os.path.realpath(p) for p in train.paths}
    return not any(os.path.realpath(p) in real for p in val.paths)


def make_pair(hr: np.ndarray, task: str, in_size: int,
              rng: Optional[np.random.Generator] = None,
              params: Optional[DegradationParams] = None) -> Tuple[np.ndarray, np.ndarray]:
    """
    Synthesize the (input, target) pair for one ground truth image.

    SR inputs are bicubic downsampled; BLIND inputs go through the
    degradation pipeline (sampled parameters unless `params` is given) and
    are then resampled to in_size; COLORIZATION inputs are the luminance L/100.
    """
    hr = as_image(hr)
    if task == SR:
        return clamp(resize_to(hr, (in_size, in_size), 'bicubic')), hr
    if task == BLIND:
        require(rng is not None, "Blind pairs need a random generator")
        params = params or sample_params(rng)
        degraded = degrade(hr, params, rng)
        return clamp(resize_to(degraded, (in_size, in_size), 'bicubic')), hr
    require(task == COLORIZATION, f"Unknown task: {task}")
    require(hr.shape[0] == in_size, f"Colorization pairs need {in_size}px images, got {hr.shape[0]}")
    return luminance(hr), hr


def stack(images: List[np.ndarray], dtype=torch.float32) -> torch.Tensor:
    """List of (H, W, C) images to a (B, C, H, W) tensor."""
    return torch.from_numpy(np.stack([im.transpose(2, 0, 1) for im in images])).to(dtype)


class PairDataset:
    """
    Training pairs drawn from an ImageSet.

    The pair for (step, index) depends only on the seed, the step and the
    batch position, so batches are reproducible whatever order or thread they
    are synthesized in. Deterministic tasks cache their inputs.

    Args:
        images:  Ground truth images at out_size.
        task:    SR, BLIND or COLORIZATION.
        in_size: Network input resolution.
        seed:    Global seed.
        workers: Threads used to synthesize a batch (0 synthesizes inline).
    """

    def __init__(self, images: ImageSet, task: str, in_size: int, seed: int = 0, workers: int = 0):
        require(len(images) > 0, "Cannot build pairs from an empty image set")
        self.images = images
        self.task = task
        self.in_size = in_size
        self.seed = seed
        self.workers = workers
        self._cache: Dict[int, Tuple[np.ndarray, np.ndarray]] = {}

    def __len__(self):
        return len(self.images)

    def pair(self, image_index: int, step: int = 0, position: int = 0) -> Tuple[np.ndarray, np.ndarray]:
        if self.task != BLIND:
            if image_index not in self._cache:
                self._cache[image_index] = make_pair(self.images[image_index], self.task, self.in_size)
            return self._cache[image_index]
        rng = item_rng(self.seed, step, position)
        return make_pair(self.images[image_index], self.task, self.in_size, rng)

    def batch_indices(self, step: int, batch_size: int) -> np.ndarray:
        rng = item_rng(self.seed, step)
        return rng.choice(len(self), size=batch_size, replace=len(self) < batch_size)

    def batch(self, step: int, batch_size: int) -> Tuple[torch.Tensor, torch.Tensor]:
        """(inputs, targets) for one training step as (B, C, H, W) tensors."""
        indices = self.batch_indices(step, batch_size)
        jobs = [(int(i), step, position) for position, i in enumerate(indices)]
        if self.workers > 0 and self.task == BLIND:
            with ThreadPoolExecutor(max_workers=self.workers) as pool:
                pairs = list(pool.map(lambda job: self.pair(*job), jobs))
        else:
            pairs = [self.pair(*job) for job in jobs]
        return stack([lr for lr, _ in pairs]), stack([hr for _, hr in pairs])

    def all(self) -> Tuple[torch.Tensor, torch.Tensor]:
        """Every pair once, in dataset order (evaluation)."""
        pairs = [self.pair(i, 0, i) for i in range(len(self))]
        return stack([lr for lr, _ in pairs]), stack([hr for _, hr in pairs])
