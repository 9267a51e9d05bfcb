"""
Shared imaging primitives.

Images are channel-last numpy arrays (height, width, channels) with values in
[0, 1]. This is the single currency passed between the data pipeline, the
degradation synthesizer and the evaluation harness; networks see the same
data as (1, C, H, W) torch tensors via `to_tensor` / `from_tensor`.
"""
import math
from fractions import Fraction
from typing import Tuple, Union

import numpy as np
import torch

from glean.utils import require

# Returned by psnr() for identical images (MSE = 0).
PSNR_CAP = 100.0

# Keys cubic convolution parameter.
BICUBIC_A = -0.5

Scale = Union[int, float, Fraction]


def as_image(data) -> np.ndarray:
    """
    Validate and normalise an array into the (H, W, C) image layout.

    Args:
        data: Array-like of shape (H, W) or (H, W, C) with C in {1, 2, 3}.

    Returns:
        A float64 array of shape (H, W, C).

    Raises:
        ContractViolation if the shape is unsupported or values are not finite.
    """
    image = np.asarray(data, dtype=np.float64)
    if image.ndim == 2:
        image = image[:, :, None]

    require(image.ndim == 3, f"Expected an (H, W, C) image, got shape {image.shape}")
    height, width, channels = image.shape
    require(height >= 1 and width >= 1, f"Image must be at least 1x1, got {height}x{width}")
    require(channels in (1, 2, 3), f"Expected 1, 2 or 3 channels, got {channels}")
    require(bool(np.all(np.isfinite(image))), "Image contains non-finite values")

    return image


def clamp(image: np.ndarray) -> np.ndarray:
    return np.clip(image, 0.0, 1.0)


def from_uint8(data: np.ndarray) -> np.ndarray:
    """8-bit samples to [0, 1] reals (v / 255)."""
    return as_image(np.asarray(data, dtype=np.float64) / 255.0)


def to_uint8(image: np.ndarray) -> np.ndarray:
    """[0, 1] reals to 8-bit samples (round(v * 255), clamped)."""
    return np.clip(np.round(np.asarray(image) * 255.0), 0, 255).astype(np.uint8)


def to_tensor(image: np.ndarray, dtype=torch.float32) -> torch.Tensor:
    """(H, W, C) image to a (1, C, H, W) tensor."""
    image = as_image(image)
    return torch.from_numpy(np.ascontiguousarray(image.transpose(2, 0, 1))).unsqueeze(0).to(dtype)


def from_tensor(tensor: torch.Tensor) -> np.ndarray:
    """(1, C, H, W) or (C, H, W) tensor to an (H, W, C) float64 image."""
    array = tensor.detach().cpu().to(torch.float64).numpy()
    if array.ndim == 4:
        require(array.shape[0] == 1, f"Expected a single image, got batch of {array.shape[0]}")
        array = array[0]
    return array.transpose(1, 2, 0)


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """
    Peak signal-to-noise ratio in decibels with a peak value of 1.0.

    The mean squared error is taken over all channels jointly. Identical
    images return PSNR_CAP; any non-zero error gives the exact value, which
    may exceed the cap.

    Raises:
        ContractViolation on shape mismatch.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    require(a.shape == b.shape, f"PSNR needs equal shapes, got {a.shape} and {b.shape}")

    mse = float(np.mean(np.square(a - b)))
    if mse == 0.0:
        return PSNR_CAP

    return 10.0 * math.log10(1.0 / mse)


def pixel_shuffle(feature: np.ndarray, r: int) -> np.ndarray:
    """
    Rearrange an (H, W, r*r*c) feature map into (H*r, W*r, c).

    Channel `ch * r*r + i * r + j` lands at row offset i and column offset j
    of the r x r cell belonging to output channel `ch` (row-major within the
    cell), the same layout as torch.nn.PixelShuffle.
    """
    feature = np.asarray(feature)
    require(feature.ndim == 3, f"Expected an (H, W, C) feature map, got shape {feature.shape}")
    require(isinstance(r, (int, np.integer)) and r >= 1, f"Upscale factor must be a positive int, got {r}")

    height, width, channels = feature.shape
    require(channels % (r * r) == 0,
            f"Channel count {channels} is not divisible by r^2 = {r * r}")

    c = channels // (r * r)
    cells = feature.reshape(height, width, c, r, r)
    return cells.transpose(0, 3, 1, 4, 2).reshape(height * r, width * r, c)


def pixel_unshuffle(feature: np.ndarray, r: int) -> np.ndarray:
    """Inverse of pixel_shuffle: (H*r, W*r, c) to (H, W, r*r*c)."""
    feature = np.asarray(feature)
    require(feature.ndim == 3, f"Expected an (H, W, C) feature map, got shape {feature.shape}")
    height, width, c = feature.shape
    require(height % r == 0 and width % r == 0,
            f"Spatial size {height}x{width} is not divisible by {r}")

    cells = feature.reshape(height // r, r, width // r, r, c)
    return cells.transpose(0, 2, 4, 1, 3).reshape(height // r, width // r, c * r * r)


def cubic_kernel(x: np.ndarray, a: float = BICUBIC_A) -> np.ndarray:
    """Keys cubic convolution kernel, support (-2, 2)."""
    x = np.abs(np.asarray(x, dtype=np.float64))
    x2 = x * x
    x3 = x2 * x
    near = (a + 2.0) * x3 - (a + 3.0) * x2 + 1.0
    far = a * x3 - 5.0 * a * x2 + 8.0 * a * x - 4.0 * a
    return np.where(x <= 1.0, near, np.where(x < 2.0, far, 0.0))


def reflect_index(index: np.ndarray, length: int) -> np.ndarray:
    """Map arbitrary integer indices into [0, length) by mirror reflection (edge not repeated)."""
    index = np.asarray(index)
    if length == 1:
        return np.zeros_like(index)

    period = 2 * (length - 1)
    index = np.mod(index, period)
    return np.where(index > length - 1, period - index, index)


def resampling_matrix(in_length: int, out_length: int, method: str = 'bicubic') -> np.ndarray:
    """
    Dense (out_length, in_length) matrix resampling one axis.

    Pixel centres are aligned ((i + 0.5) / s - 0.5). When shrinking, the
    bicubic kernel is stretched by 1 / s so it also acts as the
    anti-aliasing filter; rows are normalised to sum to one and borders
    are reflect-padded.
    """
    require(out_length >= 1, f"Output size must be positive, got {out_length}")
    scale = out_length / in_length
    matrix = np.zeros((out_length, in_length), dtype=np.float64)
    centres = (np.arange(out_length) + 0.5) / scale - 0.5

    if method == 'nearest':
        source = np.minimum(np.floor((np.arange(out_length) + 0.5) / scale), in_length - 1).astype(int)
        matrix[np.arange(out_length), source] = 1.0
        return matrix

    require(method == 'bicubic', f"Unknown resampling method: {method}")

    stretch = min(scale, 1.0)
    support = 2.0 / stretch
    for row, centre in enumerate(centres):
        taps = np.arange(math.floor(centre - support) + 1, math.ceil(centre + support))
        weights = cubic_kernel((centre - taps) * stretch)
        weights /= weights.sum()
        np.add.at(matrix[row], reflect_index(taps, in_length), weights)

    return matrix


def output_size(length: int, scale: Scale) -> int:
    return int(round(length * float(scale)))


def resize_to(image: np.ndarray, size: Tuple[int, int], method: str = 'bicubic') -> np.ndarray:
    """
    Resample an image to an explicit (height, width).

    Raises:
        ContractViolation if any output dimension is not positive.
    """
    image = as_image(image)
    out_height, out_width = size
    require(out_height >= 1 and out_width >= 1,
            f"Output dimensions must be positive, got {out_height}x{out_width}")

    height, width, _ = image.shape
    if (out_height, out_width) == (height, width):
        return image.copy()

    rows = resampling_matrix(height, out_height, method)
    cols = resampling_matrix(width, out_width, method)
    return np.einsum('ij,jkc,lk->ilc', rows, image, cols)


def resize(image: np.ndarray, scale: Scale, method: str = 'bicubic') -> np.ndarray:
    """
    Resample an image by a rational scale factor.

    Output dimensions are round(H * scale) x round(W * scale). Bicubic uses
    the a = -0.5 kernel; the result is deterministic and not clamped.
    """
    require(float(scale) > 0, f"Scale must be positive, got {scale}")
    image = as_image(image)
    height, width, _ = image.shape
    return resize_to(image, (output_size(height, scale), output_size(width, scale)), method)
