"""
Blind-restoration degradation synthesizer.

A high-quality image x is degraded as

    y = JPEG_q( down_r(x * k_sigma) + n_delta )

i.e. Gaussian blur, bicubic downsampling by r, additive white Gaussian noise
(then clamped to [0, 1]), and a JPEG round-trip at quality q. Parameters are
drawn uniformly from fixed intervals for every training pair.
"""
import math
from dataclasses import dataclass, asdict
from typing import Optional

import cv2
import numpy as np

from glean.imaging.core import as_image, clamp, resize
from glean.imaging.io import jpeg_roundtrip
from glean.utils import require

SIGMA_RANGE = (0.2, 10.0)
SCALE_RANGE = (1.0, 8.0)
NOISE_RANGE = (0.0, 25.0)
QUALITY_RANGE = (5, 50)


@dataclass(frozen=True)
class DegradationParams:
    """
    One draw of the degradation parameters.

    Attributes:
        sigma: Blur standard deviation in pixels.
        r:     Downsampling factor (real, >= 1).
        delta: Noise standard deviation in 8-bit units.
        q:     JPEG quality factor.
    """
    sigma: float
    r: float
    delta: float
    q: int

    def __post_init__(self):
        require(SIGMA_RANGE[0] <= self.sigma <= SIGMA_RANGE[1],
                f"sigma must lie in {SIGMA_RANGE}, got {self.sigma}")
        require(SCALE_RANGE[0] <= self.r <= SCALE_RANGE[1],
                f"r must lie in {SCALE_RANGE}, got {self.r}")
        require(NOISE_RANGE[0] <= self.delta <= NOISE_RANGE[1],
                f"delta must lie in {NOISE_RANGE}, got {self.delta}")
        require(float(self.q).is_integer() and QUALITY_RANGE[0] <= self.q <= QUALITY_RANGE[1],
                f"q must be an integer in {QUALITY_RANGE}, got {self.q}")

    def as_dict(self) -> dict:
        return asdict(self)


def sample_params(rng: np.random.Generator) -> DegradationParams:
    """Draw each parameter uniformly over its interval (q uniform over the integers)."""
    return DegradationParams(
        sigma=float(rng.uniform(*SIGMA_RANGE)),
        r=float(rng.uniform(*SCALE_RANGE)),
        delta=float(rng.uniform(*NOISE_RANGE)),
        q=int(rng.integers(QUALITY_RANGE[0], QUALITY_RANGE[1] + 1)),
    )


def gaussian_kernel_1d(sigma: float) -> np.ndarray:
    require(sigma > 0, f"Blur sigma must be positive, got {sigma}")
    radius = int(math.ceil(3 * sigma))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-(x * x) / (2 * sigma * sigma))
    return k / k.sum()


def gaussian_kernel(sigma: float) -> np.ndarray:
    """
    Normalised isotropic 2-D Gaussian kernel.

    The kernel is (2 * ceil(3 * sigma) + 1) pixels per side and is the outer
    product of its 1-D profile, so it sums to one and is separable.

    Raises:
        ContractViolation if sigma <= 0.
    """
    k = gaussian_kernel_1d(sigma)
    return np.outer(k, k)


def blur(image: np.ndarray, sigma: float) -> np.ndarray:
    """Separable Gaussian blur with reflect padding."""
    image = as_image(image)
    k = gaussian_kernel_1d(sigma)
    out = cv2.sepFilter2D(image, cv2.CV_64F, k, k, borderType=cv2.BORDER_REFLECT_101)
    return out.reshape(image.shape)


def add_noise(image: np.ndarray, delta: float, rng: Optional[np.random.Generator]) -> np.ndarray:
    """Add N(0, delta / 255) white noise and clamp to [0, 1]."""
    if delta == 0:
        return clamp(image)
    require(rng is not None, "A noise generator is required when delta > 0")
    return clamp(image + rng.normal(0.0, delta / 255.0, size=image.shape))


def degrade_stages(x: np.ndarray, p: DegradationParams,
                   rng: Optional[np.random.Generator] = None) -> dict:
    """
    Run the pipeline and return every intermediate stage.

    Returns:
        A dict with keys 'blurred', 'downsampled', 'noisy' and 'output'.
    """
    x = as_image(x)
    require(x.shape[2] == 3, f"Degradation expects an RGB image, got {x.shape[2]} channels")

    blurred = clamp(blur(x, p.sigma))
    downsampled = blurred if p.r == 1 else clamp(resize(blurred, 1.0 / p.r, 'bicubic'))
    noisy = add_noise(downsampled, p.delta, rng)
    output = jpeg_roundtrip(noisy, p.q)

    return {
        'blurred': blurred,
        'downsampled': downsampled,
        'noisy': noisy,
        'output': output,
    }


def degrade(x: np.ndarray, p: DegradationParams,
            rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """
    Degrade a high-quality RGB image.

    Args:
        x:   (H, W, 3) image in [0, 1].
        p:   Degradation parameters.
        rng: Noise generator; only consumed when p.delta > 0.

    Returns:
        The degraded image at size round(H / r) x round(W / r).
    """
    return degrade_stages(x, p, rng)['output']
