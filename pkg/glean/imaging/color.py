"""
CIE Lab conversion (D65 white point) for the colorization path.
"""
import warnings
from dataclasses import dataclass

import numpy as np
from skimage import color

from glean.imaging.core import as_image, clamp
from glean.utils import require

L_RANGE = (0.0, 100.0)
AB_RANGE = (-128.0, 127.0)


@dataclass
class LabImage:
    """
    An image in Lab space.

    Attributes:
        L:  Luminance, shape (H, W), values in [0, 100].
        ab: Chroma, shape (H, W, 2), values in [-128, 127].
    """
    L: np.ndarray
    ab: np.ndarray

    def __post_init__(self):
        require(self.L.ndim == 2, f"L must be (H, W), got shape {self.L.shape}")
        require(self.ab.shape == self.L.shape + (2,),
                f"ab must be {self.L.shape + (2,)}, got {self.ab.shape}")
        require(bool(np.all(np.isfinite(self.L)) and np.all(np.isfinite(self.ab))),
                "Lab image contains non-finite values")

    def stack(self) -> np.ndarray:
        """(H, W, 3) array of L, a, b."""
        return np.concatenate([self.L[:, :, None], self.ab], axis=2)

    @staticmethod
    def from_stack(lab: np.ndarray) -> 'LabImage':
        lab = np.asarray(lab, dtype=np.float64)
        return LabImage(L=lab[:, :, 0], ab=lab[:, :, 1:3])


def rgb_to_lab(image: np.ndarray) -> LabImage:
    """Convert a 3-channel [0, 1] RGB image to Lab."""
    image = as_image(image)
    require(image.shape[2] == 3, f"Lab conversion needs an RGB image, got {image.shape[2]} channels")
    return LabImage.from_stack(color.rgb2lab(clamp(image)))


def lab_to_rgb(lab: LabImage) -> np.ndarray:
    """
    Convert Lab back to RGB.

    L and ab are clipped to their valid ranges first; out-of-gamut results
    are clamped into [0, 1].
    """
    L = np.clip(lab.L, *L_RANGE)
    ab = np.clip(lab.ab, *AB_RANGE)
    with warnings.catch_warnings():
        # lab2rgb warns when it has to clip negative XYZ values.
        warnings.simplefilter('ignore', UserWarning)
        rgb = color.lab2rgb(np.concatenate([L[:, :, None], ab], axis=2))
    return clamp(rgb)


def luminance(image: np.ndarray) -> np.ndarray:
    """
    Lab luminance of an image as an (H, W, 1) array in [0, 1] (L / 100).

    Single-channel inputs are treated as grey, i.e. replicated to RGB.
    """
    image = as_image(image)
    if image.shape[2] == 1:
        image = np.repeat(image, 3, axis=2)
    return rgb_to_lab(image).L[:, :, None] / 100.0
