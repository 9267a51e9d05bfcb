"""
Image file I/O.

PNG is the lossless path and goes through pypng; other formats and the JPEG
codec used by the degradation pipeline go through OpenCV.
"""
import os
import zlib
from typing import List

import cv2
import numpy as np
import png

from glean.imaging.core import as_image, from_uint8, to_uint8

IMAGE_EXTENSIONS = ('.png', '.jpg', '.jpeg', '.bmp', '.tif', '.tiff', '.webp')

# OpenCV exposes the chroma subsampling switch only in recent releases;
# older builds use 4:2:0 unconditionally.
_JPEG_SAMPLING = getattr(cv2, 'IMWRITE_JPEG_SAMPLING_FACTOR', None)
_JPEG_SAMPLING_420 = getattr(cv2, 'IMWRITE_JPEG_SAMPLING_FACTOR_420', None)


def read_png(filename: str) -> np.ndarray:
    """
    Read a png image into an (H, W, C) array in [0, 1].

    Alpha planes are dropped; greyscale stays single-channel.
    """
    width, height, rows, info = png.Reader(filename=filename).asDirect()
    planes = info['planes']
    bitdepth = info['bitdepth']

    data = np.vstack([np.asarray(row, dtype=np.float64) for row in rows])
    data = data.reshape(height, width, planes) / (2**bitdepth - 1)

    if info.get('alpha', False):
        data = data[:, :, :planes - 1]

    return as_image(data)


def write_png(filename: str, image: np.ndarray):
    """Write an (H, W, 1|3) image as 8-bit png (round(v * 255), clamped)."""
    image = as_image(image)
    height, width, channels = image.shape
    if channels == 2:
        raise ValueError(f"Cannot write a 2-channel image to png: {filename}")

    samples = to_uint8(image).reshape(height, width * channels)
    writer = png.Writer(width, height, greyscale=(channels == 1), bitdepth=8)
    with open(filename, 'wb') as fd:
        writer.write(fd, samples.tolist())


def read_image(filename: str) -> np.ndarray:
    """
    Read any supported image file into an (H, W, C) array in [0, 1].

    Raises:
        ValueError if the file cannot be decoded.
    """
    if filename.lower().endswith('.png'):
        try:
            return read_png(filename)
        except (png.Error, zlib.error) as e:
            raise ValueError(f"Unable to decode image {filename}: {e}")

    data = cv2.imread(filename, cv2.IMREAD_COLOR)
    if data is None:
        raise ValueError(f"Unable to decode image: {filename}")

    return from_uint8(cv2.cvtColor(data, cv2.COLOR_BGR2RGB))


def list_images(directory: str) -> List[str]:
    """Image files in `directory`, in lexicographic order."""
    names = sorted(name for name in os.listdir(directory)
                   if name.lower().endswith(IMAGE_EXTENSIONS))
    return [os.path.join(directory, name) for name in names]


def jpeg_roundtrip(image: np.ndarray, quality: int) -> np.ndarray:
    """
    Compress and decompress an RGB image with baseline JPEG.

    Args:
        image:   (H, W, 3) image in [0, 1].
        quality: Quality factor on the standard 1-100 scale.

    Returns:
        The decoded image in [0, 1].
    """
    image = as_image(image)
    params = [cv2.IMWRITE_JPEG_QUALITY, int(quality)]
    if _JPEG_SAMPLING is not None:
        params += [_JPEG_SAMPLING, _JPEG_SAMPLING_420]

    bgr = cv2.cvtColor(to_uint8(image), cv2.COLOR_RGB2BGR)
    ok, encoded = cv2.imencode('.jpg', bgr, params)
    if not ok:
        raise RuntimeError(f"JPEG encoding failed at quality {quality}")

    decoded = cv2.imdecode(encoded, cv2.IMREAD_COLOR)
    return cv2.cvtColor(decoded, cv2.COLOR_BGR2RGB).astype(np.float64) / 255.0
