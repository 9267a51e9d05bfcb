from .core import as_image, psnr, pixel_shuffle, pixel_unshuffle, resize, resize_to
from .color import LabImage, rgb_to_lab, lab_to_rgb
