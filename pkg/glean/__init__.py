"""
GLEAN: generative latent bank restoration.

Encoder-bank-decoder networks for super-resolution, blind restoration and
colorization, with the pruned LightGLEAN variant.
"""
VERSION = "0.1.0"
