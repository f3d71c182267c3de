"""Self-supervised data foundry and evaluation toolkit for reference-driven
inpainting-based image stitching."""

__version__ = "0.1.0"
