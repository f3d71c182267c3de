"""Low-rank adapter fine-tuning and inference for side-by-side stitching
datasets."""

__version__ = "0.1.0"
