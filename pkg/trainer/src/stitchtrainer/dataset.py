"""Reader for the side-by-side stitching dataset format.

The wire contract: ``manifest.json`` at the dataset root (version, prompt,
half sizes, count, per-sample file lists with sha256 checksums) and one
directory per sample holding ``image.png`` (prior | right content),
``mask.png`` (zeros | gradient mask), ``masked.png`` and ``meta.json``.
This package never writes into a dataset directory.
"""

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import ManifestMismatch


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _load_rgb(path: Path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0


def _load_gray(path: Path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("L"), dtype=np.float64) / 255.0


@dataclass
class Sample:
    sample_id: str
    kind: str
    image: np.ndarray        # (H, 2W, 3) in [0, 1]
    mask: np.ndarray         # (H, 2W) in [0, 1], left half all zero
    masked_image: np.ndarray # (H, 2W, 3)
    prompt: str
    meta: dict


@dataclass
class Dataset:
    root: Path
    prompt: str
    half_width: int
    half_height: int
    samples: list

    def __len__(self):
        return len(self.samples)


def load_dataset(root, verify: bool = True) -> Dataset:
    root = Path(root)
    manifest_path = root / "manifest.json"
    if not manifest_path.is_file():
        raise ManifestMismatch(f"missing manifest {manifest_path}")
    manifest = json.loads(manifest_path.read_text())
    records = manifest.get("samples", [])
    if manifest.get("count") != len(records):
        raise ManifestMismatch(
            f"count {manifest.get('count')} != {len(records)} sample records"
        )
    samples = []
    for record in sorted(records, key=lambda r: r["id"]):
        files = record["files"]
        for rel in files.values():
            if not (root / rel).is_file():
                raise ManifestMismatch(f"listed file missing: {rel}")
        if verify:
            for rel, digest in record.get("checksums", {}).items():
                if _sha256(root / rel) != digest:
                    raise ManifestMismatch(f"checksum mismatch for {rel}")
        meta = json.loads((root / files["meta"]).read_text())
        image = _load_rgb(root / files["image"])
        mask = _load_gray(root / files["mask"])
        masked = _load_rgb(root / files["masked"])
        if image.shape[:2] != mask.shape or masked.shape != image.shape:
            raise ManifestMismatch(f"{record['id']}: raster shapes disagree")
        if image.shape[1] % 2 != 0:
            raise ManifestMismatch(f"{record['id']}: odd package width")
        samples.append(
            Sample(
                sample_id=record["id"],
                kind=record.get("kind", meta.get("kind", "training")),
                image=image,
                mask=mask,
                masked_image=masked,
                prompt=meta.get("prompt", manifest.get("prompt", "")),
                meta=meta,
            )
        )
    return Dataset(
        root=root,
        prompt=manifest.get("prompt", ""),
        half_width=int(manifest.get("half_width", 0)),
        half_height=int(manifest.get("half_height", 0)),
        samples=samples,
    )
