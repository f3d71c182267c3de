"""Side-by-side model-input assembly, dataset persistence, final blending.

A sample is one side-by-side unit: image (weak prior | right-half content),
mask (zeros | gradient mask), and the masked image. Canvas content is
letterbox-resized into each half with the scale/offset recorded so generated
right halves can be mapped back to native resolution for Eq.-style blending.
"""

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .errors import (
    ChecksumMismatch,
    DimensionMismatch,
    IoError,
    ManifestMismatch,
)
from .geometry import AlignedPair
from .imageio import (
    from_uint8,
    load_auto,
    load_gray,
    load_image,
    resize_bilinear,
    save_image,
    sha256_file,
    to_uint8,
)
from .rectangling_priors import gradient_mask, telea_inpaint

DEFAULT_PROMPT = "sks seamless panoramic stitching"
MANIFEST_NAME = "manifest.json"

KIND_TRAINING = "training"
KIND_INFERENCE = "inference"
KIND_RECTANGLING = "rectangling_variant"


@dataclass(frozen=True)
class LetterboxTransform:
    """How canvas content was fitted into one half: scale then pad."""

    src_w: int
    src_h: int
    scale: float
    content_w: int
    content_h: int
    pad_x: int
    pad_y: int

    def to_dict(self) -> dict:
        return {
            "src_w": self.src_w,
            "src_h": self.src_h,
            "scale": self.scale,
            "content_w": self.content_w,
            "content_h": self.content_h,
            "pad_x": self.pad_x,
            "pad_y": self.pad_y,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LetterboxTransform":
        return cls(**d)


def letterbox_transform(src_w: int, src_h: int, half_w: int, half_h: int) -> LetterboxTransform:
    scale = min(half_w / src_w, half_h / src_h)
    content_w = max(1, min(half_w, round(src_w * scale)))
    content_h = max(1, min(half_h, round(src_h * scale)))
    return LetterboxTransform(
        src_w=src_w,
        src_h=src_h,
        scale=scale,
        content_w=content_w,
        content_h=content_h,
        pad_x=(half_w - content_w) // 2,
        pad_y=(half_h - content_h) // 2,
    )


def letterbox(raster: np.ndarray, t: LetterboxTransform, half_w: int, half_h: int) -> np.ndarray:
    """Resize into the half frame, zero padding outside the content box."""
    resized = resize_bilinear(raster, t.content_w, t.content_h)
    shape = (half_h, half_w) if raster.ndim == 2 else (half_h, half_w, raster.shape[2])
    out = np.zeros(shape, dtype=np.float64)
    out[t.pad_y : t.pad_y + t.content_h, t.pad_x : t.pad_x + t.content_w] = resized
    return out


def inverse_letterbox(half: np.ndarray, t: LetterboxTransform) -> np.ndarray:
    """Crop the content box and resize back to native resolution."""
    crop = half[t.pad_y : t.pad_y + t.content_h, t.pad_x : t.pad_x + t.content_w]
    return resize_bilinear(crop, t.src_w, t.src_h)


@dataclass
class SamplePackage:
    """One training or inference unit in the side-by-side layout."""

    image_i: np.ndarray
    mask_m: np.ndarray
    masked_image: np.ndarray
    prompt: str
    kind: str
    sample_id: str = ""
    meta: dict = field(default_factory=dict)
    aux: dict = field(default_factory=dict)

    def __post_init__(self):
        h, w = self.mask_m.shape
        if w % 2 != 0:
            raise DimensionMismatch(f"package width {w} must be even")
        if self.image_i.shape[:2] != (h, w) or self.masked_image.shape[:2] != (h, w):
            raise DimensionMismatch("package rasters do not share dimensions")
        if np.any(self.mask_m[:, : w // 2] != 0.0):
            raise DimensionMismatch("left mask half must be exactly zero")
        expected = self.image_i * (1.0 - self.mask_m)[:, :, None]
        # fresh packages are exact to 1e-6; round-tripped ones carry 8-bit
        # quantization, hence the 1/255 gate here
        if np.max(np.abs(expected - self.masked_image)) > 1.0 / 255.0 + 1e-9:
            raise DimensionMismatch("masked_image != image * (1 - mask)")

    @property
    def half_width(self) -> int:
        return self.mask_m.shape[1] // 2

    def left_half(self) -> np.ndarray:
        return self.image_i[:, : self.half_width]

    def right_half(self) -> np.ndarray:
        return self.image_i[:, self.half_width :]

    def right_mask(self) -> np.ndarray:
        return self.mask_m[:, self.half_width :]


def _build_package(
    left: np.ndarray,
    right: np.ndarray,
    right_mask: np.ndarray,
    prompt: str,
    kind: str,
    sample_id: str,
    half_w: int,
    half_h: int,
    meta: dict,
    aux: dict | None = None,
) -> SamplePackage:
    if left.shape != right.shape or left.shape[:2] != right_mask.shape:
        raise DimensionMismatch("halves and mask must share the canvas dimension")
    t = letterbox_transform(left.shape[1], left.shape[0], half_w, half_h)
    lb_left = letterbox(left, t, half_w, half_h)
    lb_right = letterbox(right, t, half_w, half_h)
    lb_mask = np.clip(letterbox(right_mask, t, half_w, half_h), 0.0, 1.0)
    image_i = np.concatenate([lb_left, lb_right], axis=1)
    mask_m = np.concatenate([np.zeros((half_h, half_w)), lb_mask], axis=1)
    masked = image_i * (1.0 - mask_m)[:, :, None]
    meta = dict(meta)
    meta["letterbox"] = t.to_dict()
    return SamplePackage(
        image_i=image_i,
        mask_m=mask_m,
        masked_image=masked,
        prompt=prompt,
        kind=kind,
        sample_id=sample_id,
        meta=meta,
        aux=dict(aux or {}),
    )


def assemble_training_sample(
    pp,
    prior: np.ndarray,
    gmask: np.ndarray,
    i_sg: np.ndarray,
    prompt: str = DEFAULT_PROMPT,
    half_w: int = 512,
    half_h: int = 512,
    sample_id: str = "",
    variant: str = KIND_TRAINING,
) -> SamplePackage:
    """Package (prior | clean source) with (zeros | gradient mask)."""
    if prior.shape != i_sg.shape or prior.shape[:2] != gmask.shape:
        raise DimensionMismatch("prior, source and gradient mask must share dims")
    meta = {
        "source_image_id": pp.source_image_id,
        "mask_pair_id": pp.mask_pair_id,
        "applied_jitter": pp.applied_jitter.to_dict() if pp.applied_jitter else None,
        "applied_translation": list(pp.applied_translation)
        if pp.applied_translation
        else None,
    }
    return _build_package(
        prior, i_sg, gmask, prompt, variant, sample_id, half_w, half_h, meta
    )


def assemble_inference_sample(
    ap: AlignedPair,
    r,
    kd,
    kg,
    prompt: str = DEFAULT_PROMPT,
    half_w: int = 512,
    half_h: int = 512,
    sample_id: str = "",
) -> SamplePackage:
    """Package a real aligned pair: inpainted composite | target image.

    The native-resolution target image and mask ride along as aux rasters so
    the final blend can happen at canvas resolution.
    """
    keep_target = (1 - (ap.m_wr & ap.m_wt)).astype(np.float64)[:, :, None]
    composite = np.clip(ap.i_wr + ap.i_wt * keep_target, 0.0, 1.0)
    union = (ap.m_wr | ap.m_wt).astype(np.uint8)
    prior = telea_inpaint(composite, union, r)
    gmask = gradient_mask(ap.m_wt, kd, kg)
    meta = {"source_id": ap.source_id or sample_id}
    return _build_package(
        prior,
        ap.i_wt,
        gmask,
        prompt,
        KIND_INFERENCE,
        sample_id,
        half_w,
        half_h,
        meta,
        aux={"target": ap.i_wt, "target_mask": ap.m_wt.astype(np.float64)},
    )


def final_composite(
    generated_right: np.ndarray,
    i_wt: np.ndarray,
    m_wt: np.ndarray,
    soft_mask: np.ndarray | None = None,
) -> np.ndarray:
    """Blend per the stitching contract: target pixels survive bit-exactly
    where its mask is 1; generated content fills the rest.

    ``soft_mask`` switches to a soft blend (mask-weighted average) instead of
    the hard select.
    """
    if generated_right.shape != i_wt.shape or i_wt.shape[:2] != m_wt.shape:
        raise DimensionMismatch("composite inputs do not share dimensions")
    if soft_mask is not None:
        m = np.asarray(soft_mask, dtype=np.float64)[:, :, None]
        return np.clip(i_wt * m + generated_right * (1.0 - m), 0.0, 1.0)
    keep = (np.asarray(m_wt) > 0)[:, :, None]
    return np.where(keep, i_wt, generated_right)


@dataclass
class DatasetManifest:
    version: str
    prompt: str
    half_width: int
    half_height: int
    count: int
    samples: list
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "version": self.version,
            "prompt": self.prompt,
            "half_width": self.half_width,
            "half_height": self.half_height,
            "count": self.count,
            "samples": self.samples,
            "config": self.config,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetManifest":
        return cls(
            version=d["version"],
            prompt=d["prompt"],
            half_width=d["half_width"],
            half_height=d["half_height"],
            count=d["count"],
            samples=d["samples"],
            config=d.get("config", {}),
        )


def write_sample(directory, pkg: SamplePackage) -> dict:
    """Write one sample subdirectory; returns its manifest record.

    The stored masked image is recomputed from the already-quantized image
    and mask so the on-disk triplet satisfies the product invariant within
    one quantization step.
    """
    directory = Path(directory)
    sample_dir = directory / "samples" / pkg.sample_id
    sample_dir.mkdir(parents=True, exist_ok=True)
    files = {}

    save_image(sample_dir / "image.png", pkg.image_i)
    files["image"] = f"samples/{pkg.sample_id}/image.png"
    save_image(sample_dir / "mask.png", pkg.mask_m)
    files["mask"] = f"samples/{pkg.sample_id}/mask.png"

    image_q = from_uint8(to_uint8(pkg.image_i))
    mask_q = from_uint8(to_uint8(pkg.mask_m))
    save_image(sample_dir / "masked.png", image_q * (1.0 - mask_q)[:, :, None])
    files["masked"] = f"samples/{pkg.sample_id}/masked.png"

    for name, raster in sorted(pkg.aux.items()):
        save_image(sample_dir / f"{name}.png", raster)
        files[name] = f"samples/{pkg.sample_id}/{name}.png"

    meta = {
        "sample_id": pkg.sample_id,
        "kind": pkg.kind,
        "prompt": pkg.prompt,
        **pkg.meta,
    }
    meta_path = sample_dir / "meta.json"
    meta_path.write_text(json.dumps(meta, indent=2, sort_keys=True))
    files["meta"] = f"samples/{pkg.sample_id}/meta.json"

    checksums = {rel: sha256_file(directory / rel) for rel in sorted(files.values())}
    return {
        "id": pkg.sample_id,
        "kind": pkg.kind,
        "files": files,
        "checksums": checksums,
    }


def write_manifest(
    directory,
    records: list,
    prompt: str,
    half_w: int,
    half_h: int,
    config: dict | None = None,
) -> DatasetManifest:
    """Single-writer manifest commit via atomic rename."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    records = sorted(records, key=lambda r: r["id"])
    manifest = DatasetManifest(
        version=__version__,
        prompt=prompt,
        half_width=half_w,
        half_height=half_h,
        count=len(records),
        samples=records,
        config=config or {},
    )
    tmp = directory / (MANIFEST_NAME + ".tmp")
    tmp.write_text(json.dumps(manifest.to_dict(), indent=2, sort_keys=True))
    os.replace(tmp, directory / MANIFEST_NAME)
    return manifest


def write_dataset(
    samples,
    directory,
    prompt: str = DEFAULT_PROMPT,
    half_w: int | None = None,
    half_h: int | None = None,
    config: dict | None = None,
) -> DatasetManifest:
    samples = list(samples)
    if samples:
        half_w = half_w or samples[0].half_width
        half_h = half_h or samples[0].mask_m.shape[0]
    records = [write_sample(directory, pkg) for pkg in samples]
    return write_manifest(
        directory, records, prompt, half_w or 0, half_h or 0, config
    )


def read_manifest(directory) -> DatasetManifest:
    path = Path(directory) / MANIFEST_NAME
    if not path.is_file():
        raise IoError(f"missing dataset manifest {path}")
    manifest = DatasetManifest.from_dict(json.loads(path.read_text()))
    if manifest.count != len(manifest.samples):
        raise ManifestMismatch(
            f"manifest count {manifest.count} != {len(manifest.samples)} records"
        )
    return manifest


def verify_dataset(directory) -> DatasetManifest:
    """Check every listed file exists and matches its checksum."""
    directory = Path(directory)
    manifest = read_manifest(directory)
    for record in manifest.samples:
        for rel in record["files"].values():
            path = directory / rel
            if not path.is_file():
                raise ManifestMismatch(f"listed file missing: {rel}")
        for rel, digest in record["checksums"].items():
            if sha256_file(directory / rel) != digest:
                raise ChecksumMismatch(f"checksum mismatch for {rel}")
    return manifest


def read_dataset(directory, verify: bool = True):
    """Load packages back from disk (8-bit quantized values)."""
    directory = Path(directory)
    manifest = verify_dataset(directory) if verify else read_manifest(directory)
    packages = []
    for record in manifest.samples:
        files = record["files"]
        meta = json.loads((directory / files["meta"]).read_text())
        image_i = load_image(directory / files["image"])
        mask_m = load_gray(directory / files["mask"])
        masked = load_image(directory / files["masked"])
        expected = (manifest.half_height, manifest.half_width * 2)
        if manifest.count and image_i.shape[:2] != expected:
            raise ManifestMismatch(
                f"{record['id']}: raster {image_i.shape[:2]} does not match "
                f"manifest dims {expected}"
            )
        aux = {
            name: load_auto(directory / rel)
            for name, rel in files.items()
            if name not in ("image", "mask", "masked", "meta")
        }
        packages.append(
            SamplePackage(
                image_i=image_i,
                mask_m=mask_m,
                masked_image=masked,
                prompt=meta.get("prompt", manifest.prompt),
                kind=record.get("kind", meta.get("kind", KIND_TRAINING)),
                sample_id=record["id"],
                meta=meta,
                aux=aux,
            )
        )
    return manifest, packages
