"""Declarative pipeline configuration: one JSON file, flag overrides win.

Defaults carry the published hyper-parameters: jitter half-ranges
{0.2, 0.2, 0.2, 0.1} applied with probability 0.25, misalignment probability
0.25, inpaint radius 3, dilation kernel 10, blur kernel 15, and 512x512
halves (1024x512 total).
"""

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .sample_assembly import DEFAULT_PROMPT


@dataclass
class PathsConfig:
    images_dir: str = "images"
    pairs_dir: str = "pairs"
    maskdist_dir: str = "maskdist"
    dataset_dir: str = "dataset"
    output_dir: str = "out"


@dataclass
class AugmentationSettings:
    e_brightness: float = 0.2
    e_contrast: float = 0.2
    e_saturation: float = 0.2
    e_hue: float = 0.1
    p_color_jitter: float = 0.25
    p_misalign: float = 0.25

    def validate(self):
        for name in ("p_color_jitter", "p_misalign"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must be in [0, 1]")


@dataclass
class PriorSettings:
    inpaint_radius: int = 3
    dilation_kernel: int = 10
    blur_kernel: int = 15

    def validate(self):
        if self.inpaint_radius < 1 or self.dilation_kernel < 1 or self.blur_kernel < 1:
            raise ValueError("prior kernel sizes must be >= 1")


@dataclass
class AssemblySettings:
    half_width: int = 512
    half_height: int = 512
    prompt: str = DEFAULT_PROMPT

    def validate(self):
        if self.half_width < 1 or self.half_height < 1:
            raise ValueError("half sizes must be positive")


@dataclass
class MllmSettings:
    base_url: str = "http://localhost:8080/v1"
    model: str = "qwen-vl-max"
    auth_env: str = "STITCHFORGE_MLLM_API_KEY"
    max_attempts: int = 3
    backoff_ms: list = field(default_factory=lambda: [500, 1000, 2000])
    concurrency: int = 4
    temperature: float = 0.0
    max_tokens: int = 1024
    siqs_prompt_path: str | None = None
    micqs_prompt_path: str | None = None

    def validate(self):
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")
        if self.concurrency < 1:
            raise ValueError("concurrency must be >= 1")


@dataclass
class PipelineConfig:
    paths: PathsConfig = field(default_factory=PathsConfig)
    augmentation: AugmentationSettings = field(default_factory=AugmentationSettings)
    prior: PriorSettings = field(default_factory=PriorSettings)
    assembly: AssemblySettings = field(default_factory=AssemblySettings)
    mllm: MllmSettings = field(default_factory=MllmSettings)
    seed: int = 0
    epochs: int = 1
    jobs: int = 1

    def validate(self) -> "PipelineConfig":
        self.augmentation.validate()
        self.prior.validate()
        self.assembly.validate()
        self.mllm.validate()
        if self.epochs < 1 or self.jobs < 1:
            raise ValueError("epochs and jobs must be >= 1")
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    def echo_dict(self) -> dict:
        """Config echo for manifests/reports: execution-only knobs (worker
        count) are dropped so identical content hashes identically."""
        d = asdict(self)
        d.pop("jobs", None)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        cfg = cls(
            paths=PathsConfig(**d.get("paths", {})),
            augmentation=AugmentationSettings(**d.get("augmentation", {})),
            prior=PriorSettings(**d.get("prior", {})),
            assembly=AssemblySettings(**d.get("assembly", {})),
            mllm=MllmSettings(**d.get("mllm", {})),
            seed=d.get("seed", 0),
            epochs=d.get("epochs", 1),
            jobs=d.get("jobs", 1),
        )
        return cfg.validate()

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True))
