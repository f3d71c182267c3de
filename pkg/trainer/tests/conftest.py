import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest
from PIL import Image


def _save(path: Path, arr: np.ndarray) -> None:
    data = np.round(np.clip(arr, 0, 1) * 255).astype(np.uint8)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(data, mode="RGB" if data.ndim == 3 else "L").save(path)


def _stitchforge(*args, cwd):
    subprocess.run(
        [sys.executable, "-m", "stitchforge", *args],
        cwd=cwd,
        check=True,
        capture_output=True,
    )


@pytest.fixture(scope="session")
def corpus(tmp_path_factory):
    """Tiny corpus turned into datasets through the dataset-producer CLI.

    The trainer only ever sees the on-disk dataset format; this fixture is
    the cross-package integration point.
    """
    root = tmp_path_factory.mktemp("corpus")
    rng = np.random.default_rng(3)
    for i in range(4):
        yy, xx = np.mgrid[0:24, 0:32]
        img = np.dstack(
            [
                (xx / 31.0 + i * 0.2) % 1.0,
                yy / 23.0,
                rng.random((24, 32)) * 0.4 + 0.3,
            ]
        )
        _save(root / "images" / f"img{i}.png", img)
    for pid, (tx, ty) in {"p0": (6, 3), "p1": (0, 0)}.items():
        _save(root / "pairs" / f"{pid}_ref.png", rng.random((30, 40, 3)))
        _save(root / "pairs" / f"{pid}_tgt.png", rng.random((30, 40, 3)))
        (root / "pairs" / f"{pid}_h.txt").write_text(f"1 0 {tx}\n0 1 {ty}\n0 0 1\n")

    config = {
        "assembly": {"half_width": 16, "half_height": 16},
        "seed": 11,
    }
    (root / "config.json").write_text(json.dumps(config))
    _stitchforge("--config", "config.json", "collect-masks", cwd=root)
    _stitchforge("--config", "config.json", "gen-dataset", cwd=root)

    infer_config = {
        "assembly": {"half_width": 16, "half_height": 16},
        "paths": {"dataset_dir": "inference"},
        "seed": 11,
    }
    (root / "inf.json").write_text(json.dumps(infer_config))
    _stitchforge("--config", "inf.json", "assemble-inference", cwd=root)
    return root


@pytest.fixture(scope="session")
def trained(corpus, tmp_path_factory):
    """One 300-step rank-8 overfit run, shared across tests."""
    import time

    from stitchtrainer.training import TrainConfig, train

    out = tmp_path_factory.mktemp("train_run")
    cfg = TrainConfig(
        iterations=300,
        rank=8,
        seed=0,
        lr_unet=1e-2,  # adapters train from scratch against a frozen base;
        lr_text=2e-3,  # the production default rates assume a pretrained model
    )
    start = time.perf_counter()
    ckpt = train(corpus / "dataset", cfg, out, log_every=0)
    wall = time.perf_counter() - start
    losses = [
        float(line.split(",")[1]) for line in (out / "loss.csv").read_text().splitlines()
    ]
    return {"ckpt": ckpt, "out": out, "losses": losses, "wall": wall, "cfg": cfg}
