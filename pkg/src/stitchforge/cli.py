"""Pipeline orchestration: subcommands over one config file with reproducible
seeding.

Exit codes: 0 success, 1 usage, 2 data error, 3 external-service failure.
Progress goes to stderr; machine-readable outputs go to files only.
"""

import argparse
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .augmentation import (
    AffineMisalignConfig,
    ColorJitterConfig,
    PseudoPair,
    synthesize_pseudo_pair,
)
from .config import PipelineConfig
from .errors import (
    AuthError,
    EmptyInput,
    ExhaustedRetries,
    IoError,
    StitchForgeError,
    TransportError,
)
from .eval_consistency import ConsistencyReport, evaluate_pair
from .eval_mllm import (
    ChatVisionClient,
    EvaluatorEndpoint,
    MICQSResult,
    aggregate_micqs_votes,
    build_micqs_prompt,
    build_siqs_prompt,
    evaluate_micqs_batch,
    evaluate_siqs_batch,
    metric_accuracy,
)
from .geometry import Homography, align_pair, compute_canvas, warp_mask
from .imageio import load_binary_mask, load_image, resize_bilinear, save_image
from .mask_distribution import (
    MaskDistribution,
    MaskPair,
    derive_seed,
    load_distribution,
    sample_mask_pair,
    save_distribution,
)
from .rectangling_priors import (
    coarse_rectangle,
    gradient_mask,
    pseudo_fusion,
    telea_inpaint,
)
from .sample_assembly import (
    KIND_INFERENCE,
    KIND_RECTANGLING,
    LetterboxTransform,
    assemble_inference_sample,
    assemble_training_sample,
    final_composite,
    inverse_letterbox,
    read_dataset,
    write_manifest,
    write_sample,
)

log = logging.getLogger("stitchforge")

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        raise SystemExit(1)


def _discover_pairs(pairs_dir: Path) -> list:
    """Find (id, ref, tgt, homography) file triples named <id>_ref.*, etc."""
    ids = sorted(
        p.name[: -len("_ref") - len(p.suffix)]
        for p in pairs_dir.iterdir()
        if p.suffix.lower() in IMAGE_SUFFIXES and p.stem.endswith("_ref")
    ) if pairs_dir.is_dir() else []
    triples = []
    for pid in ids:
        ref = next(
            (pairs_dir / f"{pid}_ref{s}" for s in IMAGE_SUFFIXES
             if (pairs_dir / f"{pid}_ref{s}").is_file()),
            None,
        )
        tgt = next(
            (pairs_dir / f"{pid}_tgt{s}" for s in IMAGE_SUFFIXES
             if (pairs_dir / f"{pid}_tgt{s}").is_file()),
            None,
        )
        hom = pairs_dir / f"{pid}_h.txt"
        if ref is None or tgt is None or not hom.is_file():
            raise IoError(f"pair {pid!r} is missing a ref/tgt image or _h.txt file")
        triples.append((pid, ref, tgt, hom))
    return triples


def _discover_images(images_dir: Path) -> list:
    if not images_dir.is_dir():
        return []
    return sorted(
        p for p in images_dir.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES
    )


def cmd_collect_masks(cfg: PipelineConfig, args) -> int:
    pairs = _discover_pairs(Path(cfg.paths.pairs_dir))
    if not pairs:
        raise EmptyInput(f"no pairs found in {cfg.paths.pairs_dir}")
    mask_pairs = []
    for pid, ref_path, tgt_path, hom_path in pairs:
        h = Homography.from_file(hom_path)
        ref = load_image(ref_path)
        tgt = load_image(tgt_path)
        canvas = compute_canvas(
            h, (ref.shape[1], ref.shape[0]), (tgt.shape[1], tgt.shape[0])
        )
        mask_pairs.append(
            MaskPair(
                m_wr=warp_mask(h, (ref.shape[1], ref.shape[0]), canvas),
                m_wt=warp_mask(
                    Homography.identity(), (tgt.shape[1], tgt.shape[0]), canvas
                ),
                source_id=pid,
            )
        )
        log.info("collected masks for %s (canvas %dx%d)", pid, canvas.width, canvas.height)
    dist = MaskDistribution(pairs=mask_pairs)
    save_distribution(dist, cfg.paths.maskdist_dir)
    log.info("wrote %d mask pairs to %s", dist.n, cfg.paths.maskdist_dir)
    return 0


def _generate_sample(
    cfg: PipelineConfig,
    dist,
    image_path: Path,
    epoch: int,
    variant: str,
    dump_priors: bool = False,
):
    sample_id = f"{image_path.stem}_e{epoch:03d}"
    seed = derive_seed(cfg.seed, sample_id)
    rng = np.random.default_rng(seed)
    mp = sample_mask_pair(dist, rng)
    h, w = mp.shape
    i_sg = resize_bilinear(load_image(image_path), w, h)

    if variant == "rectangling":
        union = (mp.m_wr | mp.m_wt).astype(np.uint8)
        prior = telea_inpaint(
            pseudo_fusion(i_sg, mp), union, cfg.prior.inpaint_radius
        )
        gmask = gradient_mask(union, cfg.prior.dilation_kernel, cfg.prior.blur_kernel)
        pp = PseudoPair(
            i_wr_tilde=pseudo_fusion(i_sg, mp),
            i_wt_tilde=i_sg * mp.m_wt.astype(np.float64)[:, :, None],
            m_wr=mp.m_wr,
            m_wt=mp.m_wt,
            source_image_id=image_path.stem,
            mask_pair_id=mp.source_id,
        )
        kind = KIND_RECTANGLING
    else:
        pp = synthesize_pseudo_pair(
            i_sg,
            mp,
            ColorJitterConfig(
                e_brightness=cfg.augmentation.e_brightness,
                e_contrast=cfg.augmentation.e_contrast,
                e_saturation=cfg.augmentation.e_saturation,
                e_hue=cfg.augmentation.e_hue,
                p_apply=cfg.augmentation.p_color_jitter,
            ),
            AffineMisalignConfig(p_apply=cfg.augmentation.p_misalign),
            rng,
            source_image_id=image_path.stem,
        )
        prior = coarse_rectangle(pp, cfg.prior.inpaint_radius)
        gmask = gradient_mask(
            mp.m_wt, cfg.prior.dilation_kernel, cfg.prior.blur_kernel
        )
        kind = "training"

    pkg = assemble_training_sample(
        pp,
        prior,
        gmask,
        i_sg,
        prompt=cfg.assembly.prompt,
        half_w=cfg.assembly.half_width,
        half_h=cfg.assembly.half_height,
        sample_id=sample_id,
        variant=kind,
    )
    pkg.meta["seed"] = seed
    pkg.meta["epoch"] = epoch
    if dump_priors:
        pkg.aux["prior"] = prior
        pkg.aux["gradient_mask"] = gmask
    return write_sample(cfg.paths.dataset_dir, pkg)


def cmd_gen_dataset(cfg: PipelineConfig, args) -> int:
    dist = load_distribution(cfg.paths.maskdist_dir)
    images = _discover_images(Path(cfg.paths.images_dir))
    if not images:
        raise EmptyInput(f"no images found in {cfg.paths.images_dir}")
    variant = args.variant
    tasks = [
        (image_path, epoch)
        for epoch in range(cfg.epochs)
        for image_path in images
    ]
    log.info(
        "generating %d samples (%d images x %d epochs, %d jobs, variant=%s)",
        len(tasks), len(images), cfg.epochs, cfg.jobs, variant,
    )
    dump = getattr(args, "dump_priors", False)
    if cfg.jobs == 1:
        records = [
            _generate_sample(cfg, dist, path, epoch, variant, dump)
            for path, epoch in tasks
        ]
    else:
        with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
            futures = [
                pool.submit(_generate_sample, cfg, dist, path, epoch, variant, dump)
                for path, epoch in tasks
            ]
            records = [f.result() for f in futures]
    write_manifest(
        cfg.paths.dataset_dir,
        records,
        cfg.assembly.prompt,
        cfg.assembly.half_width,
        cfg.assembly.half_height,
        config=cfg.echo_dict(),
    )
    log.info("dataset written to %s", cfg.paths.dataset_dir)
    return 0


def cmd_assemble_inference(cfg: PipelineConfig, args) -> int:
    pairs = _discover_pairs(Path(cfg.paths.pairs_dir))
    if not pairs:
        raise EmptyInput(f"no pairs found in {cfg.paths.pairs_dir}")

    def build(entry):
        pid, ref_path, tgt_path, hom_path = entry
        ap = align_pair(
            load_image(ref_path),
            load_image(tgt_path),
            Homography.from_file(hom_path),
            source_id=pid,
        )
        pkg = assemble_inference_sample(
            ap,
            cfg.prior.inpaint_radius,
            cfg.prior.dilation_kernel,
            cfg.prior.blur_kernel,
            prompt=cfg.assembly.prompt,
            half_w=cfg.assembly.half_width,
            half_h=cfg.assembly.half_height,
            sample_id=pid,
        )
        log.info("assembled inference package %s", pid)
        return write_sample(cfg.paths.dataset_dir, pkg)

    if cfg.jobs == 1:
        records = [build(entry) for entry in pairs]
    else:
        with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
            records = [r for r in pool.map(build, pairs)]
    write_manifest(
        cfg.paths.dataset_dir,
        records,
        cfg.assembly.prompt,
        cfg.assembly.half_width,
        cfg.assembly.half_height,
        config=cfg.echo_dict(),
    )
    log.info("inference packages written to %s", cfg.paths.dataset_dir)
    return 0


def cmd_composite(cfg: PipelineConfig, args) -> int:
    _, packages = read_dataset(cfg.paths.dataset_dir)
    generated_dir = Path(args.generated_dir)
    out_dir = Path(cfg.paths.output_dir)
    done = 0
    for pkg in packages:
        if pkg.kind != KIND_INFERENCE:
            continue
        gen_path = generated_dir / pkg.sample_id / "generated.png"
        if not gen_path.is_file():
            raise IoError(f"missing generated output {gen_path}")
        generated = load_image(gen_path)
        if generated.shape[:2] != pkg.right_half().shape[:2]:
            raise StitchForgeError(
                f"{pkg.sample_id}: generated half has shape "
                f"{generated.shape[:2]}, package expects {pkg.right_half().shape[:2]}"
            )
        t = LetterboxTransform.from_dict(pkg.meta["letterbox"])
        native_gen = inverse_letterbox(generated, t)
        i_wt = pkg.aux["target"]
        m_wt = (pkg.aux["target_mask"] >= 0.5).astype(np.uint8)
        soft = inverse_letterbox(pkg.right_mask(), t) if args.blend == "soft" else None
        stitched = final_composite(native_gen, i_wt, m_wt, soft_mask=soft)
        save_image(out_dir / f"{pkg.sample_id}.png", stitched)
        done += 1
    if done == 0:
        raise EmptyInput("dataset holds no inference packages")
    log.info("wrote %d composites to %s", done, out_dir)
    return 0


def _matched_ids(dir_a: Path, dir_b: Path) -> list:
    ids_a = {p.stem for p in _discover_images(dir_a)}
    ids_b = {p.stem for p in _discover_images(dir_b)}
    return sorted(ids_a & ids_b)


def _find_image(directory: Path, stem: str) -> Path:
    for suffix in IMAGE_SUFFIXES:
        path = directory / f"{stem}{suffix}"
        if path.is_file():
            return path
    raise IoError(f"no image {stem} in {directory}")


def _read_subset_tags(path) -> dict:
    tags = {}
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line:
            continue
        sid, _, tag = line.partition(",")
        tags[sid.strip()] = tag.strip().upper().lstrip("D_")
    return tags


def cmd_eval_consistency(cfg: PipelineConfig, args) -> int:
    dir_a, dir_b = Path(args.dir_a), Path(args.dir_b)
    ids = _matched_ids(dir_a, dir_b)
    if not ids:
        raise EmptyInput("no common sample ids between the two directories")
    masks_dir = Path(args.masks_dir) if args.masks_dir else None
    report = ConsistencyReport(
        meta={
            "dir_a": str(dir_a),
            "dir_b": str(dir_b),
            "crop": "union-support bounding box" if masks_dir else "full frame",
            "seeds": [cfg.seed],
        }
    )
    for sid in ids:
        img1 = load_image(_find_image(dir_a, sid))
        img2 = load_image(_find_image(dir_b, sid))
        m_wr = m_wt = None
        if masks_dir is not None:
            m_wr = load_binary_mask(masks_dir / f"{sid}_wr.png")
            m_wt = load_binary_mask(masks_dir / f"{sid}_wt.png")
        report.add(sid, evaluate_pair(img1, img2, m_wr, m_wt))
        log.info("evaluated %s", sid)
    tags = _read_subset_tags(args.subsets) if args.subsets else None
    report.finalize(tags)
    Path(args.out).write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True))
    log.info("consistency report written to %s", args.out)
    return 0


def _endpoint(cfg: PipelineConfig) -> EvaluatorEndpoint:
    return EvaluatorEndpoint(
        base_url=cfg.mllm.base_url,
        model=cfg.mllm.model,
        auth_env=cfg.mllm.auth_env,
        max_attempts=cfg.mllm.max_attempts,
        backoff_ms=tuple(cfg.mllm.backoff_ms),
    )


def _client(cfg: PipelineConfig) -> ChatVisionClient:
    return ChatVisionClient(
        _endpoint(cfg),
        temperature=cfg.mllm.temperature,
        max_tokens=cfg.mllm.max_tokens,
        siqs_prompt=build_siqs_prompt(cfg.mllm.siqs_prompt_path),
        micqs_prompt=build_micqs_prompt(cfg.mllm.micqs_prompt_path),
    )


def cmd_eval_mllm(cfg: PipelineConfig, args) -> int:
    client = _client(cfg)
    decoding = {
        "model": cfg.mllm.model,
        "temperature": cfg.mllm.temperature,
        "max_tokens": cfg.mllm.max_tokens,
    }
    failures = 0
    if args.mode == "siqs":
        if not args.images:
            log.error("--images is required in siqs mode")
            raise SystemExit(1)
        images = {p.stem: p for p in _discover_images(Path(args.images))}
        if not images:
            raise EmptyInput(f"no images found in {args.images}")
        results = evaluate_siqs_batch(images, client, cfg.mllm.concurrency)
        per_sample = {}
        scores = {}
        for sid in sorted(results):
            outcome = results[sid]
            if isinstance(outcome, dict):
                per_sample[sid] = outcome
                failures += 1
            else:
                per_sample[sid] = {
                    "total": outcome.total,
                    "aspects": outcome.aspect_scores,
                    "partial": outcome.partial,
                    "attempts": outcome.attempts,
                }
                scores[sid] = outcome.total
        summary = {
            "mean_total": float(np.mean(list(scores.values()))) if scores else None,
            "evaluated": len(scores),
            "failures": failures,
        }
        scores_path = Path(args.out).with_suffix(".scores.csv")
        scores_path.write_text(
            "".join(f"{sid},{scores[sid]}\n" for sid in sorted(scores))
        )
    else:
        if not args.dir_a or not args.dir_b:
            log.error("--dir-a and --dir-b are required in micqs mode")
            raise SystemExit(1)
        dir_a, dir_b = Path(args.dir_a), Path(args.dir_b)
        ids = _matched_ids(dir_a, dir_b)
        if not ids:
            raise EmptyInput("no common sample ids between the two directories")
        pairs = {
            sid: (_find_image(dir_a, sid), _find_image(dir_b, sid)) for sid in ids
        }
        results = evaluate_micqs_batch(
            pairs, client, cfg.mllm.concurrency, swap_and_revote=args.swap_and_revote
        )
        per_sample = {}
        for sid in sorted(results):
            outcome = results[sid]
            if isinstance(outcome, MICQSResult):
                per_sample[sid] = {
                    "choice": outcome.choice,
                    "attempts": outcome.attempts,
                }
            elif isinstance(outcome, dict) and "forward" in outcome:
                per_sample[sid] = {
                    "choice": outcome["forward"].choice,
                    "reversed_choice": outcome["reversed"].choice,
                    "agree": outcome["agree"],
                }
            else:
                per_sample[sid] = outcome
                failures += 1
        summary = aggregate_micqs_votes(results)
    report = {"per_sample": per_sample, "summary": summary, "decoding": decoding}
    Path(args.out).write_text(json.dumps(report, indent=2, sort_keys=True))
    log.info("mllm report written to %s", args.out)
    return 3 if failures else 0


def cmd_metric_accuracy(cfg: PipelineConfig, args) -> int:
    result = metric_accuracy(args.machine, args.human)
    Path(args.out).write_text(json.dumps(result, indent=2, sort_keys=True))
    log.info(
        "metric accuracy over %d samples: srcc=%.4f plcc=%.4f",
        result["n"], result["srcc"], result["plcc"],
    )
    return 0


def _build_parser() -> _Parser:
    parser = _Parser(prog="stitchforge", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("--config", help="pipeline config JSON file")
    parser.add_argument("--seed", type=int, help="override the global seed")
    parser.add_argument("--jobs", type=int, help="worker pool size")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("collect-masks", help="harvest the mask-pair distribution")

    p = sub.add_parser("gen-dataset", help="synthesize the training dataset")
    p.add_argument(
        "--variant",
        choices=["standard", "rectangling"],
        default="standard",
        help="rectangling emits union-mask pseudo-fusion samples",
    )
    p.add_argument(
        "--dump-priors",
        action="store_true",
        help="also write the inpainted prior and gradient mask per sample",
    )

    sub.add_parser("assemble-inference", help="package real pairs for inference")

    p = sub.add_parser("composite", help="blend generated halves into stitched images")
    p.add_argument("--generated-dir", required=True)
    p.add_argument("--blend", choices=["hard", "soft"], default="hard")

    p = sub.add_parser("eval-consistency", help="PSNR/SSIM between two result sets")
    p.add_argument("--dir-a", required=True)
    p.add_argument("--dir-b", required=True)
    p.add_argument("--subsets", help="subset csv: one 'id,tag' line per sample")
    p.add_argument("--masks-dir", help="directory of <id>_wr.png / <id>_wt.png masks")
    p.add_argument("--out", default="consistency_report.json")

    p = sub.add_parser("eval-mllm", help="MLLM-based quality scoring")
    p.add_argument("--mode", choices=["siqs", "micqs"], required=True)
    p.add_argument("--images", help="image directory (siqs mode)")
    p.add_argument("--dir-a", help="first result directory (micqs mode)")
    p.add_argument("--dir-b", help="second result directory (micqs mode)")
    p.add_argument("--swap-and-revote", action="store_true")
    p.add_argument("--out", default="mllm_report.json")

    p = sub.add_parser("metric-accuracy", help="SRCC/PLCC against human scores")
    p.add_argument("--machine", required=True, help="id,score file of machine scores")
    p.add_argument("--human", required=True, help="id,score file of human scores")
    p.add_argument("--out", default="metric_accuracy.json")
    return parser


_COMMANDS = {
    "collect-masks": cmd_collect_masks,
    "gen-dataset": cmd_gen_dataset,
    "assemble-inference": cmd_assemble_inference,
    "composite": cmd_composite,
    "eval-consistency": cmd_eval_consistency,
    "eval-mllm": cmd_eval_mllm,
    "metric-accuracy": cmd_metric_accuracy,
}


def main(argv=None) -> int:
    logging.basicConfig(
        stream=sys.stderr, level=logging.INFO, format="%(levelname)s %(message)s"
    )
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)

    cfg = PipelineConfig.load(args.config) if args.config else PipelineConfig()
    if args.seed is not None:
        cfg.seed = args.seed
    if args.jobs is not None:
        cfg.jobs = args.jobs
    try:
        cfg.validate()
    except ValueError as exc:
        log.error("invalid configuration: %s", exc)
        return 1

    try:
        return _COMMANDS[args.command](cfg, args)
    except SystemExit as exc:
        return int(exc.code or 0)
    except (AuthError, TransportError, ExhaustedRetries) as exc:
        log.error("external service failure: %s", exc)
        return 3
    except StitchForgeError as exc:
        log.error("%s", exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
