"""IEPG CLI.

Entry point for the ``iepg`` command-line tool.

Usage:
    iepg dataset --out DIR [--persons N] [--yaw-step DEG] [--size PX] [--seed S]
    iepg train {gec,pis} --dataset DIR --out DIR [--config JSON] [--gec CKPT]
                         [--steps N] [--variant S|B|L] [--increments N]
    iepg infer --dataset DIR --fusion CKPT [--gec CKPT] --person P --source I
               (--target-yaw DEG | --target-skeleton JSON) --out DIR
    iepg ablate --arm {increments,removal,knockouts,variants} --dataset DIR --out DIR
    iepg eval --dataset DIR --fusion CKPT [--gec CKPT] --out REPORT.json
              [--pairs exhaustive | --pairs sampled N]

Exit codes: 0 success, 1 other library error, 2 usage or configuration error,
3 I/O or checkpoint error, 4 training diverged.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

from .core.canon import canon_json
from .errors import (
    CheckpointError,
    ConfigurationError,
    ContractError,
    IepgError,
    TrainingDivergedError,
)
from .evaluation.ablation import ARMS, ablation_table, run_ablation
from .evaluation.report import eval_report, format_table
from .models.fusion import synthesize_full
from .models.gec import GecModel
from .pose.dataset import Dataset, gen_dataset, load_dataset, write_dataset
from .pose.pixmap import colorize_semantics, overlay_skeleton, write_ppm
from .pose.skeleton import PoseSkeleton, skeleton_at_yaw
from .training.config import RunConfig
from .training.pairs import FramePair, enumerate_pairs
from .training.trainer import (
    evaluate_gec,
    load_fusion,
    load_gec,
    source_bundle,
    train_gec,
    train_pis,
)
from .version import IEPG_VERSION

logger = logging.getLogger("iepg")

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_DIVERGED = 4

# Held-out pairs scored after GEC training
GEC_EVAL_PAIRS = 200

# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------


def _run_config(args: argparse.Namespace) -> RunConfig:
    """Config file (if any), then explicit flags, then IEPG_SEED."""
    if getattr(args, "config", None):
        cfg = RunConfig.from_json(args.config)
    else:
        cfg = RunConfig()
    overrides = {}
    for flag, key in (
        ("dataset", "dataset"),
        ("out", "output_dir"),
        ("variant", "variant"),
        ("increments", "n_increments"),
        ("seed", "seed"),
    ):
        value = getattr(args, flag, None)
        if value is not None:
            overrides[key] = value
    if getattr(args, "teacher_frames", False):
        overrides["teacher_frames"] = True
    return cfg.replace(**overrides).with_env()


def _existing(path: str, key: str) -> str:
    if not Path(path).exists():
        raise ConfigurationError(f"{path} does not exist", key=key)
    return path


def _dataset(path: Optional[str]) -> Dataset:
    if not path:
        raise ConfigurationError("a dataset directory is required", key="dataset")
    return load_dataset(_existing(path, "dataset"))


def _optional_gec(path: Optional[str]) -> Optional[GecModel]:
    return load_gec(_existing(path, "gec")) if path else None


def _pairs(args: argparse.Namespace, dataset: Dataset, seed: int) -> List[FramePair]:
    spec = args.pairs or ["exhaustive"]
    mode = spec[0]
    n = None
    if mode == "sampled":
        if len(spec) != 2 or not spec[1].isdigit():
            raise ConfigurationError("use --pairs sampled N", key="pairs")
        n = int(spec[1])
    elif len(spec) != 1:
        raise ConfigurationError("use --pairs exhaustive", key="pairs")
    return enumerate_pairs(
        dataset,
        dataset.test_ids,
        mode=mode,
        n=n,
        seed=seed,
        include_identity=getattr(args, "include_identity", False),
    )


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def _cmd_dataset(args: argparse.Namespace) -> int:
    dataset = gen_dataset(
        n_persons=args.persons,
        yaw_step=args.yaw_step,
        image_size=args.size,
        seed=args.seed,
    )
    write_dataset(dataset, args.out)
    print(f"{len(dataset)} frames, digest {dataset.digest()}")
    return EXIT_OK


def _cmd_train(args: argparse.Namespace) -> int:
    cfg = _run_config(args)
    dataset = _dataset(cfg.dataset)
    out = Path(cfg.output_dir)
    if args.stage == "gec":
        result = train_gec(dataset, cfg, out, steps=args.steps)
        pairs = enumerate_pairs(
            dataset, dataset.test_ids, "sampled", n=GEC_EVAL_PAIRS, seed=cfg.seed
        )
        scores = evaluate_gec(result.model, dataset, pairs, cfg.n_increments)
        print(
            f"held-out pose {scores['pose']:.5f}"
            f" endpoint {scores['endpoint']:.5f}"
            f" monotone {scores['monotone']:.3f}"
        )
    else:
        needs_gec = cfg.n_increments > 0 and not cfg.teacher_frames
        if needs_gec and not args.gec:
            raise ConfigurationError(
                "train pis needs --gec CKPT for increments", key="gec"
            )
        gec = _optional_gec(args.gec)
        result = train_pis(dataset, gec, cfg, out, steps=args.steps)
    print(f"{result.stage}: {result.steps} steps, checkpoint {result.checkpoint}")
    print(f"loss log {result.loss_log}")
    return EXIT_OK


def _cmd_infer(args: argparse.Namespace) -> int:
    dataset = _dataset(args.dataset)
    try:
        src_frame = dataset.frames[(args.person, args.source)]
    except KeyError:
        raise ConfigurationError(
            f"no frame for person {args.person} at yaw index {args.source}",
            key="source",
        ) from None
    if args.target_skeleton:
        raw = json.loads(Path(args.target_skeleton).read_text())
        target = PoseSkeleton.from_dict(raw)
    else:
        target = skeleton_at_yaw(dataset.person(args.person), args.target_yaw % 360.0)

    model = load_fusion(_existing(args.fusion, "fusion"))
    gec = _optional_gec(args.gec)
    if args.increments > 0 and gec is None:
        raise ConfigurationError("--increments > 0 needs --gec CKPT", key="gec")
    _, sequence = synthesize_full(
        model,
        gec,
        source_bundle(src_frame),
        src_frame.skeleton,
        target,
        args.increments,
        remove=args.remove,
    )

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for t, frame in enumerate(sequence.generated, 1):
        image = frame.image.data
        stem = f"frame_{t:02d}"
        write_ppm(out / f"{stem}.ppm", image)
        write_ppm(out / f"{stem}_skeleton.ppm", overlay_skeleton(image, frame.skeleton))
        write_ppm(out / f"{stem}_semantics.ppm", colorize_semantics(frame.semantics))
        written.append(stem)
    manifest = {
        "iepg_version": IEPG_VERSION,
        "person": args.person,
        "source": args.source,
        "increments": args.increments,
        "remove": args.remove,
        "frames": written,
        "final": written[-1],
        "target_skeleton": target.to_dict(),
    }
    (out / "manifest.json").write_text(canon_json(manifest) + "\n")
    logger.info("wrote %d iterations to %s", len(written), out)
    print(f"{len(written)} iteration(s), final {out / (written[-1] + '.ppm')}")
    return EXIT_OK


def _cmd_ablate(args: argparse.Namespace) -> int:
    cfg = _run_config(args)
    dataset = _dataset(cfg.dataset)
    pairs = _pairs(args, dataset, cfg.seed)
    gec = _optional_gec(args.gec)
    reports = run_ablation(args.arm, dataset, cfg, cfg.output_dir, pairs=pairs, gec=gec)
    print(ablation_table(args.arm, reports))
    return EXIT_OK


def _cmd_eval(args: argparse.Namespace) -> int:
    dataset = _dataset(args.dataset)
    model = load_fusion(_existing(args.fusion, "fusion"))
    gec = _optional_gec(args.gec)
    if args.increments > 0 and gec is None:
        raise ConfigurationError("--increments > 0 needs --gec CKPT", key="gec")
    pairs = _pairs(args, dataset, args.seed)
    report = eval_report(
        model,
        gec,
        dataset,
        n_increments=args.increments,
        pairs=pairs,
        seed=args.seed,
        label="eval",
    )
    report.write_json(args.out)
    print(format_table([report]))
    return EXIT_OK


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON run config (unknown keys are rejected)")
    p.add_argument("--dataset", help="Dataset directory (overrides the config)")
    p.add_argument("--out", help="Output directory (overrides the config)")
    p.add_argument("--variant", choices=["S", "B", "L"], help="Fusion depth variant")
    p.add_argument("--increments", type=int, help="Evolution increments (default: 5)")
    p.add_argument("--seed", type=int, help="Seed (IEPG_SEED still wins)")


def _add_pairs_flag(p: argparse.ArgumentParser) -> None:
    p.add_argument(
        "--pairs",
        nargs="+",
        metavar="MODE",
        help="'exhaustive' (default) or 'sampled N'",
    )
    p.add_argument(
        "--include-identity",
        action="store_true",
        help="Also score pairs whose source and target yaw coincide",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="iepg",
        description="IEPG: incremental-evolution pose generation on turning figures",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="Debug logging")
    parser.add_argument("--version", action="version", version=f"iepg {IEPG_VERSION}")
    subparsers = parser.add_subparsers(dest="command")

    p = subparsers.add_parser("dataset", help="Generate the turning-figure dataset")
    p.add_argument("--out", required=True, help="Output directory")
    p.add_argument("--persons", type=int, default=28, help="Persons (default: 28)")
    p.add_argument(
        "--yaw-step", type=float, default=15.0, help="Yaw step in degrees (default: 15)"
    )
    p.add_argument(
        "--size", type=int, default=64, help="Image size in pixels (default: 64)"
    )
    p.add_argument("--seed", type=int, default=0, help="Seed (default: 0)")
    p.set_defaults(func=_cmd_dataset)

    p = subparsers.add_parser("train", help="Train one stage")
    p.add_argument("stage", choices=["gec", "pis"], help="Stage to train")
    _add_run_flags(p)
    p.add_argument("--gec", help="GEC checkpoint (required by pis with increments)")
    p.add_argument("--steps", type=int, help="Override the stage's step count")
    p.add_argument(
        "--teacher-frames",
        action="store_true",
        help="pis: guide with ground-truth intermediates instead of the GEC",
    )
    p.set_defaults(func=_cmd_train)

    p = subparsers.add_parser(
        "infer", help="Synthesize one evolution and its by-products"
    )
    p.add_argument("--dataset", required=True, help="Dataset directory")
    p.add_argument("--fusion", required=True, help="pis checkpoint")
    p.add_argument("--gec", help="gec checkpoint")
    p.add_argument("--person", type=int, required=True, help="Person id")
    p.add_argument("--source", type=int, required=True, help="Source yaw index")
    target = p.add_mutually_exclusive_group(required=True)
    target.add_argument("--target-yaw", type=float, help="Target yaw in degrees")
    target.add_argument("--target-skeleton", help="Target skeleton JSON file")
    p.add_argument("--increments", type=int, default=5, help="Increments (default: 5)")
    p.add_argument("--remove", type=int, default=0, help="Interior guides to drop")
    p.add_argument("--out", required=True, help="Output directory")
    p.set_defaults(func=_cmd_infer)

    p = subparsers.add_parser("ablate", help="Run an ablation arm")
    p.add_argument("--arm", required=True, help=f"One of: {', '.join(ARMS)}")
    _add_run_flags(p)
    p.add_argument("--gec", help="Reuse a trained GEC instead of training one")
    _add_pairs_flag(p)
    p.set_defaults(func=_cmd_ablate)

    p = subparsers.add_parser("eval", help="Score a trained model on the test split")
    p.add_argument("--dataset", required=True, help="Dataset directory")
    p.add_argument("--fusion", required=True, help="pis checkpoint")
    p.add_argument("--gec", help="gec checkpoint")
    p.add_argument("--increments", type=int, default=5, help="Increments (default: 5)")
    p.add_argument(
        "--seed", type=int, default=0, help="Seed for sampled pairs (default: 0)"
    )
    p.add_argument("--out", required=True, help="Report JSON path")
    _add_pairs_flag(p)
    p.set_defaults(func=_cmd_eval)
    return parser


def _exit_code(exc: BaseException) -> int:
    if isinstance(exc, (ConfigurationError, ContractError)):
        return EXIT_USAGE
    if isinstance(exc, (CheckpointError, OSError)):
        return EXIT_IO
    if isinstance(exc, TrainingDivergedError):
        return EXIT_DIVERGED
    return EXIT_ERROR


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    if not hasattr(args, "func"):
        parser.print_help()
        return EXIT_USAGE
    try:
        return args.func(args)
    except (IepgError, OSError) as exc:
        print(f"Error: {exc}", file=sys.stderr)
        return _exit_code(exc)


if __name__ == "__main__":
    sys.exit(main())
