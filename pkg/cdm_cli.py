#!/usr/bin/env python3
"""
Cross-conditioned Diffusion Model command line
Generate phantom data, train the three stages, synthesize, evaluate and benchmark
"""

import argparse
import logging
import os
import sys
from typing import List, Optional

import numpy as np
import torch

from cdm.data.case_io import read_case
from cdm.data.dataset import generate_dataset
from cdm.exceptions import CDMError, CDMIOError, CDMValidationError
from cdm.models.data_models import SOURCE_MODALITIES, TARGET_MODALITIES, Stage
from cdm.services.benchmark_service import benchmark_sampling, count_parameters, write_bench_csv
from cdm.services.checkpoint_service import load_bundle, load_or_create_bundle, save_bundle
from cdm.services.evaluation_service import evaluate
from cdm.services.inference_service import synthesize
from cdm.services.training_service import STAGE_RUNNERS
from cdm_config.config_loader import get_output_settings, setup_logging
from cdm_config.run_config import load_run_config

logger = logging.getLogger(__name__)

STAGE_CHOICES = [s.value for s in Stage] + ["all"]


def positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}")
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def int_list(text: str) -> List[int]:
    try:
        values = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    if not values:
        raise argparse.ArgumentTypeError("at least one value is required")
    return values


def write_pgm(image: np.ndarray, path: str, max_value: int = 65535) -> str:
    """Binary 16-bit graymap; samples are big-endian as PGM requires"""
    if not 255 < max_value <= 65535:
        raise CDMValidationError(f"16-bit PGM needs 255 < max_value <= 65535, got {max_value}")
    height, width = image.shape
    samples = np.round(np.clip(image, 0.0, 1.0) * max_value).astype(">u2")
    try:
        with open(path, "wb") as f:
            f.write(f"P5\n{width} {height}\n{max_value}\n".encode("ascii"))
            f.write(samples.tobytes())
    except OSError as e:
        raise CDMIOError(f"Cannot write {path}: {e}") from e
    return path


def write_raw(image: np.ndarray, path: str) -> str:
    """Little-endian float32, row-major, no header"""
    try:
        with open(path, "wb") as f:
            f.write(np.ascontiguousarray(image, dtype="<f4").tobytes())
    except OSError as e:
        raise CDMIOError(f"Cannot write {path}: {e}") from e
    return path


def cmd_gen_data(args) -> str:
    generate_dataset(args.out, args.cases, args.size, args.seed)
    return args.out


def cmd_train(args) -> str:
    config = load_run_config(args.config) if args.config else None
    bundle = load_or_create_bundle(args.checkpoint, config)
    config = bundle.config
    curve_dir = args.curves or os.path.dirname(os.path.abspath(args.checkpoint))

    stages = list(Stage) if args.stage == "all" else [Stage(args.stage)]
    for stage in stages:
        bundle = STAGE_RUNNERS[stage](config, args.data, bundle, curve_dir)
        save_bundle(bundle, args.checkpoint)
    return args.checkpoint


def cmd_synthesize(args) -> str:
    bundle = load_bundle(args.checkpoint)
    record = read_case(args.data, args.case)
    if record.image_size != bundle.config.image_size:
        raise CDMValidationError(
            f"case {args.case} is {record.image_size}px but the bundle expects {bundle.config.image_size}px"
        )
    output = synthesize(bundle, record.stack(SOURCE_MODALITIES), args.seed)

    settings = get_output_settings()
    try:
        os.makedirs(args.out, exist_ok=True)
    except OSError as e:
        raise CDMIOError(f"Cannot create output directory {args.out}: {e}") from e
    for channel, modality in enumerate(TARGET_MODALITIES):
        stem = os.path.join(args.out, f"{args.case}_{modality}")
        write_pgm(output[channel], stem + settings.get("pgm_suffix", ".pgm"),
                  int(settings.get("pgm_max_value", 65535)))
        write_raw(output[channel], stem + settings.get("raw_suffix", ".f32"))
    logger.info(f"✅ Synthesized {', '.join(TARGET_MODALITIES)} for {args.case} into {args.out}")
    return args.out


def cmd_evaluate(args) -> str:
    bundle = load_bundle(args.checkpoint)
    evaluate(bundle, args.data, seed=args.seed, report_path=args.report)
    return args.report


def cmd_bench(args) -> str:
    bundle = load_bundle(args.checkpoint)
    table = benchmark_sampling(bundle, args.data, args.n, repetitions=args.repetitions, seed=args.seed)
    return write_bench_csv(table, args.report)


def cmd_params(args) -> str:
    config = load_bundle(args.checkpoint).config if args.checkpoint else load_run_config(args.config)
    table = count_parameters(config)
    if not args.report:
        return table.to_csv(index=False).rstrip()
    try:
        table.to_csv(args.report, index=False)
    except OSError as e:
        raise CDMIOError(f"Cannot write parameter report {args.report}: {e}") from e
    logger.info(f"📊 Parameters: {dict(zip(table['component'], table['parameters']))}")
    return args.report


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Cross-conditioned Diffusion Model for MRI modality synthesis")
    parser.add_argument("--log-level", choices=["DEBUG", "INFO", "WARNING", "ERROR"],
                        help="Override the logging level from config.json")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen-data", help="Generate a synthetic phantom dataset")
    gen.add_argument("--out", required=True, help="Output directory")
    gen.add_argument("--cases", type=positive_int, required=True, help="Number of cases (>= 2)")
    gen.add_argument("--size", type=positive_int, default=64, help="Image side length (default: 64)")
    gen.add_argument("--seed", type=int, default=0, help="Dataset seed (default: 0)")
    gen.set_defaults(func=cmd_gen_data)

    train = sub.add_parser("train", help="Run one or all training stages")
    train.add_argument("--config", help="Run configuration file (optional when the checkpoint exists)")
    train.add_argument("--stage", choices=STAGE_CHOICES, required=True)
    train.add_argument("--data", required=True, help="Dataset directory")
    train.add_argument("--checkpoint", required=True, help="Checkpoint file, created or updated")
    train.add_argument("--curves", help="Loss curve directory (default: next to the checkpoint)")
    train.set_defaults(func=cmd_train)

    synth = sub.add_parser("synthesize", help="Synthesize T1c/T2f for one case")
    synth.add_argument("--checkpoint", required=True)
    synth.add_argument("--data", required=True)
    synth.add_argument("--case", required=True, help="Case id")
    synth.add_argument("--seed", type=int, default=0)
    synth.add_argument("--out", required=True, help="Output directory")
    synth.set_defaults(func=cmd_synthesize)

    ev = sub.add_parser("evaluate", help="Score the test split")
    ev.add_argument("--checkpoint", required=True)
    ev.add_argument("--data", required=True)
    ev.add_argument("--report", required=True, help="CSV report path")
    ev.add_argument("--seed", type=int, default=0)
    ev.set_defaults(func=cmd_evaluate)

    bench = sub.add_parser("bench", help="Sampling-count benchmark")
    bench.add_argument("--checkpoint", required=True)
    bench.add_argument("--data", required=True)
    bench.add_argument("--n", type=int_list, default=[10, 20, 30, 40],
                       help="Comma-separated sampling counts (default: 10,20,30,40)")
    bench.add_argument("--report", required=True, help="CSV report path")
    bench.add_argument("--repetitions", type=positive_int, help="Timed repetitions (default from config.json)")
    bench.add_argument("--seed", type=int, default=0)
    bench.set_defaults(func=cmd_bench)

    params = sub.add_parser("params", help="Parameter count per component")
    source = params.add_mutually_exclusive_group(required=True)
    source.add_argument("--checkpoint")
    source.add_argument("--config")
    params.add_argument("--report", help="CSV report path (default: print the table)")
    params.set_defaults(func=cmd_params)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "gen-data" and args.cases < 2:
        parser.error("--cases must be at least 2 to form a train/test split")

    setup_logging(args.log_level)
    torch.use_deterministic_algorithms(True)

    try:
        result = args.func(args)
    except CDMError as e:
        logger.error(f"❌ {e}")
        return e.exit_code
    except OSError as e:
        logger.error(f"❌ {e}")
        return 1
    print(result)
    return 0


if __name__ == "__main__":
    sys.exit(main())
