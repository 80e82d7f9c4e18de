"""
Benchmark Service
Per-image sampling cost and test-set quality as a function of the DDIM step count
"""

import logging
import os
import platform
import time
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
import psutil
import torch

from cdm_config.config_loader import get_benchmark_settings

from ..data.normalization import normalize_for_network
from ..exceptions import CDMIOError, CDMValidationError
from ..metrics.metric_report import AGGREGATE_CASE_ID, AVERAGE_MODALITY
from ..models.data_models import BenchRow, Stage, TrainConfig
from ..networks.cunet import cunet_forward
from ..networks.mdn import mdn_sample
from .checkpoint_service import MODEL_BUILDERS, CheckpointBundle
from .evaluation_service import EvaluationService

logger = logging.getLogger(__name__)

BENCH_COLUMNS = list(BenchRow.model_fields)
REFERENCE_STEPS = 30


def host_info() -> Dict[str, object]:
    memory = psutil.virtual_memory()
    return {
        "platform": platform.platform(),
        "logical_cpus": psutil.cpu_count(logical=True),
        "physical_cpus": psutil.cpu_count(logical=False),
        "memory_gb": round(memory.total / 1024 ** 3, 2),
        "torch_threads": torch.get_num_threads(),
    }


def median_seconds(fn: Callable[[], object], repetitions: int, warmup_runs: int = 0) -> float:
    """Median wall time of `fn` over `repetitions` timed calls"""
    for _ in range(warmup_runs):
        fn()
    timings = []
    for _ in range(repetitions):
        start = time.perf_counter()
        fn()
        timings.append(time.perf_counter() - start)
    return float(np.median(timings))


class BenchmarkService:
    """Service class for the sampling-count sweep"""

    def __init__(self, bundle: CheckpointBundle, data_dir: str):
        self.config = bundle.config
        self.evaluation = EvaluationService(bundle, data_dir)
        self.inference = self.evaluation.inference
        self.source = torch.from_numpy(normalize_for_network(self.evaluation.sources()[:1]))

    @torch.no_grad()
    def time_mdn(self, n_sampling: int, repetitions: int, warmup_runs: int) -> float:
        generator = torch.Generator().manual_seed(0)
        return median_seconds(
            lambda: mdn_sample(self.inference.mdn, self.inference.schedule, n_sampling, generator,
                               num_samples=1, latent_dim=self.config.latent_dim),
            repetitions, warmup_runs,
        )

    @torch.no_grad()
    def time_cunet(self, repetitions: int, warmup_runs: int) -> float:
        condition = torch.zeros(1, self.config.latent_dim) if self.config.use_condition else None
        return median_seconds(lambda: cunet_forward(self.inference.cunet, self.source, condition),
                              repetitions, warmup_runs)

    def run(self, n_values: Sequence[int], repetitions: Optional[int] = None,
            seed: int = 0) -> pd.DataFrame:
        if not n_values:
            raise CDMValidationError("n_values must not be empty")
        for n in n_values:
            if not 1 <= n <= self.config.timesteps:
                raise CDMValidationError(f"n_sampling {n} outside [1, {self.config.timesteps}]")
        settings = get_benchmark_settings()
        repetitions = repetitions or int(settings.get("repetitions", 3))
        if repetitions < 1:
            raise CDMValidationError(f"repetitions must be >= 1, got {repetitions}")
        warmup_runs = int(settings.get("warmup_runs", 1))

        logger.info(f"🚀 Benchmarking n_sampling={list(n_values)} x{repetitions} on {host_info()}")
        sources = self.evaluation.sources()[:1]
        cunet_seconds = self.time_cunet(repetitions, warmup_runs)

        rows: List[BenchRow] = []
        for n in n_values:
            seconds = median_seconds(lambda: self.inference.synthesize(sources, seed, n),
                                     repetitions, warmup_runs)
            mdn_seconds = self.time_mdn(n, repetitions, warmup_runs)
            report = self.evaluation.evaluate(seed=seed, n_sampling=n, with_baseline=False)
            avg = report.get(AGGREGATE_CASE_ID, AVERAGE_MODALITY)
            rows.append(BenchRow(
                n_sampling=n,
                seconds_per_image=seconds,
                fps=1.0 / seconds if seconds > 0 else float("inf"),
                psnr_avg=avg.psnr,
                ssim_avg=avg.ssim,
                mae_avg=avg.mae,
                mdn_seconds_per_image=mdn_seconds,
                cunet_seconds_per_pass=cunet_seconds,
                mdn_to_cunet30_ratio=mdn_seconds / (REFERENCE_STEPS * cunet_seconds) if cunet_seconds > 0 else 0.0,
            ))
            logger.info(f"📊 n={n}: {seconds:.4f}s/image PSNR={avg.psnr:.3f}")
        return pd.DataFrame.from_records([r.model_dump() for r in rows], columns=BENCH_COLUMNS)


def benchmark_sampling(bundle: CheckpointBundle, data_dir: str, n_values: Sequence[int],
                       repetitions: Optional[int] = None, seed: int = 0) -> pd.DataFrame:
    return BenchmarkService(bundle, data_dir).run(n_values, repetitions, seed)


def write_bench_csv(table: pd.DataFrame, path: str) -> str:
    try:
        directory = os.path.dirname(path)
        if directory:
            os.makedirs(directory, exist_ok=True)
        table.to_csv(path, index=False)
    except OSError as e:
        raise CDMIOError(f"Cannot write benchmark table {path}: {e}") from e
    logger.info(f"📊 Benchmark table written to {path}")
    return path


def count_parameters(config: TrainConfig) -> pd.DataFrame:
    """Trainable parameter count per component for `config`"""
    mrm = MODEL_BUILDERS[Stage.MRM](config)
    components = {
        "mrm_encoder": mrm.encoder,
        "mrm_decoder": mrm.decoder,
        Stage.MDN.value: MODEL_BUILDERS[Stage.MDN](config),
        Stage.CUNET.value: MODEL_BUILDERS[Stage.CUNET](config),
    }
    records = [{"component": name, "parameters": sum(p.numel() for p in m.parameters() if p.requires_grad)}
               for name, m in components.items()]
    return pd.DataFrame.from_records(records, columns=["component", "parameters"])
