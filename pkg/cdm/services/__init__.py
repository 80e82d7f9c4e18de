"""
Services package
Checkpointing, staged training, inference, evaluation and benchmarking
"""

from .benchmark_service import BenchmarkService, benchmark_sampling, count_parameters, write_bench_csv
from .checkpoint_service import CheckpointBundle, load_bundle, load_or_create_bundle, save_bundle
from .evaluation_service import BASELINE_CASE_ID, EvaluationService, evaluate, score_predictions
from .inference_service import InferenceService, synthesize
from .training_service import (
    STAGE_RUNNERS,
    TrainingService,
    run_all_stages,
    run_stage_cunet,
    run_stage_mdn,
    run_stage_mrm,
)

__all__ = [
    'BenchmarkService',
    'benchmark_sampling',
    'count_parameters',
    'write_bench_csv',
    'CheckpointBundle',
    'load_bundle',
    'load_or_create_bundle',
    'save_bundle',
    'BASELINE_CASE_ID',
    'EvaluationService',
    'evaluate',
    'score_predictions',
    'InferenceService',
    'synthesize',
    'STAGE_RUNNERS',
    'TrainingService',
    'run_all_stages',
    'run_stage_cunet',
    'run_stage_mdn',
    'run_stage_mrm',
]
