"""
Evaluation Service
Synthesizes the test split and scores it against ground truth, next to an identity baseline
"""

import logging
from typing import Optional, Sequence

import numpy as np

from ..data.dataset import CaseDataset
from ..exceptions import CDMValidationError
from ..metrics.image_metrics import mae, psnr, ssim
from ..metrics.metric_report import AGGREGATE_CASE_ID, AVERAGE_MODALITY, MetricReport
from ..models.data_models import SOURCE_MODALITIES, TARGET_MODALITIES, MetricRow, SplitTag
from .checkpoint_service import CheckpointBundle
from .inference_service import InferenceService

logger = logging.getLogger(__name__)

BASELINE_CASE_ID = "baseline_mean"


def score_predictions(case_ids: Sequence[str], predictions: np.ndarray, targets: np.ndarray) -> MetricReport:
    """Per-case, per-target-modality PSNR/SSIM/MAE; arrays are (N, 2, H, W) in [0,1]"""
    predictions = np.asarray(predictions, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if predictions.shape != targets.shape or predictions.shape[:2] != (len(case_ids), len(TARGET_MODALITIES)):
        raise CDMValidationError(
            f"predictions {predictions.shape} and targets {targets.shape} do not match "
            f"{len(case_ids)} cases x {len(TARGET_MODALITIES)} modalities"
        )
    report = MetricReport()
    for i, case_id in enumerate(case_ids):
        for c, modality in enumerate(TARGET_MODALITIES):
            pred, gt = predictions[i, c], targets[i, c]
            report.rows.append(MetricRow(case_id=case_id, modality=modality,
                                         psnr=psnr(pred, gt), ssim=ssim(pred, gt), mae=mae(pred, gt)))
    return report


class EvaluationService:
    """Service class for held-out evaluation of a complete bundle"""

    def __init__(self, bundle: CheckpointBundle, data_dir: str):
        self.inference = InferenceService(bundle)
        self.dataset = CaseDataset.from_split(data_dir, SplitTag.TEST)
        if self.dataset.image_size != bundle.config.image_size:
            raise CDMValidationError(
                f"test cases are {self.dataset.image_size}px but the bundle was trained at "
                f"{bundle.config.image_size}px"
            )

    def sources(self) -> np.ndarray:
        return np.stack([r.stack(SOURCE_MODALITIES) for r in self.dataset.records])

    def targets(self) -> np.ndarray:
        return np.stack([r.stack(TARGET_MODALITIES) for r in self.dataset.records])

    def evaluate(self, seed: int = 0, n_sampling: Optional[int] = None,
                 with_baseline: bool = True) -> MetricReport:
        case_ids = self.dataset.case_ids
        logger.info(f"🚀 Evaluating {len(case_ids)} test cases")
        sources, targets = self.sources(), self.targets()
        predictions = self.inference.synthesize(sources, seed, n_sampling)

        report = score_predictions(case_ids, predictions, targets)
        report.aggregate()
        if with_baseline:
            # identity baseline: T1 stands in for T1c, T2 for T2f
            baseline = score_predictions(case_ids, sources, targets)
            report.aggregates.extend(baseline.aggregate(label=BASELINE_CASE_ID))
            report.excluded_psnr.update(baseline.excluded_psnr)

        avg = report.get(AGGREGATE_CASE_ID, AVERAGE_MODALITY)
        logger.info(f"✅ Evaluation done: PSNR={avg.psnr:.3f} SSIM={avg.ssim:.4f} MAE={avg.mae:.4f}")
        return report


def evaluate(bundle: CheckpointBundle, data_dir: str, seed: int = 0,
             n_sampling: Optional[int] = None, report_path: Optional[str] = None) -> MetricReport:
    report = EvaluationService(bundle, data_dir).evaluate(seed=seed, n_sampling=n_sampling)
    if report_path:
        report.write_csv(report_path)
    return report
