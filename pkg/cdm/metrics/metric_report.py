"""
MetricReport
Per-case metric rows plus per-modality and averaged aggregates, written as CSV
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, List

import numpy as np
import pandas as pd

from ..exceptions import CDMIOError
from ..models.data_models import TARGET_MODALITIES, MetricRow

logger = logging.getLogger(__name__)

REPORT_COLUMNS = ["case_id", "modality", "psnr", "ssim", "mae"]
AGGREGATE_CASE_ID = "mean"
AVERAGE_MODALITY = "avg"


@dataclass
class MetricReport:
    rows: List[MetricRow] = field(default_factory=list)
    aggregates: List[MetricRow] = field(default_factory=list)
    excluded_psnr: Dict[str, int] = field(default_factory=dict)

    def aggregate(self, label: str = AGGREGATE_CASE_ID,
                  modalities: Iterable[str] = TARGET_MODALITIES) -> List[MetricRow]:
        """Arithmetic means over cases per modality, then over all modalities ('avg')"""
        modalities = list(modalities)
        groups = {m: [r for r in self.rows if r.modality == m] for m in modalities}
        groups[AVERAGE_MODALITY] = [r for r in self.rows if r.modality in modalities]

        aggregates = []
        for modality, rows in groups.items():
            if not rows:
                continue
            finite = [r.psnr for r in rows if math.isfinite(r.psnr)]
            excluded = len(rows) - len(finite)
            if excluded:
                self.excluded_psnr[f"{label}:{modality}"] = excluded
                logger.warning(f"⚠️ {excluded} infinite PSNR values excluded from {label}/{modality}")
            aggregates.append(MetricRow(
                case_id=label,
                modality=modality,
                psnr=float(np.mean(finite)) if finite else math.inf,
                ssim=float(np.mean([r.ssim for r in rows])),
                mae=float(np.mean([r.mae for r in rows])),
            ))
        self.aggregates.extend(aggregates)
        return aggregates

    def get(self, case_id: str, modality: str) -> MetricRow:
        for row in self.rows + self.aggregates:
            if row.case_id == case_id and row.modality == modality:
                return row
        raise KeyError((case_id, modality))

    def to_dataframe(self) -> pd.DataFrame:
        records = [row.model_dump() for row in self.rows + self.aggregates]
        return pd.DataFrame.from_records(records, columns=REPORT_COLUMNS)

    def write_csv(self, path: str) -> str:
        try:
            self.to_dataframe().to_csv(path, index=False)
        except OSError as e:
            raise CDMIOError(f"Cannot write report {path}: {e}") from e
        logger.info(f"📊 Metric report written to {path}")
        return path
