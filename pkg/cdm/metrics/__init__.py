"""
Metrics package
PSNR, SSIM, MAE and the MetricReport table
"""

from .image_metrics import mae, psnr, ssim
from .metric_report import AGGREGATE_CASE_ID, AVERAGE_MODALITY, REPORT_COLUMNS, MetricReport

__all__ = [
    'mae',
    'psnr',
    'ssim',
    'AGGREGATE_CASE_ID',
    'AVERAGE_MODALITY',
    'REPORT_COLUMNS',
    'MetricReport',
]
