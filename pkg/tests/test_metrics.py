import math

import numpy as np
import pandas as pd
import pytest

from cdm.exceptions import CDMValidationError
from cdm.metrics import AGGREGATE_CASE_ID, AVERAGE_MODALITY, REPORT_COLUMNS, MetricReport, mae, psnr, ssim
from cdm.models.data_models import MetricRow


def naive_psnr(a, b):
    total = 0.0
    for x, y in zip(a.ravel(), b.ravel()):
        total += (float(x) - float(y)) ** 2
    return 10.0 * math.log10(1.0 / (total / a.size))


def naive_mae(a, b):
    return sum(abs(float(x) - float(y)) for x, y in zip(a.ravel(), b.ravel())) / a.size


def naive_ssim(a, b, radius=5, sigma=1.5):
    offsets = np.arange(-radius, radius + 1)
    g = np.exp(-0.5 * (offsets / sigma) ** 2)
    g /= g.sum()
    window = np.outer(g, g)
    c1, c2 = (0.01 * 1.0) ** 2, (0.03 * 1.0) ** 2
    values = []
    for i in range(radius, a.shape[0] - radius):
        for j in range(radius, a.shape[1] - radius):
            pa = a[i - radius:i + radius + 1, j - radius:j + radius + 1]
            pb = b[i - radius:i + radius + 1, j - radius:j + radius + 1]
            ua, ub = (window * pa).sum(), (window * pb).sum()
            va = (window * pa * pa).sum() - ua * ua
            vb = (window * pb * pb).sum() - ub * ub
            cov = (window * pa * pb).sum() - ua * ub
            values.append(((2 * ua * ub + c1) * (2 * cov + c2)) / ((ua ** 2 + ub ** 2 + c1) * (va + vb + c2)))
    return float(np.mean(values))


@pytest.fixture
def pairs():
    rng = np.random.default_rng(0)
    result = []
    for _ in range(100):
        a = rng.random((16, 16))
        b = np.clip(a + rng.normal(0.0, 0.1, size=a.shape), 0.0, 1.0)
        result.append((a, b))
    return result


def test_psnr_matches_naive(pairs):
    for a, b in pairs:
        assert psnr(a, b) == pytest.approx(naive_psnr(a, b), abs=1e-9)


def test_mae_matches_naive(pairs):
    for a, b in pairs:
        assert mae(a, b) == pytest.approx(naive_mae(a, b), abs=1e-12)


def test_ssim_matches_naive(pairs):
    for a, b in pairs:
        assert ssim(a, b) == pytest.approx(naive_ssim(a, b), abs=1e-7)


def test_analytic_values():
    a = np.zeros((16, 16))
    assert psnr(a, a + 0.1) == pytest.approx(20.0, abs=1e-9)
    assert psnr(a, a) == math.inf
    assert mae(a + 0.25, a + 0.75) == 0.5
    image = np.random.default_rng(1).random((16, 16))
    assert ssim(image, image) == pytest.approx(1.0, abs=1e-12)


def test_ssim_of_opposite_constants():
    c1 = (0.01 * 1.0) ** 2
    assert ssim(np.zeros((16, 16)), np.ones((16, 16))) == pytest.approx(c1 / (1.0 + c1), abs=1e-9)


def test_ssim_is_nearly_shift_invariant_for_matched_pairs():
    rng = np.random.default_rng(4)
    a = rng.uniform(0.1, 0.6, size=(32, 32))
    b = a + rng.normal(0.0, 0.001, size=a.shape)
    assert ssim(a + 0.3, b + 0.3) == pytest.approx(ssim(a, b), abs=1e-6)


def test_psnr_falls_as_noise_grows():
    rng = np.random.default_rng(5)
    a = rng.uniform(0.2, 0.8, size=(16, 16))
    noise = rng.normal(0.0, 1.0, size=a.shape)
    values = [psnr(a, a + sigma * noise) for sigma in (0.01, 0.05, 0.1)]
    assert values[0] > values[1] > values[2]


def test_metrics_are_symmetric(pairs):
    for a, b in pairs[:20]:
        assert psnr(a, b) == pytest.approx(psnr(b, a), abs=1e-12)
        assert ssim(a, b) == pytest.approx(ssim(b, a), abs=1e-12)
        assert mae(a, b) == pytest.approx(mae(b, a), abs=1e-15)


def test_metric_input_validation():
    with pytest.raises(CDMValidationError):
        psnr(np.zeros((4, 4)), np.zeros((4, 5)))
    with pytest.raises(CDMValidationError):
        ssim(np.zeros((8, 8)), np.zeros((8, 8)))
    with pytest.raises(CDMValidationError):
        ssim(np.zeros((2, 16, 16)), np.zeros((2, 16, 16)))
    with pytest.raises(CDMValidationError):
        psnr(np.zeros(3), np.zeros(3), max_value=0.0)


def make_report():
    report = MetricReport()
    rng = np.random.default_rng(2)
    for case in ("c1", "c2", "c3"):
        for modality in ("T1c", "T2f"):
            report.rows.append(MetricRow(case_id=case, modality=modality, psnr=float(rng.uniform(20, 35)),
                                         ssim=float(rng.uniform(0.5, 1.0)), mae=float(rng.uniform(0, 0.1))))
    return report


def test_aggregates_are_means_of_rows():
    report = make_report()
    report.aggregate()
    assert len(report.to_dataframe()) == 3 * 2 + 3
    for modality in ("T1c", "T2f"):
        rows = [r for r in report.rows if r.modality == modality]
        agg = report.get(AGGREGATE_CASE_ID, modality)
        assert abs(agg.psnr - sum(r.psnr for r in rows) / 3) <= 1e-9
        assert abs(agg.ssim - sum(r.ssim for r in rows) / 3) <= 1e-9
        assert abs(agg.mae - sum(r.mae for r in rows) / 3) <= 1e-9
    avg = report.get(AGGREGATE_CASE_ID, AVERAGE_MODALITY)
    assert abs(avg.psnr - sum(r.psnr for r in report.rows) / 6) <= 1e-9


def test_infinite_psnr_excluded_from_aggregate():
    report = MetricReport(rows=[
        MetricRow(case_id="a", modality="T1c", psnr=math.inf, ssim=1.0, mae=0.0),
        MetricRow(case_id="b", modality="T1c", psnr=30.0, ssim=0.9, mae=0.01),
    ])
    report.aggregate()
    assert report.get(AGGREGATE_CASE_ID, "T1c").psnr == 30.0
    assert report.excluded_psnr == {"mean:T1c": 1, "mean:avg": 1}


def test_csv_output(tmp_path):
    report = make_report()
    report.aggregate()
    path = report.write_csv(str(tmp_path / "report.csv"))
    frame = pd.read_csv(path)
    assert list(frame.columns) == REPORT_COLUMNS
    assert len(frame) == 9
    expected = report.get(AGGREGATE_CASE_ID, AVERAGE_MODALITY).psnr
    assert abs(frame[frame.case_id == AGGREGATE_CASE_ID].psnr.iloc[-1] - expected) <= 1e-9
