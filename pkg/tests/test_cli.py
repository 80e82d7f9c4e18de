import os

import numpy as np
import pandas as pd
import pytest

import cdm_cli
from cdm.data.manifest import read_manifest, write_manifest
from cdm.models.data_models import ManifestEntry, SplitTag
from cdm_config.run_config import save_run_config


@pytest.fixture
def run_config_file(tiny_config, tmp_path):
    path = str(tmp_path / "run.cfg")
    save_run_config(tiny_config, path)
    return path


@pytest.fixture
def checkpoint(tmp_path, tiny_dataset, run_config_file):
    path = str(tmp_path / "ckpt" / "model.cdmb")
    assert cdm_cli.main(["train", "--config", run_config_file, "--stage", "all",
                         "--data", tiny_dataset, "--checkpoint", path]) == 0
    return path


def test_gen_data_writes_cases_and_split(tmp_path, capsys):
    out = str(tmp_path / "data")
    assert cdm_cli.main(["gen-data", "--out", out, "--cases", "10", "--size", "16", "--seed", "3"]) == 0
    assert capsys.readouterr().out.strip() == out
    manifest = read_manifest(out)
    assert len(manifest.ids_for(SplitTag.TRAIN)) == 7
    assert len(manifest.ids_for(SplitTag.TEST)) == 3
    assert len([n for n in os.listdir(out) if n.endswith(".cdmc")]) == 10


def test_gen_data_too_small_image_is_validation_error(tmp_path):
    code = cdm_cli.main(["gen-data", "--out", str(tmp_path / "data"), "--cases", "4", "--size", "8"])
    assert code == 2


def test_gen_data_is_reproducible(tmp_path):
    for name in ("a", "b"):
        assert cdm_cli.main(["gen-data", "--out", str(tmp_path / name), "--cases", "4", "--size", "16"]) == 0
    for name in os.listdir(tmp_path / "a"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


@pytest.mark.parametrize("cases", ["0", "1", "-3", "many"])
def test_gen_data_bad_case_count_is_usage_error(tmp_path, cases, capsys):
    with pytest.raises(SystemExit) as info:
        cdm_cli.main(["gen-data", "--out", str(tmp_path), "--cases", cases])
    assert info.value.code == 2
    assert "usage" in capsys.readouterr().err


def test_train_mdn_on_fresh_checkpoint_is_order_error(tmp_path, tiny_dataset, run_config_file):
    code = cdm_cli.main(["train", "--config", run_config_file, "--stage", "mdn",
                         "--data", tiny_dataset, "--checkpoint", str(tmp_path / "fresh.cdmb")])
    assert code == 3


def test_malformed_config_names_the_line(tmp_path, tiny_dataset, capsys):
    config = tmp_path / "bad.cfg"
    config.write_text("seed=1\nthis line is wrong\n")
    code = cdm_cli.main(["train", "--config", str(config), "--stage", "mrm",
                         "--data", tiny_dataset, "--checkpoint", str(tmp_path / "x.cdmb")])
    assert code == 2
    assert "line 2" in capsys.readouterr().err


def test_missing_dataset_is_io_error(tmp_path, run_config_file):
    code = cdm_cli.main(["train", "--config", run_config_file, "--stage", "mrm",
                         "--data", str(tmp_path / "nowhere"), "--checkpoint", str(tmp_path / "x.cdmb")])
    assert code == 1


def test_train_all_is_idempotent(checkpoint, tiny_dataset, run_config_file, tmp_path, capsys):
    first = open(checkpoint, "rb").read()
    capsys.readouterr()
    assert cdm_cli.main(["train", "--config", run_config_file, "--stage", "all",
                         "--data", tiny_dataset, "--checkpoint", checkpoint]) == 0
    assert capsys.readouterr().out.strip() == checkpoint
    assert open(checkpoint, "rb").read() == first
    assert os.path.exists(os.path.join(os.path.dirname(checkpoint), "cunet_loss.csv"))


def test_synthesize_writes_pgm_and_raw(checkpoint, tiny_dataset, tmp_path):
    case_id = read_manifest(tiny_dataset).ids_for(SplitTag.TEST)[0]
    outputs = []
    for name in ("one", "two"):
        out = str(tmp_path / name)
        assert cdm_cli.main(["synthesize", "--checkpoint", checkpoint, "--data", tiny_dataset,
                             "--case", case_id, "--seed", "5", "--out", out]) == 0
        outputs.append(out)

    names = sorted(os.listdir(outputs[0]))
    assert names == sorted(f"{case_id}_{m}{ext}" for m in ("T1c", "T2f") for ext in (".pgm", ".f32"))
    pgm = open(os.path.join(outputs[0], f"{case_id}_T1c.pgm"), "rb").read()
    header = b"P5\n16 16\n65535\n"
    assert pgm.startswith(header) and len(pgm) == len(header) + 16 * 16 * 2
    for modality in ("T1c", "T2f"):
        raw = [open(os.path.join(out, f"{case_id}_{modality}.f32"), "rb").read() for out in outputs]
        assert raw[0] == raw[1]
        values = np.frombuffer(raw[0], dtype="<f4")
        assert values.size == 256 and values.min() >= 0.0 and values.max() <= 1.0


def test_synthesize_unknown_case(checkpoint, tiny_dataset, tmp_path):
    code = cdm_cli.main(["synthesize", "--checkpoint", checkpoint, "--data", tiny_dataset,
                         "--case", "no_such_case", "--out", str(tmp_path / "o")])
    assert code == 2


def test_evaluate_writes_report(checkpoint, tiny_dataset, tmp_path, capsys):
    report = str(tmp_path / "eval.csv")
    capsys.readouterr()
    assert cdm_cli.main(["evaluate", "--checkpoint", checkpoint, "--data", tiny_dataset, "--report", report]) == 0
    assert capsys.readouterr().out.strip() == report
    assert list(pd.read_csv(report).columns) == ["case_id", "modality", "psnr", "ssim", "mae"]


def test_evaluate_empty_test_split(checkpoint, tiny_dataset, tmp_path):
    manifest = read_manifest(tiny_dataset)
    write_manifest(manifest.model_copy(update={"cases": [
        ManifestEntry(case_id=c.case_id, split=SplitTag.TRAIN) for c in manifest.cases
    ]}), tiny_dataset)
    code = cdm_cli.main(["evaluate", "--checkpoint", checkpoint, "--data", tiny_dataset,
                         "--report", str(tmp_path / "r.csv")])
    assert code == 2


def test_evaluate_on_corrupt_checkpoint(tmp_path, tiny_dataset):
    path = tmp_path / "broken.cdmb"
    path.write_bytes(b"CDMB\x01\x00garbage")
    code = cdm_cli.main(["evaluate", "--checkpoint", str(path), "--data", tiny_dataset,
                         "--report", str(tmp_path / "r.csv")])
    assert code == 1


def test_bench_single_row(checkpoint, tiny_dataset, tmp_path):
    report = str(tmp_path / "bench.csv")
    assert cdm_cli.main(["bench", "--checkpoint", checkpoint, "--data", tiny_dataset,
                         "--n", "3", "--repetitions", "1", "--report", report]) == 0
    frame = pd.read_csv(report)
    assert len(frame) == 1
    assert list(frame.columns[:4]) == ["n_sampling", "seconds_per_image", "fps", "psnr_avg"]
    assert "mdn_to_cunet30_ratio" in frame.columns


def test_bench_bad_n_list(checkpoint, tiny_dataset, tmp_path):
    with pytest.raises(SystemExit) as info:
        cdm_cli.main(["bench", "--checkpoint", checkpoint, "--data", tiny_dataset,
                      "--n", "ten", "--report", str(tmp_path / "b.csv")])
    assert info.value.code == 2


def test_params_from_config(run_config_file, tmp_path):
    report = str(tmp_path / "params.csv")
    assert cdm_cli.main(["params", "--config", run_config_file, "--report", report]) == 0
    frame = pd.read_csv(report)
    assert frame.component.tolist() == ["mrm_encoder", "mrm_decoder", "mdn", "cunet"]
    assert (frame.parameters > 0).all()
