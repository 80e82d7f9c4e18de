import struct

import numpy as np
import pandas as pd
import pytest
import torch

from cdm.data.dataset import CaseDataset, generate_dataset
from cdm.exceptions import CDMValidationError, CorruptFileError, PipelineOrderError
from cdm.models.data_models import TARGET_MODALITIES, ConditionSource, SplitTag, Stage, StageFlags
from cdm.networks.mrm import ModalityRepresentationModel
from cdm.services.benchmark_service import BENCH_COLUMNS, benchmark_sampling, count_parameters
from cdm.services.checkpoint_service import (
    CheckpointBundle,
    _decode_state,
    decode_bundle,
    encode_bundle,
    load_bundle,
    save_bundle,
)
from cdm.services.evaluation_service import BASELINE_CASE_ID, evaluate, score_predictions
from cdm.services.inference_service import synthesize
from cdm.services.training_service import (
    TrainingService,
    run_all_stages,
    run_stage_cunet,
    run_stage_mdn,
    run_stage_mrm,
    stage_seed,
)


@pytest.fixture
def trained_bundle(tiny_config, tiny_dataset, tmp_path):
    return run_all_stages(tiny_config, tiny_dataset, curve_dir=str(tmp_path / "curves"))


def test_empty_bundle_round_trip(tiny_config):
    bundle = CheckpointBundle(config=tiny_config)
    payload = encode_bundle(bundle)
    assert payload[:4] == b"CDMB"
    decoded = decode_bundle(payload)
    assert decoded.config == tiny_config
    assert decoded.flags == StageFlags()
    assert encode_bundle(decoded) == payload


def test_bundle_round_trip_is_bit_exact(trained_bundle, tmp_path):
    path = save_bundle(trained_bundle, str(tmp_path / "model.cdmb"))
    loaded = load_bundle(path)
    assert loaded.flags.is_complete()
    for stage in Stage:
        for name, tensor in trained_bundle.states[stage].items():
            assert torch.equal(loaded.states[stage][name], tensor)
    assert encode_bundle(loaded) == encode_bundle(trained_bundle)


def test_bundle_corruption_detected(trained_bundle):
    payload = bytearray(encode_bundle(trained_bundle))
    flipped = bytearray(payload)
    flipped[len(payload) // 2] ^= 0x01
    with pytest.raises(CorruptFileError):
        decode_bundle(bytes(flipped))
    with pytest.raises(CorruptFileError):
        decode_bundle(bytes(payload[:-7]))
    with pytest.raises(CorruptFileError):
        decode_bundle(b"XXXX" + bytes(payload[4:]))


@pytest.mark.parametrize("section", [
    struct.pack("<I", 1),
    struct.pack("<IHBB", 1, 200, 0, 1) + b"w",
    struct.pack("<IHBB", 1, 1, 0, 1) + b"w" + struct.pack("<I", 1000) + b"\x00" * 4,
    struct.pack("<IHBB", 1, 1, 0, 0) + b"\xff",
])
def test_malformed_tensor_section_is_corrupt(section):
    with pytest.raises(CorruptFileError):
        _decode_state(section)


def test_bundle_invariants(tiny_config):
    mrm = ModalityRepresentationModel.from_config(tiny_config)
    with pytest.raises(CDMValidationError):
        CheckpointBundle(config=tiny_config, flags=StageFlags(mrm=True))
    with pytest.raises(CDMValidationError):
        CheckpointBundle(config=tiny_config, states={Stage.MRM: mrm.state_dict()})
    wider = tiny_config.model_copy(update={"latent_dim": 16})
    with pytest.raises(CDMValidationError):
        CheckpointBundle(config=wider, flags=StageFlags(mrm=True), states={Stage.MRM: mrm.state_dict()})


def test_stages_require_mrm(tiny_config, tiny_dataset):
    with pytest.raises(PipelineOrderError):
        run_stage_mdn(tiny_config, tiny_dataset)
    with pytest.raises(PipelineOrderError):
        run_stage_cunet(tiny_config, tiny_dataset)


def test_mdn_condition_source_requires_mdn_stage(tiny_config, tiny_dataset):
    config = tiny_config.model_copy(update={"cunet_condition_source": ConditionSource.MDN})
    bundle = run_stage_mrm(config, tiny_dataset)
    with pytest.raises(PipelineOrderError):
        run_stage_cunet(config, tiny_dataset, bundle)


def test_config_mismatch_with_bundle(tiny_config, tiny_dataset):
    bundle = run_stage_mrm(tiny_config, tiny_dataset)
    other = tiny_config.model_copy(update={"seed": 1})
    with pytest.raises(CDMValidationError):
        run_stage_mdn(other, tiny_dataset, bundle)


def test_full_run_is_deterministic(tiny_config, tiny_dataset, trained_bundle):
    again = run_all_stages(tiny_config, tiny_dataset)
    assert encode_bundle(again) == encode_bundle(trained_bundle)


def test_rerunning_a_stage_reproduces_it(tiny_config, tiny_dataset, trained_bundle):
    rerun = run_stage_mrm(tiny_config, tiny_dataset, trained_bundle)
    for name, tensor in trained_bundle.states[Stage.MRM].items():
        assert torch.equal(rerun.states[Stage.MRM][name], tensor)


def test_loss_curves_written(trained_bundle, tmp_path):
    for stage in Stage:
        frame = pd.read_csv(tmp_path / "curves" / f"{stage.value}_loss.csv")
        assert list(frame.columns) == ["stage", "epoch", "loss"]
        assert frame.epoch.tolist() == [1, 2]
        assert np.isfinite(frame.loss).all()


def test_zero_learning_rate_leaves_mrm_untouched(tiny_config, tiny_dataset):
    config = tiny_config.model_copy(update={"mrm_lr": 0.0, "mrm_epochs": 1})
    result = TrainingService(config, CaseDataset.from_split(tiny_dataset, SplitTag.TRAIN)).train_mrm()
    torch.manual_seed(stage_seed(config.seed, Stage.MRM))
    fresh = ModalityRepresentationModel.from_config(config)
    for name, tensor in fresh.state_dict().items():
        assert torch.equal(result.model.state_dict()[name], tensor)
    assert len(result.losses) == 1


def test_mrm_loss_halves_on_eight_cases(tiny_config, tmp_path):
    directory = str(tmp_path / "mrm_data")
    generate_dataset(directory, cases=12, image_size=16, seed=1)
    dataset = CaseDataset.from_split(directory, SplitTag.TRAIN)
    assert len(dataset) == 8
    config = tiny_config.model_copy(update={"batch_size": 2, "mrm_lr": 1e-2, "mrm_base_width": 8, "mrm_epochs": 20})
    result = TrainingService(config, dataset).train_mrm()
    assert len(result.losses) == 20
    assert result.losses[-1] <= 0.5 * result.losses[0]


def test_cunet_loss_halves_on_eight_cases(tiny_config, tmp_path):
    directory = str(tmp_path / "cunet_data")
    generate_dataset(directory, cases=12, image_size=16, seed=1)
    dataset = CaseDataset.from_split(directory, SplitTag.TRAIN)
    config = tiny_config.model_copy(update={"cunet_epochs": 30})
    service = TrainingService(config, dataset)
    result = service.train_cunet(service.train_mrm().model)
    assert len(result.losses) == 30
    assert result.losses[-1] <= 0.5 * result.losses[0]


def test_training_rejects_mismatched_dataset(tiny_config, tmp_path):
    directory = str(tmp_path / "big")
    generate_dataset(directory, cases=3, image_size=32, seed=0)
    with pytest.raises(CDMValidationError):
        run_stage_mrm(tiny_config, directory)


def test_synthesize_requires_complete_bundle(tiny_config, tiny_dataset):
    bundle = run_stage_mrm(tiny_config, tiny_dataset)
    with pytest.raises(PipelineOrderError):
        synthesize(bundle, np.zeros((2, 16, 16)), seed=0)


def test_synthesize_is_seeded_pure_and_bounded(trained_bundle):
    before = encode_bundle(trained_bundle)
    source = np.random.default_rng(0).random((2, 16, 16))
    first = synthesize(trained_bundle, source, seed=3)
    again = synthesize(trained_bundle, source, seed=3)
    assert first.shape == (2, 16, 16) and first.dtype == np.float32
    assert np.array_equal(first, again)
    assert first.min() >= 0.0 and first.max() <= 1.0
    assert encode_bundle(trained_bundle) == before

    batch = synthesize(trained_bundle, np.stack([source, source]), seed=3)
    assert batch.shape == (2, 2, 16, 16)


def test_synthesize_rejects_wrong_shape(trained_bundle):
    with pytest.raises(CDMValidationError):
        synthesize(trained_bundle, np.zeros((2, 32, 32)), seed=0)


def test_ground_truth_against_itself():
    targets = np.random.default_rng(0).random((2, 2, 16, 16))
    report = score_predictions(["a", "b"], targets, targets)
    for row in report.rows:
        assert row.mae == 0.0
        assert row.ssim == pytest.approx(1.0, abs=1e-12)
        assert row.psnr == float("inf")


def test_evaluate_report(trained_bundle, tiny_dataset, tmp_path):
    path = str(tmp_path / "eval.csv")
    report = evaluate(trained_bundle, tiny_dataset, seed=0, report_path=path)
    frame = pd.read_csv(path)
    assert len(frame) == 2 * len(TARGET_MODALITIES) + 3 + 3
    assert set(frame.case_id) >= {"mean", BASELINE_CASE_ID}
    for modality in TARGET_MODALITIES:
        rows = [r for r in report.rows if r.modality == modality]
        assert report.get("mean", modality).ssim == pytest.approx(np.mean([r.ssim for r in rows]), abs=1e-9)


def test_evaluate_is_deterministic(trained_bundle, tiny_dataset):
    first = evaluate(trained_bundle, tiny_dataset, seed=1).to_dataframe()
    again = evaluate(trained_bundle, tiny_dataset, seed=1).to_dataframe()
    pd.testing.assert_frame_equal(first, again)


def test_benchmark_single_row(trained_bundle, tiny_dataset):
    table = benchmark_sampling(trained_bundle, tiny_dataset, [2], repetitions=1)
    assert len(table) == 1
    assert list(table.columns) == BENCH_COLUMNS
    assert BENCH_COLUMNS[:4] == ["n_sampling", "seconds_per_image", "fps", "psnr_avg"]
    row = table.iloc[0]
    assert row.n_sampling == 2 and row.seconds_per_image > 0 and row.fps > 0
    assert row.mdn_to_cunet30_ratio >= 0


def test_benchmark_argument_checks(trained_bundle, tiny_dataset):
    with pytest.raises(CDMValidationError):
        benchmark_sampling(trained_bundle, tiny_dataset, [])
    with pytest.raises(CDMValidationError):
        benchmark_sampling(trained_bundle, tiny_dataset, [51])


def test_parameter_counts(tiny_config):
    counts = count_parameters(tiny_config).set_index("component")["parameters"]
    assert list(counts.index) == ["mrm_encoder", "mrm_decoder", "mdn", "cunet"]
    assert (counts > 0).all()
    plain = count_parameters(tiny_config.model_copy(update={"use_condition": False}))
    assert plain.set_index("component")["parameters"]["cunet"] < counts["cunet"]


@pytest.mark.parametrize("update", [
    {"use_condition": False},
    {"mdn_decouple": False},
    {"cunet_condition_source": ConditionSource.MDN},
])
def test_variants_train_and_synthesize(tiny_config, tiny_dataset, update):
    config = tiny_config.model_copy(update=update)
    bundle = run_all_stages(config, tiny_dataset)
    output = synthesize(bundle, np.full((2, 16, 16), 0.5), seed=0)
    assert output.shape == (2, 16, 16)


@pytest.mark.slow
def test_synthesis_beats_identity_baseline(tiny_config, tmp_path):
    directory = str(tmp_path / "e2e")
    generate_dataset(directory, cases=24, image_size=32, seed=0)
    config = tiny_config.model_copy(update={
        "image_size": 32, "patch_size": 4, "cunet_base_width": 8, "cunet_epochs": 40, "cunet_lr": 3e-3,
        "mrm_epochs": 5, "mdn_epochs": 5,
    })
    bundle = run_all_stages(config, directory)
    report = evaluate(bundle, directory)
    assert report.get("mean", "T1c").psnr >= report.get(BASELINE_CASE_ID, "T1c").psnr + 3.0
    assert report.get("mean", "T1c").ssim > report.get(BASELINE_CASE_ID, "T1c").ssim


def test_training_logs_losses_without_grad_warnings(tiny_config, tiny_dataset, recwarn):
    service = TrainingService(tiny_config, CaseDataset.from_split(tiny_dataset, SplitTag.TRAIN))
    mrm = service.train_mrm()
    service.train_mdn(mrm.model)
    service.train_cunet(mrm.model)
    assert all(isinstance(loss, float) for loss in mrm.losses)
    assert not [w for w in recwarn if "requires_grad" in str(w.message)]
