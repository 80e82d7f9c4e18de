"""
Training Service
Runs the three training stages (MRM, then MDN, then C-UNet) and records their loss curves
"""

import logging
import os
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
import pandas as pd
import torch
import torch.nn as nn

from cdm_config.config_loader import get_output_settings

from ..data.dataset import CaseDataset, make_loader
from ..exceptions import CDMIOError, CDMValidationError, NonFiniteLossError
from ..models.data_models import ConditionSource, SplitTag, Stage, TrainConfig
from ..networks.cunet import CrossConditionedUNet, cunet_forward, synthesis_loss
from ..networks.mdn import ModalityDecoupledDiffusionNetwork, mdn_sample, mdn_train_step
from ..networks.mrm import ModalityRepresentationModel, apply_mask, mrm_loss, sample_mask_batch
from ..networks.schedules import make_linear_schedule
from .checkpoint_service import CheckpointBundle

logger = logging.getLogger(__name__)

LOSS_CURVE_COLUMNS = ["stage", "epoch", "loss"]
LOSS_CURVE_SUFFIX = "_loss.csv"

_STAGE_OFFSETS = {Stage.MRM: 0, Stage.MDN: 1, Stage.CUNET: 2}


def stage_seed(seed: int, stage: Stage) -> int:
    """Seed for one stage, independent of the other stages"""
    return int(np.random.SeedSequence([seed, _STAGE_OFFSETS[stage]]).generate_state(1, dtype=np.uint32)[0])


@dataclass
class StageResult:
    stage: Stage
    model: nn.Module
    losses: List[float] = field(default_factory=list)

    def loss_curve(self) -> pd.DataFrame:
        return pd.DataFrame({
            "stage": [self.stage.value] * len(self.losses),
            "epoch": list(range(1, len(self.losses) + 1)),
            "loss": self.losses,
        }, columns=LOSS_CURVE_COLUMNS)


def write_loss_curve(result: StageResult, directory: str) -> str:
    suffix = get_output_settings().get("loss_curve_suffix") or LOSS_CURVE_SUFFIX
    path = os.path.join(directory, f"{result.stage.value}{suffix}")
    try:
        os.makedirs(directory, exist_ok=True)
        result.loss_curve().to_csv(path, index=False)
    except OSError as e:
        raise CDMIOError(f"Cannot write loss curve {path}: {e}") from e
    logger.info(f"📋 Loss curve written to {path}")
    return path


def _adam(model: nn.Module, lr: float, config: TrainConfig) -> torch.optim.Adam:
    return torch.optim.Adam(model.parameters(), lr=lr, weight_decay=config.weight_decay)


def _check_finite(loss: torch.Tensor, stage: Stage, epoch: int, step: int) -> None:
    if not torch.isfinite(loss):
        raise NonFiniteLossError(stage.value, epoch, step, loss.item())


@torch.no_grad()
def encode_targets(mrm: ModalityRepresentationModel, targets: torch.Tensor) -> torch.Tensor:
    """Frozen-FE latents y0 for a batch of network-space targets"""
    mrm.eval()
    return mrm.encode(targets)


class TrainingService:
    """Service class for the staged training pipeline"""

    def __init__(self, config: TrainConfig, dataset: CaseDataset):
        if dataset.image_size != config.image_size:
            raise CDMValidationError(
                f"dataset image size {dataset.image_size} does not match config image_size {config.image_size}"
            )
        self.config = config
        self.dataset = dataset

    def _log_epoch(self, stage: Stage, epoch: int, epochs: int, loss: float) -> None:
        logger.info(f"📊 [{stage.value}] epoch {epoch}/{epochs} loss={loss:.6f}")

    def train_mrm(self) -> StageResult:
        config = self.config
        seed = stage_seed(config.seed, Stage.MRM)
        grid, patch = config.grid_size, config.effective_patch_size
        if int(round(config.mask_ratio * grid * grid)) < 1:
            raise CDMValidationError(
                f"mask_ratio {config.mask_ratio} masks no patch of the {grid}x{grid} grid"
            )

        torch.manual_seed(seed)
        model = ModalityRepresentationModel.from_config(config)
        optimizer = _adam(model, config.mrm_lr, config)
        loader = make_loader(self.dataset, config.batch_size, seed)
        mask_generator = torch.Generator().manual_seed(seed + 1)

        logger.info(f"🚀 Training MRM for {config.mrm_epochs} epochs on {len(self.dataset)} cases")
        result = StageResult(Stage.MRM, model)
        model.train()
        for epoch in range(1, config.mrm_epochs + 1):
            total, seen = 0.0, 0
            for step, (_, targets) in enumerate(loader):
                masks = sample_mask_batch(targets.shape[0], targets.shape[1], grid, grid,
                                          config.mask_ratio, mask_generator)
                recon, _ = model(apply_mask(targets, masks, fill=0.0, patch_size=patch))
                loss = mrm_loss(recon, targets, masks, patch_size=patch)
                _check_finite(loss, Stage.MRM, epoch, step)
                optimizer.zero_grad()
                loss.backward()
                optimizer.step()
                total += loss.item() * targets.shape[0]
                seen += targets.shape[0]
            result.losses.append(total / seen)
            self._log_epoch(Stage.MRM, epoch, config.mrm_epochs, result.losses[-1])
        model.eval()
        return result

    def train_mdn(self, mrm: ModalityRepresentationModel) -> StageResult:
        config = self.config
        seed = stage_seed(config.seed, Stage.MDN)
        latents = encode_targets(mrm, self.dataset.targets())
        schedule = make_linear_schedule(config.timesteps, config.beta_start, config.beta_end)

        torch.manual_seed(seed)
        model = ModalityDecoupledDiffusionNetwork.from_config(config)
        optimizer = _adam(model, config.mdn_lr, config)
        generator = torch.Generator().manual_seed(seed + 1)

        logger.info(f"🚀 Training MDN for {config.mdn_epochs} epochs on {latents.shape[0]} latents")
        result = StageResult(Stage.MDN, model)
        model.train()
        for epoch in range(1, config.mdn_epochs + 1):
            order = torch.randperm(latents.shape[0], generator=generator)
            total = 0.0
            for step, start in enumerate(range(0, latents.shape[0], config.batch_size)):
                batch = latents[order[start:start + config.batch_size]]
                loss = mdn_train_step(model, optimizer, batch, schedule, generator, epoch=epoch, step=step)
                total += loss.item() * batch.shape[0]
            result.losses.append(total / latents.shape[0])
            self._log_epoch(Stage.MDN, epoch, config.mdn_epochs, result.losses[-1])
        model.eval()
        return result

    def _conditions(self, targets: torch.Tensor, mrm: ModalityRepresentationModel,
                    mdn: Optional[ModalityDecoupledDiffusionNetwork],
                    generator: torch.Generator) -> Optional[torch.Tensor]:
        config = self.config
        if not config.use_condition:
            return None
        if config.cunet_condition_source == ConditionSource.MDN:
            schedule = make_linear_schedule(config.timesteps, config.beta_start, config.beta_end)
            mdn.eval()
            return mdn_sample(mdn, schedule, config.n_sampling, generator,
                              num_samples=targets.shape[0], latent_dim=config.latent_dim)
        return encode_targets(mrm, targets)

    def train_cunet(self, mrm: ModalityRepresentationModel,
                    mdn: Optional[ModalityDecoupledDiffusionNetwork] = None) -> StageResult:
        config = self.config
        if (config.use_condition and config.cunet_condition_source == ConditionSource.MDN
                and mdn is None):
            raise CDMValidationError("cunet_condition_source=mdn requires a trained MDN")
        seed = stage_seed(config.seed, Stage.CUNET)

        torch.manual_seed(seed)
        model = CrossConditionedUNet.from_config(config)
        optimizer = _adam(model, config.cunet_lr, config)
        loader = make_loader(self.dataset, config.batch_size, seed)
        generator = torch.Generator().manual_seed(seed + 1)

        logger.info(f"🚀 Training C-UNet for {config.cunet_epochs} epochs on {len(self.dataset)} cases")
        result = StageResult(Stage.CUNET, model)
        model.train()
        for epoch in range(1, config.cunet_epochs + 1):
            total, seen = 0.0, 0
            for step, (sources, targets) in enumerate(loader):
                condition = self._conditions(targets, mrm, mdn, generator)
                loss = synthesis_loss(cunet_forward(model, sources, condition), targets)
                _check_finite(loss, Stage.CUNET, epoch, step)
                optimizer.zero_grad()
                loss.backward()
                optimizer.step()
                total += loss.item() * sources.shape[0]
                seen += sources.shape[0]
            result.losses.append(total / seen)
            self._log_epoch(Stage.CUNET, epoch, config.cunet_epochs, result.losses[-1])
        model.eval()
        return result


def _check_bundle_config(config: TrainConfig, bundle: Optional[CheckpointBundle]) -> CheckpointBundle:
    if bundle is None:
        return CheckpointBundle(config=config)
    if bundle.config != config:
        raise CDMValidationError("config does not match the config stored in the checkpoint bundle")
    return bundle


def _finish(bundle: CheckpointBundle, result: StageResult, curve_dir: Optional[str]) -> CheckpointBundle:
    if curve_dir:
        write_loss_curve(result, curve_dir)
    logger.info(f"✅ Stage {result.stage.value} complete")
    return bundle.with_stage(result.stage, result.model)


def _training_set(data_dir: str) -> CaseDataset:
    return CaseDataset.from_split(data_dir, SplitTag.TRAIN)


def run_stage_mrm(config: TrainConfig, data_dir: str, bundle: Optional[CheckpointBundle] = None,
                  curve_dir: Optional[str] = None) -> CheckpointBundle:
    bundle = _check_bundle_config(config, bundle)
    result = TrainingService(config, _training_set(data_dir)).train_mrm()
    return _finish(bundle, result, curve_dir)


def run_stage_mdn(config: TrainConfig, data_dir: str, bundle: Optional[CheckpointBundle] = None,
                  curve_dir: Optional[str] = None) -> CheckpointBundle:
    bundle = _check_bundle_config(config, bundle)
    bundle.require(Stage.MRM)
    result = TrainingService(config, _training_set(data_dir)).train_mdn(bundle.build(Stage.MRM))
    return _finish(bundle, result, curve_dir)


def run_stage_cunet(config: TrainConfig, data_dir: str, bundle: Optional[CheckpointBundle] = None,
                    curve_dir: Optional[str] = None) -> CheckpointBundle:
    bundle = _check_bundle_config(config, bundle)
    bundle.require(Stage.MRM)
    mdn = None
    if config.use_condition and config.cunet_condition_source == ConditionSource.MDN:
        bundle.require(Stage.MDN)
        mdn = bundle.build(Stage.MDN)
    result = TrainingService(config, _training_set(data_dir)).train_cunet(bundle.build(Stage.MRM), mdn)
    return _finish(bundle, result, curve_dir)


STAGE_RUNNERS = {
    Stage.MRM: run_stage_mrm,
    Stage.MDN: run_stage_mdn,
    Stage.CUNET: run_stage_cunet,
}


def run_all_stages(config: TrainConfig, data_dir: str, bundle: Optional[CheckpointBundle] = None,
                   curve_dir: Optional[str] = None) -> CheckpointBundle:
    for stage in Stage:
        bundle = STAGE_RUNNERS[stage](config, data_dir, bundle, curve_dir)
    return bundle
