"""
Shared fixtures: a tiny training config, a tiny generated dataset and a finite-difference helper
"""

import numpy as np
import pytest
import torch

from cdm.data.dataset import generate_dataset
from cdm.models.data_models import TrainConfig


@pytest.fixture
def tiny_config() -> TrainConfig:
    return TrainConfig(
        image_size=16,
        latent_dim=8,
        timesteps=50,
        n_sampling=5,
        mask_ratio=0.5,
        patch_size=4,
        mrm_base_width=4,
        mdn_blocks=1,
        mdn_hidden=16,
        mdn_time_dim=8,
        cunet_base_width=4,
        cunet_scales=2,
        batch_size=4,
        mrm_epochs=2,
        mdn_epochs=2,
        cunet_epochs=2,
        mrm_lr=1e-3,
        mdn_lr=1e-3,
        cunet_lr=1e-3,
        seed=0,
    )


@pytest.fixture
def tiny_dataset(tmp_path) -> str:
    """Six 16x16 cases: four train, two test"""
    directory = str(tmp_path / "data")
    generate_dataset(directory, cases=6, image_size=16, seed=0)
    return directory


@pytest.fixture(autouse=True)
def seeded():
    torch.manual_seed(0)
    np.random.seed(0)


def finite_difference_check(loss_fn, tensors, eps=1e-6, rtol=1e-3, atol=1e-8, samples=6, seed=0):
    """Compare autograd gradients of a scalar loss with central differences

    `tensors` are float64 leaves with requires_grad; a few random entries of each are checked.
    """
    for tensor in tensors:
        if tensor.grad is not None:
            tensor.grad = None
    loss_fn().backward()
    rng = np.random.default_rng(seed)
    for tensor in tensors:
        analytic = tensor.grad.detach().clone().reshape(-1)
        flat = tensor.data.reshape(-1)
        for index in rng.choice(flat.numel(), size=min(samples, flat.numel()), replace=False):
            original = flat[index].item()
            with torch.no_grad():
                flat[index] = original + eps
                plus = loss_fn().item()
                flat[index] = original - eps
                minus = loss_fn().item()
                flat[index] = original
            numeric = (plus - minus) / (2 * eps)
            assert abs(numeric - analytic[index].item()) <= atol + rtol * max(abs(numeric), abs(analytic[index].item())), (
                f"gradient mismatch at {index}: numeric {numeric} vs analytic {analytic[index].item()}"
            )
