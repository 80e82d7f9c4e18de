"""
Networks package
Noise schedules, the representation model, the latent diffusion network and the conditioned UNet
"""

from .cunet import (
    ConditionEmbedding,
    CrossConditionedUNet,
    cond_embed,
    cunet_forward,
    synthesis_loss,
)
from .mdn import (
    ModalityDecoupledDiffusionNetwork,
    mdn_forward,
    mdn_sample,
    mdn_train_step,
    timestep_embed,
)
from .mrm import (
    ModalityRepresentationModel,
    PatchMask,
    apply_mask,
    encode,
    mrm_forward,
    mrm_loss,
    sample_mask,
    sample_mask_batch,
)
from .schedules import (
    TERMINAL_STEP,
    NoiseSchedule,
    ddim_step,
    forward_diffuse,
    make_ddim_timesteps,
    make_linear_schedule,
)

__all__ = [
    'ConditionEmbedding',
    'CrossConditionedUNet',
    'cond_embed',
    'cunet_forward',
    'synthesis_loss',
    'ModalityDecoupledDiffusionNetwork',
    'mdn_forward',
    'mdn_sample',
    'mdn_train_step',
    'timestep_embed',
    'ModalityRepresentationModel',
    'PatchMask',
    'apply_mask',
    'encode',
    'mrm_forward',
    'mrm_loss',
    'sample_mask',
    'sample_mask_batch',
    'TERMINAL_STEP',
    'NoiseSchedule',
    'ddim_step',
    'forward_diffuse',
    'make_ddim_timesteps',
    'make_linear_schedule',
]
