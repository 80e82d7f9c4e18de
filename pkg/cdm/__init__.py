"""
Cross-conditioned Diffusion Model toolkit
Paired source-to-target MRI modality translation guided by a sampled target latent
"""

__version__ = "1.0.0"
