"""
ctddiff
=======

Link-level simulation of cooperative TDMA semantic transmission with
diffusion-based reconstruction.

- ``channel``: complex-baseband fading and noise primitives
- ``protocol``: pre-equalization, relaying, aggregation, effective noise
- ``diffusion``: DDPM schedule, channel-to-timestep matching, reverse chain
- ``hybrid_noise``: channel/Gaussian noise blending for training
- ``denoiser``: analytic and trainable conditional noise predictors
- ``metrics``: MSE, PSNR, MS-SSIM
- ``harness``: sweeps, result files and the ``ctddiff`` command line
"""

__version__ = "0.1.0"
