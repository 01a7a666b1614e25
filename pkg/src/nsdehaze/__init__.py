"""Dehazing under non-aligned supervision.

Three coupled networks (dehazing generator, attention-based airlight head,
channel-attention transmission net) trained against clear references that
are deliberately not pixel-aligned with the hazy inputs, on top of the
classical scattering model and dark-channel machinery.
"""

from ._kernels import BACKEND as KERNEL_BACKEND

__version__ = "0.1.0"
__all__ = ["KERNEL_BACKEND", "__version__"]
