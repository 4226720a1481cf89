"""Event-driven reconstruction of deformable Gaussian scenes.

Pipeline pieces: event containers and accumulation, an ESIM-style event
simulator, event-density mask extraction, a low-rank coarse deformation
model, anchored 3D Gaussians with a differentiable CPU splatter, the
two-stage trainer, and scale/bias-corrected image metrics.
"""

__version__ = "0.1.0"

from .events import EventStream, AccumulatedDifferenceMap, accumulate, color_filter_mask

__all__ = [
    "EventStream",
    "AccumulatedDifferenceMap",
    "accumulate",
    "color_filter_mask",
    "__version__",
]
