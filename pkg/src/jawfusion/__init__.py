"""Multimodal (audio + IMU) jaw-movement event recognition.

Subpackages / modules:
    events    -- event classes, labels, TSV serialization
    signals   -- recording loading, windowing, sequencing
    synthgen  -- synthetic labeled dataset generation
    nn        -- minimal differentiable layer kernel (numpy)
    fusion    -- fusion architectures (data / feature / decision level)
    training  -- class-weighted training loop, Adam, k-fold protocol
    evalkit   -- event-based scoring (tolerance matching, micro metrics)
    cli       -- experiment harness entry points
"""

__version__ = "0.1.0"

from .events import EVENT_CLASSES, MODEL_CLASSES, NO_EVENT, EventLabel

__all__ = ["EVENT_CLASSES", "MODEL_CLASSES", "NO_EVENT", "EventLabel", "__version__"]
