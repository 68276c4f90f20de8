"""evgate: event-density-gated semantic segmentation with a spiking network.

Frames are split into overlapping regions; each region is re-segmented by a
fully spiking network only when the event stream shows enough change,
otherwise the cached keyframe result is reused. The package bundles the
event tooling, the network, the gating pipeline, synthetic corpora, and the
accuracy/latency/energy measurement kit.
"""

from .errors import EvgateError

__version__ = "0.1.0"
__all__ = ["EvgateError", "__version__"]
