"""Real-time NAND flash simulator: phase-level timing, fault injection, and trace replay."""

from .config import SimConfig, load_config, parse_config
from .controller import FlashRequest, RequestStatus
from .flash_array import FlashArray, Geometry, PageAddress, PageState
from .harness import compare, replay
from .simulator import Mode, Simulator
from .timing import OpKind

__version__ = "0.1.0"

__all__ = [
    "FlashArray", "FlashRequest", "Geometry", "Mode", "OpKind", "PageAddress", "PageState",
    "RequestStatus", "SimConfig", "Simulator", "compare", "load_config", "parse_config", "replay",
]
