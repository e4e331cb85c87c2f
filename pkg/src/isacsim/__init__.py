"""Dynamic vehicular ISAC channel simulator and multipath tracker at 28 GHz."""

from .params import Direction, DirectionParams, builtin_params, load_params
from .engine import Engine, SimConfig, run
from .metrics import PdpMatrix

__version__ = "0.1.0"

__all__ = [
    "Direction",
    "DirectionParams",
    "Engine",
    "PdpMatrix",
    "SimConfig",
    "builtin_params",
    "load_params",
    "run",
]
