"""Long-jump lozenge-tiling dynamics on the torus and its hydrodynamic limit."""

from .dynamics import DOWN, UP, MoveEvent, SimState, StuckState
from .lattice import GeometryError, TorusGeometry, Vertex
from .tiling import Tiling, from_profile, linear_tiling, scaled_height, validate

__version__ = "0.1.0"

__all__ = [
    "DOWN", "UP", "GeometryError", "MoveEvent", "SimState", "StuckState", "Tiling", "TorusGeometry",
    "Vertex", "from_profile", "linear_tiling", "scaled_height", "validate", "__version__",
]
