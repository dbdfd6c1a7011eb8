"""h-adaptive 2D FEM direct solver reusing partial LU factors across refinement sequences."""

from .mesh2d import Mesh, Point2, refine_towards_singularities
from .problems import make_problem
from .reuse_manager import SequenceSolver, solve_all_modes, solve_sequence

__version__ = "0.1.0"
