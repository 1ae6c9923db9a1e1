"""Feasibility-preserving approximate dynamic programming on tree-structured problems."""

from .centering import (Box, Ellipsoid, inscribed_ball, inscribed_box,
                        max_volume_inscribed_ellipsoid)
from .dp import (FPADP, SweepConfig, backward_sweep, check_feasibility, classic_dp,
                 forward_sweep, solve_monolithic)
from .errors import DomainError, InputError, TreeDPError
from .model import Subsystem, TreeProblem, verify_tree
from .polyhedra import HPolyhedron, fourier_motzkin_project, membership_oracle_project

__version__ = "0.1.0"

__all__ = [
    "Box", "Ellipsoid", "FPADP", "HPolyhedron", "Subsystem", "SweepConfig", "TreeProblem",
    "DomainError", "InputError", "TreeDPError", "backward_sweep", "check_feasibility",
    "classic_dp", "forward_sweep", "fourier_motzkin_project", "inscribed_ball", "inscribed_box",
    "max_volume_inscribed_ellipsoid", "membership_oracle_project", "solve_monolithic",
    "verify_tree",
]
