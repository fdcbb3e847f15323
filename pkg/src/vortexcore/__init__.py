"""Desingularised point vortices for the 2D Euler equations: Kirchhoff-Routh
critical points, approximate vortex solutions and a free-boundary solver."""

__version__ = "0.1.0"

from .ansatz import AnsatzParams, ScaleParams, assemble_ansatz, eval_wprofile, solve_params  # noqa: E402
from .domain import DomainDescriptor, make_domain  # noqa: E402
from .errors import VortexCoreError  # noqa: E402
from .grid import GridField  # noqa: E402
from .potential import BackgroundFlow, PotentialEvaluator, solve_background, vn_preset  # noqa: E402
from .profile import ProfileSolution, eval_profile, solve_profile  # noqa: E402
from .routh import CriticalPoint, DiskMask, VortexConfig, eval_Phi, eval_W, find_critical, grad_W  # noqa: E402
from .solver import SolverOptions, SolveReport, continue_in_eps, detect_cores, newton_solve, residual  # noqa: E402

__all__ = [
    "AnsatzParams", "BackgroundFlow", "CriticalPoint", "DiskMask", "DomainDescriptor", "GridField",
    "PotentialEvaluator", "ProfileSolution", "ScaleParams", "SolveReport", "SolverOptions",
    "VortexConfig", "VortexCoreError", "assemble_ansatz", "continue_in_eps", "detect_cores",
    "eval_Phi", "eval_W", "eval_profile", "eval_wprofile", "find_critical", "grad_W", "make_domain",
    "newton_solve", "residual", "solve_background", "solve_params", "solve_profile", "vn_preset",
]
