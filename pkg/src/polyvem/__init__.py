"""Mixed virtual elements for the pseudostress-velocity Navier-Stokes problem."""

from .assembly import (
    Discretization,
    DofMap,
    NewtonDivergence,
    NewtonState,
    SolverError,
    build_dof_map,
    global_dof_count,
    newton_solve,
    solve_linear,
)
from .local_operators import ProblemParams
from .mesh import PolygonalMesh, generate_mesh, load_mesh, save_mesh
from .postprocess import (
    StudyConfig,
    compute_errors,
    kovasznay_data,
    postprocess,
    run_convergence_study,
)

__version__ = "0.1.0"
