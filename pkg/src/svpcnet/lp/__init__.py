from .envelope import (
    EnvelopeField,
    EnvelopePoint,
    InadmissibleError,
    LiftedColumns,
    envelope_point,
    lift_and_evaluate,
    polyconvexify,
    read_field,
    write_field,
)
from .lattice import Lattice, LatticeSpec, LatticeSpecError, Segment, build_lattice
from .simplex import INFEASIBLE, OPTIMAL, LpProblem, LpResult, SolverError, Tolerances, envelope_problem, solve
