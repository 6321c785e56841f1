"""
Solver-wide configuration and constants for the singular convective solver.
"""

# =============================================================================
# DISCRETIZATION
# =============================================================================

# Regularization of a0(|xi|) for exponents below 2
EPS_GRAD = 1e-10

# Gradient magnitudes below this are zero inside convective reaction terms
GRAD_FLOOR = 1e-10

# Quadrature for antiderivatives H(x, s) of terms without a closed form
GAUSS_LEGENDRE_POINTS = 32

BOUNDARY_KINDS = ['robin', 'neumann', 'dirichlet']
OPERATOR_KINDS = ['r_laplacian', 'pq_sum']

# =============================================================================
# NONLINEAR SOLVER
# =============================================================================

TOL_SOLVER = 1e-10
MAX_NEWTON = 500
MAX_BACKTRACKS = 60
ARMIJO_C1 = 1e-4

# Regularization ladder tried when the Newton matrix gives no descent direction
REGULARIZATION_LADDER = [0.0, 1e-8, 1e-6, 1e-4, 1e-2, 1.0, 1e2]

# Energy changes below this, relative to 1 + |J|, count as roundoff; a step in
# that band is accepted only if it lowers the gradient residual
ENERGY_SLACK = 1e-10

# Cap on the max-norm of one Newton step, relative to 1 + |u|_inf
MAX_STEP_FACTOR = 10.0

# Comparison tolerance factor: min(u - u_sub) >= -TOL_CMP_FACTOR * |u_sub|_inf
TOL_CMP_FACTOR = 1e-8

# =============================================================================
# BRACKETS
# =============================================================================

TOL_SUB_FACTOR = 1e-8
K_SHRINK_HALVINGS = 20
SUPER_DOUBLINGS = 40
LADDER_STEP = 0.25
LADDER_MAX_LEVEL = 64.0

# =============================================================================
# FIXED POINT
# =============================================================================

TOL_FP = 1e-8
TOL_RES_FACTOR = 1e-6      # tol_res = TOL_RES_FACTOR * (1 + rhs_sup)
MAX_OUTER = 200
N_STARTS = 3
DEDUP_DISTANCE = 1e-6
GRADIENT_CAP = 10.0
TRAPPING_PATIENCE = 3
PROBE_SCALES = (2.0, 4.0)
PROBE_SLACK = 1.25
CALIBRATION_SAFETY = 2.0

# =============================================================================
# HYPOTHESIS CHECKS
# =============================================================================

LOG_SAMPLES = 64
LOG_SAMPLE_RANGE = (1e-6, 1.0)
MONOTONE_TOL = 1e-12

# =============================================================================
# EXPERIMENTS
# =============================================================================

UNIQUENESS_TOL = 1e-6
UNIQUENESS_STARTS = 5
EPS_SCHEDULE = (1e-1, 1e-2, 1e-3, 1e-4)
LADDER_SIZE = 3
MULTIPLICITY_MIN_GAP = 0.5
DEFAULT_SEED = 0

# Convergence runs whose max errors all stay below this reproduce u* exactly
EXACT_ERROR_TOL = 1e-10

# =============================================================================
# CLI & OUTPUT
# =============================================================================

EXIT_CODES = {
    'ok': 0,
    'validation': 2,
    'solver': 3,
    'no_convergence': 4,
    'bracket': 5,
}

LEDGER_FILENAME = 'runs.db'
SUMMARY_FILENAME = 'summary.txt'
FLOAT_FORMAT = '.12e'

TRACE_COLUMNS = [
    'iteration', 'sup_distance', 'c1_distance', 'unfrozen_residual',
    'grad_sup', 'margin_sub', 'margin_super', 'margin_grad', 'clamp_active',
]
SOLVE_COLUMNS = [
    'component', 'iterations', 'residual', 'energy', 'comparison_min',
    'comparison_ok', 'backtracks', 'regularized_steps', 'status',
]
