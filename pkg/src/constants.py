DEFAULT_SEED = 20180101

COMMANDS = [
    "grf",
    "waterfill",
    "envelope",
    "detect",
    "moment",
    "verify",
]

# Tolerances
IDENTITY_TOL = 1e-12
CONTINUITY_TOL = 1e-10
KKT_TOL = 1e-10
ENVELOPE_TOL = 1e-9
ORACLE_TOL = 1e-3
FEASIBILITY_TOL = 1e-8
CONTRACTION_MARGIN = 1e-9

# GLRT
DETECTION_EDGE = 2.0
DETECTION_MARGIN = 0.05
MAX_DETECTION_N = 2000

# Oracles
PROBLEM1_RESTARTS = 32
PROBLEM1_START_NORMS = (0.1, 0.95)
PROBLEM1_BUDGET = 100_000
PROBLEM1_INITIAL_WEIGHT = 10.0
PROBLEM1_WEIGHT_DOUBLINGS = 16
PROBLEM1_AUGMENTED_ROUNDS = 20
PROBLEM1_POLISH_STEPS = 30
PROBLEM1_ESCAPES = 4
PROBLEM1_ESCAPE_STEP = 0.1
PROBLEM1_ESCAPE_CURVATURE = 1e-6
HESSIAN_STEP = 1e-6
PROBLEM3_GRID_STEPS = 400
PROBLEM3_REFINEMENTS = 2
PROBLEM4_BUDGET = 2_000
PROBLEM4_PUSH = 1e-3

# Monte Carlo
CHUNK_SIZE = 10_000
DEFAULT_GRID_POINTS = 1000
DEFAULT_SAMPLES = 100_000
DEFAULT_TRIALS = 200
DEFAULT_N = 500
DEFAULT_EPSILON = 0.1
DEFAULT_DELTA = 0.05
VERIFY_POINTS = 20
LOG_FLOAT_MAX = 709.782712893384
MAX_CHUNK_ENTRIES = 2_000_000
VERIFY_X_FRACTION = 0.95
VERIFY_SPECTRA = [
    (0.9,),
    (1.0, 0.5),
    (1.0, 0.7, 0.2),
]

# Output
FLOAT_FORMAT = ".17g"
ARTIFACT_VERSION = "2026.10.17"
DEFAULT_OUT = "run"
LOG_LEVELS = ["DEBUG", "INFO", "WARNING", "ERROR"]
