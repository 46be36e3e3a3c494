# Process-wide knobs for the spin-echo toolkit. Library modules read these at call time
# (`settings.X`), so tests can patch individual values.

from spin_echo.utils import get_from_env, str_to_bool

SPIN_ECHO_LOG_LEVEL = get_from_env("SPIN_ECHO_LOG_LEVEL", "INFO")


# Error reporting
# https://github.com/getsentry/sentry-python

SENTRY_DSN = get_from_env("SENTRY_DSN", optional=True)


# Ensemble averaging

MC_CHUNK_SIZE = get_from_env("MC_CHUNK_SIZE", 16384, type_cast=int)
MC_MAX_WORKERS = get_from_env("MC_MAX_WORKERS", 1, type_cast=int)
QUADRATURE_NODES = get_from_env("QUADRATURE_NODES", 128, type_cast=int)


# Fitting

FRINGE_SEARCH_WINDOW = get_from_env("FRINGE_SEARCH_WINDOW", 0.2, type_cast=float)
FRINGE_SEARCH_GRID_POINTS = get_from_env("FRINGE_SEARCH_GRID_POINTS", 41, type_cast=int)
DECAY_FIT_MAX_EVALUATIONS = get_from_env(
    "DECAY_FIT_MAX_EVALUATIONS", 4000, type_cast=int,
)
DEGENERACY_THRESHOLD = get_from_env("DEGENERACY_THRESHOLD", 1e-8, type_cast=float)


# Sweep fan-out (celery). Eager by default: tasks run in-process unless a broker
# is configured.

CELERY_BROKER_URL = get_from_env("CELERY_BROKER_URL", "memory://")
CELERY_RESULT_BACKEND = get_from_env("CELERY_RESULT_BACKEND", "cache+memory://")
CELERY_TASK_ALWAYS_EAGER = get_from_env(
    "CELERY_TASK_ALWAYS_EAGER", True, type_cast=str_to_bool,
)
