import os
from dotenv import load_dotenv

load_dotenv()

class Config:
    # System
    LOG_LEVEL = os.getenv("RMDP_LOG", "info")
    LOG_FILE = os.getenv("RMDP_LOG_FILE")
    TOOL_VERSION = "0.3.0"

    # Numerical tolerances
    PROBABILITY_TOLERANCE = 1e-12  # row-stochasticity, policy rows
    VALUE_TOLERANCE = 1e-10        # strict comparisons between robust values
    NONPOSITIVE_TOLERANCE = 1e-9   # max/sum equivalence check
    GAME_EPS = 1e-9                # inner matrix-game solves
    DISCOUNTED_RESIDUAL = 1e-12

    # Enumeration guards
    BRUTE_FORCE_MAX_TRAJECTORIES = 10**7
    MD_MAX_POLICIES = 2**24
    RECTANGULAR_MAX_KERNELS = 2**20
    LOCAL_MIN_MAX_COORDINATES = 8
    GRID_MAX_POINTS = 5_000_000
    GRID_BATCH_SIZE = 100_000
    SUBSET_SUM_MAX_TOTAL = 10**7

    # Subgradient defaults
    SUBGRADIENT_STEP0 = 0.05
    SUBGRADIENT_ITERS = 2000

    # Local-min certificate defaults
    LOCAL_MIN_RADIUS = 0.05
    LOCAL_MIN_GRID_STEP = 0.01

    LOG_LEVELS = {"error": "ERROR", "info": "INFO", "debug": "DEBUG"}

    @classmethod
    def log_level(cls) -> str:
        """Map RMDP_LOG (error|info|debug) to a logging level name."""
        return cls.LOG_LEVELS.get(str(cls.LOG_LEVEL).lower(), "INFO")
