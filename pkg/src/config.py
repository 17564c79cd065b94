from pydantic_settings import BaseSettings


class Settings(BaseSettings):
    # Stieltjes solver
    ETA_FLOOR: float = 1e-6
    DENSITY_FLOOR: float = 1e-10
    SOLVER_MAX_ITER: int = 500
    SOLVER_TOL: float = 1e-13
    NEWTON_SWITCH: float = 1e-4
    SOLVER_DAMPING: float = 0.5
    H_PRIME_FLOOR: float = 1e-8

    # Edge search
    EDGE_SCAN_POINTS: int = 2048
    POLE_MERGE_TOL: float = 1e-9
    BISECTION_TOL: float = 1e-13

    # Quantiles
    QUANTILE_NODES: int = 4096
    QUADRATURE_TOL: float = 1e-9

    # Model validation
    TAU_RATIO: float = 0.05
    TAU_SPECTRUM: float = 1e-3
    SPIKE_SEPARATION: float = 1e-3

    # Estimators
    SHRINK_EPS: float = 0.05
    RANK_OMEGA: float = 2.0
    RANK_EPS0: float = 0.1
    RANK_MAX: int = 20
    RANK_EDGE_OMEGA: float = 1.25
    RANK_ITERATIONS: int = 30
    MOMENT_COUNT: int = 8
    MOMENT_GRID: int = 64
    BULK_STIELTJES: str = "fitted"

    # Experiments
    DEFAULT_REPS_CURVES: int = 50
    DEFAULT_REPS_EIGVEC: int = 1000
    WORKERS: int = 1
    OUTPUT_DIR: str = "./results"

    # API
    API_HOST: str = "localhost"
    API_PORT: int = 8000

    model_config = {"env_file": ".env", "extra": "ignore"}


settings = Settings()
