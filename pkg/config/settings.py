import os

from pydantic_settings import BaseSettings, SettingsConfigDict

# Resolve project root and absolute path to .env regardless of CWD
PROJECT_ROOT = os.path.abspath(os.path.join(os.path.dirname(__file__), os.pardir))
ENV_FILE = os.path.join(PROJECT_ROOT, ".env")


class Settings(BaseSettings):
    """
    Central configuration for the PC-DAG estimation toolkit.

    Values are loaded from environment variables and optionally from a local .env file
    (not committed). Command-line flags override everything defined here.
    """

    # Default master seed; --seed on the command line wins
    PCDAG_SEED: int = 0

    LOG_LEVEL: str = "INFO"

    # Where CLI runs write their artifacts when --out-dir is omitted
    OUTPUT_DIR: str = "runs"

    # PC-DAG: number of DAGs sampled from the estimated CPDAG and averaged
    N_DAGS: int = 10

    # Glasso solver
    GLASSO_TOL: float = 1e-4
    GLASSO_MAX_ITER: int = 100

    # OGK initial estimator
    OGK_ITERATIONS: int = 2
    OGK_PSD_FLOOR: float = 1e-8

    # Tuning and benchmarking
    CV_FOLDS: int = 10
    BENCHMARK_JOBS: int = 1
    ALPHA_GRID: list[float] = [0.0005, 0.001, 0.005, 0.01, 0.05, 0.1, 0.2, 0.3]
    LAMBDA_GRID_SIZE: int = 20
    LAMBDA_GRID_RATIO: float = 1e-2

    # ignore unrelated env keys so they don't raise ValidationError
    model_config = SettingsConfigDict(env_file=ENV_FILE, env_file_encoding="utf-8", extra="ignore")


settings = Settings()
