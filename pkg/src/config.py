"""Bounds-Constrained Bernstein FEM - Configuration"""

import os
from dotenv import load_dotenv

load_dotenv()


def _env_bool(name: str, default: str = "false") -> bool:
    return os.getenv(name, default).strip().lower() in ("1", "true", "yes", "on")


class Config:
    """Application configuration from environment variables."""

    # Variational inequality solver
    VI_TOL: float = float(os.getenv("BVI_TOL", "1e-8"))
    VI_MAX_ITER: int = int(os.getenv("BVI_MAX_ITER", "200"))
    VI_ACTIVE_TOL: float = float(os.getenv("BVI_ACTIVE_TOL", "1e-12"))
    VI_MAX_HALVINGS: int = int(os.getenv("BVI_MAX_HALVINGS", "30"))

    # Sparse linear algebra
    LINEAR_RTOL: float = float(os.getenv("BVI_LINEAR_RTOL", "1e-10"))

    # Assembly
    PARALLEL_ASSEMBLY: bool = _env_bool("BVI_PARALLEL_ASSEMBLY")
    ASSEMBLY_CHUNK: int = int(os.getenv("BVI_ASSEMBLY_CHUNK", "4096"))
    ASSEMBLY_WORKERS: int = int(os.getenv("BVI_ASSEMBLY_WORKERS", "4"))

    # Sup-norm sampling: lattice density is FACTOR*k + 1 per cell
    SAMPLING_DENSITY_FACTOR: int = int(os.getenv("BVI_SAMPLING_DENSITY_FACTOR", "4"))

    # Output
    OUTPUT_DIR: str = os.getenv("BVI_OUTPUT_DIR", "results")
    LOG_LEVEL: str = os.getenv("BVI_LOG_LEVEL", "INFO").upper()

    @classmethod
    def validate(cls) -> list[str]:
        """Validate configuration. Returns list of problems found."""
        problems = []
        if cls.VI_TOL <= 0:
            problems.append("BVI_TOL must be positive")
        if cls.VI_MAX_ITER < 1:
            problems.append("BVI_MAX_ITER must be at least 1")
        if cls.VI_ACTIVE_TOL < 0:
            problems.append("BVI_ACTIVE_TOL must be nonnegative")
        if cls.LINEAR_RTOL <= 0:
            problems.append("BVI_LINEAR_RTOL must be positive")
        if cls.ASSEMBLY_CHUNK < 1 or cls.ASSEMBLY_WORKERS < 1:
            problems.append("BVI_ASSEMBLY_CHUNK and BVI_ASSEMBLY_WORKERS must be positive")
        if cls.SAMPLING_DENSITY_FACTOR < 1:
            problems.append("BVI_SAMPLING_DENSITY_FACTOR must be positive")
        if cls.LOG_LEVEL not in ("DEBUG", "INFO", "WARNING", "ERROR"):
            problems.append(f"Unknown BVI_LOG_LEVEL: {cls.LOG_LEVEL}")
        return problems


config = Config()
