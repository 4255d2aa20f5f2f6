import os

from pydantic import BaseSettings


class Settings(BaseSettings):
    threads: int = min(os.cpu_count() or 1, 8)
    log_level: str = "INFO"

    solver_tol: float = 1e-10
    solver_max_iter: int = 100_000

    psor_tol: float = 1e-9
    psor_max_iter: int = 100_000

    class Config:
        env_prefix = "HARNACK_LAB_"
