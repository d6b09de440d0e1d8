from pydantic_settings import BaseSettings, SettingsConfigDict
from typing import List, Optional


class Settings(BaseSettings):
    # Application Configuration
    app_name: str = "Switching Structure Detector"
    app_version: str = "1.0.0"
    debug: bool = False
    environment: str = "development"
    log_level: str = "INFO"

    # Band grid defaults
    grid_kappa: float = 0.04
    grid_upper: float = 50.0
    grid_points: int = 512

    # Numerics
    quad_tol: float = 1e-8
    quad_limit: int = 200
    quad_tail_sigmas: float = 8.0
    root_xtol: float = 1e-14
    root_scan_points: int = 4000
    pdf_floor: float = 1e-300
    ill_conditioned_floor: float = 1e-14
    eps_min: float = 1e-6
    max_condition: float = 1e12

    # Peeling
    min_subsample: int = 20
    max_peel_iter: int = 10

    # Monte Carlo harness
    workers: int = 1
    default_trials: int = 1000
    master_seed: int = 20240501
    calibration_store_url: str = "sqlite:///./calibration.db"
    calibration_store_export: Optional[str] = None

    # HTTP API
    api_host: str = "0.0.0.0"
    api_port: int = 8000
    allowed_origins: List[str] = ["http://localhost:3000"]

    model_config = SettingsConfigDict(env_file=".env", case_sensitive=False)


settings = Settings()
