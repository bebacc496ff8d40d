from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    # Candidate equality: |a_i - b_i| <= eq_tol_abs + eq_tol_rel * max(|a_i|, |b_i|)
    eq_tol_abs: float = 1e-6
    eq_tol_rel: float = 1e-8

    # SESGC dynamics check ||x_next - A x - B u||_2 <= residual_tol
    residual_tol: float = 0.1

    # Multiplier on the shared SVD rank tolerance max(rows, cols) * sigma_max * eps
    rank_tol_scale: float = 1.0

    # Defeat-certificate checks
    defeat_tol_rel: float = 1e-8
    defeat_zero_tol: float = 1e-9
    max_defeat_families: int = 10000

    # Thread pool for per-subset solves (1 = serial)
    max_workers: int = 1

    # Reports
    float_digits: int = 12
    machine_report_timings: bool = False

    log_level: str = "INFO"

    model_config = SettingsConfigDict(
        env_file=".env",
        env_prefix="SECURESTATE_",
        case_sensitive=False,
        extra="ignore",
    )


settings = Settings()
