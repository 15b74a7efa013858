from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    log: str = "WARNING"
    seed: int = 20190601
    jobs: int = 1

    # Decision thresholds
    decision_tol: float = 1e-7
    inconclusive_tol: float = 1e-5
    detect_tol: float = 1e-9
    psd_tol: float = 1e-10
    channel_tol: float = 1e-9

    # Interior-point solver
    sdp_gap_tol: float = 1e-8
    sdp_feas_tol: float = 1e-9
    sdp_max_iter: int = 200

    verify_samples: int = 50

    model_config = SettingsConfigDict(env_prefix="WITNESSKIT_", env_file=".env", extra="ignore")


settings = Settings()
