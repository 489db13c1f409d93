from pydantic import Field, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict


class AppSettings(BaseSettings):
    """Application settings."""

    model_config = SettingsConfigDict(env_prefix="EXPERTBOUNDS_", env_file=".env", extra="ignore")

    APP_NAME: str = "Expert Boundary Testbed"

    LOG_LEVEL: str = "INFO"
    RUNS_DIR: str = "runs"
    EVAL_WORKERS: int = Field(default=1, ge=1, description="Threads used for per-query evaluation")

    SERVE_HOST: str = "127.0.0.1"
    SERVE_PORT: int = Field(default=8000, ge=1, le=65535)

    @field_validator("LOG_LEVEL")
    @classmethod
    def validate_log_level(cls, v: str) -> str:
        """Validate that the log level is one loguru understands."""
        level = v.strip().upper()
        if level not in {"TRACE", "DEBUG", "INFO", "SUCCESS", "WARNING", "ERROR", "CRITICAL"}:
            msg = f"EXPERTBOUNDS_LOG_LEVEL must be a loguru level name, got '{v}'."
            raise ValueError(msg)
        return level


settings = AppSettings()
