from __future__ import annotations

from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    model_config = SettingsConfigDict(env_prefix="BLOCKMIX_", extra="ignore")

    # Run-config YAML used when --config is not given.
    config_path: str | None = None
