from pydantic import AliasChoices, Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    model_config = SettingsConfigDict(env_prefix="LOWSWITCH_", env_file=".env", extra="ignore")

    service_name: str = "lowswitch-lsvi"
    log_level: str = Field("INFO", validation_alias=AliasChoices("LOWSWITCH_LOG", "LOWSWITCH_LOG_LEVEL"))
    refactor_interval: int = Field(512, ge=1)
    switch_tolerance: float = Field(1e-10, ge=0.0)
    local_switch_cap: int = Field(100_000, ge=1)
    output_dir: str = "results"


settings = Settings()
