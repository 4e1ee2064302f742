from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class HarnessSettings(BaseSettings):
    model_config = SettingsConfigDict(env_prefix="ZOOPT_")

    output_dir: str = Field("runs", description="Directory where trace CSVs, summaries and sidecars are written")
    workers: int = Field(1, ge=1, description="Size of the worker pool used for independent runs")
    max_runs: int = Field(
        10_000, ge=1, description="Cap on sweep points x seeds for a single experiment"
    )
    log_level: str = Field("INFO", description="Root logging level for the CLI")
    lemma1_constant: float = Field(
        16.0, gt=0, description="Absolute constant C multiplying the momentum-error bound"
    )
    master_seed: int = Field(0, ge=0, description="Entropy of every per-run random substream")


harness_settings = HarnessSettings()
