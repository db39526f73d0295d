import os
from dataclasses import dataclass
from typing import Any
from dotenv import load_dotenv

load_dotenv()

def get_config_value(key: str, default: Any) -> Any:
    """
    Retrieve configuration value with priority:
    1. Environment Variables (including a local .env)
    2. Default value
    """
    val = os.getenv(key)
    if val is not None:
        return val

    return default

@dataclass(frozen=True)
class Settings:
    # Application Settings
    log_level: str = str(get_config_value("LOG_LEVEL", "INFO")).strip()
    data_dir: str = str(get_config_value("DATA_DIR", "data")).strip()
    output_dir: str = str(get_config_value("OUTPUT_DIR", "runs")).strip()

    # uGMM layer: upper bound on B×M×N elements materialized at once
    chunk_elements: int = int(get_config_value("UGMM_CHUNK_ELEMENTS", "2000000"))

    # Gradient audits
    gradcheck_rtol: float = float(get_config_value("GRADCHECK_RTOL", "1e-6"))
    gradcheck_atol: float = float(get_config_value("GRADCHECK_ATOL", "1e-8"))
    gradcheck_step: float = float(get_config_value("GRADCHECK_STEP", "1e-5"))
    gradcheck_instances: int = int(get_config_value("GRADCHECK_INSTANCES", "100"))


settings = Settings()
