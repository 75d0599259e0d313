import os
from enum import Enum
from typing import Literal, Optional
from pydantic_settings import BaseSettings, SettingsConfigDict
from dotenv import load_dotenv

class APP_ENV(Enum):
    dev = ".env"
    testing = ".test.env"
    staging = ".staging.env"
    prod = ".prod.env"

# Default to 'dev' if no env variable set
environment = os.getenv('APP_ENV', 'dev')

# Load the appropriate .env file based on the environment
dotenv_file = f'{APP_ENV[environment].value}'
load_dotenv(dotenv_path=dotenv_file)

class Settings(BaseSettings):
    """Ambient runtime settings. Experiment semantics live in the experiment config file."""
    LOG_DIR: str = "logs"
    LOG_LEVEL: str = "INFO"
    PARALLEL_BACKEND: Literal["local", "ray"] = "local"
    RAY_HEAD_ADDRESS: Optional[str] = None
    QP_DEBUG_DIR: Optional[str] = None
    EXACT_MAX_PARTICIPANTS: int = 20
    model_config = SettingsConfigDict(env_file=dotenv_file, extra="ignore")

env_variables = Settings()
