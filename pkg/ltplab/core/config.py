import os
from dotenv import load_dotenv
from pathlib import Path

BASE_DIR = Path(__file__).resolve().parent.parent.parent
CONFIG_DIR = BASE_DIR / "configs"
DEFAULT_CONFIG = CONFIG_DIR / "default.toml"

load_dotenv()


class Settings:
    def __init__(self):
        self.OUTPUT_DIR = Path(os.getenv("LTPLAB_OUTPUT_DIR", "runs"))
        self.LOG_DIR = Path(os.getenv("LTPLAB_LOG_DIR", "logs"))
        self.LOG_LEVEL = os.getenv("LTPLAB_LOG_LEVEL", "INFO").upper()
        self.WORKERS = self._get_workers()

    def _get_workers(self):
        raw = os.getenv("LTPLAB_WORKERS", "1")
        try:
            return max(1, int(raw))
        except ValueError:
            return 1


settings = Settings()
