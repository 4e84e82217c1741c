import logging
import os

_configured = False


def setup_logging(level: str = "INFO", log_dir: str = "logs"):
    global _configured
    if _configured:
        return

    os.makedirs(log_dir, exist_ok=True)

    logging.basicConfig(
        level=getattr(logging, level, logging.INFO),
        format="%(asctime)s | %(levelname)s | %(name)s | %(message)s",
        handlers=[
            logging.FileHandler(os.path.join(log_dir, "ltplab.log")),
            logging.StreamHandler()
        ]
    )
    _configured = True
