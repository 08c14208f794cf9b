from __future__ import annotations

import logging
from typing import Optional

from config.settings import settings

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def setup_logging(level: Optional[str] = None) -> None:
    """Configure root logging once; an explicit level overrides LOG_LEVEL."""
    logging.basicConfig(level=(level or settings.LOG_LEVEL).upper(), format=LOG_FORMAT)
    # joblib workers are chatty at INFO
    logging.getLogger("joblib").setLevel(logging.WARNING)
