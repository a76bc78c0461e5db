"""
Process-level settings read from the environment

Every value has a default; override with the matching NMPC_* variable.
"""

import logging
import os

LOG_LEVEL = os.environ.get("NMPC_LOG_LEVEL", "INFO")
OUTPUT_DIR = os.environ.get("NMPC_OUTPUT_DIR", "./nmpc_results")
SAMPLE_PERIOD = float(os.environ.get("NMPC_SAMPLE_PERIOD", "0.01"))
WORKERS = int(os.environ.get("NMPC_WORKERS", "1"))

# Socket mode
SOCKET_TIMEOUT = float(os.environ.get("NMPC_SOCKET_TIMEOUT", "0.005"))
MAX_DATAGRAM = int(os.environ.get("NMPC_MAX_DATAGRAM", "65507"))
RETRY_TOTAL = int(os.environ.get("NMPC_RETRY_TOTAL", "5"))
RETRY_BACKOFF = float(os.environ.get("NMPC_RETRY_BACKOFF", "0.2"))

LOG_FORMAT = '%(asctime)s.%(msecs)03d [%(levelname)s] %(message)s'
LOG_DATEFMT = '%Y-%m-%d %H:%M:%S'


def configure_logging(level=None):
    """Configure the root logger the same way for every entry point"""
    logging.basicConfig(
        level=getattr(logging, (level or LOG_LEVEL).upper(), logging.INFO),
        format=LOG_FORMAT,
        datefmt=LOG_DATEFMT,
    )
