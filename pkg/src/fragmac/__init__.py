from loguru import logger

# Disable logging by default for library usage.
# Application entry points (e.g., cli.py) should call logger.enable("fragmac") to enable logging.
logger.disable("fragmac")
