# Please see README.md for a list of supported environment variables as well
# as their semantics.

# NOTE: this file is an example for local experiments. Point RELUDEPTH_PYENV
# at a copy of it to use it.

import os
RELUDEPTH_WORKERS = os.cpu_count() or 1
RELUDEPTH_OUTPUT_DIR = "results"
# RELUDEPTH_EVAL_CHUNK = 2048
# RELUDEPTH_LOGGING_CONFIG = "logging.toml"
# RELUDEPTH_DEBUG = True
