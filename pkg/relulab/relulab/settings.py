"""
Settings for the relulab project.

Values come from the environment, optionally seeded from a `.env` file next
to this package's parent directory. See `.env.example` for the full list.
"""

from pathlib import Path
import os
from dotenv import load_dotenv

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent

# Load environment variables from .env file
load_dotenv(BASE_DIR / '.env')


# Where cmd_simulate / cmd_sweep write when the config gives a relative path
OUTPUT_DIR = Path(os.getenv('RELULAB_OUTPUT_DIR', 'runs'))

LOG_LEVEL = os.getenv('RELULAB_LOG_LEVEL', 'INFO')

# Worker processes for seed sweeps and Monte-Carlo block evaluation
WORKERS = int(os.getenv('RELULAB_WORKERS', '1'))

DEFAULT_SEED = int(os.getenv('RELULAB_DEFAULT_SEED', '1'))

# Kinks closer than this are merged into one breakpoint
KINK_TOLERANCE = 1e-14

# |x - y| <= ABS_TOL + rtol * max(|x|, |y|)
ABS_TOL = 1e-12
