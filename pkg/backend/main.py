"""
Entry point of the sanitization designer command line.

Usage:
    python -m backend.main check-asup data/fixtures/no_prior_3x2.json
    python -m backend.main construct data/fixtures/no_prior_3x2.json --eps 5
    python -m backend.main simulate --figure 1 --seed 7
"""

import sys

from dotenv import load_dotenv

# Load environment variables from the .env file before settings are read
load_dotenv()

from backend.api.cli import main  # noqa: E402

if __name__ == "__main__":
    sys.exit(main())
