#!/usr/bin/env python3
"""
Script to regenerate the four randomized figure tables.

Writes figure_1.csv .. figure_4.csv under data/figures/ (or the directory
given as the first argument). Pass --paper-scale for N=72, L=12 and 100 trials;
the default desk scale finishes in minutes.
"""

import sys
import time
from pathlib import Path

# Add the project root to the Python path
project_root = Path(__file__).parent.parent.parent
sys.path.insert(0, str(project_root))

from backend.core.config import setup_logging
from backend.models import ExperimentSpec
from backend.services.experiment_runner import run_figure, write_figure_csv
import logging

logger = logging.getLogger(__name__)


def main():
    """Run every figure and write its table."""
    setup_logging()
    args = [a for a in sys.argv[1:] if not a.startswith('--')]
    paper_scale = '--paper-scale' in sys.argv[1:]
    output_dir = Path(args[0]) if args else project_root / "data" / "figures"
    preset = ExperimentSpec.paper_scale if paper_scale else ExperimentSpec.desk_scale

    try:
        for figure in (1, 2, 3, 4):
            started = time.perf_counter()
            spec = preset(figure)
            frame = run_figure(figure, spec)
            path = write_figure_csv(frame, output_dir / f"figure_{figure}.csv")
            logger.info(f"Figure {figure}: {len(frame)} rows in {time.perf_counter() - started:.1f}s -> {path}")

        logger.info("All figure tables written")
        return True

    except Exception as e:
        logger.error(f"Figure regeneration failed: {e}")
        return False


if __name__ == "__main__":
    success = main()
    sys.exit(0 if success else 1)
