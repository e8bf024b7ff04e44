"""
API package for the sanitization designer.

This package contains the argparse command surface.
"""

from .cli import build_parser, run, main

__all__ = [
    "build_parser",
    "run",
    "main"
]
