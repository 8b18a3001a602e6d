"""
pybrach entry point.

Run with: poetry run pybrach <command> (or python -m pybrach)
"""

import sys

from .cli.main import run


def main():
    """Main entry point for pybrach."""
    sys.exit(run())


if __name__ == "__main__":
    main()
