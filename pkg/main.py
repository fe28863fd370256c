# main.py

"""
Main entry point for HILONet.

Initializes logging and hands the command line to ``app.cli``.
"""

import sys

from app.cli import main as cli_main
from app.logger import setup_logging


def main():
    """
    Sets up logging and runs the requested subcommand.

    Exits with the subcommand's status code.
    """
    setup_logging()
    sys.exit(cli_main(sys.argv[1:]))


if __name__ == "__main__":
    main()
