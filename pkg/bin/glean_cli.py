"""
GLEAN CLI entry point.

    glean_cli.py train --config experiments/desk.yaml
"""
import sys

from glean.cli import main

if __name__ == "__main__":
    sys.exit(main())
