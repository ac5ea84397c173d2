#!/usr/bin/env python
"""Command-line entry for the laboratory."""
import sys

from experiments.commands import main


if __name__ == '__main__':
    sys.exit(main())
