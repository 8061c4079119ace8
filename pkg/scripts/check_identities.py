#!/usr/bin/env python3
"""Print the residual cross-covariance identity checks and exit nonzero on failure."""
import sys

from factor_residuals.cli import main as cli_main

if __name__ == "__main__":
    sys.exit(cli_main(["verify", *sys.argv[1:]]))
