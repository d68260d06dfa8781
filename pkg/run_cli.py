#!/usr/bin/env python3
"""
Simple script to run the conclique goodness-of-fit command line.
"""
import os
import sys

# Add parent directory to path
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from conclique_gof.cli import main

if __name__ == "__main__":
    sys.exit(main())
