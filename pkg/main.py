"""
Main script for synthesizing coupling proofs
"""
import sys

from couplesynth.cli import main

if __name__ == "__main__":
    sys.exit(main())
