"""
Entry point for lame-spectral.

This module provides the main entry point that delegates to the package's CLI.
"""

from src.lame_spectral.main import cli

if __name__ == "__main__":
    cli()
