"""
Main entry point for marginclip CLI tool
"""

from .cli import app

if __name__ == "__main__":
    app()
