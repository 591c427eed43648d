"""Test package for marginclip."""
