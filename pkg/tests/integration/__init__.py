"""Integration tests for marginclip."""
