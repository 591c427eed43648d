"""Unit tests for marginclip modules."""
