"""Packaged sample trajectory and reference estimates."""
