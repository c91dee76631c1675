"""Command modules, one per CLI verb."""
