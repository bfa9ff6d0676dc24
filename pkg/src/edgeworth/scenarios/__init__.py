"""Bundled scenario documents for the worked examples."""
