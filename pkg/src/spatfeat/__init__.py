"""Spatial state-action features for board games.

Walk-based feature patterns that transfer across board geometries, four
exactly-equivalent evaluation backends, and self-play training with
feature discovery. See the module table in README.md for a map.
"""
