"""Anchor head, equal-width refinement, evaluation and the scene pipeline."""
