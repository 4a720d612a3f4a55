"""Artifact formats: feature blocks, lane/camera/pose JSON, checkpoints and plots."""
