"""Synthetic road scenes and dataset builders."""
