"""Reduced-order surrogate for legged locomotion on granular media."""
