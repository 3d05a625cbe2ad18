"""Stable-driven moderately interacting particles and their non-local conservation law."""
