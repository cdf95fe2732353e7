"""Losses, optimiser and training loop."""
