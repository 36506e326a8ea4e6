"""Optimizers, losses, metrics, training loops and experiment runners."""
