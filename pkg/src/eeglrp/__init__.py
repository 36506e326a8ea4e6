"""Attention-aware layer-wise relevance propagation for a miniature EEG Transformer."""
__version__ = "0.1.0"
