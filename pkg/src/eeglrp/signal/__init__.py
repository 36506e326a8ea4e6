"""Recordings, filters, synthetic generators and task construction."""
