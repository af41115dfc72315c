"""Core kernel: configuration, models, errors and the trend gate."""
