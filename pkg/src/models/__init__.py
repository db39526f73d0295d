"""Configuration models and parameter containers."""
