"""Configuration, persistence and orchestration."""
