"""File formats and run configuration."""
