"""Settings, exceptions and logging setup."""
