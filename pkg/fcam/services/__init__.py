"""Statistical operations and orchestration services."""
