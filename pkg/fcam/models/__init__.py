"""Pydantic schemas and numpy-backed domain types."""
