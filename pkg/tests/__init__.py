"""Test suite for the fcam sampler, summaries and CLI."""
