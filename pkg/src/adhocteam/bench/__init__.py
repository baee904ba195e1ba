"""Benchmark suite, episode runner, metrics and CLI."""
