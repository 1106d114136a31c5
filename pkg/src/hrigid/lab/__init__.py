"""Experiment harness: map families, rigidity runs, growth suites and CLI."""
