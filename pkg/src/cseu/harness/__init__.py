"""Experiment configuration, statistics, experiments, validation suite and CLI."""
