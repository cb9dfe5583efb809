"""Orchestration layer: experiment protocol, run records, reports, CLI."""
