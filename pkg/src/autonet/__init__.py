"""Deterministic simulation of a dual-driven multi-agent orchestrator
running preemptive service assurance and self-healing on a simulated 5G core."""

__version__ = "0.1.0"
