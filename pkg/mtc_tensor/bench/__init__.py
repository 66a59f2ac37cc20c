"""Synthetic benchmarks, reference baselines and factor forecasting."""
