"""Experiment harness: Monte Carlo sweeps, rate reports, real-data pipeline, CLI."""

from __future__ import annotations

from dpfda.bench.experiments import ExperimentSpec, load_specs, run_monte_carlo, setting1, setting2
from dpfda.bench.rates import phase_region, rate_table
from dpfda.bench.realdata import export_csv, ingest_csv, real_data_pipeline

__all__ = [
    "ExperimentSpec",
    "export_csv",
    "ingest_csv",
    "load_specs",
    "phase_region",
    "rate_table",
    "real_data_pipeline",
    "run_monte_carlo",
    "setting1",
    "setting2",
]
