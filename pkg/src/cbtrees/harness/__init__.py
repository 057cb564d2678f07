"""Reproducible Monte Carlo experiments, statistics and file output."""
from .experiments import ExperimentConfig, ExperimentResult, run
from .rng import rng_stream, splitmix64, stream_id
from .stats import chi_square_gof, ks_critical, ks_one_sample, ks_two_sample

__all__ = ["ExperimentConfig", "ExperimentResult", "run", "rng_stream", "splitmix64",
           "stream_id", "chi_square_gof", "ks_critical", "ks_one_sample", "ks_two_sample"]
