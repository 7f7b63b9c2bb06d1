"""Config-driven experiment harness built on the library modules."""

from .runner import REGISTRY, run_experiment, run_all, save_outputs

__all__ = ["REGISTRY", "run_experiment", "run_all", "save_outputs"]
