"""Experiment services: fold plans, backends and the nested cross-validation."""

from src.services.backends import NetworkBackend, OracleBackend
from src.services.experiment import ExperimentService
from src.services.folds import make_fold_plan

__all__ = ["ExperimentService", "NetworkBackend", "OracleBackend", "make_fold_plan"]
