from src.data.processing import DatasetProcessor
from src.reporting.generator import ReportGenerator
from src.services.experiment import ExperimentService
from src.utils.config import (
    MANIFEST_COLUMNS,
    METHODS,
    PUBLISHED_TABLE1,
    WEIGHT_DECAY_GRID,
)
from src.utils.models import FoldPlan, MethodResult, RunConfig, Sample
from src.version import VERSION

__all__ = [
    "MANIFEST_COLUMNS",
    "METHODS",
    "PUBLISHED_TABLE1",
    "VERSION",
    "WEIGHT_DECAY_GRID",
    "DatasetProcessor",
    "ExperimentService",
    "FoldPlan",
    "MethodResult",
    "ReportGenerator",
    "RunConfig",
    "Sample",
]
