from .config import RunConfig, load_config
from .driver import ComparisonTable, compare, run, run_many
from .metrics import MetricsRecord
from .streamio import read_stream, write_stream
from .validate import ValidationReport, validate

__all__ = ["RunConfig", "load_config", "ComparisonTable", "compare", "run", "run_many",
           "MetricsRecord", "read_stream", "write_stream", "ValidationReport", "validate"]
