"""Batch figure generation from multiduel harness result CSVs."""

from plotviz.figures import (
    CSV_HEADER,
    NoDataError,
    SchemaError,
    ValidationError,
    plot_mode_timeline,
    plot_regret,
    read_rows,
)

__all__ = [
    "CSV_HEADER",
    "NoDataError",
    "SchemaError",
    "ValidationError",
    "plot_mode_timeline",
    "plot_regret",
    "read_rows",
]
