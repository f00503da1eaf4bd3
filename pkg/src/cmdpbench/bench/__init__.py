"""Experiment driver: suite names, seeded runs, metrics, CSV and SVG output."""
from .metrics import (CSV_COLUMNS, STEP_LOG_COLUMNS, SUMMARY_COLUMNS, CostCounter, MetricsRow,
                      append_row, compute_metrics, emit_summary, read_rows, write_header)
from .plot import METRICS, aggregate, emit_plot, render_svg
from .runner import RunConfig, SeedResult, run_experiment, run_seed
from .suite import SuiteError, SuiteId, all_suites, format_suite, parse_suite
