"""Figures for accuracy-versus-privacy summary CSVs."""
from .render import (EXPECTED_COLUMNS, FigureSpec, SummaryError, SummaryRow,
                     read_summary, render)

__version__ = "0.1.0"
