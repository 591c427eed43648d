"""
Formatters module for marginclip
"""

from .report_formatter import ReportFormatter

__all__ = ["ReportFormatter"]
