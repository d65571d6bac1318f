"""Classify site pages as index or content pages and measure how well the
chosen index pages seed the collection of newly published pages."""

__version__ = "0.1.0"
