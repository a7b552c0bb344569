"""Crawl-log analysis toolkit for comparing web privacy protection techniques."""

__version__ = "0.1.0"
