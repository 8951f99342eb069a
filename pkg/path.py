"""Path utilities for the solver application."""

from pathlib import Path

import appdirs

APP_NAME = "spde-gkpinn"


def get_runs_directory() -> Path:
    """Get the default directory for run outputs (./runs)."""
    runs_dir = Path.cwd() / "runs"
    runs_dir.mkdir(parents=True, exist_ok=True)
    return runs_dir


def get_logs_directory() -> Path:
    """Get the directory for storing log files."""
    logs_dir = Path(appdirs.user_log_dir(APP_NAME))
    logs_dir.mkdir(parents=True, exist_ok=True)
    return logs_dir


def get_cache_directory() -> Path:
    """Get the directory for cached finite-difference references."""
    cache_dir = Path(appdirs.user_cache_dir(APP_NAME)) / "references"
    cache_dir.mkdir(parents=True, exist_ok=True)
    return cache_dir
