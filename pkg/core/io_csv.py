"""CSV I/O for training histories, solution grids, reference caches and summary tables."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from io import StringIO
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
import pandas as pd

from .fdref import ReferenceSolution
from .problems import ProblemKind
from .training import HistoryRow

logger = logging.getLogger(__name__)

HISTORY_COLUMNS = ["iter", "loss_ic", "loss_bc", "loss_r", "loss_total", "l2_test"]
SUMMARY_COLUMNS = ["example", "problem", "mode", "epsilon", "loss_total", "l2_test", "status"]
MISSING_L2 = "x"


def history_to_dataframe(history: List[HistoryRow]) -> pd.DataFrame:
    """Convert history rows to a DataFrame with the history.csv columns."""
    if not history:
        return pd.DataFrame(columns=HISTORY_COLUMNS)
    return pd.DataFrame(
        {
            "iter": [row.iteration for row in history],
            "loss_ic": [row.l_ic for row in history],
            "loss_bc": [row.l_bc for row in history],
            "loss_r": [row.l_r for row in history],
            "loss_total": [row.total for row in history],
            "l2_test": [np.nan if row.l2_test is None else row.l2_test for row in history],
        }
    )


def save_history(filepath: Union[str, Path], history: List[HistoryRow]) -> None:
    """
    Save training history; l2_test is left blank where it was not evaluated.

    Args:
        filepath: Destination CSV
        history: Recorded rows
    """
    df = history_to_dataframe(history)
    with open(filepath, "w", encoding="utf-8", newline="") as f:
        df.to_csv(f, index=False, float_format="%.12e", na_rep="")


def load_history(filepath: Union[str, Path]) -> pd.DataFrame:
    """Load a history.csv; blank l2_test cells become NaN."""
    path = Path(filepath)
    if not path.exists():
        raise FileNotFoundError(f"History file not found: {path}")
    df = pd.read_csv(path)
    missing = [col for col in HISTORY_COLUMNS if col not in df.columns]
    if missing:
        raise ValueError(f"Missing required columns: {missing}")
    return df


def save_grid(
    filepath: Union[str, Path],
    frame: pd.DataFrame,
    metadata: Optional[Dict[str, object]] = None,
) -> None:
    """
    Save a grid dump, optionally preceded by `# key: value` metadata lines.

    Args:
        filepath: Destination CSV
        frame: Coordinates and values, one row per grid node
        metadata: Header entries
    """
    with open(filepath, "w", encoding="utf-8", newline="") as f:
        if metadata:
            for key, value in metadata.items():
                f.write(f"# {key}: {value}\n")
        frame.to_csv(f, index=False, float_format="%.16e")


def load_grid(filepath: Union[str, Path]) -> Tuple[pd.DataFrame, Dict[str, str]]:
    """
    Load a grid dump.

    Returns:
        Tuple of (frame, metadata) with metadata values as strings
    """
    path = Path(filepath)
    if not path.exists():
        raise FileNotFoundError(f"Grid file not found: {path}")
    with open(path, "r", encoding="utf-8") as f:
        lines = f.readlines()

    metadata = {}
    data_start = 0
    for i, line in enumerate(lines):
        stripped = line.strip()
        if stripped.startswith("#"):
            if ":" in stripped:
                key, value = stripped[1:].split(":", 1)
                metadata[key.strip()] = value.strip()
        else:
            data_start = i
            break

    frame = pd.read_csv(StringIO("".join(lines[data_start:])))
    return frame, metadata


def save_reference(filepath: Union[str, Path], reference: ReferenceSolution) -> None:
    """Write a finite-difference solution as a grid dump with its mesh metadata."""
    names = ["x", "t"] if reference.kind == ProblemKind.TIME_1D else ["x", "y"]
    frame = pd.DataFrame(reference.grid_points(), columns=names[: reference.dim])
    frame["u_ref"] = reference.grid_values()
    metadata = {
        "problem": reference.problem,
        "kind": reference.kind.value,
        "epsilon": repr(reference.epsilon),
        "scheme": reference.scheme.value,
    }
    metadata.update({key: repr(value) for key, value in reference.meta.items()})
    save_grid(filepath, frame, metadata)
    logger.debug(f"Saved reference grid {frame.shape[0]} rows to {filepath}")


def load_reference(filepath: Union[str, Path]) -> ReferenceSolution:
    """Read a grid dump written by `save_reference`."""
    frame, metadata = load_grid(filepath)
    required = ["problem", "kind", "epsilon", "scheme"]
    missing = [key for key in required if key not in metadata]
    if missing:
        raise ValueError(f"Reference file {filepath} lacks metadata: {missing}")

    coords = [col for col in frame.columns if col != "u_ref"]
    x = np.unique(frame[coords[0]].to_numpy())
    if len(coords) == 1:
        axes = [x]
        values = frame["u_ref"].to_numpy()
    else:
        second = np.unique(frame[coords[1]].to_numpy())
        axes = [x, second]
        # rows are second-coordinate outer, x inner
        values = frame["u_ref"].to_numpy().reshape(second.shape[0], x.shape[0]).T.copy()

    meta = {key: float(value) for key, value in metadata.items() if key not in required}
    return ReferenceSolution(
        problem=metadata["problem"],
        kind=metadata["kind"],
        epsilon=float(metadata["epsilon"]),
        axes=axes,
        values=values,
        scheme=metadata["scheme"],
        meta=meta,
    )


@dataclass
class SummaryRow:
    """One line of the experiment matrix table."""

    example: str
    problem: str
    mode: str
    epsilon: float
    loss_total: Optional[float] = None
    l2_test: Optional[float] = None
    status: str = "ok"


def summary_to_dataframe(rows: List[SummaryRow]) -> pd.DataFrame:
    """Matrix table; missing test errors are written as 'x'."""
    if not rows:
        return pd.DataFrame(columns=SUMMARY_COLUMNS)
    return pd.DataFrame(
        {
            "example": [row.example for row in rows],
            "problem": [row.problem for row in rows],
            "mode": [row.mode for row in rows],
            "epsilon": [f"{row.epsilon:.0e}" for row in rows],
            "loss_total": [
                "" if row.loss_total is None else f"{row.loss_total:.3e}" for row in rows
            ],
            "l2_test": [MISSING_L2 if row.l2_test is None else f"{row.l2_test:.3e}" for row in rows],
            "status": [row.status for row in rows],
        }
    )


def save_summary(filepath: Union[str, Path], rows: List[SummaryRow]) -> None:
    """Write the experiment matrix table (header only when there are no rows)."""
    df = summary_to_dataframe(rows)
    with open(filepath, "w", encoding="utf-8", newline="") as f:
        df.to_csv(f, index=False)
