"""Per-step trace CSVs shared by the ensemble filter and the Kalman baseline.

Columns: ``k``, estimate components, true state components (when known),
``posterior_1..posterior_M`` (ensemble runs), ``ess`` (particle runs). All
floats are written with 17 significant digits so files round-trip exactly.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .errors import ContractViolationError


def fmt17(value) -> str:
    """Full-precision decimal rendering of a float."""
    return format(float(value), ".17g")


def write_trace(path, steps, estimates, true_states=None, posteriors=None, ess=None) -> None:
    path = Path(path)
    steps = np.asarray(steps)
    estimates = np.atleast_2d(np.asarray(estimates, dtype=np.float64))
    t_total = estimates.shape[0]
    if steps.shape[0] != t_total:
        raise ContractViolationError("steps and estimates disagree on length")
    header = ["k"] + [f"est_x{i}" for i in range(estimates.shape[1])]
    columns = [estimates]
    if true_states is not None:
        true_states = np.atleast_2d(np.asarray(true_states, dtype=np.float64))
        if true_states.shape != estimates.shape:
            raise ContractViolationError("true states and estimates disagree on shape")
        header += [f"true_x{i}" for i in range(true_states.shape[1])]
        columns.append(true_states)
    if posteriors is not None:
        posteriors = np.asarray(posteriors, dtype=np.float64)
        if posteriors.shape[0] != t_total:
            raise ContractViolationError("posteriors and estimates disagree on length")
        header += [f"posterior_{m + 1}" for m in range(posteriors.shape[1])]
        columns.append(posteriors)
    if ess is not None:
        ess = np.asarray(ess, dtype=np.float64)
        if ess.shape[0] != t_total:
            raise ContractViolationError("ess and estimates disagree on length")
        header.append("ess")
        columns.append(ess[:, None])
    block = np.hstack(columns)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for t in range(t_total):
            writer.writerow([str(int(steps[t]))] + [fmt17(v) for v in block[t]])


def read_trace(path) -> dict[str, np.ndarray]:
    """Columns of a trace CSV keyed by header name."""
    with open(Path(path), newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = np.array([row for row in reader], dtype=np.float64)
    if rows.size == 0:
        rows = rows.reshape(0, len(header))
    return {name: rows[:, i] for i, name in enumerate(header)}
