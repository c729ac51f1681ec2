"""
CSV Writer
==========
Plot-ready CSV for trajectories and adjoint paths. Reals carry 17
significant digits, '.' as decimal separator and '\\n' line endings.
"""

import csv
import math
from pathlib import Path
from typing import Iterable, TextIO, Union

from quenchlab.core.fields import eval_field, singular_distance
from quenchlab.core.integrator import Trajectory
from quenchlab.core.pmp import AdjointPath, nontriviality_ratio


TRAJECTORY_HEADER = ["t", "y1", "y2", "f1", "f2", "dist"]
ADJOINT_HEADER = ["t", "psi1", "psi2", "ratio"]


def format_real(value: float) -> str:
    """Locale-independent repr with 17 significant digits."""
    return format(float(value), ".17g")


def _rows(values: Iterable[Iterable[float]]):
    return ([format_real(v) for v in row] for row in values)


def write_trajectory_csv(traj: Trajectory, stream: TextIO) -> None:
    """
    Write t, y1, y2, the field value and the distance to the singular set.

    A final comment line records the quench estimate when there is one.
    """
    kind = traj.problem.field
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(TRAJECTORY_HEADER)

    def row(t, y):
        f = eval_field(kind, y)
        return [t, y[0], y[1], f[0], f[1], singular_distance(kind, y)]

    writer.writerows(_rows(row(t, y) for t, y in zip(traj.times, traj.states)))
    if traj.quench is not None:
        q = traj.quench
        stream.write(
            f"# t_hat={format_real(q.t_hat)} "
            f"bracket={format_real(q.bracket_lo)},{format_real(q.bracket_hi)}\n"
        )


def write_adjoint_csv(adj: AdjointPath, traj: Trajectory, stream: TextIO) -> None:
    """Write psi in increasing time with the nontriviality ratio along the trajectory."""
    kind = traj.problem.field
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(ADJOINT_HEADER)
    order = adj.times.argsort(kind="stable")

    def row(t, psi):
        ratio = nontriviality_ratio(kind, traj.state_at(float(t)), psi)
        return [t, psi[0], psi[1], ratio if math.isfinite(ratio) else math.nan]

    writer.writerows(_rows(row(adj.times[i], adj.psi[i]) for i in order))


def save_csv(path: Union[str, Path], writer, *args) -> Path:
    """Open `path` with '\\n' newlines and call writer(*args, stream)."""
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="") as stream:
        writer(*args, stream)
    return path
