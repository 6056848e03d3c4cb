"""
Artifact export: traces, reports and plot data.

Floats are written with 17 significant digits so every exported number
parses back to the identical double.

Author: Dr. Sofia Lindqvist
Date: 2024-03-01
"""

import json
import math
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
import structlog
from scipy.spatial import ConvexHull, QhullError

from ..certification.errors import ExportError
from ..certification.tuning import TuningStep
from .fsm import Mode
from .pipeline import CertificateReport
from .simulator import SimulationTrace

logger = structlog.get_logger(__name__)

FLOAT_FORMAT = "%.17g"
ELLIPSE_POINTS = 181
QUADROTOR_PLANES: Tuple[Tuple[str, int, int], ...] = (
    ("x-z", 0, 2),
    ("y-z", 1, 2),
    ("roll-pitch", 3, 4),
)

PathLike = Union[str, Path]


def _write_frame(frame: pd.DataFrame, path: PathLike) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    except OSError as exc:
        raise ExportError(f"cannot write {path}: {exc}") from exc
    logger.debug("csv_written", path=str(path), rows=len(frame))
    return path


def _jsonable(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, Mode):
        return value.value
    raise TypeError(f"cannot serialize {type(value).__name__}")


def write_trace(trace: SimulationTrace, path: PathLike) -> Path:
    """Trace CSV: t,mode,x0..,u0..,attack,V,event."""
    return _write_frame(trace.to_frame(), path)


def write_report(report: Dict, path: PathLike) -> Path:
    """Structured report as JSON; non-finite floats become null."""
    path = Path(path)
    try:
        text = json.dumps(_finite(report), indent=2, default=_jsonable, allow_nan=False)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text + "\n", encoding="utf-8")
    except OSError as exc:
        raise ExportError(f"cannot write {path}: {exc}") from exc
    logger.debug("report_written", path=str(path))
    return path


def read_report(path: PathLike) -> Dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ExportError(f"cannot read {path}: {exc}") from exc


def _finite(value):
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if isinstance(value, dict):
        return {key: _finite(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [_finite(item) for item in value]
    return value


def write_tuning_log(log: List[TuningStep], path: PathLike) -> Path:
    columns = ["step", "epsilon", "lower", "upper", "T_UC", "T_SC_bound", "feasible"]
    frame = pd.DataFrame([step.as_dict() for step in log], columns=columns)
    frame["lower"] = frame["lower"].map(json.dumps)
    frame["upper"] = frame["upper"].map(json.dumps)
    return _write_frame(frame, path)


def ellipse_projection(Q: np.ndarray, level: float, i: int, j: int,
                       points: int = ELLIPSE_POINTS) -> np.ndarray:
    """Boundary of the projection of {x : x^T Q^-1 x <= level} onto (x_i, x_j)."""
    block = level * Q[np.ix_([i, j], [i, j])]
    L = np.linalg.cholesky(0.5 * (block + block.T))
    angle = np.linspace(0.0, 2.0 * math.pi, points)
    return (L @ np.vstack([np.cos(angle), np.sin(angle)])).T


def hull_projection(vertices: np.ndarray, i: int, j: int) -> np.ndarray:
    """Convex hull of the vertices projected onto (x_i, x_j), closed loop."""
    planar = vertices[:, [i, j]]
    try:
        hull = ConvexHull(planar)
    except QhullError:
        return planar[[0]]
    ring = planar[hull.vertices]
    return np.vstack([ring, ring[:1]])


def _planes(n: int) -> Sequence[Tuple[str, int, Optional[int]]]:
    if n == 12:
        return QUADROTOR_PLANES
    if n >= 2:
        return (("x0-x1", 0, 1),)
    return (("x0", 0, None),)


def projection_frame(certificate: CertificateReport) -> pd.DataFrame:
    """E_C, E_eps and R+(T_UC) projected on the plot planes."""
    Q = certificate.Q
    n = Q.shape[0]
    timing = certificate.timing
    records = []
    reach = None
    if timing.offsets is not None and len(timing.offsets):
        reach = timing.vertices_at(len(timing.offsets) - 1)

    for plane, i, j in _planes(n):
        if j is None:
            for name, level in (("E_C", 1.0), ("E_eps", certificate.epsilon)):
                r = math.sqrt(level * Q[i, i])
                records += [(name, plane, 0, -r, 0.0), (name, plane, 1, r, 0.0)]
            if reach is not None:
                records += [("reach_T_UC", plane, 0, float(reach[:, i].min()), 0.0),
                            ("reach_T_UC", plane, 1, float(reach[:, i].max()), 0.0)]
            continue
        for name, level in (("E_C", 1.0), ("E_eps", certificate.epsilon)):
            for order, (a, b) in enumerate(ellipse_projection(Q, level, i, j)):
                records.append((name, plane, order, a, b))
        if reach is not None:
            for order, (a, b) in enumerate(hull_projection(reach, i, j)):
                records.append(("reach_T_UC", plane, order, a, b))
    return pd.DataFrame(records, columns=["set", "plane", "order", "a", "b"])


def position_frame(trace: SimulationTrace, labels: Optional[Sequence[str]] = None) -> pd.DataFrame:
    """Position-like states over time with the mode label."""
    count = min(3, trace.n)
    labels = list(labels or [f"x{i}" for i in range(count)])[:count]
    if not trace.times:
        return pd.DataFrame(columns=["t", "mode", *labels, "V"])
    states = np.vstack(trace.states)[:, :count]
    frame = pd.DataFrame(states, columns=labels)
    frame.insert(0, "mode", [mode.value for mode in trace.modes])
    frame.insert(0, "t", trace.times)
    frame["V"] = trace.values
    return frame


def timeline_frame(trace: SimulationTrace) -> pd.DataFrame:
    """Mode bands: contiguous intervals of equal (mode, attacked)."""
    records = []
    for t, mode, attacked in zip(trace.times, trace.modes, trace.attacks):
        key = (mode.value, int(attacked))
        if records and (records[-1][2], records[-1][3]) == key:
            records[-1][1] = t + trace.dt
        else:
            records.append([t, t + trace.dt, key[0], key[1]])
    for record in records:
        record[1] = round(record[1], 12)
    return pd.DataFrame(records, columns=["start", "end", "mode", "attacked"])


def write_plot_data(
    certificate: CertificateReport,
    trace: SimulationTrace,
    out_dir: PathLike,
    labels: Optional[Sequence[str]] = None
) -> List[Path]:
    """Write projections.csv, positions.csv and timeline.csv into out_dir."""
    out_dir = Path(out_dir)
    written = [
        _write_frame(projection_frame(certificate), out_dir / "projections.csv"),
        _write_frame(position_frame(trace, labels), out_dir / "positions.csv"),
        _write_frame(timeline_frame(trace), out_dir / "timeline.csv"),
    ]
    logger.info("plot_data_written", out_dir=str(out_dir), files=[p.name for p in written])
    return written
