"""
Plots - Data files and line drawings for funnel projections and trajectories.

Every figure is written twice: the raw polylines as whitespace-separated text
(the data a plot is made of), and a minimal SVG drawn with matplotlib's Agg
backend. SVG output is made reproducible by fixing the hash salt and dropping
the date stamp.
"""

import logging
from pathlib import Path
from typing import Dict, Optional, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from ..core.errors import ConfigError  # noqa: E402
from ..funnel.model import Ellipse, Funnel, project_funnel  # noqa: E402
from ..model.params import STATE_NAMES  # noqa: E402
from ..model.trajectory import Trajectory  # noqa: E402

logger = logging.getLogger(__name__)

plt.rcParams["svg.hashsalt"] = "pybrach"
plt.rcParams["svg.fonttype"] = "none"


def parse_pair(text: str) -> tuple[int, int]:
    """``theta1:theta2`` (names or indices) to a pair of state indices."""
    parts = text.split(":")
    if len(parts) != 2:
        raise ConfigError(f"state pair must look like name:name, got {text!r}")
    indices = []
    for part in parts:
        part = part.strip()
        if part in STATE_NAMES:
            indices.append(STATE_NAMES.index(part))
        elif part.isdigit() and int(part) < len(STATE_NAMES):
            indices.append(int(part))
        else:
            raise ConfigError(f"unknown state {part!r}; expected one of {STATE_NAMES}")
    if indices[0] == indices[1]:
        raise ConfigError("a projection needs two different states")
    return indices[0], indices[1]


def ellipse_to_text(ellipse: Ellipse, t: float, points: np.ndarray) -> str:
    """Header with the ellipse equation y^T shape y <= level, then one point per line."""
    (a, b), (_, c) = ellipse.shape
    lines = [f"# t {t!r} dims {ellipse.dims[0]} {ellipse.dims[1]}",
             f"# shape {a!r} {b!r} {c!r} level {ellipse.level!r}"]
    lines += [f"{x!r} {y!r}" for x, y in points.tolist()]
    return "\n".join(lines) + "\n"


def read_ellipse_header(text: str) -> tuple[np.ndarray, float, np.ndarray]:
    """Shape, level and points back from ``ellipse_to_text`` output."""
    shape, level, points = None, None, []
    for line in text.splitlines():
        fields = line.split()
        if fields[:2] == ["#", "shape"]:
            a, b, c = (float(v) for v in fields[2:5])
            shape, level = np.array([[a, b], [b, c]]), float(fields[6])
        elif fields and not fields[0].startswith("#"):
            points.append([float(v) for v in fields])
    if shape is None:
        raise ConfigError("projection file lacks its shape header")
    return shape, level, np.array(points)


def _save(fig, path: Path) -> None:
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def export_projections(funnels: Dict[str, Funnel], dims: Sequence[int], out: Path,
                       times: Optional[Sequence[float]] = None) -> list[Path]:
    """
    Projected funnel slices of one or more funnels on a state pair.

    Args:
        funnels: Label -> funnel; all funnels are drawn on the same axes per time
        dims: Two state indices
        out: Output directory
        times: Slice times; defaults to the first, middle and last funnel samples

    Returns:
        Paths of the written files
    """
    out.mkdir(parents=True, exist_ok=True)
    first = next(iter(funnels.values()))
    if times is None:
        times = [first.times[0], first.times[len(first.times) // 2], first.times[-1]]
    names = f"{STATE_NAMES[dims[0]]}_{STATE_NAMES[dims[1]]}"
    written = []
    for k, t in enumerate(times):
        fig, ax = plt.subplots(figsize=(4, 4))
        for label, funnel in funnels.items():
            ellipse = project_funnel(funnel, t, dims)
            points = ellipse.boundary()
            path = out / f"projection_{label}_{names}_{k}.txt"
            path.write_text(ellipse_to_text(ellipse, float(t), points))
            written.append(path)
            closed = np.vstack([points, points[:1]])
            ax.plot(closed[:, 0], closed[:, 1], label=label, linewidth=1.0)
        ax.set_xlabel(STATE_NAMES[dims[0]])
        ax.set_ylabel(STATE_NAMES[dims[1]])
        ax.set_title(f"t = {float(t):.3f} s")
        ax.legend(loc="best")
        image = out / f"projection_{names}_{k}.svg"
        _save(fig, image)
        written.append(image)
    logger.info("wrote %d projection files to %s", len(written), out)
    return written


def export_levels(funnels: Dict[str, Funnel], out: Path) -> list[Path]:
    """r(t) of each funnel as text, plus one overlay drawing."""
    out.mkdir(parents=True, exist_ok=True)
    fig, ax = plt.subplots(figsize=(5, 3))
    written = []
    for label, funnel in funnels.items():
        path = out / f"levels_{label}.txt"
        lines = ["# t r"] + [f"{t!r} {r!r}" for t, r in zip(funnel.times.tolist(), funnel.r.tolist())]
        path.write_text("\n".join(lines) + "\n")
        written.append(path)
        ax.plot(funnel.times, funnel.r, label=label, linewidth=1.0)
    ax.set_xlabel("t [s]")
    ax.set_ylabel("r")
    ax.legend(loc="best")
    image = out / "levels.svg"
    _save(fig, image)
    return written + [image]


def export_trajectories(trajectories: Dict[str, Trajectory], dims: Sequence[int], out: Path) -> list[Path]:
    """Overlay of trajectories in a state pair (reference and simulations)."""
    out.mkdir(parents=True, exist_ok=True)
    names = f"{STATE_NAMES[dims[0]]}_{STATE_NAMES[dims[1]]}"
    fig, ax = plt.subplots(figsize=(4, 4))
    written = []
    for label, traj in trajectories.items():
        path = out / f"trajectory_{label}_{names}.txt"
        columns = traj.states[:, list(dims)]
        lines = [f"# t {names.replace('_', ' ')}"]
        lines += [f"{t!r} {x!r} {y!r}" for t, (x, y) in zip(traj.times.tolist(), columns.tolist())]
        path.write_text("\n".join(lines) + "\n")
        written.append(path)
        ax.plot(columns[:, 0], columns[:, 1], label=label, linewidth=1.0)
    ax.set_xlabel(STATE_NAMES[dims[0]])
    ax.set_ylabel(STATE_NAMES[dims[1]])
    ax.legend(loc="best")
    image = out / f"trajectories_{names}.svg"
    _save(fig, image)
    return written + [image]


def export_spectra(spectra: Dict[str, object], out: Path) -> list[Path]:
    """Amplitude spectra (``Spectrum`` objects) as two-column text and one drawing."""
    out.mkdir(parents=True, exist_ok=True)
    fig, ax = plt.subplots(figsize=(5, 3))
    written = []
    for label, spectrum in spectra.items():
        path = out / f"spectrum_{label}.txt"
        path.write_text(spectrum.to_text())
        written.append(path)
        ax.plot(spectrum.freqs, spectrum.amps, label=label, linewidth=1.0)
    ax.set_xlim(0, 10)
    ax.set_xlabel("frequency [Hz]")
    ax.set_ylabel("amplitude [m]")
    ax.legend(loc="best")
    image = out / "spectra.svg"
    _save(fig, image)
    return written + [image]
