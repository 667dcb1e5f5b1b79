"""Learning-curve rendering for episode CSVs written by the training loops.

Curves show the rolling mean over the last 100 completed episodes against
environment steps. Multiple seeds of the same arm are resampled onto a
common step grid and drawn as mean with a standard-error band.
"""

from __future__ import annotations

import warnings
from pathlib import Path

import numpy as np


class PlotDataError(ValueError):
    pass


def _read_curve(path: Path) -> tuple[np.ndarray, np.ndarray]:
    steps = []
    rolling = []
    try:
        with open(path) as fh:
            header = fh.readline().rstrip("\n").split(",")
            if "end_step" not in header or "rolling_mean_100" not in header:
                raise PlotDataError(f"{path} is not an episode CSV")
            step_col = header.index("end_step")
            roll_col = header.index("rolling_mean_100")
            for line in fh:
                parts = line.rstrip("\n").split(",")
                steps.append(float(parts[step_col]))
                rolling.append(float(parts[roll_col]))
    except OSError as exc:
        raise PlotDataError(str(exc)) from exc
    if not steps:
        raise PlotDataError(f"{path} holds no episodes")
    return np.asarray(steps), np.asarray(rolling)


def _collect_groups(paths: list[Path]) -> dict[str, list[tuple[np.ndarray, np.ndarray]]]:
    """Map arm name to its per-seed curves.

    Accepts episode CSVs, run directories containing seed-*/episodes.csv,
    and merged comparison CSVs (recognized by their 'arm' column).
    """
    groups: dict[str, list] = {}
    for path in paths:
        if path.is_dir():
            seed_files = sorted(path.glob("seed-*/episodes.csv"))
            if not seed_files:
                single = path / "episodes.csv"
                if single.exists():
                    seed_files = [single]
            if not seed_files:
                raise PlotDataError(f"no episodes.csv found under {path}")
            for f in seed_files:
                groups.setdefault(path.name, []).append(_read_curve(f))
            continue
        if not path.exists():
            raise PlotDataError(f"{path} does not exist")
        with open(path) as fh:
            header = fh.readline().rstrip("\n").split(",")
        if header and header[0] == "arm":
            for arm, steps, rolling in _read_comparison(path):
                groups.setdefault(arm, []).append((steps, rolling))
            continue
        name = path.parent.name or path.stem
        groups.setdefault(name, []).append(_read_curve(path))
    if not groups:
        raise PlotDataError("nothing to plot")
    return groups


def _read_comparison(path: Path):
    data: dict[tuple[str, str], list[tuple[float, float]]] = {}
    with open(path) as fh:
        header = fh.readline().rstrip("\n").split(",")
        try:
            arm_c = header.index("arm")
            seed_c = header.index("seed")
            step_c = header.index("end_step")
            roll_c = header.index("rolling_mean_100")
        except ValueError as exc:
            raise PlotDataError(f"{path} is not a comparison CSV") from exc
        for line in fh:
            parts = line.rstrip("\n").split(",")
            key = (parts[arm_c], parts[seed_c])
            data.setdefault(key, []).append((float(parts[step_c]), float(parts[roll_c])))
    if not data:
        raise PlotDataError(f"{path} holds no rows")
    for (arm, _seed), rows in data.items():
        rows.sort()
        steps = np.asarray([r[0] for r in rows])
        rolling = np.asarray([r[1] for r in rows])
        yield arm, steps, rolling


def plot_learning_curves(paths: list[Path], out_path: Path, grid_points: int = 256) -> None:
    """Render mean rolling score with standard-error bands, one line per arm."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    groups = _collect_groups(paths)
    max_step = max(c[0][-1] for curves in groups.values() for c in curves)
    grid = np.linspace(0.0, max_step, grid_points)

    fig, ax = plt.subplots(figsize=(7.0, 4.5))
    for arm, curves in sorted(groups.items()):
        resampled = np.full((len(curves), grid_points), np.nan)
        for i, (steps, rolling) in enumerate(curves):
            resampled[i] = np.interp(grid, steps, rolling)
            resampled[i, grid < steps[0]] = np.nan
        with warnings.catch_warnings():
            # grid points before the first completed episode are all-NaN
            warnings.simplefilter("ignore", category=RuntimeWarning)
            mean = np.nanmean(resampled, axis=0)
            count = np.sum(~np.isnan(resampled), axis=0)
            sem = np.where(
                count > 1,
                np.nanstd(resampled, axis=0, ddof=1) / np.sqrt(np.maximum(count, 1)),
                0.0,
            )
        (line,) = ax.plot(grid, mean, label=f"{arm} ({len(curves)} seeds)")
        ax.fill_between(grid, mean - sem, mean + sem, alpha=0.25, color=line.get_color())
    ax.set_xlabel("environment steps")
    ax.set_ylabel("rolling mean score (100 episodes)")
    ax.legend(loc="best")
    ax.grid(alpha=0.3)
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out_path)
    plt.close(fig)
