"""Figure rendering for the report paths, next to the CSV outputs.

Uses the non-interactive matplotlib backend; every function writes PNG
files and returns the paths it wrote.
"""

from __future__ import annotations

import re
from pathlib import Path

import numpy as np


def _plt():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


_LABEL = re.compile(
    r"^(?P<model>fc|attention)_(?P<lo>\d+)-(?P<hi>\d+)"
    r"(?:_oabs(?P<oabs>-?[\d.]+))?(?P<fixed>_fixed)?$"
)


def _parse_label(label: str) -> dict:
    match = _LABEL.match(label)
    if not match:
        return {"model": label, "range": label, "oabs": None, "fixed": False}
    return {
        "model": match["model"],
        "range": f"{match['lo']}-{match['hi']}",
        "oabs": None if match["oabs"] is None else float(match["oabs"]),
        "fixed": bool(match["fixed"]),
    }


def meanlab_figures(
    aggregate_rows: list[tuple[str, int, float, float, int]], out_dir: str | Path
) -> list[Path]:
    """Loss curves per count range, comparing every configuration run on it."""
    plt = _plt()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    curves: dict[str, dict[str, tuple[np.ndarray, np.ndarray, np.ndarray]]] = {}
    for label in sorted({row[0] for row in aggregate_rows}):
        rows = [row for row in aggregate_rows if row[0] == label]
        steps = np.array([row[1] for row in rows])
        means = np.array([row[2] for row in rows])
        cis = np.array([row[3] for row in rows])
        info = _parse_label(label)
        curves.setdefault(info["range"], {})[label] = (steps, means, cis)

    written: list[Path] = []
    ranges = sorted(curves, key=lambda r: int(r.split("-")[0]))
    n = len(ranges)
    cols = min(2, n)
    rows_ = (n + cols - 1) // cols
    fig, axes = plt.subplots(
        rows_, cols, figsize=(6 * cols, 4 * rows_), squeeze=False
    )
    for index, range_name in enumerate(ranges):
        ax = axes[index // cols][index % cols]
        for label, (steps, means, cis) in sorted(curves[range_name].items()):
            ax.plot(steps, means, label=label)
            ax.fill_between(steps, means - cis, means + cis, alpha=0.2)
        ax.set_yscale("log")
        ax.set_title(f"counts {range_name}")
        ax.set_xlabel("optimizer step")
        ax.set_ylabel("eval MSE")
        ax.legend(fontsize=7)
    for index in range(n, rows_ * cols):
        axes[index // cols][index % cols].axis("off")
    fig.tight_layout()
    path = out_dir / "meanlab_curves.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    written.append(path)
    return written


def compare_figures(
    runs: dict[tuple[str, str], list], out_dir: str | Path
) -> list[Path]:
    """Per-environment reward curves, one line per seed, colored by algorithm."""
    plt = _plt()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    environments = sorted({env for env, _ in runs})
    colors = {"mapoca": "tab:blue", "coma": "tab:orange", "ppo": "tab:green"}
    for env in environments:
        fig, ax = plt.subplots(figsize=(7, 4.5))
        for (run_env, algorithm), series_list in sorted(runs.items()):
            if run_env != env:
                continue
            color = colors.get(algorithm, "tab:gray")
            for i, series in enumerate(series_list):
                ax.plot(
                    series.column("step"),
                    series.column("mean_episode_reward"),
                    color=color,
                    alpha=0.7,
                    linewidth=1.0,
                    label=algorithm if i == 0 else None,
                )
        ax.set_xlabel("environment steps")
        ax.set_ylabel("mean episode reward")
        ax.set_title(env)
        ax.legend()
        fig.tight_layout()
        path = out_dir / f"compare_{env}.png"
        fig.savefig(path, dpi=120)
        plt.close(fig)
        written.append(path)
    return written
