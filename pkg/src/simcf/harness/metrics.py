"""CSV emission with a fixed, documented schema.

metrics.csv / baseline.csv share one header:
    method, episode, mean_reward, sum_se_eval, actor_loss, critic_loss,
    entropy, ratio_clip_fraction
sweep.csv:
    axis, axis_value, method, seed, sum_se

Floats are written with repr-level precision so a re-run with the same
seed produces a byte-identical file.
"""

from __future__ import annotations

import csv
from pathlib import Path

METRICS_HEADER = ["method", "episode", "mean_reward", "sum_se_eval",
                  "actor_loss", "critic_loss", "entropy", "ratio_clip_fraction"]
SWEEP_HEADER = ["axis", "axis_value", "method", "seed", "sum_se"]


def format_value(x) -> str:
    if isinstance(x, bool):
        return str(x)
    if isinstance(x, float):
        return f"{x:.17g}"
    return str(x)


def write_metrics_csv(path: str | Path, rows: list[dict], method: str):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(METRICS_HEADER)
        for row in rows:
            writer.writerow([method] + [format_value(row[k]) for k in METRICS_HEADER[1:]])


def baseline_rows(per_channel: list[float]) -> list[dict]:
    """Shape per-channel baseline scores into the shared metrics schema."""
    return [{
        "episode": i,
        "mean_reward": se,
        "sum_se_eval": se,
        "actor_loss": 0.0,
        "critic_loss": 0.0,
        "entropy": 0.0,
        "ratio_clip_fraction": 0.0,
    } for i, se in enumerate(per_channel)]


def write_sweep_csv(path: str | Path, rows: list[dict]):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SWEEP_HEADER)
        for row in rows:
            writer.writerow([format_value(row[k]) for k in SWEEP_HEADER])


def read_csv(path: str | Path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
