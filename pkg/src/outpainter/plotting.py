"""Learning-curve plots from a metrics CSV."""

from __future__ import annotations

from pathlib import Path
from typing import Iterable

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from outpainter.training import read_metrics  # noqa: E402

LOSS_COLUMNS = ("l_rec", "l_adv", "l_g", "l_d")


def read_restarts(csv_path) -> list[int]:
    path = Path(csv_path).with_name("restarts.txt")
    if not path.is_file():
        return []
    return [int(line) for line in path.read_text(encoding="utf-8").split() if line.strip()]


def plot_learning_curves(csv_path, out_path, restarts: Iterable[int] = ()) -> Path:
    """One line per loss column against epoch; restart epochs drawn as vertical green lines."""
    rows = read_metrics(csv_path)
    epochs = [r.epoch for r in rows]
    fig, ax = plt.subplots(figsize=(8, 4.5))
    for col in LOSS_COLUMNS:
        ax.plot(epochs, [getattr(r, col) for r in rows], marker="o" if len(rows) < 30 else None, label=col)
    for epoch in sorted(set(restarts) | set(read_restarts(csv_path))):
        ax.axvline(epoch, color="green", linestyle="--", linewidth=1.2)
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss")
    ax.legend()
    ax.grid(alpha=0.3)
    fig.tight_layout()
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out_path, dpi=100)
    plt.close(fig)
    return out_path
