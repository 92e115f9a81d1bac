"""SVG rendering of design supports and sensitivity profiles.

Both plots assume blocks of two single-factor units, so a block is a point
in the (first unit, second unit) plane.  Rendering uses the non-interactive
matplotlib backend and writes files atomically.
"""

from __future__ import annotations

import os
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .errors import DomainError

__all__ = ["design_support_svg", "sensitivity_svg"]


def _pair_coords(blocks):
    if any(b.k != 2 or len(b.points[0]) != 1 for b in blocks):
        raise DomainError("plots support blocks of two single-factor units")
    return np.array([[b.points[0][0], b.points[1][0]] for b in blocks])


def _save(fig, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    fig.savefig(tmp, format="svg", bbox_inches="tight")
    plt.close(fig)
    os.replace(tmp, path)


def design_support_svg(design, path):
    """Support blocks in the unit-pair plane, marker area scaled by weight."""
    coords = _pair_coords(design.blocks)
    weights = design.weight_array()
    fig, ax = plt.subplots(figsize=(5.0, 4.5))
    ax.scatter(
        coords[:, 0], coords[:, 1], s=2000.0 * weights,
        c="tab:blue", alpha=0.7, edgecolors="black", linewidths=0.8,
    )
    for (x1, x2), w in zip(coords, weights):
        ax.annotate(f"{w:.3f}", (x1, x2), textcoords="offset points",
                    xytext=(6, 6), fontsize=8)
    ax.set_xlabel("first unit")
    ax.set_ylabel("second unit")
    ax.set_title("design support (marker area = weight)")
    ax.grid(True, alpha=0.3)
    _save(fig, path)


def sensitivity_svg(blocks, values, s, path):
    """Candidate sensitivities in the unit-pair plane against the bound s."""
    coords = _pair_coords(blocks)
    values = np.asarray(values, dtype=float)
    fig, ax = plt.subplots(figsize=(5.6, 4.5))
    sc = ax.scatter(
        coords[:, 0], coords[:, 1], c=values, s=22.0,
        cmap="viridis", vmin=float(values.min()), vmax=max(float(values.max()), s),
    )
    fig.colorbar(sc, ax=ax, label="sensitivity")
    over = values > s * (1.0 + 1e-9)
    if np.any(over):
        ax.scatter(coords[over, 0], coords[over, 1], facecolors="none",
                   edgecolors="red", s=80.0, linewidths=1.2,
                   label=f"above bound {s}")
        ax.legend(loc="best", fontsize=8)
    ax.set_xlabel("first unit")
    ax.set_ylabel("second unit")
    ax.set_title(f"sensitivity profile (bound {s})")
    _save(fig, path)
