"""Matplotlib rendering of the report tables to image files.

Every CLI report path drops a PNG next to its delimited output; the CSV
stays the authoritative artifact and these renderings are for eyeballing.
"""

from __future__ import annotations

from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.colors
import matplotlib.pyplot as plt
import numpy as np

from .dynamics import TrajectorySample
from .synthesis import RegimeLabel

__all__ = [
    "save_trajectory_figure",
    "save_regime_map_figure",
    "save_simulation_figure",
    "save_verify_figure",
]

_LABEL_COLORS = {
    RegimeLabel.Z: "#c7c7c7",
    RegimeLabel.B0: "#1f77b4",
    RegimeLabel.BZB: "#9467bd",
    RegimeLabel.S0: "#d62728",
    RegimeLabel.ZS0: "#ff7f0e",
    RegimeLabel.BS0: "#2ca02c",
}


def save_trajectory_figure(
    samples: Sequence[TrajectorySample], path: str, singular_level: float | None = None
) -> str:
    t = [s.t for s in samples]
    r = [s.r for s in samples]
    u = [s.u for s in samples]
    fig, (ax_r, ax_u) = plt.subplots(2, 1, sharex=True, figsize=(7, 5))
    ax_r.plot(t, r, color="tab:blue", label="R")
    if singular_level is not None:
        ax_r.axhline(singular_level, color="tab:red", ls="--", lw=0.8, label="singular level")
    if samples and samples[0].psi is not None:
        ax_psi = ax_r.twinx()
        ax_psi.plot(t, [s.psi for s in samples], color="tab:green", lw=0.9, label="psi")
        ax_psi.set_ylabel("psi", color="tab:green")
    ax_r.set_ylabel("R")
    ax_r.legend(loc="upper left", fontsize=8)
    ax_u.step(t, u, where="post", color="tab:orange")
    ax_u.set_xlabel("t")
    ax_u.set_ylabel("u")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def save_regime_map_figure(
    t_values: np.ndarray, r0_values: np.ndarray, labels: np.ndarray, path: str
) -> str:
    order = list(_LABEL_COLORS)
    codes = np.vectorize(lambda lab: order.index(lab))(labels)
    cmap = matplotlib.colors.ListedColormap([_LABEL_COLORS[k] for k in order])
    fig, ax = plt.subplots(figsize=(7, 5))
    ax.pcolormesh(
        t_values, r0_values, codes.T, cmap=cmap, vmin=-0.5, vmax=len(order) - 0.5,
        shading="nearest",
    )
    present = {lab for lab in labels.ravel()}
    handles = [
        plt.Rectangle((0, 0), 1, 1, color=_LABEL_COLORS[k]) for k in order if k in present
    ]
    ax.legend(handles, [k.value for k in order if k in present], loc="upper right", fontsize=8)
    ax.set_xlabel("T")
    ax.set_ylabel("r0")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def save_simulation_figure(
    t: np.ndarray, empirical: np.ndarray, std_error: np.ndarray,
    ode: np.ndarray, z: np.ndarray, path: str,
) -> str:
    fig, (ax_r, ax_z) = plt.subplots(2, 1, sharex=True, figsize=(7, 5))
    ax_r.errorbar(t, empirical, yerr=std_error, fmt="o", ms=3, label="simulation")
    ax_r.plot(t, ode, color="tab:red", lw=1.0, label="model")
    ax_r.set_ylabel("R")
    ax_r.legend(fontsize=8)
    ax_z.axhspan(-4, 4, color="tab:green", alpha=0.15)
    ax_z.plot(t, z, "o-", ms=3, color="tab:purple")
    ax_z.set_xlabel("t")
    ax_z.set_ylabel("z")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def save_verify_figure(
    indices: Sequence[int], gaps: Sequence[float], tolerance: float, path: str
) -> str:
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.bar(list(indices), [g * 100 for g in gaps], color="tab:blue")
    ax.axhline(tolerance * 100, color="tab:red", ls="--", label=f"{tolerance:.0%} bound")
    ax.set_xlabel("instance")
    ax.set_ylabel("relative gap (%)")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
