"""Report figures written next to the delimited outputs.

Figures are built on bare :class:`matplotlib.figure.Figure` objects with the
Agg canvas, so no global pyplot state is touched and worker threads can
render concurrently. PNG metadata is stripped so identical data give
identical files.
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure

from bookend.free_energy import FreeEnergyResult, LambdaSchedule
from bookend.hci import HciIteration
from bookend.sqd import SqdResult

FIGSIZE = (5.0, 3.5)
DPI = 120


def _new_figure() -> tuple[Figure, object]:
    fig = Figure(figsize=FIGSIZE, dpi=DPI)
    FigureCanvasAgg(fig)
    return fig, fig.add_subplot(1, 1, 1)


def _save(fig: Figure, path: str | Path) -> Path:
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path, format="png", metadata={"Software": None})
    return path


def _reference_line(ax, value: float | None, label: str) -> None:
    if value is not None:
        ax.axhline(value, color="0.4", linestyle="--", linewidth=1.0, label=label)


def plot_hci_trace(
    trace: Sequence[HciIteration], path: str | Path, *, reference: float | None = None
) -> Path:
    """Variational energy against determinant count, one marker per round."""
    fig, ax = _new_figure()
    ax.plot([t.n_dets for t in trace], [t.energy for t in trace], "o-", label="HCI")
    _reference_line(ax, reference, "FCI")
    ax.set_xscale("log")
    ax.set_xlabel("determinants")
    ax.set_ylabel("energy (Hartree)")
    ax.legend(frameon=False)
    return _save(fig, path)


def plot_hci_cutoffs(
    epsilons: Sequence[float], energies: Sequence[float], path: str | Path, *, reference: float | None = None
) -> Path:
    """Converged HCI energy against selection cutoff."""
    fig, ax = _new_figure()
    ax.plot(epsilons, energies, "s-", label="HCI")
    _reference_line(ax, reference, "FCI")
    ax.set_xscale("log")
    ax.invert_xaxis()
    ax.set_xlabel("cutoff (Hartree)")
    ax.set_ylabel("energy (Hartree)")
    ax.legend(frameon=False)
    return _save(fig, path)


def plot_sqd_history(result: SqdResult, path: str | Path, *, reference: float | None = None) -> Path:
    """Batch energies per recovery round with the running best."""
    fig, ax = _new_figure()
    for r in result.rounds:
        ax.plot([r.iteration] * len(r.batch_energies), r.batch_energies, ".", color="C0", alpha=0.6)
    ax.plot([r.iteration for r in result.rounds], [r.min_energy for r in result.rounds], "o-",
            color="C1", label="best batch")
    _reference_line(ax, reference, "reference")
    ax.set_xticks([r.iteration for r in result.rounds])
    ax.set_xlabel("recovery round")
    ax.set_ylabel("energy (Hartree)")
    ax.legend(frameon=False)
    return _save(fig, path)


def plot_occupancies(result: SqdResult, path: str | Path) -> Path:
    """Spin-orbital occupancies before recovery and after each round."""
    fig, ax = _new_figure()
    m2 = len(result.initial_occupancies)
    idx = np.arange(m2)
    ax.plot(idx, result.initial_occupancies, "k.", label="raw samples")
    for r in result.rounds:
        ax.plot(idx, r.occupancies, "-", marker="o", markersize=3, label=f"round {r.iteration}")
    ax.axvline(m2 / 2 - 0.5, color="0.7", linewidth=0.8)
    ax.set_xlabel("spin-orbital (alpha | beta)")
    ax.set_ylabel("occupancy")
    ax.set_ylim(-0.05, 1.05)
    ax.legend(frameon=False, fontsize="small")
    return _save(fig, path)


def plot_free_energy_profile(
    schedule: LambdaSchedule, result: FreeEnergyResult, path: str | Path, *, exact: float | None = None
) -> Path:
    """Per-window MBAR free energies relative to the first window."""
    fig, ax = _new_figure()
    ax.plot(schedule.lambdas, result.free_energies, "o-", label="MBAR")
    if exact is not None:
        ax.plot([schedule.lambdas[-1]], [exact], "k*", markersize=10, label="closed form")
    ax.set_xlabel("lambda")
    ax.set_ylabel("free energy")
    ax.legend(frameon=False)
    return _save(fig, path)


def plot_ti_integrand(schedule: LambdaSchedule, means: Sequence[float], path: str | Path) -> Path:
    """Window averages of the lambda derivative at the quadrature nodes."""
    fig, ax = _new_figure()
    ax.plot(schedule.lambdas, means, "o-")
    ax.set_xlim(0.0, 1.0)
    ax.set_xlabel("lambda")
    ax.set_ylabel("<dU/dlambda>")
    return _save(fig, path)
