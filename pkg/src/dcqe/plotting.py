"""Figure rendering for the report paths.

Everything here is optional sugar on top of the delimited outputs: the
CSV files carry the same numbers, and nothing outside the CLI/report
layer imports this module.  Uses the Agg backend so headless runs work.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)
import numpy as np  # noqa: E402

from .apparatus import IDLER_DETECTORS, ApparatusConfig, DetectorId  # noqa: E402
from .coincidence import FringeHistogram  # noqa: E402

_MM = 1.0e3  # metres -> millimetres for axis labels


def fringe_figure(
    hists: dict[DetectorId, FringeHistogram],
    config: ApparatusConfig,
    path: str | Path,
) -> str:
    """2x2 panel of coincidence fringes, one idler detector per panel."""
    fig, axes = plt.subplots(2, 2, figsize=(9.5, 7.0), sharex=True, sharey=True)
    for ax, det in zip(axes.ravel(), IDLER_DETECTORS):
        hist = hists[det]
        centers = hist.bin_centers * _MM
        ax.step(centers, hist.counts, where="mid", lw=1.0, label="coincidences")
        fit = hist.fit
        if fit is not None:
            dense = np.linspace(hist.bin_edges[0], hist.bin_edges[-1], 600)
            curve = fit.offset * (
                1.0 + fit.visibility * np.cos(2 * np.pi * dense / fit.period + fit.phase)
            )
            ax.plot(dense * _MM, curve, lw=1.2, alpha=0.85, label="fit")
            ax.set_title(
                f"{det.value}   V = {fit.visibility:.3f} ± {fit.visibility_err:.3f}"
            )
        else:
            ax.set_title(f"{det.value}   (no fit)")
        ax.grid(alpha=0.25)
    for ax in axes[1]:
        ax.set_xlabel("D0 position x (mm)")
    for ax in axes[:, 0]:
        ax.set_ylabel("coincidences / bin")
    axes[0, 0].legend(loc="upper right", fontsize=8)
    fig.suptitle("Coincidence fringes by idler detector")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return Path(path).name


def marginal_figure(
    marginal: FringeHistogram, config: ApparatusConfig, path: str | Path
) -> str:
    """All D0 clicks regardless of idler outcome: the pattern with no sorting."""
    fig, ax = plt.subplots(figsize=(7.5, 4.2))
    ax.step(marginal.bin_centers * _MM, marginal.counts, where="mid", lw=1.0)
    ax.set_xlabel("D0 position x (mm)")
    ax.set_ylabel("clicks / bin")
    ax.set_title("D0 marginal (no coincidence sorting)")
    ax.grid(alpha=0.25)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return Path(path).name


def sweep_figure(sweep, path: str | Path) -> str:
    """Visibility and timing distinguishability along the sweep grid."""
    fig, ax = plt.subplots(figsize=(7.5, 4.8))
    for det in IDLER_DETECTORS:
        ax.plot(sweep.values, sweep.visibility[det], marker="o", ms=3.5,
                lw=1.0, label=f"fitted V ({det.value})")
    ax.plot(sweep.values, sweep.v_analytic, ls="--", lw=1.3, color="k",
            label="analytic V (D1/D2)")
    ax.plot(sweep.values, sweep.d_tv, ls=":", lw=1.3, color="0.4",
            label="timing distinguishability")
    ax.set_xscale("log")
    ax.set_ylim(-0.05, 1.05)
    xlabel = "effective timing spread sigma_eff (s)" \
        if sweep.parameter == "sigma_eff" else "coincidence window (s)"
    ax.set_xlabel(xlabel)
    ax.set_ylabel("visibility / distinguishability")
    ax.set_title("Fringe visibility against the timing budget")
    ax.grid(alpha=0.25, which="both")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return Path(path).name


def stopwatch_figure(
    config: ApparatusConfig,
    path: str | Path,
    period: float | None = None,
    positions: np.ndarray | None = None,
) -> str:
    """Clock-dial readout of the two branch flight times at a few positions.

    Each dial shows one pointer per slit; the opening angle between them
    is the arrival-time split expressed on a pointer with the stated
    rotation period.
    """
    from .analysis import default_stopwatch_period, reference_position, stopwatch_angles

    if period is None:
        period = default_stopwatch_period(config)
    if positions is None:
        x_ref = reference_position(config)
        positions = np.array([0.0, x_ref / 3.0, 2.0 * x_ref / 3.0, x_ref])

    fig, axes = plt.subplots(1, len(positions), figsize=(2.6 * len(positions), 3.2))
    axes = np.atleast_1d(axes)
    circle_t = np.linspace(0.0, 2.0 * np.pi, 120)
    for ax, x in zip(axes, positions):
        angles = stopwatch_angles(config, float(x), period)
        ax.plot(np.cos(circle_t), np.sin(circle_t), color="0.6", lw=1.0)
        for tick in range(12):
            a = np.deg2rad(90.0 - 30.0 * tick)
            ax.plot([0.92 * np.cos(a), np.cos(a)], [0.92 * np.sin(a), np.sin(a)],
                    color="0.6", lw=0.8)
        for angle, label, color in (
            (angles.angle_a, "slit A", "tab:blue"),
            (angles.angle_b, "slit B", "tab:red"),
        ):
            a = np.deg2rad(90.0 - angle)
            ax.plot([0.0, 0.85 * np.cos(a)], [0.0, 0.85 * np.sin(a)],
                    color=color, lw=1.8, label=label)
        ax.set_aspect("equal")
        ax.set_xlim(-1.15, 1.15)
        ax.set_ylim(-1.15, 1.15)
        ax.axis("off")
        ax.set_title(f"x = {x * _MM:.3f} mm\nsplit {angles.difference:.1f} deg", fontsize=9)
    axes[0].legend(loc="lower center", fontsize=8, bbox_to_anchor=(0.5, -0.25))
    fig.suptitle(f"Branch flight times on a pointer with period {period:.3e} s")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return Path(path).name
