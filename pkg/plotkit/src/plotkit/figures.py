"""The four figure kinds, rendered deterministically with Agg.

Every number drawn here exists verbatim in an input CSV; no physics is
recomputed. Portraits use a 2D Mollweide projection so the raster output
is stable for visual regression.
"""

from dataclasses import dataclass, field

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from matplotlib.colors import LogNorm  # noqa: E402

from .readers import (SelectionError, read_dcs, read_portrait,  # noqa: E402
                      read_scan)

KINDS = ("scan", "prep-ics", "dcs-contour", "portrait-strip")

STYLE = {
    "figure.dpi": 110,
    "savefig.dpi": 110,
    "font.size": 9,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "lines.linewidth": 1.4,
    "image.cmap": "viridis",
    "svg.hashsalt": "plotkit",
}


@dataclass(frozen=True)
class FigureSpec:
    kind: str                      # one of KINDS
    inputs: tuple                  # CSV paths (portrait-strip takes many)
    out: str                       # image path; suffix selects format
    transition: int | None = None  # final j for scan / prep-ics
    preparation: str = "unpolarized"
    logx: bool = True
    logy: bool = True
    x_range: tuple | None = None   # (lo, hi) on the energy axis
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SelectionError(
                f"unknown figure kind '{self.kind}' (use one of "
                f"{', '.join(KINDS)})")
        if not self.inputs:
            raise SelectionError("no input CSV given")


def _pick_transition(scan_data, transition):
    available = scan_data.transitions()
    if not available:
        raise SelectionError("scan CSV has no sigma_{j'} columns")
    if transition is None:
        # default to the Delta j = -1 quench when it exists
        if scan_data.j_initial - 1 in available:
            return scan_data.j_initial - 1
        return available[0]
    if transition not in available:
        raise SelectionError(
            f"scan CSV has no transition to j'={transition} "
            f"(has: {available})")
    return transition


def _energy_axis(ax, spec):
    ax.set_xlabel("collision energy (K)")
    if spec.logx:
        ax.set_xscale("log")
    if spec.x_range is not None:
        ax.set_xlim(*spec.x_range)


def _fig_scan(spec):
    data = read_scan(spec.inputs[0])
    jp = _pick_transition(data, spec.transition)
    sig = data.column(f"sigma_{jp}")
    fig, (ax1, ax2) = plt.subplots(
        2, 1, figsize=(5.0, 5.6), sharex=True,
        gridspec_kw={"height_ratios": [2.0, 1.0]})
    ax1.plot(data.E, sig, color="k",
             label=rf"$\sigma_{{{data.j_initial}\to{jp}}}$")
    for L in data.L_values(jp):
        ax1.plot(data.E, data.column(f"sigma_{jp}_L{L}"),
                 lw=1.0, ls="--", label=f"L={L}")
    if spec.logy:
        ax1.set_yscale("log")
    ax1.set_ylabel(r"cross section ($\mathrm{\AA}^2$)")
    ax1.legend(fontsize=7, ncol=2)
    ax2.plot(data.E, data.column(f"s20_{jp}"), color="tab:red")
    ax2.axhline(0.0, color="k", lw=0.6)
    ax2.set_ylabel(r"$s^{(2)}_0$")
    _energy_axis(ax2, spec)
    return fig


def _interior_peak(E, y):
    """Index of the largest interior local maximum, or None."""
    idx = None
    for i in range(1, E.size - 1):
        if y[i] > y[i - 1] and y[i] > y[i + 1]:
            if idx is None or y[i] > y[idx]:
                idx = i
    return idx


def _fig_prep_ics(spec):
    data = read_scan(spec.inputs[0])
    jp = _pick_transition(data, spec.transition)
    series = [(f"sigma_{jp}", "unpolarized", "k", "-"),
              (f"prep_{jp}_b0", r"$\beta=0°$", "tab:blue", "-"),
              (f"prep_{jp}_b90", r"$\beta=90°$", "tab:orange", "-"),
              (f"prep_{jp}_bmag", r"$\beta=\beta_{mag}$",
               "tab:green", "--")]
    fig, ax = plt.subplots(figsize=(5.0, 3.8))
    for name, label, color, ls in series:
        ax.plot(data.E, data.column(name), color=color, ls=ls,
                label=label)
    if spec.logy:
        ax.set_yscale("log")
    ax.set_ylabel(r"integral cross section ($\mathrm{\AA}^2$)")
    ax.legend(fontsize=7)
    _energy_axis(ax, spec)
    sig = data.column(f"sigma_{jp}")
    peak = _interior_peak(data.E, sig)
    if peak is not None:
        E0 = data.E[peak]
        lo, hi = E0 / 3.0, E0 * 3.0
        ins = ax.inset_axes([0.08, 0.08, 0.40, 0.42])
        m = (data.E >= lo) & (data.E <= hi)
        for name, _, color, ls in series:
            ins.plot(data.E[m], data.column(name)[m], color=color, ls=ls,
                     lw=1.0)
        ins.set_xscale("log")
        ins.set_yscale("log")
        ins.tick_params(labelsize=5)
    return fig


def _fig_dcs_contour(spec):
    data = read_dcs(spec.inputs[0])
    E, theta, grid = data.grid(spec.preparation)
    if E.size < 2:
        raise SelectionError(
            f"preparation '{spec.preparation}' has {E.size} energy; "
            "a contour needs at least 2")
    floor = max(grid[grid > 0].min() if (grid > 0).any() else 1e-12,
                grid.max() * 1e-6)
    fig, ax = plt.subplots(figsize=(5.0, 3.8))
    pcm = ax.pcolormesh(theta, E, np.maximum(grid, floor),
                        norm=LogNorm(vmin=floor, vmax=grid.max()),
                        shading="nearest")
    ax.set_yscale("log")
    ax.set_xlabel(r"scattering angle $\theta$ (deg)")
    ax.set_ylabel("collision energy (K)")
    ax.set_title(spec.preparation, fontsize=9)
    fig.colorbar(pcm, ax=ax,
                 label=r"DCS ($\mathrm{\AA}^2/\mathrm{sr}$)")
    return fig


def _fig_portrait_strip(spec):
    panels = [read_portrait(p) for p in spec.inputs]
    vmax = max(float(p.density.max()) for p in panels)
    n = len(panels)
    fig = plt.figure(figsize=(3.2 * n, 2.4))
    for i, p in enumerate(panels):
        ax = fig.add_subplot(1, n, i + 1, projection="mollweide")
        # theta_r in [0, 180] -> latitude, phi_r in [0, 360) -> longitude
        lon = np.radians(p.phi_r_deg) - np.pi
        lat = np.pi / 2.0 - np.radians(p.theta_r_deg)
        pcm = ax.pcolormesh(lon, lat, p.density, vmin=0.0, vmax=vmax,
                            shading="nearest")
        ax.set_xticklabels([])
        ax.set_yticklabels([])
        ax.grid(True, alpha=0.25, lw=0.4)
    fig.colorbar(pcm, ax=fig.axes, shrink=0.8, label="axis density")
    return fig


_RENDERERS = {
    "scan": _fig_scan,
    "prep-ics": _fig_prep_ics,
    "dcs-contour": _fig_dcs_contour,
    "portrait-strip": _fig_portrait_strip,
}


def render(spec: FigureSpec) -> str:
    """Write the figure to spec.out and return that path."""
    with plt.rc_context(STYLE):
        fig = _RENDERERS[spec.kind](spec)
        try:
            fig.savefig(spec.out, metadata=_no_dates(spec.out))
        finally:
            plt.close(fig)
    return spec.out


def _no_dates(out):
    """Strip timestamps so identical inputs give identical bytes."""
    if str(out).lower().endswith(".svg"):
        return {"Date": None}
    if str(out).lower().endswith(".png"):
        return {"Software": None}
    return None
