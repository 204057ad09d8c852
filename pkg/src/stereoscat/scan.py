"""Energy scans, threshold-law fits, and resonance detection.

Drives the coupled-channel solver over a (log-spaced) energy grid,
decomposes cross sections per entrance L and per (J, parity) block,
fits Wigner threshold exponents, and locates/characterizes shape
resonances with a Breit-Wigner + linear-background fit. Cross sections
in the tables are in Angstrom^2 (the presentation unit).
"""

from __future__ import annotations

import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import curve_fit
from scipy.signal import find_peaks

from . import ccsolver as cc
from . import stereo
from .units import BOHR2_TO_ANGSTROM2

SCAN_SCHEMA = "stereoscat scan-csv-v1"
RESONANCE_SCHEMA = "stereoscat resonance-report-v1"

DEFAULT_PROMINENCE = 0.5        # relative to local background
BETAS = (0.0, 90.0, stereo.MAGIC_ANGLE_DEG)


class ScanError(RuntimeError):
    pass


@dataclass(frozen=True)
class ScanTable:
    """One row per collision energy; columns keyed by name.

    Column naming (sigma columns in Angstrom^2):
      sigma_{j'}          total ICS for j_initial -> j'
      sigma_{j'}_L{L}     entrance-L-restricted ICS
      s20_{j'}            renormalized s^{(2)}_0 (real part)
      s20_{j'}_L{L}       L-restricted moment
      prep_{j'}_b{beta}   prep_ics at beta degrees (b0, b90, bmag)
      dom_J / dom_parity  block with the largest partial quenching ICS
    Failed rows carry NaN in every column and an entry in errors.
    """

    j_initial: int
    transitions: tuple
    L_values: tuple
    E: np.ndarray
    columns: dict
    errors: dict = field(default_factory=dict)

    def column(self, name):
        return self.columns[name]

    @property
    def n(self):
        return self.E.size


def default_grid(E_min=1e-3, E_max=10.0, n=200):
    """Log-spaced scan grid in kelvin."""
    return np.geomspace(E_min, E_max, n)


def _beta_tag(beta):
    if beta == 0.0:
        return "b0"
    if beta == 90.0:
        return "b90"
    return "bmag"


def _row_from_blocks(blocks, cfg, E, transitions, L_values):
    out = {}
    j_in = cfg.j_initial
    dom = (None, 0)
    for j_out in transitions:
        sig = cc.ics(blocks, j_in, j_out, cfg, E_col=E) * BOHR2_TO_ANGSTROM2
        out[f"sigma_{j_out}"] = sig
        for L in L_values:
            out[f"sigma_{j_out}_L{L}"] = cc.ics(
                blocks, j_in, j_out, cfg, E_col=E,
                L_select=L) * BOHR2_TO_ANGSTROM2
        try:
            hel = stereo.helicity_transform(blocks, j_in, j_out)
            out[f"s20_{j_out}"] = stereo.moments_q0_direct(hel)[(2, 0)]
            for beta in BETAS:
                out[f"prep_{j_out}_{_beta_tag(beta)}"] = (
                    stereo.prep_ics_direct(hel, beta) * BOHR2_TO_ANGSTROM2)
            for L in L_values:
                try:
                    helL = stereo.helicity_transform(blocks, j_in, j_out,
                                                     L_select=L)
                    out[f"s20_{j_out}_L{L}"] = (
                        stereo.moments_q0_direct(helL)[(2, 0)])
                except stereo.StereoError:
                    out[f"s20_{j_out}_L{L}"] = np.nan
        except stereo.StereoError:
            out[f"s20_{j_out}"] = np.nan
            for beta in BETAS:
                out[f"prep_{j_out}_{_beta_tag(beta)}"] = np.nan
            for L in L_values:
                out[f"s20_{j_out}_L{L}"] = np.nan
    # dominant block for the strongest inelastic transition
    inel = [j for j in transitions if j != j_in]
    if inel:
        j_dom = max(inel, key=lambda j: out[f"sigma_{j}"])
        best = (None, -1.0)
        for blk in blocks:
            part = cc.ics([blk], j_in, j_dom, cfg, E_col=E)
            if part > best[1]:
                best = ((blk.J, blk.parity), part)
        dom = best[0] if best[0] is not None else (None, 0)
        out["dom_J"], out["dom_parity"] = dom
    else:
        out["dom_J"] = out["dom_parity"] = np.nan
    return out


def energy_scan(cfg, model, E_grid=None, transitions=None, L_values=None,
                workers=1) -> ScanTable:
    """ScanTable over the grid; per-energy failures recorded, scan goes on.

    Blocks are propagated in energy-batched sweeps per (J, parity);
    worker threads split the block list (numpy releases the GIL in the
    heavy matrix kernels). Results are merged in deterministic order.
    """
    E_grid = default_grid() if E_grid is None else np.asarray(
        E_grid, dtype=float)
    if np.any(np.diff(E_grid) <= 0):
        raise ScanError("energy grid must be strictly increasing")
    j_in = cfg.j_initial
    if transitions is None:
        transitions = tuple(
            j for j in range(cfg.j_max + 1)
            if cfg.rotor_energy(j) < cfg.E_total)
    if L_values is None:
        L_values = tuple(range(0, cfg.J_max + j_in + 1))

    labels = cc.block_labels(cfg)

    def solve_label(label):
        J, parity = label
        basis = cc.build_basis(cfg, J, parity)
        Y, meta = cc.propagate(basis, model, cfg, energies=E_grid)
        return [cc.match(Y[i], basis, cfg, E_col=E, meta=meta)
                for i, E in enumerate(E_grid)]

    per_label = {}
    failures = {}
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futs = {label: pool.submit(solve_label, label)
                    for label in labels}
        for label, fut in futs.items():
            try:
                per_label[label] = fut.result()
            except cc.SolverError as err:
                failures[label] = str(err)
    else:
        for label in labels:
            try:
                per_label[label] = solve_label(label)
            except cc.SolverError as err:
                failures[label] = str(err)

    columns = {}
    errors = {}
    for i, E in enumerate(E_grid):
        if failures:
            errors[i] = "; ".join(
                f"(J={J}, parity={p:+d}): {msg}"
                for (J, p), msg in failures.items())
        blocks = [per_label[label][i] for label in labels
                  if label in per_label]
        try:
            row = _row_from_blocks(blocks, cfg, E, transitions, L_values)
        except (cc.SolverError, stereo.StereoError) as err:
            errors[i] = str(err)
            row = {}
        for key, val in row.items():
            columns.setdefault(key, [np.nan] * E_grid.size)[i] = val
    cols = {k: np.array(v) for k, v in columns.items()}
    return ScanTable(j_initial=j_in, transitions=tuple(transitions),
                     L_values=tuple(L_values), E=E_grid.copy(),
                     columns=cols, errors=errors)


# ---------------------------------------------------------------------------
# threshold law

def wigner_slope(table: ScanTable, column, E_window):
    """Least-squares slope of log sigma vs log E over [E_lo, E_hi]."""
    E_lo, E_hi = E_window
    sig = table.column(column)
    mask = (table.E >= E_lo) & (table.E <= E_hi) & np.isfinite(sig) & (
        sig > 0)
    if np.sum(mask) < 3:
        raise ScanError(
            f"threshold window [{E_lo}, {E_hi}] K holds fewer than 3 points")
    slope, _ = np.polyfit(np.log(table.E[mask]), np.log(sig[mask]), 1)
    return float(slope)


# ---------------------------------------------------------------------------
# resonance detection

@dataclass(frozen=True)
class ResonanceReport:
    E_peak: float                  # K
    gamma: float | None            # K; None if the fit failed
    column: str                    # sigma column the peak lives in
    block: tuple | None            # (J, parity) attribution
    dominant_L: int | None
    block_share: float | None      # background-subtracted share
    peak_ratio: float              # peak over local background
    omega0_excluded: bool | None   # I * (-1)^J == -1
    fit_rms: float | None          # relative RMS of the BW fit residual
    diagnostic: str = ""


def _breit_wigner(E, sigma0, E0, gamma, a, b):
    return sigma0 * (gamma / 2.0) ** 2 / (
        (E - E0) ** 2 + (gamma / 2.0) ** 2) + a + b * E


def _fit_breit_wigner(E, sig, E0_guess):
    i0 = int(np.argmin(np.abs(E - E0_guess)))
    bg = 0.5 * (sig[0] + sig[-1])
    height = max(sig[i0] - bg, 1e-30)
    width0 = max((E[-1] - E[0]) / 10.0, 1e-6)
    p0 = [height, E0_guess, width0, bg, 0.0]
    popt, _ = curve_fit(
        _breit_wigner, E, sig, p0=p0,
        bounds=([0.0, E[0], 1e-9, -np.inf, -np.inf],
                [np.inf, E[-1], E[-1] - E[0], np.inf, np.inf]),
        maxfev=20000)
    resid = _breit_wigner(E, *popt) - sig
    rms = float(np.sqrt(np.mean(resid ** 2)) / np.max(sig))
    return popt, rms


def find_resonances(table: ScanTable, column=None,
                    prominence=DEFAULT_PROMINENCE,
                    cfg=None, model=None, refine_factor=5):
    """Locate and characterize resonance peaks in a sigma column.

    Peaks must rise `prominence` (relative) above the local background
    and may not sit at grid endpoints. When cfg and model are supplied,
    the neighborhood is re-scanned refine_factor times denser before the
    Breit-Wigner + linear fit, and the (J, parity) block carrying >= 80%
    of the background-subtracted peak is identified.
    """
    if column is None:
        inel = [j for j in table.transitions if j != table.j_initial]
        if not inel:
            raise ScanError("no inelastic transition to search")
        column = f"sigma_{max(inel, key=lambda j: np.nanmax(table.column(f'sigma_{j}')))}"
    sig = table.column(column)
    good = np.isfinite(sig)
    E, s = table.E[good], sig[good]
    if E.size < 5:
        raise ScanError("too few valid rows for resonance detection")
    logs = np.log(np.clip(s, 1e-300, None))
    peaks, props = find_peaks(logs, prominence=math.log1p(prominence))
    reports = []
    for p in peaks:
        if p == 0 or p == E.size - 1:
            continue
        # fit window: three half-widths to each side (at least 8 points)
        prom = props["prominences"][list(peaks).index(p)]  # log units
        half = s[p] * math.exp(-0.5 * prom)
        wl = p
        while wl > 0 and s[wl] > half:
            wl -= 1
        wr = p
        while wr < E.size - 1 and s[wr] > half:
            wr += 1
        span = max(p - wl, wr - p, 3)
        lo = max(0, p - 3 * span)
        hi = min(E.size, p + 3 * span + 1)
        base = min(np.min(s[lo:p + 1]), np.min(s[p:hi]))
        peak_ratio = float(s[p] / base) if base > 0 else math.inf
        E_loc, s_loc = E[lo:hi], s[lo:hi]
        blocks_at_peak = None
        if cfg is not None and model is not None:
            E_fine = np.geomspace(E_loc[0], E_loc[-1],
                                  refine_factor * E_loc.size)
            j_out = int(column.split("_")[1])
            grid = cc.solve_grid(cfg, model, E_fine)
            s_fine = np.empty(E_fine.size)
            for i, Ev in enumerate(E_fine):
                blocks = [per_E[i] for per_E in grid.values()]
                s_fine[i] = cc.ics(blocks, table.j_initial, j_out, cfg,
                                   E_col=Ev) * BOHR2_TO_ANGSTROM2
            E_loc, s_loc = E_fine, s_fine
            ip = int(np.argmax(s_fine))
            blocks_at_peak = [per_E[ip] for per_E in grid.values()]
            E_guess = float(E_fine[ip])
        else:
            E_guess = float(E[p])
        gamma = rms = None
        E_peak = E_guess
        diagnostic = ""
        try:
            popt, rms = _fit_breit_wigner(E_loc, s_loc, E_guess)
            E_peak, gamma = float(popt[1]), float(popt[2])
        except (RuntimeError, ValueError) as err:
            diagnostic = f"Breit-Wigner fit failed: {err}"
        block = dominant_L = share = omega0 = None
        if blocks_at_peak is not None:
            j_out = int(column.split("_")[1])
            total = cc.ics(blocks_at_peak, table.j_initial, j_out, cfg,
                           E_col=E_guess)
            bg_total = (s_loc[0] + s_loc[-1]) / 2.0 / BOHR2_TO_ANGSTROM2
            best = (None, -1.0)
            for blk in blocks_at_peak:
                part = cc.ics([blk], table.j_initial, j_out, cfg,
                              E_col=E_guess)
                if part > best[1]:
                    best = (blk, part)
            blk, part = best
            if blk is not None and total > bg_total:
                share = float((part - bg_total * part / total)
                              / (total - bg_total))
                block = (blk.J, blk.parity)
                omega0 = blk.parity * (-1) ** blk.J == -1
                Ls = sorted({c.L for c in blk.open_channels()
                             if c.j == table.j_initial})
                best_L = (None, -1.0)
                for L in Ls:
                    pl = cc.ics([blk], table.j_initial, j_out, cfg,
                                E_col=E_guess, L_select=L)
                    if pl > best_L[1]:
                        best_L = (L, pl)
                dominant_L = best_L[0]
        reports.append(ResonanceReport(
            E_peak=E_peak, gamma=gamma, column=column, block=block,
            dominant_L=dominant_L, block_share=share, peak_ratio=peak_ratio,
            omega0_excluded=omega0, fit_rms=rms, diagnostic=diagnostic))
    return reports


def mechanism_summary(table: ScanTable, reports, transition=None):
    """Stereodynamics digest around each resonance.

    For every report: s^{(2)}_0 just below / at / above E_peak, the
    L-restricted moment at the peak (dominant L), and the
    prep_ics(0 deg) / unpolarized suppression ratio at the peak.
    """
    out = []
    for rep in reports:
        j_out = int(rep.column.split("_")[1])
        s20 = np.real(table.column(f"s20_{j_out}"))
        sig = table.column(f"sigma_{j_out}")
        prep0 = table.column(f"prep_{j_out}_b0")
        idx = int(np.argmin(np.abs(table.E - rep.E_peak)))
        below = max(idx - 2, 0)
        above = min(idx + 2, table.n - 1)
        entry = {
            "E_peak": rep.E_peak,
            "s20_below": float(s20[below]),
            "s20_at": float(s20[idx]),
            "s20_above": float(s20[above]),
            "suppression_ratio": float(prep0[idx] / sig[idx]),
            "omega0_excluded": rep.omega0_excluded,
        }
        if rep.dominant_L is not None:
            col = f"s20_{j_out}_L{rep.dominant_L}"
            if col in table.columns:
                entry["s20_L_at"] = float(np.real(table.column(col)[idx]))
        out.append(entry)
    return out


# ---------------------------------------------------------------------------
# emitters

def write_scan_csv(table: ScanTable, path=None):
    buf = io.StringIO()
    buf.write(f"# {SCAN_SCHEMA}\n")
    buf.write(f"# j_initial {table.j_initial}\n")
    names = sorted(table.columns)
    buf.write("E_col_K," + ",".join(names) + "\n")
    for i in range(table.n):
        cells = [f"{table.E[i]:.17g}"]
        for name in names:
            v = table.columns[name][i]
            if isinstance(v, complex) or np.iscomplexobj(v):
                v = np.real(v)
            cells.append(f"{v:.17g}")
        buf.write(",".join(cells) + "\n")
    text = buf.getvalue()
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text)
    return text


def read_scan_csv(path_or_text) -> ScanTable:
    text = path_or_text if "\n" in str(path_or_text) else open(
        path_or_text).read()
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0].lstrip("# ").strip() != SCAN_SCHEMA:
        raise ValueError("unknown scan CSV schema header")
    j_initial = 0
    body = lines[1:]
    while body and body[0].startswith("#"):
        tok = body.pop(0).lstrip("# ").split()
        if tok and tok[0] == "j_initial":
            j_initial = int(tok[1])
    header = body[0].split(",")
    if header[0] != "E_col_K":
        raise ValueError("scan CSV must start with an E_col_K column")
    rows = [ln.split(",") for ln in body[1:]]
    data = np.array([[float(c) for c in r] for r in rows])
    E = data[:, 0]
    columns = {name: data[:, i + 1] for i, name in enumerate(header[1:])}
    transitions = tuple(sorted({
        int(n.split("_")[1]) for n in columns if n.startswith("sigma_")
        and "_L" not in n}))
    L_values = tuple(sorted({
        int(n.rsplit("L", 1)[1]) for n in columns if "_L" in n}))
    return ScanTable(j_initial=j_initial, transitions=transitions,
                     L_values=L_values, E=E, columns=columns)


def write_resonance_report(reports, path=None):
    buf = io.StringIO()
    buf.write(f"# {RESONANCE_SCHEMA}\n")
    if not reports:
        buf.write("resonances 0\n")
    else:
        buf.write(f"resonances {len(reports)}\n")
    for i, rep in enumerate(reports):
        buf.write(f"resonance {i}\n")
        buf.write(f"  column {rep.column}\n")
        buf.write(f"  E_peak_K {rep.E_peak:.17g}\n")
        buf.write(f"  gamma_K {'nan' if rep.gamma is None else format(rep.gamma, '.17g')}\n")
        if rep.block is not None:
            buf.write(f"  block J={rep.block[0]} parity={rep.block[1]:+d}\n")
            buf.write(f"  dominant_L {rep.dominant_L}\n")
            buf.write(f"  block_share {rep.block_share:.6g}\n")
            buf.write(f"  omega0_excluded {rep.omega0_excluded}\n")
        buf.write(f"  peak_ratio {rep.peak_ratio:.6g}\n")
        if rep.fit_rms is not None:
            buf.write(f"  fit_rms {rep.fit_rms:.6g}\n")
        if rep.diagnostic:
            buf.write(f"  diagnostic {rep.diagnostic}\n")
    text = buf.getvalue()
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text)
    return text
