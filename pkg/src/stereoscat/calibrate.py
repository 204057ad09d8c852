"""Surrogate-potential calibration against a resonance specification.

Searches a one-parameter family of anisotropic potentials (well depth,
with fixed anisotropy ratios) for an isolated sub-1 K shape resonance in
the Delta j = -1 quenching cross section that is carried by a single
(J, parity) block, dominated by one entrance L, and lives in a parity
block that excludes Omega = 0 (I * (-1)^J = -1). The chosen model is
what ships as data/hd_h2_surrogate.pot.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

from . import ccsolver as cc
from .potential import PotentialModel, RadialForm, dump

CALIBRATION_SCHEMA = "stereoscat calibration-report-v1"

#: collision configuration the surrogate is calibrated for
SURROGATE_CONFIG = dict(mu=1.2, B_rotor=60.0, j_initial=2,
                        j_max=3, J_max=5)

#: well depth (K) of the shipped surrogate, found by surrogate_calibration
SURROGATE_DEPTH = 35.2


@dataclass(frozen=True)
class ResonanceTarget:
    """Acceptance window for the calibrated resonance."""

    E_min: float = 0.02        # K; keep the peak clear of the Wigner knee
    E_max: float = 1.0         # K
    L_dominant: int = 2
    min_block_share: float = 0.8
    min_L_share: float = 0.8
    require_omega0_excluded: bool = True
    min_peak_ratio: float = 2.0


@dataclass(frozen=True)
class CandidateResult:
    depth: float
    E_peak: float | None
    peak_sigma: float | None   # bohr^2
    block: tuple | None
    block_share: float | None
    dominant_L: int | None
    L_share: float | None
    omega0_excluded: bool | None
    peak_ratio: float | None
    accepted: bool
    reason: str


@dataclass(frozen=True)
class CalibrationResult:
    model: PotentialModel
    depth: float
    candidates: tuple
    target: ResonanceTarget
    config: dict = field(default_factory=dict)


def candidate_model(depth, sigma=6.0, aniso1=1.0, aniso2=0.3,
                    name="hd-h2-surrogate") -> PotentialModel:
    """The calibration family: LJ core, odd exp-dispersion, LJ lambda=2.

    depth is the lambda=0 Lennard-Jones well depth in kelvin; aniso1
    scales the odd (lambda=1) term that opens Delta j = -1, aniso2 the
    lambda=2 depth relative to the core.
    """
    return PotentialModel((
        (0, RadialForm("lennard-jones",
                       {"epsilon": depth, "sigma": sigma})),
        (1, RadialForm("exp-dispersion",
                       {"A": aniso1 * 8.0e4, "a": 1.9,
                        "C6": aniso1 * 180.0})),
        (2, RadialForm("lennard-jones",
                       {"epsilon": aniso2 * depth, "sigma": sigma * 1.02})),
    ), allow_odd=True, name=name)


def _scan_config(**overrides):
    kw = dict(SURROGATE_CONFIG)
    kw.setdefault("E_col", 1.0)   # placeholder; per-energy openness is
    kw.update(overrides)          # recomputed at matching
    return cc.CollisionConfig(**kw)


def quench_profile(model, cfg, E_grid):
    """Per-block and total Delta j = -1 quenching sigma over E_grid."""
    j_in = cfg.j_initial
    grid = cc.solve_grid(cfg, model, E_grid)
    parts = {}
    total = np.zeros(E_grid.size)
    for label, per_E in grid.items():
        prof = np.array([
            cc.ics([per_E[i]], j_in, j_in - 1, cfg, E_col=E)
            for i, E in enumerate(E_grid)])
        parts[label] = prof
        total += prof
    return total, parts, grid


def evaluate_candidate(depth, target: ResonanceTarget, cfg=None,
                       model=None, n_grid=80) -> CandidateResult:
    """Score one well depth against the resonance target."""
    model = candidate_model(depth) if model is None else model
    cfg = _scan_config() if cfg is None else cfg
    E = np.geomspace(target.E_min, 2.0 * target.E_max, n_grid)
    total, parts, grid = quench_profile(model, cfg, E)

    interior = np.arange(1, E.size - 1)
    maxima = [i for i in interior
              if total[i] >= total[i - 1] and total[i] >= total[i + 1]]
    if not maxima:
        return CandidateResult(depth, None, None, None, None, None, None,
                               None, None, False, "no interior maximum")
    i = max(maxima, key=lambda j: total[j])
    E_peak = float(E[i])
    lo, hi = max(0, i - 10), min(E.size, i + 11)
    base = min(float(np.min(total[lo:i + 1])), float(np.min(total[i:hi])))
    ratio = total[i] / base if base > 0 else np.inf
    # block attribution at the peak
    label = max(parts, key=lambda k: parts[k][i])
    share = float(parts[label][i] / total[i])
    J, parity = label
    omega0 = parity * (-1) ** J == -1
    blk = grid[label][i]
    j_in = cfg.j_initial
    Ls = sorted({c.L for c in blk.open_channels() if c.j == j_in})
    pl = {L: cc.ics([blk], j_in, j_in - 1, cfg, E_col=E_peak, L_select=L)
          for L in Ls}
    L_dom = max(pl, key=pl.get)
    L_share = float(pl[L_dom] / sum(pl.values())) if sum(pl.values()) else 0.0

    checks = [
        (E_peak <= target.E_max, f"peak at {E_peak:.3g} K above E_max"),
        (ratio >= target.min_peak_ratio,
         f"peak ratio {ratio:.3g} below {target.min_peak_ratio}"),
        (share >= target.min_block_share,
         f"block share {share:.3g} below {target.min_block_share}"),
        (L_dom == target.L_dominant,
         f"dominant L = {L_dom}, want {target.L_dominant}"),
        (L_share >= target.min_L_share,
         f"L share {L_share:.3g} below {target.min_L_share}"),
        (omega0 or not target.require_omega0_excluded,
         "block does not exclude Omega = 0"),
    ]
    bad = [msg for ok, msg in checks if not ok]
    return CandidateResult(
        depth=depth, E_peak=E_peak, peak_sigma=float(total[i]),
        block=label, block_share=share, dominant_L=L_dom, L_share=L_share,
        omega0_excluded=omega0, peak_ratio=float(ratio),
        accepted=not bad, reason="; ".join(bad) or "meets target")


def surrogate_calibration(target=None, depths=None, cfg=None,
                          n_grid=80) -> CalibrationResult:
    """Grid-search the well depth until the target resonance appears.

    Among accepted depths the one whose peak sits closest (log-distance)
    to sqrt(E_min * E_max) — mid-window, far from both the Wigner knee
    and the 1 K edge — wins.
    """
    target = target or ResonanceTarget()
    if depths is None:
        depths = np.arange(35.0, 36.01, 0.2)
    cfg = _scan_config() if cfg is None else cfg
    results = [evaluate_candidate(float(d), target, cfg=cfg, n_grid=n_grid)
               for d in depths]
    accepted = [r for r in results if r.accepted]
    if not accepted:
        raise cc.SolverError(
            "calibration failed: no depth in "
            f"[{min(depths)}, {max(depths)}] meets the resonance target; "
            + "; ".join(f"{r.depth}: {r.reason}" for r in results))
    E_mid = np.sqrt(target.E_min * target.E_max)
    best = min(accepted, key=lambda r: abs(np.log(r.E_peak / E_mid)))
    return CalibrationResult(model=candidate_model(best.depth),
                             depth=best.depth, candidates=tuple(results),
                             target=target, config=dict(SURROGATE_CONFIG))


def write_calibration_report(result: CalibrationResult, path=None):
    buf = io.StringIO()
    buf.write(f"# {CALIBRATION_SCHEMA}\n")
    buf.write(f"chosen_depth_K {result.depth:.17g}\n")
    t = result.target
    buf.write(f"target E_window_K [{t.E_min:g}, {t.E_max:g}] "
              f"L={t.L_dominant} block_share>={t.min_block_share:g} "
              f"omega0_excluded={t.require_omega0_excluded}\n")
    for key, val in result.config.items():
        buf.write(f"config {key} {val}\n")
    for r in result.candidates:
        line = f"candidate depth={r.depth:g} accepted={r.accepted}"
        if r.E_peak is not None:
            line += (f" E_peak={r.E_peak:.6g} block={r.block}"
                     f" share={r.block_share:.3f} L={r.dominant_L}"
                     f" omega0_excluded={r.omega0_excluded}"
                     f" peak_ratio={r.peak_ratio:.3g}")
        line += f" reason={r.reason}"
        buf.write(line + "\n")
    text = buf.getvalue()
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text)
    return text


def shipped_model_text():
    """Serialized form of the shipped surrogate (what data/ contains)."""
    return dump(candidate_model(SURROGATE_DEPTH))
