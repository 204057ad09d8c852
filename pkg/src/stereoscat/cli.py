"""Command-line interface: scan, smatrix, observables, portrait, calibrate.

One INI-style config file drives each run; all floating output is emitted
at 17 significant digits with a schema-version header on every file.
Units at the interface are kelvin, degrees, and Angstrom^2 (bohr^2
internally; see units.BOHR2_TO_ANGSTROM2).

Exit codes: 0 success, 1 partial/physics failures, 2 configuration errors.
Worker budget: --workers, overridden by the STEREOSCAT_WORKERS variable.
"""

from __future__ import annotations

import argparse
import configparser
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import calibrate as calmod
from . import ccsolver as cc
from . import scan as scanmod
from . import stereo
from .potential import hd_h2_surrogate
from .potential import load as load_potential
from .units import BOHR2_TO_ANGSTROM2

WORKERS_ENV = "STEREOSCAT_WORKERS"
EXIT_OK, EXIT_PARTIAL, EXIT_CONFIG = 0, 1, 2
SCAN_CHUNK = 25   # energies per solve batch, so Ctrl-C keeps finished rows


class ConfigError(Exception):
    pass


# ---------------------------------------------------------------------------
# config parsing

def parse_config(path) -> configparser.ConfigParser:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    cp = configparser.ConfigParser()
    cp.optionxform = str
    try:
        cp.read_string(p.read_text(), source=str(p))
    except configparser.Error as err:
        raise ConfigError(f"config parse error: {err}") from err
    return cp


def _get(cp, section, key, cast, default=None):
    if section not in cp or key not in cp[section]:
        if default is not None:
            return default
        raise ConfigError(f"missing [{section}] {key}")
    try:
        return cast(cp[section][key])
    except ValueError as err:
        raise ConfigError(f"bad value for [{section}] {key}: {err}") from err


def collision_config(cp, **overrides) -> cc.CollisionConfig:
    kw = dict(
        mu=_get(cp, "collision", "mu", float),
        B_rotor=_get(cp, "collision", "B_rotor", float),
        j_initial=_get(cp, "collision", "j_initial", int),
        j_max=_get(cp, "collision", "j_max", int),
        J_max=_get(cp, "collision", "J_max", int),
        E_col=_get(cp, "collision", "E_col", float, 1.0),
        E_cut=_get(cp, "collision", "E_cut", float, 2000.0),
        R_min=_get(cp, "collision", "R_min", float, 2.5),
        R_max=_get(cp, "collision", "R_max", float, 200.0),
        steps_per_wavelength=_get(cp, "collision", "steps_per_wavelength",
                                  int, 40),
    )
    kw.update(overrides)
    try:
        return cc.CollisionConfig(**kw)
    except ValueError as err:
        raise ConfigError(f"invalid collision parameters: {err}") from err


def potential_model(cp, base_dir):
    if "potential" not in cp:
        raise ConfigError("missing [potential] section")
    sec = cp["potential"]
    if "builtin" in sec:
        name = sec["builtin"]
        if name != "hd_h2_surrogate":
            raise ConfigError(f"unknown builtin potential: {name}")
        return hd_h2_surrogate()
    if "file" not in sec:
        raise ConfigError("[potential] needs either file or builtin")
    path = Path(base_dir) / sec["file"]
    if not path.is_file():
        raise ConfigError(f"potential file not found: {path}")
    try:
        return load_potential(str(path))
    except ValueError as err:
        raise ConfigError(f"potential parse error: {err}") from err


def parse_preparations(spec):
    """'unpolarized; 0 0; 90 0; magic 0' -> [(label, beta, alpha)|None]."""
    preps = []
    for item in spec.split(";"):
        item = item.strip()
        if not item:
            continue
        if item == "unpolarized":
            preps.append(("unpolarized", None, None))
            continue
        parts = item.split()
        if len(parts) != 2:
            raise ConfigError(f"bad preparation {item!r}: want 'beta alpha'")
        beta = (stereo.MAGIC_ANGLE_DEG if parts[0] == "magic"
                else float(parts[0]))
        alpha = float(parts[1])
        if not 0.0 <= beta <= 180.0:
            raise ConfigError(f"preparation beta {beta} outside [0, 180]")
        if not 0.0 <= alpha < 360.0:
            raise ConfigError(f"preparation alpha {alpha} outside [0, 360)")
        label = f"beta{parts[0]}_alpha{parts[1]}"
        preps.append((label, beta, alpha))
    if not preps:
        raise ConfigError("empty preparations list")
    return preps


def resolve_workers(args):
    env = os.environ.get(WORKERS_ENV)
    if env is not None:
        try:
            return max(1, int(env))
        except ValueError as err:
            raise ConfigError(f"bad {WORKERS_ENV}: {env!r}") from err
    return max(1, args.workers)


def _out_dir(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if not os.access(out, os.W_OK):
        raise ConfigError(f"output directory not writable: {out}")
    return out


def _say(args, *msg):
    if args.verbose:
        print(*msg)


# ---------------------------------------------------------------------------
# subcommands

def _merge_tables(tables):
    E = np.concatenate([t.E for t in tables])
    columns = {}
    for name in tables[0].columns:
        columns[name] = np.concatenate([t.columns[name] for t in tables])
    errors = {}
    offset = 0
    for t in tables:
        for i, msg in t.errors.items():
            errors[offset + i] = msg
        offset += t.n
    first = tables[0]
    return scanmod.ScanTable(j_initial=first.j_initial,
                             transitions=first.transitions,
                             L_values=first.L_values, E=E,
                             columns=columns, errors=errors)


def cmd_scan(cp, args):
    cfg = collision_config(cp)
    model = potential_model(cp, Path(args.config).parent)
    E_min = _get(cp, "scan", "E_min_K", float, 1e-3)
    E_max = _get(cp, "scan", "E_max_K", float, 10.0)
    n = _get(cp, "scan", "n_points", int, 200)
    prominence = _get(cp, "scan", "prominence", float,
                      scanmod.DEFAULT_PROMINENCE)
    grid = np.geomspace(E_min, E_max, n)
    workers = resolve_workers(args)
    out = _out_dir(args)
    if args.dry_run:
        print(f"scan plan: {n} energies in [{E_min:g}, {E_max:g}] K, "
              f"{len(cc.block_labels(cfg))} (J, parity) blocks, "
              f"{workers} workers -> {out / 'scan.csv'}, "
              f"{out / 'resonances.txt'}")
        return EXIT_OK
    tables = []
    try:
        for start in range(0, n, SCAN_CHUNK):
            chunk = grid[start:start + SCAN_CHUNK]
            tables.append(scanmod.energy_scan(cfg, model, E_grid=chunk,
                                              workers=workers))
            _say(args, f"scanned {start + chunk.size}/{n} energies")
    except KeyboardInterrupt:
        print("interrupted; flushing completed rows", file=sys.stderr)
    if not tables:
        return EXIT_PARTIAL
    table = _merge_tables(tables)
    scanmod.write_scan_csv(table, out / "scan.csv")
    try:
        reports = scanmod.find_resonances(table, prominence=prominence,
                                          cfg=cfg, model=model)
    except scanmod.ScanError as err:
        print(f"resonance detection skipped: {err}", file=sys.stderr)
        reports = []
    scanmod.write_resonance_report(reports, out / "resonances.txt")
    for digest in scanmod.mechanism_summary(table, reports):
        _say(args, "mechanism:", digest)
    if table.errors or table.n < n:
        print(f"{len(table.errors) + (n - table.n)} of {n} rows failed "
              "or were not computed", file=sys.stderr)
        return EXIT_PARTIAL
    return EXIT_OK


def cmd_smatrix(cp, args):
    model = potential_model(cp, Path(args.config).parent)
    energies = _get(
        cp, "smatrix", "energies_K",
        lambda s: [float(tok) for tok in s.replace(",", " ").split()])
    out = _out_dir(args)
    if args.dry_run:
        print(f"smatrix plan: {len(energies)} energies "
              f"{energies} -> {out / 'smatrix.smat'}")
        return EXIT_OK
    blocks = []
    failed = 0
    for E in energies:
        cfg = collision_config(cp, E_col=E)
        try:
            blocks.extend(cc.solve_all(cfg, model))
        except cc.SolverError as err:
            print(f"E = {E:g} K failed: {err}", file=sys.stderr)
            failed += 1
    if blocks:
        cc.dump_blocks(blocks, out / "smatrix.smat")
    return EXIT_PARTIAL if failed else EXIT_OK


def cmd_observables(cp, args):
    cfg = collision_config(cp)
    path = Path(args.config).parent / _get(cp, "observables",
                                           "smatrix_file", str)
    if not path.is_file():
        raise ConfigError(f"S-matrix file not found: {path}")
    j_out = _get(cp, "observables", "transition", int)
    n_theta = _get(cp, "observables", "n_theta", int, 721)
    preps = parse_preparations(_get(cp, "observables", "preparations", str,
                                    "unpolarized; 0 0; 90 0; magic 0"))
    out = _out_dir(args)
    if args.dry_run:
        print(f"observables plan: {path} -> j={cfg.j_initial}->{j_out}, "
              f"{len(preps)} preparations, n_theta={n_theta} -> "
              f"{out / 'moments.csv'}, {out / 'dcs.csv'}")
        return EXIT_OK
    try:
        blocks = cc.load_blocks(str(path), cfg.h22m)
    except ValueError as err:
        raise ConfigError(f"S-matrix parse failure: {err}") from err
    by_E = {}
    for blk in blocks:
        by_E.setdefault(blk.E_col, []).append(blk)
    moment_rows = []
    dcs_entries = []
    failed = 0
    for E in sorted(by_E):
        try:
            hel = stereo.helicity_transform(by_E[E], cfg.j_initial, j_out)
            amps = stereo.amplitudes(hel, n_theta=n_theta)
            mset = stereo.pddcs(amps)
        except stereo.StereoError as err:
            print(f"E = {E:g} K failed: {err}", file=sys.stderr)
            failed += 1
            continue
        for (k, q), s in sorted(stereo.polarization_moments(mset).items()):
            moment_rows.append((E, k, q, s))
        theta_deg = np.degrees(mset.theta)
        unpol = np.real(mset.S_kq[(0, 0)]) * BOHR2_TO_ANGSTROM2
        for label, beta, alpha in preps:
            if beta is None:
                vals = unpol
            else:
                vals = stereo.prep_dcs(mset, beta, alpha) * \
                    BOHR2_TO_ANGSTROM2
            dcs_entries.extend(
                (E, label, td, v) for td, v in zip(theta_deg, vals))
    if moment_rows:
        stereo.write_moments_csv(moment_rows, out / "moments.csv")
        stereo.write_dcs_csv(dcs_entries, out / "dcs.csv")
    return EXIT_PARTIAL if failed else EXIT_OK


def cmd_portrait(cp, args):
    path = Path(args.config).parent / _get(cp, "portrait", "moments_file",
                                           str)
    if not path.is_file():
        raise ConfigError(f"moments file not found: {path}")
    j = _get(cp, "portrait", "j", int)
    n_theta_r = _get(cp, "portrait", "n_theta_r", int, 91)
    n_phi_r = _get(cp, "portrait", "n_phi_r", int, 181)
    E_sel = _get(cp, "portrait", "E_col_K", float, -1.0)
    out = _out_dir(args)
    if args.dry_run:
        print(f"portrait plan: {path} (E = "
              f"{'first' if E_sel < 0 else E_sel}) j={j} "
              f"{n_theta_r}x{n_phi_r} -> {out / 'portrait.csv'}")
        return EXIT_OK
    try:
        rows = stereo.read_moments_csv(str(path))
    except ValueError as err:
        raise ConfigError(f"moments parse failure: {err}") from err
    energies = sorted({E for E, _, _, _ in rows})
    E = energies[0] if E_sel < 0 else E_sel
    moments = {(k, q): s for Ev, k, q, s in rows
               if math.isclose(Ev, E, rel_tol=1e-12)}
    if not moments:
        raise ConfigError(f"no moments at E = {E:g} K in {path}")
    p = stereo.portrait(stereo.axis_moments(j, moments),
                        n_theta_r=n_theta_r, n_phi_r=n_phi_r)
    stereo.write_portrait_csv(p, out / "portrait.csv")
    return EXIT_OK


def cmd_calibrate(cp, args):
    out = _out_dir(args)
    if "calibrate" in cp and "depths_K" in cp["calibrate"]:
        depths = [float(tok) for tok in
                  cp["calibrate"]["depths_K"].replace(",", " ").split()]
    else:
        depths = None
    n_grid = _get(cp, "calibrate", "n_grid", int, 80) \
        if "calibrate" in cp else 80
    if args.dry_run:
        shown = depths if depths is not None else "default grid"
        print(f"calibrate plan: depths {shown} -> "
              f"{out / 'surrogate.pot'}, {out / 'calibration.txt'}")
        return EXIT_OK
    try:
        result = calmod.surrogate_calibration(depths=depths, n_grid=n_grid)
    except cc.SolverError as err:
        print(f"calibration failed: {err}", file=sys.stderr)
        return EXIT_PARTIAL
    from .potential import dump
    dump(result.model, out / "surrogate.pot")
    calmod.write_calibration_report(result, out / "calibration.txt")
    _say(args, f"chosen depth {result.depth} K")
    return EXIT_OK


# ---------------------------------------------------------------------------

COMMANDS = {
    "scan": cmd_scan,
    "smatrix": cmd_smatrix,
    "observables": cmd_observables,
    "portrait": cmd_portrait,
    "calibrate": cmd_calibrate,
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="stereoscat",
        description="Coupled-channel scattering and stereodynamics for a "
                    "rigid rotor + structureless partner")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True,
                       help="INI-style run configuration")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--workers", type=int, default=1,
                       help=f"worker budget (env {WORKERS_ENV} overrides)")
        p.add_argument("--dry-run", action="store_true",
                       help="validate the config and print the plan")
        p.add_argument("--verbose", action="store_true")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cp = parse_config(args.config)
        return COMMANDS[args.command](cp, args)
    except ConfigError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except (cc.SolverError, scanmod.ScanError, stereo.StereoError) as err:
        print(f"run failed: {err}", file=sys.stderr)
        return EXIT_PARTIAL


if __name__ == "__main__":
    sys.exit(main())
