"""Parsers for the versioned stereoscat CSV schemas.

The schemas are part of the file-format contract, duplicated here as
string constants; plotkit reads the files only, it never imports the
scattering engine.
"""

import csv
import io
from dataclasses import dataclass

import numpy as np

SCAN_SCHEMA = "stereoscat scan-csv-v1"
DCS_SCHEMA = "stereoscat dcs-csv-v1"
PORTRAIT_SCHEMA = "stereoscat portrait-csv-v1"


class SchemaError(ValueError):
    """Input file does not match its versioned schema."""


class SelectionError(ValueError):
    """A requested column / preparation / transition is not present."""


@dataclass(frozen=True)
class ScanData:
    j_initial: int
    E: np.ndarray                  # K, ascending
    columns: dict                  # name -> float array

    def column(self, name):
        if name not in self.columns:
            raise SelectionError(f"scan CSV has no column '{name}'")
        return self.columns[name]

    def transitions(self):
        """Final-j values that have a sigma_{j'} column, ascending."""
        out = []
        for name in self.columns:
            parts = name.split("_")
            if len(parts) == 2 and parts[0] == "sigma":
                out.append(int(parts[1]))
        return sorted(out)

    def L_values(self, j_out):
        out = []
        for name in self.columns:
            prefix = f"sigma_{j_out}_L"
            if name.startswith(prefix):
                out.append(int(name[len(prefix):]))
        return sorted(out)


@dataclass(frozen=True)
class DcsData:
    preparations: dict             # label -> (E array, theta_deg, grid)

    def grid(self, label):
        if label not in self.preparations:
            known = ", ".join(sorted(self.preparations))
            raise SelectionError(
                f"DCS CSV has no preparation '{label}' (has: {known})")
        return self.preparations[label]


@dataclass(frozen=True)
class PortraitData:
    theta_r_deg: np.ndarray
    phi_r_deg: np.ndarray
    density: np.ndarray            # (n_theta, n_phi)


def _lines(path, schema):
    with open(path) as fh:
        text = fh.read()
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0].lstrip("# ").strip() != schema:
        head = lines[0] if lines else "<empty>"
        raise SchemaError(f"{path}: expected schema '{schema}', "
                          f"got '{head}'")
    return lines


def _check_header(path, got, want):
    if got != want:
        missing = sorted(set(want) - set(got))
        extra = sorted(set(got) - set(want))
        detail = []
        if missing:
            detail.append(f"missing column(s) {missing}")
        if extra:
            detail.append(f"unexpected column(s) {extra}")
        raise SchemaError(f"{path}: bad column header: "
                          + ("; ".join(detail) or f"{got} != {want}"))


def read_scan(path) -> ScanData:
    lines = _lines(path, SCAN_SCHEMA)
    j_initial = 0
    body = []
    for ln in lines[1:]:
        if ln.startswith("#"):
            toks = ln.lstrip("# ").split()
            if len(toks) == 2 and toks[0] == "j_initial":
                j_initial = int(toks[1])
            continue
        body.append(ln)
    rows = list(csv.reader(io.StringIO("\n".join(body))))
    header = rows[0]
    if not header or header[0] != "E_col_K":
        raise SchemaError(f"{path}: bad column header: first column "
                          f"must be 'E_col_K', got '{header[:1]}'")
    data = np.array([[float(c) for c in r] for r in rows[1:]])
    if data.size == 0:
        raise SchemaError(f"{path}: scan CSV has no data rows")
    return ScanData(j_initial=j_initial, E=data[:, 0],
                    columns={name: data[:, i + 1]
                             for i, name in enumerate(header[1:])})


def read_dcs(path) -> DcsData:
    lines = _lines(path, DCS_SCHEMA)
    rows = list(csv.reader(io.StringIO("\n".join(lines[1:]))))
    _check_header(path, rows[0],
                  ["E_col_K", "preparation", "theta_deg", "dcs_A2_sr"])
    per_label = {}
    for E_s, label, th_s, v_s in rows[1:]:
        per_label.setdefault(label, []).append(
            (float(E_s), float(th_s), float(v_s)))
    preparations = {}
    for label, triples in per_label.items():
        E_vals = sorted({t[0] for t in triples})
        th_vals = sorted({t[1] for t in triples})
        grid = np.full((len(E_vals), len(th_vals)), np.nan)
        Ei = {E: i for i, E in enumerate(E_vals)}
        ti = {t: i for i, t in enumerate(th_vals)}
        for E, th, v in triples:
            grid[Ei[E], ti[th]] = v
        if np.isnan(grid).any():
            raise SchemaError(
                f"{path}: preparation '{label}' is not a full "
                "energy x theta grid")
        preparations[label] = (np.array(E_vals), np.array(th_vals), grid)
    return DcsData(preparations=preparations)


def read_portrait(path) -> PortraitData:
    lines = _lines(path, PORTRAIT_SCHEMA)
    rows = list(csv.reader(io.StringIO("\n".join(lines[1:]))))
    _check_header(path, rows[0], ["theta_r_deg", "phi_r_deg", "density"])
    triples = [(float(a), float(b), float(c)) for a, b, c in rows[1:]]
    th = sorted({t[0] for t in triples})
    ph = sorted({t[1] for t in triples})
    dens = np.full((len(th), len(ph)), np.nan)
    ti = {t: i for i, t in enumerate(th)}
    pi = {p: i for i, p in enumerate(ph)}
    for t, p, v in triples:
        dens[ti[t], pi[p]] = v
    if np.isnan(dens).any():
        raise SchemaError(f"{path}: portrait CSV is not a full grid")
    return PortraitData(theta_r_deg=np.array(th), phi_r_deg=np.array(ph),
                        density=dens)
