"""Coupled-channel solver in the total-angular-momentum representation.

For each (J, parity) block: enumerate the (j, L) channel basis, propagate
the log-derivative matrix of the coupled radial equations outward, and
match to Riccati-Bessel asymptotics to obtain a unitary, symmetric
S-matrix over the open channels.

The propagator is a log-derivative method with a constant reference
potential per sector: the coupling matrix is diagonalized at the sector
midpoint and the exact constant-potential half-sector propagators are
corrected by Simpson-weighted quadrature of the residual. Because the
collision energy only shifts the diagonal, the sector eigenbasis is
shared by all energies, and a whole energy grid is propagated in one
batched sweep.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import spherical_in

from . import angular
from .potential import PotentialModel, coupling_element
from .units import hbar2_over_2mu

SMATRIX_SCHEMA = "stereoscat smatrix-v1"

TAIL_RTOL = 1e-6          # |v_l(R_max)| / E_col threshold for auto-extension
UNITARITY_TOL = 1e-8
SYMMETRY_TOL = 1e-8
MIN_KRMAX = 2.0 * math.pi * 5.0   # on the largest open-channel wavenumber


class SolverError(RuntimeError):
    pass


class BasisError(SolverError):
    pass


class PropagationFailure(SolverError):
    def __init__(self, message, R=None):
        super().__init__(message)
        self.R = R


class MatchingFailure(SolverError):
    pass


@dataclass(frozen=True)
class CollisionConfig:
    """Physical and numerical parameters of one collision problem.

    Energies in kelvin, lengths in bohr, mu in amu. Rotor levels are
    E_j = B_rotor j(j+1); E_total = E_col + E_{j_initial}.
    """

    mu: float
    B_rotor: float
    j_initial: int
    E_col: float
    j_max: int
    J_max: int
    E_cut: float = 2000.0
    R_min: float = 2.5
    R_max: float = 200.0
    steps_per_wavelength: int = 40

    def __post_init__(self):
        if self.E_col <= 0:
            raise ValueError("E_col must be positive")
        if self.R_min >= self.R_max:
            raise ValueError("R_min must be below R_max")
        if self.j_max < self.j_initial:
            raise ValueError("j_max must be at least the initial j")
        if self.J_max < 0 or self.j_initial < 0:
            raise ValueError("angular momenta must be non-negative")
        if self.steps_per_wavelength < 4:
            raise ValueError("steps_per_wavelength too small")

    @property
    def h22m(self):
        return hbar2_over_2mu(self.mu)

    def rotor_energy(self, j):
        return self.B_rotor * j * (j + 1)

    @property
    def E_total(self):
        return self.E_col + self.rotor_energy(self.j_initial)


@dataclass(frozen=True)
class Channel:
    j: int
    L: int
    E_channel: float
    open_: bool


@dataclass(frozen=True)
class ChannelBasis:
    """Ordered (j, L) channel list for one (J, parity) block."""

    J: int
    parity: int
    channels: tuple
    E_total: float
    h22m: float

    @property
    def n(self):
        return len(self.channels)

    @property
    def j_arr(self):
        return np.array([c.j for c in self.channels])

    @property
    def L_arr(self):
        return np.array([c.L for c in self.channels])

    @property
    def E_arr(self):
        return np.array([c.E_channel for c in self.channels])

    @property
    def open_mask(self):
        return np.array([c.open_ for c in self.channels])

    def k_open(self):
        """Wavenumbers (bohr^-1) of the open channels, basis order."""
        E = self.E_arr[self.open_mask]
        return np.sqrt((self.E_total - E) / self.h22m)


@dataclass(frozen=True)
class SMatrixBlock:
    """S-matrix over the open channels of one (E, J, parity) block."""

    E_col: float
    J: int
    parity: int
    basis: ChannelBasis
    S: np.ndarray
    meta: dict = field(default_factory=dict)

    def validate(self):
        S = self.S
        defect_u = np.max(np.abs(S.conj().T @ S - np.eye(S.shape[0])))
        defect_s = np.max(np.abs(S - S.T))
        if defect_u > UNITARITY_TOL or defect_s > SYMMETRY_TOL:
            raise MatchingFailure(
                f"S-matrix defect (J={self.J}, parity={self.parity:+d}, "
                f"E_col={self.E_col:g} K): unitarity {defect_u:.2e}, "
                f"symmetry {defect_s:.2e}; increase R_max or "
                "steps_per_wavelength")
        return defect_u, defect_s

    def open_channels(self):
        return [c for c in self.basis.channels if c.open_]


def build_basis(cfg: CollisionConfig, J, parity, E_col=None) -> ChannelBasis:
    """All (j <= j_max, L) channels of the (J, parity) block.

    Closed channels are kept only within E_cut of the total energy.
    """
    if parity not in (+1, -1):
        raise ValueError("parity must be +1 or -1")
    E_col = cfg.E_col if E_col is None else E_col
    E_total = E_col + cfg.rotor_energy(cfg.j_initial)
    channels = []
    for j in range(cfg.j_max + 1):
        for L in range(abs(J - j), J + j + 1):
            if (-1) ** (j + L) != parity:
                continue
            E_ch = cfg.rotor_energy(j)
            open_ = E_total - E_ch > 0
            if not open_ and E_ch - E_total > cfg.E_cut:
                continue
            channels.append(Channel(j, L, E_ch, open_))
    if not channels:
        raise BasisError(f"empty channel basis for J={J}, parity={parity:+d}")
    channels.sort(key=lambda c: (c.j, c.L))
    return ChannelBasis(J, parity, tuple(channels), E_total, cfg.h22m)


def _extended_rmax(cfg, model, E_col_min):
    """Grow R_max until the potential tail is negligible at E_col_min."""
    R = cfg.R_max
    while model.tail_magnitude(R) > TAIL_RTOL * E_col_min:
        R *= 1.25
        if R > 1e5:
            raise SolverError("R_max extension runaway; potential tail "
                              "decays too slowly")
    return R


def _sector_boundaries(cfg, model, basis, R_max, E_total_max):
    """Variable-width sectors sized by the local wavelength."""
    h22m = cfg.h22m
    # local kinetic energy estimate: total energy above the lowest channel
    # plus the full potential magnitude (conservative)
    bounds = [cfg.R_min]
    R = cfg.R_min
    E_open_max = E_total_max - float(np.min(basis.E_arr))
    while R < R_max:
        vmag = sum(abs(float(f(R))) for _, f in model.lambda_terms)
        k_loc = math.sqrt((E_open_max + vmag) / h22m)
        h = 2.0 * math.pi / k_loc / cfg.steps_per_wavelength
        # the centrifugal term varies on the scale of R itself
        h = min(h, R / 8.0)
        R = min(R + 2.0 * h, R_max)
        bounds.append(R)
    return np.array(bounds)


def _coupling_matrices(model, basis):
    """E-independent coupling matrices F_lam over the channel basis."""
    n = basis.n
    mats = {}
    for lam, _ in model.lambda_terms:
        F = np.zeros((n, n))
        for a, ca in enumerate(basis.channels):
            for b, cb in enumerate(basis.channels):
                F[a, b] = coupling_element(ca.j, ca.L, cb.j, cb.L,
                                           basis.J, lam)
        mats[lam] = F
    return mats


def _ref_propagators(w, h):
    """Exact constant-potential half-sector propagators, elementwise.

    w: reference eigenvalues of W (positive = closed), any shape.
    Returns (y14, y23).
    """
    p = np.sqrt(np.abs(w))
    ph = np.clip(p * h, None, 700.0)
    with np.errstate(all="ignore"):
        y14 = np.where(w > 0, p / np.tanh(ph), p / np.tan(ph))
        y23 = np.where(w > 0, p / np.sinh(ph), p / np.sin(ph))
    small = np.abs(w) * h * h < 1e-8
    y14 = np.where(small, 1.0 / h + w * h / 3.0, y14)
    y23 = np.where(small, 1.0 / h - w * h / 6.0, y23)
    return y14, y23


def propagate(basis: ChannelBasis, model: PotentialModel,
              cfg: CollisionConfig, energies=None):
    """Log-derivative matrix Y(R_max) for one block.

    energies: optional 1-d array of collision energies propagated in one
    batched sweep (default: cfg.E_col alone, returning a 2-d Y).
    """
    single = energies is None
    E_col = np.atleast_1d(cfg.E_col if single else np.asarray(energies,
                                                              dtype=float))
    if np.any(E_col <= 0):
        raise ValueError("collision energies must be positive")
    h22m = cfg.h22m
    E_tot = E_col + cfg.rotor_energy(cfg.j_initial)
    n = basis.n
    nE = E_col.size

    R_max = _extended_rmax(cfg, model, float(np.min(E_col)))
    bounds = _sector_boundaries(cfg, model, basis, R_max, float(np.max(E_tot)))

    F = _coupling_matrices(model, basis)
    LL1 = basis.L_arr * (basis.L_arr + 1.0)
    E_ch = basis.E_arr

    def A_of(R):
        # E-independent part of W = psi''/psi coefficient
        M = np.zeros((n, n))
        for lam, form in model.lambda_terms:
            M += float(form(R)) * F[lam]
        M += np.diag(E_ch)
        M /= h22m
        M += np.diag(LL1 / R ** 2)
        return M

    shift = E_tot / h22m                       # (nE,)
    Y = np.zeros((nE, n, n))
    A0 = A_of(cfg.R_min)
    for i in range(n):
        L = basis.channels[i].L
        # local k^2 without the centrifugal part (that lives in jhat_L)
        k2loc = shift - A0[i, i] + LL1[i] / cfg.R_min ** 2
        for e in range(nE):
            if k2loc[e] > 0:
                kloc = math.sqrt(k2loc[e])
                jh, _, jhp, _ = angular.riccati_bessel(L, kloc * cfg.R_min)
                Y[e, i, i] = kloc * jhp / jh if jh != 0.0 else 1e10
            elif k2loc[e] < 0:
                kap = math.sqrt(-k2loc[e])
                x = kap * cfg.R_min
                if x > 600.0:
                    Y[e, i, i] = kap
                else:
                    ih = spherical_in(L, x)
                    ihp = spherical_in(L, x, derivative=True)
                    Y[e, i, i] = kap * (ih + x * ihp) / (x * ih) if ih else 1e10
            else:
                Y[e, i, i] = (L + 1.0) / cfg.R_min

    A1 = A_of(bounds[0])
    for s in range(len(bounds) - 1):
        R1, R3 = bounds[s], bounds[s + 1]
        R2 = 0.5 * (R1 + R3)
        h = 0.5 * (R3 - R1)
        A2 = A_of(R2)
        A3 = A_of(R3)
        w, T = np.linalg.eigh(A2)
        Q1 = (h / 3.0) * (T.T @ A1 @ T - np.diag(w))
        Q3 = (h / 3.0) * (T.T @ A3 @ T - np.diag(w))
        wref = w[None, :] - shift[:, None]     # (nE, n)
        y14, y23 = _ref_propagators(wref, h)
        Yt = np.matmul(T.T, np.matmul(Y, T))
        # half-sector R1 -> R2
        M = Yt + Q1
        M[:, np.arange(n), np.arange(n)] += y14
        Minv = np.linalg.inv(M)
        Yt = -y23[:, :, None] * Minv * y23[:, None, :]
        Yt[:, np.arange(n), np.arange(n)] += y14
        # half-sector R2 -> R3
        M = Yt.copy()
        M[:, np.arange(n), np.arange(n)] += y14
        Minv = np.linalg.inv(M)
        Yt = Q3 - y23[:, :, None] * Minv * y23[:, None, :]
        Yt[:, np.arange(n), np.arange(n)] += y14
        Y = np.matmul(T, np.matmul(Yt, T.T))
        if not np.all(np.isfinite(Y)):
            raise PropagationFailure(
                f"non-finite log-derivative at R={R3:.3f} bohr "
                f"(J={basis.J}, parity={basis.parity:+d})", R=R3)
        A1 = A3

    meta = {"R_max": R_max, "n_sectors": len(bounds) - 1}
    return (Y[0], meta) if single else (Y, meta)


def match(Y, basis: ChannelBasis, cfg: CollisionConfig, E_col=None,
          R_max=None, meta=None) -> SMatrixBlock:
    """Asymptotic matching of Y(R_max) to Riccati-Bessel solutions.

    Closed channels are eliminated through their decaying asymptotic
    log-derivatives; on the open space K = -(Y N - N')^{-1} (Y J - J')
    with flux-normalized jhat/nhat, then S = (1 + iK)(1 - iK)^{-1}.
    """
    E_col = cfg.E_col if E_col is None else float(E_col)
    R = R_max if R_max is not None else (meta or {}).get("R_max", cfg.R_max)
    h22m = cfg.h22m
    E_tot = E_col + cfg.rotor_energy(cfg.j_initial)
    E_ch = basis.E_arr
    open_ = E_tot - E_ch > 0
    if not np.any(open_):
        raise MatchingFailure("no open channels at matching")
    iop = np.flatnonzero(open_)
    icl = np.flatnonzero(~open_)
    k = np.sqrt((E_tot - E_ch[iop]) / h22m)
    if np.max(k) * R < MIN_KRMAX:
        raise MatchingFailure(
            f"matching radius too small: max(k) R = {np.max(k) * R:.2f} "
            f"< {MIN_KRMAX:.2f}")

    Yoo = Y[np.ix_(iop, iop)]
    if icl.size:
        kappa = np.sqrt((E_ch[icl] - E_tot) / h22m)
        eta = np.array([kap * angular.riccati_khat_logderiv(
            basis.channels[i].L, kap * R)
            for i, kap in zip(icl, kappa)])
        Ycc = Y[np.ix_(icl, icl)]
        Yoc = Y[np.ix_(iop, icl)]
        Yco = Y[np.ix_(icl, iop)]
        Yoo = Yoo + Yoc @ np.linalg.solve(np.diag(eta) - Ycc, Yco)

    no = iop.size
    Jm = np.zeros((no, no))
    Nm = np.zeros((no, no))
    Jp = np.zeros((no, no))
    Np = np.zeros((no, no))
    for a, i in enumerate(iop):
        L = basis.channels[i].L
        jh, nh, jhp, nhp = angular.riccati_bessel(L, k[a] * R)
        sk = math.sqrt(k[a])
        Jm[a, a] = jh / sk
        Nm[a, a] = nh / sk
        Jp[a, a] = k[a] * jhp / sk
        Np[a, a] = k[a] * nhp / sk

    K = -np.linalg.solve(Yoo @ Nm - Np, Yoo @ Jm - Jp)
    S = np.linalg.solve(np.eye(no) - 1j * K, np.eye(no) + 1j * K)

    channels = tuple(
        Channel(c.j, c.L, c.E_channel, bool(open_[i]))
        for i, c in enumerate(basis.channels))
    block_basis = ChannelBasis(basis.J, basis.parity, channels, E_tot, h22m)
    blk_meta = dict(meta or {})
    block = SMatrixBlock(E_col, basis.J, basis.parity, block_basis, S,
                         blk_meta)
    du, ds = block.validate()
    blk_meta["unitarity_defect"] = du
    blk_meta["symmetry_defect"] = ds
    return block


def block_labels(cfg: CollisionConfig):
    """Deterministic (J, parity) enumeration: J ascending, +1 before -1."""
    labels = []
    for J in range(cfg.J_max + 1):
        for parity in (+1, -1):
            try:
                build_basis(cfg, J, parity)
            except BasisError:
                continue
            labels.append((J, parity))
    return labels


def solve_all(cfg: CollisionConfig, model: PotentialModel):
    """All S-matrix blocks at cfg.E_col, J = 0..J_max, both parities."""
    blocks = []
    failures = []
    for J, parity in block_labels(cfg):
        basis = build_basis(cfg, J, parity)
        try:
            Y, meta = propagate(basis, model, cfg)
            blocks.append(match(Y, basis, cfg, meta=meta))
        except SolverError as exc:
            failures.append((J, parity, str(exc)))
    if failures:
        detail = "; ".join(f"(J={J}, parity={p:+d}): {m}"
                           for J, p, m in failures)
        raise SolverError(f"block failures: {detail}")
    return blocks


def solve_grid(cfg: CollisionConfig, model: PotentialModel, energies):
    """Blocks for a whole energy grid, batched per (J, parity).

    Returns {(J, parity): [SMatrixBlock per energy, grid order]}.
    Per-energy failures are raised as SolverError by the caller's policy;
    here they propagate.
    """
    energies = np.asarray(energies, dtype=float)
    out = {}
    for J, parity in block_labels(cfg):
        basis = build_basis(cfg, J, parity)
        Y, meta = propagate(basis, model, cfg, energies=energies)
        out[(J, parity)] = [
            match(Y[i], basis, cfg, E_col=E, meta=meta)
            for i, E in enumerate(energies)
        ]
    return out


def ics(blocks, j_in, j_out, cfg: CollisionConfig, E_col=None,
        L_select=None):
    """Eq.-(1)-style integral cross section (bohr^2) from TAM blocks.

    sigma = pi / ((2 j_in + 1) k^2) sum_{J,I} (2J+1)
            sum_{L L'} |delta - S^{JI}_{j_out L', j_in L}|^2.
    L_select restricts the entrance orbital angular momentum.
    """
    E_col = cfg.E_col if E_col is None else float(E_col)
    k2 = E_col / cfg.h22m
    total = 0.0
    for blk in blocks:
        ch = blk.open_channels()
        for a, ca in enumerate(ch):
            if ca.j != j_in:
                continue
            if L_select is not None and ca.L != L_select:
                continue
            for b, cb in enumerate(ch):
                if cb.j != j_out:
                    continue
                delta = 1.0 if (ca.j == cb.j and ca.L == cb.L) else 0.0
                total += (2 * blk.J + 1) * abs(delta - blk.S[b, a]) ** 2
    return math.pi / ((2 * j_in + 1) * k2) * total


# ---------------------------------------------------------------------------
# S-matrix file format (emit + ingest)

def dump_blocks(blocks, path=None):
    """Write blocks in the line-oriented S-matrix text format.

    Channel energies are stored relative to the entrance level, so the
    file is self-contained: a channel is open iff E_col > E_channel and
    k^2 = (E_col - E_channel) / (hbar^2/2mu).
    """
    lines = [f"# {SMATRIX_SCHEMA}"]
    for blk in blocks:
        nch = blk.basis.n
        offset = blk.basis.E_total - blk.E_col
        lines.append(f"block E_col {blk.E_col:.17g} J {blk.J} "
                     f"parity {blk.parity:+d} N_channels {nch}")
        for i, c in enumerate(blk.basis.channels):
            lines.append(f"channel {i} {c.j} {c.L} "
                         f"{c.E_channel - offset:.17g} "
                         f"{1 if c.open_ else 0}")
        no = blk.S.shape[0]
        for r in range(no):
            for cidx in range(no):
                z = blk.S[r, cidx]
                lines.append(f"entry {r} {cidx} {z.real:.17g} {z.imag:.17g}")
    text = "\n".join(lines) + "\n"
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text)
    return text


def load_blocks(path_or_text, h22m):
    """Parse an S-matrix file back into SMatrixBlock objects.

    h22m (K bohr^2) is needed to reconstruct channel wavenumbers; it is a
    run-configuration quantity, not stored in the file.
    """
    if "\n" in str(path_or_text):
        text = path_or_text
    else:
        with open(path_or_text) as fh:
            text = fh.read()
    lines = text.splitlines()
    if not lines or lines[0].lstrip("# ").strip() != SMATRIX_SCHEMA:
        raise ValueError("unknown S-matrix schema header "
                         f"(line 1: {lines[0] if lines else ''!r})")
    blocks = []
    cur = None

    def finish(cur):
        if cur is None:
            return
        E_col, J, parity, channels, entries, nch, lineno = cur
        if len(channels) != nch:
            raise ValueError(f"block before line {lineno}: expected {nch} "
                             f"channels, got {len(channels)}")
        chs = tuple(channels)
        no = sum(1 for c in chs if c.open_)
        S = np.zeros((no, no), dtype=complex)
        for r, c, re, im in entries:
            if not (0 <= r < no and 0 <= c < no):
                raise ValueError(f"entry index out of range in block at "
                                 f"line {lineno}")
            S[r, c] = re + 1j * im
        # channel energies are entrance-relative, so E_total == E_col
        basis = ChannelBasis(J, parity, chs, E_col, h22m)
        blocks.append(SMatrixBlock(E_col, J, parity, basis, S))

    for lineno, raw in enumerate(lines[1:], start=2):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        tok = line.split()
        try:
            if tok[0] == "block":
                finish(cur)
                E_col = float(tok[2])
                J = int(tok[4])
                parity = int(tok[6])
                nch = int(tok[8])
                cur = (E_col, J, parity, [], [], nch, lineno)
            elif tok[0] == "channel":
                cur[3].append(Channel(int(tok[2]), int(tok[3]),
                                      float(tok[4]), tok[5] == "1"))
            elif tok[0] == "entry":
                cur[4].append((int(tok[1]), int(tok[2]),
                               float(tok[3]), float(tok[4])))
            else:
                raise ValueError(f"unknown record {tok[0]!r}")
        except (IndexError, ValueError, TypeError) as exc:
            raise ValueError(f"S-matrix parse error at line {lineno}: "
                             f"{raw!r} ({exc})") from None
    finish(cur)
    return blocks
