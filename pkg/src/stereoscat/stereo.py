"""Stereodynamics: helicity amplitudes, PDDCSs, moments, preparations.

Transforms TAM S-matrix blocks into the helicity representation, builds
scattering amplitudes on a theta grid, and evaluates every polarization
observable: polarization-dependent differential cross sections (PDDCS),
renormalized integral moments s^{(k)}_q, preparation-dependent cross
sections for a directed m=0 state tilted by (beta, alpha), and
internuclear-axis portraits. Cross sections in bohr^2 internally.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numpy as np

from . import angular

MOMENTS_SCHEMA = "stereoscat moments-csv-v1"
DCS_SCHEMA = "stereoscat dcs-csv-v1"
PORTRAIT_SCHEMA = "stereoscat portrait-csv-v1"

GRID_TOL_FACTOR = 1e-10   # negative-density clamp threshold (times max)


class StereoError(RuntimeError):
    pass


class IncompleteBlocksError(StereoError):
    """Both parities of every contributing J are needed to span all L."""


@dataclass(frozen=True)
class HelicitySet:
    """Per-J helicity S-matrices for one j -> j' transition.

    matrices[J] has shape (2 j_out + 1, 2 j_in + 1), indexed
    [Omega' + j_out, Omega + j_in].
    """

    j_in: int
    j_out: int
    E_col: float
    k_in: float
    matrices: dict
    L_select: int | None = None


@dataclass(frozen=True)
class AmplitudeSet:
    """Helicity scattering amplitudes f_{Omega' Omega}(theta) in bohr."""

    j_in: int
    j_out: int
    E_col: float
    k_in: float
    theta: np.ndarray          # radians
    weights: np.ndarray | None  # quadrature weights for sin(theta) dtheta
    f: np.ndarray              # (2 j_out + 1, 2 j_in + 1, n_theta)


@dataclass(frozen=True)
class MomentSet:
    """PDDCS S^{(k)}_q(theta) and the machinery to integrate them.

    S_kq[(k, q)] is a complex array over theta. The unpolarized DCS is
    S_kq[(0, 0)] (real); sigma is its solid-angle integral.
    """

    j_in: int
    j_out: int
    E_col: float
    theta: np.ndarray
    weights: np.ndarray | None
    S_kq: dict
    sigma: float

    def s_kq(self, k, q):
        """Renormalized integral moment s^{(k)}_q = int S^(k)_q dw / sigma."""
        if self.sigma <= 0.0:
            raise StereoError("zero cross section: moments undefined")
        return _integrate(self.S_kq[(k, q)], self.theta, self.weights) / \
            self.sigma


@dataclass(frozen=True)
class Portrait:
    """Axis-distribution density on a (theta_r, phi_r) spherical grid."""

    theta_r: np.ndarray
    phi_r: np.ndarray
    density: np.ndarray        # (n_theta_r, n_phi_r), real


# ---------------------------------------------------------------------------
# quadrature helpers

def theta_grid(n_theta=721, quadrature="gauss"):
    """(theta, weights) with weights for integral f(theta) sin(theta) dtheta.

    gauss: Gauss-Legendre nodes in cos(theta) (spectral accuracy).
    uniform: evenly spaced including endpoints, trapezoid weights.
    """
    if n_theta < 2:
        raise ValueError("need at least 2 theta points")
    if quadrature == "gauss":
        x, w = np.polynomial.legendre.leggauss(n_theta)
        order = np.argsort(-x)              # theta ascending
        return np.arccos(x[order]), w[order]
    if quadrature == "uniform":
        th = np.linspace(0.0, np.pi, n_theta)
        w = np.full(n_theta, np.pi / (n_theta - 1))
        w[0] *= 0.5
        w[-1] *= 0.5
        return th, w * np.sin(th)
    raise ValueError(f"unknown quadrature {quadrature!r}")


def _integrate(vals, theta, weights):
    """2 pi * integral vals(theta) sin(theta) dtheta, i.e. int ... dw."""
    if weights is None:
        return 2.0 * np.pi * np.trapezoid(vals * np.sin(theta), theta)
    return 2.0 * np.pi * np.sum(vals * weights)


# ---------------------------------------------------------------------------
# TAM -> helicity

def helicity_transform(blocks, j_in, j_out, L_select=None,
                       require_both_parities=True) -> HelicitySet:
    """Per-J helicity matrices S^J_{Omega' Omega} for one transition.

    S^J_{Omega' Omega} = sum_{L L'} i^{L - L'}
        sqrt((2L+1)(2L'+1)) / (2J+1)
        <j Omega L 0 | J Omega> <j' Omega' L' 0 | J Omega'>
        S^J_{j'L', jL}

    Both parity blocks of a J are combined (the L sum spans them);
    L_select keeps only TAM elements with entrance L = L_select.
    """
    blocks = list(blocks)
    if not blocks:
        raise IncompleteBlocksError("no blocks supplied")
    E_col = blocks[0].E_col
    per_J = {}
    for blk in blocks:
        if abs(blk.E_col - E_col) > 1e-9 * max(1.0, abs(E_col)):
            raise StereoError("blocks mix collision energies")
        per_J.setdefault(blk.J, []).append(blk)

    n_in, n_out = 2 * j_in + 1, 2 * j_out + 1
    matrices = {}
    k_in = None
    for J, blks in sorted(per_J.items()):
        relevant = False
        for blk in blks:
            if any(c.j == j_in for c in blk.open_channels()) and \
                    any(c.j == j_out for c in blk.open_channels()):
                relevant = True
        if not relevant:
            continue
        if require_both_parities and len({b.parity for b in blks}) < 2 \
                and _needs_both_parities(J, j_in, j_out):
            raise IncompleteBlocksError(
                f"J={J}: both parity blocks required, got "
                f"{sorted(b.parity for b in blks)}")
        M = np.zeros((n_out, n_in), dtype=complex)
        for blk in blks:
            ch = blk.open_channels()
            idx_in = [(a, c.L) for a, c in enumerate(ch) if c.j == j_in]
            idx_out = [(b, c.L) for b, c in enumerate(ch) if c.j == j_out]
            if k_in is None and idx_in:
                k_all = blk.basis.k_open()
                k_in = float(k_all[idx_in[0][0]])
            for a, L in idx_in:
                for b, Lp in idx_out:
                    if L_select is not None and L != L_select:
                        continue
                    s_el = blk.S[b, a]
                    pref = (1j) ** (L - Lp) * math.sqrt(
                        (2 * L + 1) * (2 * Lp + 1)) / (2 * J + 1)
                    for Om in range(-min(j_in, J), min(j_in, J) + 1):
                        cg1 = angular.clebsch_gordan(j_in, Om, L, 0, J, Om)
                        if cg1 == 0.0:
                            continue
                        for Omp in range(-min(j_out, J), min(j_out, J) + 1):
                            cg2 = angular.clebsch_gordan(
                                j_out, Omp, Lp, 0, J, Omp)
                            if cg2 == 0.0:
                                continue
                            M[Omp + j_out, Om + j_in] += pref * cg1 * cg2 * s_el
        matrices[J] = M
    if not matrices:
        raise StereoError(
            f"no open {j_in} -> {j_out} transition in the supplied blocks")
    if k_in is None:
        raise StereoError("entrance channel never open")
    return HelicitySet(j_in=j_in, j_out=j_out, E_col=E_col, k_in=k_in,
                       matrices=matrices, L_select=L_select)


def _needs_both_parities(J, j_in, j_out):
    # a J contributes through both parities unless one of them admits no
    # (j, L) with |J - j| <= L <= J + j of that parity (never for j >= 1)
    for parity in (+1, -1):
        ok_in = any((-1) ** (j_in + L) == parity
                    for L in range(abs(J - j_in), J + j_in + 1))
        ok_out = any((-1) ** (j_out + L) == parity
                     for L in range(abs(J - j_out), J + j_out + 1))
        if not (ok_in and ok_out):
            return False
    return True


# ---------------------------------------------------------------------------
# amplitudes and PDDCS

def amplitudes(hel: HelicitySet, n_theta=721,
               quadrature="gauss") -> AmplitudeSet:
    """f_{Omega' Omega}(theta) = (1/2ik) sum_J (2J+1) d^J_{Omega' Omega}
    [S^J_{Omega' Omega} - delta_{jj'} delta_{Omega Omega'}]."""
    if hel.k_in <= 0:
        raise ValueError("wavenumber must be positive")
    th, w = theta_grid(n_theta, quadrature)
    n_in, n_out = 2 * hel.j_in + 1, 2 * hel.j_out + 1
    f = np.zeros((n_out, n_in, th.size), dtype=complex)
    elastic = hel.j_in == hel.j_out
    J_all = sorted(hel.matrices)
    for iOmp in range(n_out):
        Omp = iOmp - hel.j_out
        for iOm in range(n_in):
            Om = iOm - hel.j_in
            for J in J_all:
                if J < abs(Om) or J < abs(Omp):
                    continue
                t = hel.matrices[J][iOmp, iOm]
                if elastic and Om == Omp:
                    t = t - 1.0
                if t == 0.0:
                    continue
                f[iOmp, iOm] += (2 * J + 1) * t * \
                    angular.reduced_rotation_d(J, Omp, Om, th)
    f /= 2j * hel.k_in
    return AmplitudeSet(j_in=hel.j_in, j_out=hel.j_out, E_col=hel.E_col,
                        k_in=hel.k_in, theta=th, weights=w, f=f)


def pddcs(amps: AmplitudeSet, k_max=None) -> MomentSet:
    """PDDCS S^{(k)}_q(theta), Eq.-(2) structure.

    S^{(k)}_q = (1/(2j+1)) sum_{Omega1 Omega2 Omega'}
        f_{Omega' Omega1} f*_{Omega' Omega2} <j Omega1, k q | j Omega2>
    """
    j = amps.j_in
    if k_max is None:
        k_max = 2 * j
    if k_max > 2 * j:
        raise ValueError(f"rank k={k_max} exceeds 2j={2 * j}")
    S_kq = {}
    f = amps.f
    for k in range(k_max + 1):
        for q in range(-k, k + 1):
            acc = np.zeros(amps.theta.size, dtype=complex)
            for i1 in range(2 * j + 1):
                Om1 = i1 - j
                Om2 = Om1 + q
                if abs(Om2) > j:
                    continue
                cg = angular.clebsch_gordan(j, Om1, k, q, j, Om2)
                if cg == 0.0:
                    continue
                i2 = Om2 + j
                acc += cg * np.sum(f[:, i1, :] * np.conj(f[:, i2, :]),
                                   axis=0)
            S_kq[(k, q)] = acc / (2 * j + 1)
    dcs = S_kq[(0, 0)]
    sigma = float(_integrate(dcs.real, amps.theta, amps.weights))
    S_kq[(0, 0)] = dcs  # keep complex dtype; imaginary part ~ 0
    return MomentSet(j_in=j, j_out=amps.j_out, E_col=amps.E_col,
                     theta=amps.theta, weights=amps.weights,
                     S_kq=S_kq, sigma=sigma)


def polarization_moments(mset: MomentSet):
    """Renormalized integral moments {(k, q): s^{(k)}_q} (complex)."""
    if mset.sigma <= 0.0:
        raise StereoError("zero cross section: moments undefined")
    return {kq: mset.s_kq(*kq) for kq in sorted(mset.S_kq)}


def q0_integrals_direct(hel: HelicitySet):
    """(sigma, {k: int S^{(k)}_0 dw}) straight from the helicity matrices.

    Quadrature-free: the angular integral of |f|^2-type products
    collapses by d-matrix orthogonality to an incoherent sum over J of
    (2J+1) |T^J_{Omega' Omega}|^2. Cross sections in bohr^2.
    """
    j = hel.j_in
    elastic = hel.j_in == hel.j_out
    # wgt[Omega] = sum over J, Omega' of (2J+1) |T|^2
    wgt = np.zeros(2 * j + 1)
    for J, M in hel.matrices.items():
        T = M.copy()
        if elastic:
            for iOm in range(T.shape[1]):
                Om = iOm - hel.j_in
                if abs(Om) <= J:   # no partial wave below J = |Omega|
                    T[Om + hel.j_out, iOm] -= 1.0
        wgt += (2 * J + 1) * np.sum(np.abs(T) ** 2, axis=0)
    pref = math.pi / hel.k_in ** 2 / (2 * j + 1)
    I_k = {}
    for k in range(0, 2 * j + 1):
        s = 0.0
        for iOm in range(2 * j + 1):
            Om = iOm - j
            s += wgt[iOm] * angular.clebsch_gordan(j, Om, k, 0, j, Om)
        I_k[k] = pref * s
    return I_k[0], I_k


def moments_q0_direct(hel: HelicitySet):
    """q=0 renormalized moments s^{(k)}_0 from the helicity S-matrix."""
    sigma, I_k = q0_integrals_direct(hel)
    if sigma <= 0.0:
        raise StereoError("zero cross section: moments undefined")
    return {(k, 0): I / sigma for k, I in I_k.items()}


def prep_ics_direct(hel: HelicitySet, beta_deg):
    """prep_ics evaluated quadrature-free via q0_integrals_direct."""
    if not 0.0 <= beta_deg <= 180.0:
        raise ValueError("beta must be in [0, 180] degrees")
    cb = math.cos(math.radians(beta_deg))
    j = hel.j_in
    A = extrinsic_moments(j)
    _, I_k = q0_integrals_direct(hel)
    return float(sum((2 * k + 1) * A[k] * angular.legendre_p(k, cb) * I_k[k]
                     for k in range(0, 2 * j + 1, 2)))


def per_L_moment(blocks, j_in, j_out, L_select, n_theta=721):
    """Renormalized moments from the L_select-restricted amplitude.

    Keeps only TAM S-matrix elements whose entrance orbital angular
    momentum equals L_select (incoherent-in-L decomposition).
    """
    hel = helicity_transform(blocks, j_in, j_out, L_select=L_select)
    mset = pddcs(amplitudes(hel, n_theta=n_theta))
    if mset.sigma <= 0.0:
        raise StereoError(f"no L={L_select} flux in {j_in} -> {j_out}")
    return polarization_moments(mset), mset.sigma


# ---------------------------------------------------------------------------
# preparations (directed m=0 state tilted by beta, alpha)

def extrinsic_moments(j):
    """A^{(k)}_0 = <j 0, k 0 | j 0> for k = 0..2j (odd k vanish)."""
    return {k: angular.clebsch_gordan(j, 0, k, 0, j, 0)
            for k in range(0, 2 * j + 1)}


def prep_dcs(mset: MomentSet, beta_deg, alpha_deg=0.0):
    """Preparation-dependent DCS, Eq.-(3) structure (real, clamped).

    d sigma / dw = sum_{k even} sum_q (2k+1) [S^{(k)}_q]* A^{(k)}_0
                   C_kq(beta, alpha)
    """
    if not 0.0 <= beta_deg <= 180.0:
        raise ValueError("beta must be in [0, 180] degrees")
    beta = math.radians(beta_deg)
    alpha = math.radians(alpha_deg % 360.0)
    j = mset.j_in
    A = extrinsic_moments(j)
    out = np.zeros(mset.theta.size, dtype=complex)
    for k in range(0, 2 * j + 1, 2):
        for q in range(-k, k + 1):
            C = angular.modified_spherical_harmonic(k, q, beta, alpha)
            out += (2 * k + 1) * np.conj(mset.S_kq[(k, q)]) * A[k] * C
    dcs = out.real
    tol = GRID_TOL_FACTOR * max(1.0, float(np.max(np.abs(dcs))))
    if np.min(dcs) < -max(tol, 1e-6 * float(np.max(np.abs(dcs)))):
        raise StereoError(
            f"preparation DCS significantly negative "
            f"(min {np.min(dcs):.3e}): transform inconsistency")
    return np.clip(dcs, 0.0, None)


def prep_ics(mset: MomentSet, beta_deg):
    """ICS for the tilted m=0 preparation; alpha-independent.

    Only q=0 survives the azimuthal integral:
    sigma(beta) = sum_{k even} (2k+1) A^{(k)}_0 P_k(cos beta)
                  [int S^{(k)}_0 dw]*  (real).
    """
    if not 0.0 <= beta_deg <= 180.0:
        raise ValueError("beta must be in [0, 180] degrees")
    cb = math.cos(math.radians(beta_deg))
    j = mset.j_in
    A = extrinsic_moments(j)
    total = 0.0
    for k in range(0, 2 * j + 1, 2):
        I_k = _integrate(mset.S_kq[(k, 0)], mset.theta, mset.weights)
        total += (2 * k + 1) * A[k] * angular.legendre_p(k, cb) * \
            np.conj(I_k).real
    return float(total)


MAGIC_ANGLE_DEG = math.degrees(math.acos(1.0 / math.sqrt(3.0)))


# ---------------------------------------------------------------------------
# portraits

def portrait(moments, n_theta_r=91, n_phi_r=181) -> Portrait:
    """Axis distribution P(theta_r, phi_r) from moments {(k, q): s_kq}.

    P = (1/4pi) sum_{k even, q} (2k+1) [s^{(k)}_q]* C_kq(theta_r, phi_r).
    Odd-k moments are ignored (axis distributions are even).
    """
    th = np.linspace(0.0, np.pi, n_theta_r)
    ph = np.linspace(0.0, 2.0 * np.pi, n_phi_r, endpoint=False)
    P = np.zeros((n_theta_r, n_phi_r), dtype=complex)
    for (k, q), s in moments.items():
        if k % 2:
            continue
        C = angular.modified_spherical_harmonic(
            k, q, th[:, None], ph[None, :])
        P += (2 * k + 1) * np.conj(s) * C
    dens = P.real / (4.0 * np.pi)
    tol = GRID_TOL_FACTOR * max(1.0, float(np.max(np.abs(dens))))
    dens = np.where(np.abs(dens) < tol, np.maximum(dens, 0.0), dens)
    return Portrait(theta_r=th, phi_r=ph, density=dens)


def axis_moments(j, moments):
    """Map j-polarization moments to internuclear-axis moments.

    The axis distribution of a rank-k multipole of j carries an extra
    diagonal matrix element <j 0, k 0 | j 0> (zero for odd k: an axis has
    no orientation).
    """
    return {(k, q): s * angular.clebsch_gordan(j, 0, k, 0, j, 0)
            for (k, q), s in moments.items()}


def intrinsic_m0_moments(j):
    """Internuclear-axis moments of a pure directed |j, m=0> state.

    These are <j 0, k 0 | j 0>^2, so the portrait reproduces |Y_{j0}|^2.
    """
    return axis_moments(j, {
        (k, 0): angular.clebsch_gordan(j, 0, k, 0, j, 0)
        for k in range(0, 2 * j + 1)})


# ---------------------------------------------------------------------------
# CSV emitters (versioned schemas)

def write_moments_csv(rows, path=None):
    """rows: iterable of (E_col, k, q, s_kq complex)."""
    buf = io.StringIO()
    buf.write(f"# {MOMENTS_SCHEMA}\n")
    buf.write("E_col_K,k,q,re_s,im_s\n")
    for E, k, q, s in rows:
        buf.write(f"{E:.17g},{k},{q},{s.real:.17g},{s.imag:.17g}\n")
    return _emit(buf, path)


def read_moments_csv(path_or_text):
    """Inverse of write_moments_csv: list of (E_col, k, q, s_kq)."""
    text = path_or_text if "\n" in str(path_or_text) else open(
        path_or_text).read()
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0].lstrip("# ").strip() != MOMENTS_SCHEMA:
        raise ValueError("unknown moments CSV schema header")
    if lines[1] != "E_col_K,k,q,re_s,im_s":
        raise ValueError("unexpected moments CSV column header")
    out = []
    for ln in lines[2:]:
        E, k, q, re, im = ln.split(",")
        out.append((float(E), int(k), int(q), complex(float(re),
                                                      float(im))))
    return out


def write_dcs_csv(entries, path=None):
    """entries: iterable of (E_col, preparation label, theta_deg, value)."""
    buf = io.StringIO()
    buf.write(f"# {DCS_SCHEMA}\n")
    buf.write("E_col_K,preparation,theta_deg,dcs_A2_sr\n")
    for E, label, theta_deg, val in entries:
        buf.write(f"{E:.17g},{label},{theta_deg:.17g},{val:.17g}\n")
    return _emit(buf, path)


def write_portrait_csv(p: Portrait, path=None):
    buf = io.StringIO()
    buf.write(f"# {PORTRAIT_SCHEMA}\n")
    buf.write("theta_r_deg,phi_r_deg,density\n")
    for i, t in enumerate(p.theta_r):
        for k, f_ in enumerate(p.phi_r):
            buf.write(f"{math.degrees(t):.17g},{math.degrees(f_):.17g},"
                      f"{p.density[i, k]:.17g}\n")
    return _emit(buf, path)


def _emit(buf, path):
    text = buf.getvalue()
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text)
    return text
