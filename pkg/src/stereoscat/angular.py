"""Angular momentum algebra and special functions.

Integer angular momenta only. All coupling coefficients follow the
Condon-Shortley phase convention and are computed with exact integer
arithmetic (Python integers do not overflow), converted to float at the
end, so repeated calls are bit-identical. Hot paths are memoized.
"""

from __future__ import annotations

import math
from fractions import Fraction
from functools import lru_cache

import numpy as np
from scipy.special import lpmv, spherical_jn, spherical_yn

__all__ = [
    "clebsch_gordan",
    "wigner_3j",
    "wigner_6j",
    "reduced_rotation_d",
    "modified_spherical_harmonic",
    "legendre_p",
    "riccati_bessel",
    "riccati_khat_logderiv",
]


def _check_nonneg(*js):
    for j in js:
        if j < 0:
            raise ValueError(f"negative angular momentum: {js}")


def _triangle_ok(a, b, c):
    return abs(a - b) <= c <= a + b


@lru_cache(maxsize=None)
def _wigner_3j_exact(j1, j2, j3, m1, m2, m3):
    """3j symbol as (sign, Fraction) with value = sign*sqrt(Fraction).

    Racah's closed form: a single alternating sum over t of integer
    ratios, times the square root of a rational prefactor.
    """
    if m1 + m2 + m3 != 0:
        return 0, Fraction(0)
    if not _triangle_ok(j1, j2, j3):
        return 0, Fraction(0)
    if abs(m1) > j1 or abs(m2) > j2 or abs(m3) > j3:
        return 0, Fraction(0)
    f = math.factorial
    pref = Fraction(
        f(j1 + j2 - j3) * f(j1 - j2 + j3) * f(-j1 + j2 + j3)
        * f(j1 - m1) * f(j1 + m1) * f(j2 - m2) * f(j2 + m2)
        * f(j3 - m3) * f(j3 + m3),
        f(j1 + j2 + j3 + 1),
    )
    t_min = max(0, j2 - j3 - m1, j1 - j3 + m2)
    t_max = min(j1 + j2 - j3, j1 - m1, j2 + m2)
    s = Fraction(0)
    for t in range(t_min, t_max + 1):
        den = (
            f(t) * f(j3 - j2 + m1 + t) * f(j3 - j1 - m2 + t)
            * f(j1 + j2 - j3 - t) * f(j1 - m1 - t) * f(j2 + m2 - t)
        )
        s += Fraction((-1) ** t, den)
    if s == 0:
        return 0, Fraction(0)
    phase = (-1) ** (j1 - j2 - m3)
    sign = phase * (1 if s > 0 else -1)
    return sign, pref * s * s


def wigner_3j(j1, j2, j3, m1, m2, m3):
    """Wigner 3j symbol (j1 j2 j3; m1 m2 m3) for integer arguments."""
    j1, j2, j3, m1, m2, m3 = (int(v) for v in (j1, j2, j3, m1, m2, m3))
    _check_nonneg(j1, j2, j3)
    sign, val2 = _wigner_3j_exact(j1, j2, j3, m1, m2, m3)
    return sign * math.sqrt(val2)


def clebsch_gordan(j1, m1, j2, m2, j, m):
    """Clebsch-Gordan coefficient <j1 m1, j2 m2 | j m>.

    Zero when the triangle rule or projection sum fails; raises on
    negative j inputs.
    """
    j1, m1, j2, m2, j, m = (int(v) for v in (j1, m1, j2, m2, j, m))
    _check_nonneg(j1, j2, j)
    if m1 + m2 != m:
        return 0.0
    sign, val2 = _wigner_3j_exact(j1, j2, j, m1, m2, -m)
    phase = (-1) ** (j1 - j2 + m)
    return phase * sign * math.sqrt((2 * j + 1) * val2)


@lru_cache(maxsize=None)
def _wigner_6j_exact(j1, j2, j3, j4, j5, j6):
    """6j symbol {j1 j2 j3; j4 j5 j6} as (sign, Fraction of value^2)."""
    triads = ((j1, j2, j3), (j1, j5, j6), (j4, j2, j6), (j4, j5, j3))
    for a, b, c in triads:
        if not _triangle_ok(a, b, c):
            return 0, Fraction(0)
    f = math.factorial

    def tri(a, b, c):
        return Fraction(f(a + b - c) * f(a - b + c) * f(-a + b + c),
                        f(a + b + c + 1))

    pref = tri(j1, j2, j3) * tri(j1, j5, j6) * tri(j4, j2, j6) * tri(j4, j5, j3)
    t_min = max(j1 + j2 + j3, j1 + j5 + j6, j4 + j2 + j6, j4 + j5 + j3)
    t_max = min(j1 + j2 + j4 + j5, j2 + j3 + j5 + j6, j3 + j1 + j6 + j4)
    s = Fraction(0)
    for t in range(t_min, t_max + 1):
        num = f(t + 1)
        den = (
            f(t - j1 - j2 - j3) * f(t - j1 - j5 - j6)
            * f(t - j4 - j2 - j6) * f(t - j4 - j5 - j3)
            * f(j1 + j2 + j4 + j5 - t) * f(j2 + j3 + j5 + j6 - t)
            * f(j3 + j1 + j6 + j4 - t)
        )
        s += Fraction((-1) ** t * num, den)
    if s == 0:
        return 0, Fraction(0)
    sign = 1 if s > 0 else -1
    return sign, pref * s * s


def wigner_6j(j1, j2, j3, j4, j5, j6):
    """Wigner 6j symbol {j1 j2 j3; j4 j5 j6}; zero on triangle violations."""
    j1, j2, j3, j4, j5, j6 = (int(v) for v in (j1, j2, j3, j4, j5, j6))
    _check_nonneg(j1, j2, j3, j4, j5, j6)
    sign, val2 = _wigner_6j_exact(j1, j2, j3, j4, j5, j6)
    return sign * math.sqrt(val2)


@lru_cache(maxsize=None)
def _d_terms(J, m1, m2):
    """Precomputed (coefficient, cos-power, sin-power) terms of d^J_{m1 m2}."""
    f = math.factorial
    norm = math.sqrt(f(J + m1) * f(J - m1) * f(J + m2) * f(J - m2))
    terms = []
    s_min = max(0, m2 - m1)
    s_max = min(J + m2, J - m1)
    for s in range(s_min, s_max + 1):
        den = f(J + m2 - s) * f(s) * f(m1 - m2 + s) * f(J - m1 - s)
        coeff = (-1) ** (m1 - m2 + s) * norm / den
        terms.append((coeff, 2 * J + m2 - m1 - 2 * s, m1 - m2 + 2 * s))
    return tuple(terms)


def reduced_rotation_d(J, m1, m2, theta):
    """Wigner small-d matrix element d^J_{m1 m2}(theta).

    theta may be a scalar or ndarray (radians).
    """
    J, m1, m2 = int(J), int(m1), int(m2)
    _check_nonneg(J)
    if abs(m1) > J or abs(m2) > J:
        raise ValueError(f"projection out of range: J={J}, m1={m1}, m2={m2}")
    theta = np.asarray(theta, dtype=float)
    c = np.cos(theta / 2.0)
    s = np.sin(theta / 2.0)
    out = np.zeros_like(theta)
    for coeff, pc, ps in _d_terms(J, m1, m2):
        out = out + coeff * c ** pc * s ** ps
    return out if out.shape else float(out)


def legendre_p(l, x):
    """Legendre polynomial P_l(x) by upward recurrence; x scalar or array."""
    if l < 0:
        raise ValueError("negative degree")
    x = np.asarray(x, dtype=float)
    p_prev = np.ones_like(x)
    if l == 0:
        return p_prev if p_prev.shape else 1.0
    p = x.copy()
    for n in range(1, l):
        p, p_prev = ((2 * n + 1) * x * p - n * p_prev) / (n + 1), p
    return p if p.shape else float(p)


def modified_spherical_harmonic(k, q, beta, alpha):
    """Modified spherical harmonic C_kq(beta, alpha).

    C_kq = sqrt(4 pi / (2k+1)) Y_kq, so that C_k0(beta, .) = P_k(cos beta).
    Angles in radians; beta may be an ndarray.
    """
    _check_nonneg(k)
    if abs(q) > k:
        return 0.0 * np.asarray(beta) * (1 + 0j)
    f = math.factorial
    aq = abs(q)
    # lpmv carries the Condon-Shortley phase for positive order
    plm = lpmv(aq, k, np.cos(np.asarray(beta, dtype=float)))
    norm = math.sqrt(f(k - aq) / f(k + aq))
    val = norm * plm * np.exp(1j * aq * np.asarray(alpha, dtype=float))
    if q < 0:
        val = (-1) ** aq * np.conj(val)
    return val


def riccati_bessel(L, x):
    """Riccati-Bessel pair (jhat, nhat, jhat', nhat') at x > 0.

    jhat_L(x) = x j_L(x), nhat_L(x) = -x y_L(x); primes are d/dx.
    Sign convention gives Wronskian jhat*nhat' - jhat'*nhat = -1 and the
    open-channel asymptotic solution jhat + K*nhat with real symmetric K.
    """
    _check_nonneg(L)
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise ValueError("riccati_bessel requires x > 0")
    j = spherical_jn(L, x)
    jp = spherical_jn(L, x, derivative=True)
    y = spherical_yn(L, x)
    yp = spherical_yn(L, x, derivative=True)
    jhat = x * j
    nhat = -x * y
    jhat_p = j + x * jp
    nhat_p = -(y + x * yp)
    return jhat, nhat, jhat_p, nhat_p


@lru_cache(maxsize=None)
def _khat_poly(L):
    # khat_L(x) propto e^{-x} sum_m a_m x^{-m}
    f = math.factorial
    return tuple(f(L + m) // (f(m) * f(L - m) * 2 ** m) for m in range(L + 1))


def riccati_khat_logderiv(L, x):
    """Logarithmic derivative of the decaying modified Riccati-Bessel khat_L.

    khat_L(x) = x k_L(x) ~ e^{-x}; evaluated from the exact terminating
    series so it stays finite where e^{-x} underflows.
    """
    _check_nonneg(L)
    if x <= 0:
        raise ValueError("requires x > 0")
    a = _khat_poly(L)
    p = sum(am * x ** (-m) for m, am in enumerate(a))
    dp = sum(-m * am * x ** (-m - 1) for m, am in enumerate(a))
    return -1.0 + dp / p
