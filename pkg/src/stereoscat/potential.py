"""Anisotropic interaction potential V(R, theta) = sum_l v_l(R) P_l(cos theta).

Radial coefficients v_l are analytic forms or tabulated splines; the
angular part enters the coupled equations through Percival-Seaton
coupling coefficients. Units: kelvin and bohr.
"""

from __future__ import annotations

import configparser
import io
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.interpolate import CubicSpline

from . import angular

POTENTIAL_SCHEMA = "stereoscat potential-v1"

_KINDS = ("lennard-jones", "exp-dispersion", "tabulated")


@dataclass(frozen=True)
class RadialForm:
    """One radial coefficient v_l(R).

    kind selects the functional form:
      lennard-jones:   4 eps [(sigma/R)^12 - (sigma/R)^6]
      exp-dispersion:  A exp(-a R) - C6 / R^6
      tabulated:       natural cubic spline through (R_i, v_i), no
                       extrapolation outside the knot range.
    """

    kind: str
    params: dict = field(default_factory=dict)
    table: tuple | None = None  # (R_array, v_array) for kind=tabulated

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown radial form kind: {self.kind!r}")
        if self.kind == "tabulated":
            if self.table is None:
                raise ValueError("tabulated form requires a table")
            r, v = (np.asarray(a, dtype=float) for a in self.table)
            if r.ndim != 1 or r.shape != v.shape or r.size < 4:
                raise ValueError("table must be two equal 1-d columns, >= 4 rows")
            if np.any(np.diff(r) <= 0):
                raise ValueError("tabulated R grid must be strictly increasing")
            object.__setattr__(self, "table", (r, v))
            object.__setattr__(self, "_spline",
                               CubicSpline(r, v, bc_type="natural"))
        elif self.kind == "lennard-jones":
            for key in ("epsilon", "sigma"):
                if key not in self.params:
                    raise ValueError(f"lennard-jones needs {key}")
        elif self.kind == "exp-dispersion":
            for key in ("A", "a", "C6"):
                if key not in self.params:
                    raise ValueError(f"exp-dispersion needs {key}")

    def __call__(self, R):
        R = np.asarray(R, dtype=float)
        if np.any(R <= 0):
            raise ValueError("R must be positive")
        if self.kind == "lennard-jones":
            eps, sig = self.params["epsilon"], self.params["sigma"]
            x6 = (sig / R) ** 6
            out = 4.0 * eps * (x6 * x6 - x6)
        elif self.kind == "exp-dispersion":
            A, a, C6 = self.params["A"], self.params["a"], self.params["C6"]
            out = A * np.exp(-a * R) - C6 / R ** 6
        else:
            r = self.table[0]
            if np.any(R < r[0]) or np.any(R > r[-1]):
                raise ValueError(
                    f"R outside tabulated range [{r[0]}, {r[-1]}]")
            out = self._spline(R)
        return out if out.shape else float(out)


@dataclass(frozen=True)
class PotentialModel:
    """Legendre-expanded potential with distinct non-negative lambda terms.

    allow_odd permits odd-lambda anisotropy (HD-like partner with a
    displaced center of mass); homonuclear partners should keep it False.
    """

    lambda_terms: tuple  # ((lam, RadialForm), ...)
    allow_odd: bool = False
    name: str = "unnamed"

    def __post_init__(self):
        terms = tuple(sorted(((int(l), f) for l, f in self.lambda_terms),
                             key=lambda t: t[0]))
        lams = [l for l, _ in terms]
        if len(set(lams)) != len(lams):
            raise ValueError("lambda values must be distinct")
        if any(l < 0 for l in lams):
            raise ValueError("lambda values must be non-negative")
        if not self.allow_odd and any(l % 2 for l in lams):
            raise ValueError("odd lambda requires allow_odd=True")
        object.__setattr__(self, "lambda_terms", terms)

    @property
    def lambdas(self):
        return tuple(l for l, _ in self.lambda_terms)

    def radial(self, lam):
        for l, f in self.lambda_terms:
            if l == lam:
                return f
        raise KeyError(lam)

    def tail_magnitude(self, R_max):
        """max_l |v_l(R_max)|, used for matching-radius checks."""
        return max(abs(float(np.max(np.abs(f(R_max)))))
                   for _, f in self.lambda_terms)


def evaluate(model: PotentialModel, R, cos_theta):
    """V(R, theta) = sum_l v_l(R) P_l(cos theta)."""
    R = np.asarray(R, dtype=float)
    if np.any(R <= 0):
        raise ValueError("R must be positive")
    out = 0.0
    for lam, form in model.lambda_terms:
        out = out + form(R) * angular.legendre_p(lam, cos_theta)
    return out


@lru_cache(maxsize=None)
def coupling_element(j, L, jp, Lp, J, lam):
    """Percival-Seaton coefficient f_lam(j L, j' L'; J).

    Angular matrix element of P_lam(cos theta) between total-angular-
    momentum channel functions |(j L) J> and |(j' L') J>.
    """
    j, L, jp, Lp, J, lam = (int(v) for v in (j, L, jp, Lp, J, lam))
    if not (abs(j - L) <= J <= j + L):
        raise ValueError(f"(j={j}, L={L}, J={J}) violates the triangle rule")
    if not (abs(jp - Lp) <= J <= jp + Lp):
        raise ValueError(f"(j'={jp}, L'={Lp}, J={J}) violates the triangle rule")
    pref = (-1) ** (j + jp - J) * math.sqrt(
        (2 * j + 1) * (2 * jp + 1) * (2 * L + 1) * (2 * Lp + 1))
    return (pref
            * angular.wigner_3j(jp, lam, j, 0, 0, 0)
            * angular.wigner_3j(Lp, lam, L, 0, 0, 0)
            * angular.wigner_6j(j, L, J, Lp, jp, lam))


def dump(model: PotentialModel, path=None):
    """Serialize a model to the plain-text potential format."""
    buf = io.StringIO()
    buf.write(f"# {POTENTIAL_SCHEMA}\n")
    buf.write("[model]\n")
    buf.write(f"name = {model.name}\n")
    buf.write(f"odd_lambda = {'true' if model.allow_odd else 'false'}\n\n")
    for lam, form in model.lambda_terms:
        buf.write(f"[lambda {lam}]\n")
        buf.write(f"kind = {form.kind}\n")
        for key, val in form.params.items():
            buf.write(f"{key} = {val!r}\n")
        if form.kind == "tabulated":
            buf.write("table =\n")
            for r, v in zip(*form.table):
                buf.write(f"    {r:.17g} {v:.17g}\n")
        buf.write("\n")
    text = buf.getvalue()
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text)
    return text


def load(path_or_text) -> PotentialModel:
    """Parse a potential model file (path or literal text)."""
    if "\n" in str(path_or_text):
        text = path_or_text
    else:
        with open(path_or_text) as fh:
            text = fh.read()
    first = text.lstrip().splitlines()[0].lstrip("# ").strip()
    if first != POTENTIAL_SCHEMA:
        raise ValueError(f"unknown potential schema header: {first!r}")
    cp = configparser.ConfigParser()
    cp.optionxform = str  # keep parameter case: exp-dispersion has A and a
    cp.read_string(text)
    if "model" not in cp:
        raise ValueError("missing [model] section")
    name = cp["model"].get("name", "unnamed")
    allow_odd = cp["model"].getboolean("odd_lambda", fallback=False)
    terms = []
    for section in cp.sections():
        if not section.startswith("lambda"):
            continue
        lam = int(section.split()[1])
        sec = cp[section]
        kind = sec["kind"]
        if kind == "tabulated":
            rows = [ln.split() for ln in sec["table"].strip().splitlines()]
            r = np.array([float(a) for a, _ in rows])
            v = np.array([float(b) for _, b in rows])
            form = RadialForm("tabulated", table=(r, v))
        else:
            params = {k: float(v) for k, v in sec.items()
                      if k not in ("kind", "table")}
            form = RadialForm(kind, params=params)
        terms.append((lam, form))
    return PotentialModel(tuple(terms), allow_odd=allow_odd, name=name)


def hd_h2_surrogate() -> PotentialModel:
    """The shipped calibrated surrogate model (see data/ for its report)."""
    from importlib.resources import files
    return load((files("stereoscat") / "data" / "hd_h2_surrogate.pot")
                .read_text())
