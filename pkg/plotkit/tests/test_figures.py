import math
from pathlib import Path

import numpy as np
import pytest
from PIL import Image

from plotkit import cli
from plotkit.figures import FigureSpec, render, _pick_transition
from plotkit.readers import SelectionError, read_dcs, read_scan

DATA = Path(__file__).parent / "data"
REF = DATA / "ref"

# (reference image, spec kwargs)
CASES = {
    "scan.png": dict(kind="scan", inputs=(str(DATA / "scan.csv"),)),
    "prep_ics.png": dict(kind="prep-ics",
                         inputs=(str(DATA / "scan.csv"),)),
    "dcs_unpolarized.png": dict(kind="dcs-contour",
                                inputs=(str(DATA / "dcs.csv"),)),
    "dcs_beta0.png": dict(kind="dcs-contour",
                          inputs=(str(DATA / "dcs.csv"),),
                          preparation="beta0_alpha0"),
    "portrait_strip.png": dict(
        kind="portrait-strip",
        inputs=(str(DATA / "portrait.csv"),) * 2),
}


def pixel_diff(path_a, path_b):
    a = np.asarray(Image.open(path_a).convert("RGB"), dtype=float)
    b = np.asarray(Image.open(path_b).convert("RGB"), dtype=float)
    assert a.shape == b.shape, f"image sizes differ: {a.shape} {b.shape}"
    d = np.abs(a - b).max(axis=2)
    return float(d.mean()), float((d > 20).mean())


class TestVisualRegression:
    @pytest.mark.parametrize("ref_name", sorted(CASES))
    def test_matches_reference(self, tmp_path, ref_name):
        out = tmp_path / ref_name
        render(FigureSpec(out=str(out), **CASES[ref_name]))
        mean, frac_big = pixel_diff(out, REF / ref_name)
        assert mean < 1.0
        assert frac_big < 0.005

    def test_deterministic_bytes(self, tmp_path):
        outs = []
        for i in (1, 2):
            out = tmp_path / f"r{i}.png"
            render(FigureSpec(out=str(out), **CASES["scan.png"]))
            outs.append(out.read_bytes())
        assert outs[0] == outs[1]


class TestResonanceRidge:
    """The unpolarized contour carries the resonance ridge; beta = 0
    does not. Checked on the numbers behind the pixels: theta-integrated
    DCS per energy against a log-linear endpoint background."""

    def ratio(self, label):
        E, th, grid = read_dcs(DATA / "dcs.csv").grid(label)
        w = np.sin(np.radians(th))
        ics = (grid * w).sum(axis=1)
        t = (np.log(E) - np.log(E[0])) / (np.log(E[-1]) - np.log(E[0]))
        bg = np.exp(np.log(ics[0]) * (1 - t) + np.log(ics[-1]) * t)
        return float(np.max(ics / bg))

    def test_unpolarized_has_ridge(self):
        assert self.ratio("unpolarized") > 2.0

    def test_beta0_has_no_ridge(self):
        assert self.ratio("beta0_alpha0") < 1.2


def isotropic_portrait_csv(path, n_theta=31, n_phi=61):
    lines = ["# stereoscat portrait-csv-v1",
             "theta_r_deg,phi_r_deg,density"]
    for t in np.linspace(0.0, 180.0, n_theta):
        for p in np.linspace(0.0, 360.0, n_phi, endpoint=False):
            lines.append(f"{t:.6f},{p:.6f},{1.0 / (4.0 * math.pi):.12f}")
    path.write_text("\n".join(lines) + "\n")


class TestPortraitStrip:
    def test_isotropic_moments_uniform_sphere(self, tmp_path):
        csv = tmp_path / "iso.csv"
        isotropic_portrait_csv(csv)
        out = tmp_path / "iso.png"
        render(FigureSpec(kind="portrait-strip", inputs=(str(csv),),
                          out=str(out)))
        img = np.asarray(Image.open(out).convert("RGB"))
        H, W, _ = img.shape

        def dominant_fraction(path):
            im = np.asarray(Image.open(path).convert("RGB"))
            patch = im[int(0.3 * H):int(0.7 * H),
                       int(0.15 * W):int(0.45 * W)].reshape(-1, 3)
            _, counts = np.unique(patch, axis=0, return_counts=True)
            return counts.max() / patch.shape[0]

        # the sphere interior is one flat color (graticule lines aside)
        assert dominant_fraction(out) > 0.5
        # while a structured portrait is not
        ref = tmp_path / "real.png"
        render(FigureSpec(kind="portrait-strip",
                          inputs=(str(DATA / "portrait.csv"),),
                          out=str(ref)))
        assert dominant_fraction(ref) < 0.3


class TestSelection:
    def test_default_transition_is_quench(self):
        data = read_scan(DATA / "scan.csv")
        assert _pick_transition(data, None) == 1

    def test_unknown_transition(self):
        data = read_scan(DATA / "scan.csv")
        with pytest.raises(SelectionError, match="j'=5"):
            _pick_transition(data, 5)

    def test_unknown_kind(self):
        with pytest.raises(SelectionError, match="ribbon"):
            FigureSpec(kind="ribbon", inputs=("x.csv",), out="x.png")


class TestCli:
    def test_smoke(self, tmp_path):
        out = tmp_path / "fig.png"
        rc = cli.main(["scan", "--in", str(DATA / "scan.csv"),
                       "--out", str(out)])
        assert rc == cli.EXIT_OK
        assert out.is_file()

    def test_unknown_preparation_exit_2(self, tmp_path, capsys):
        rc = cli.main(["dcs-contour", "--in", str(DATA / "dcs.csv"),
                       "--preparation", "sideways",
                       "--out", str(tmp_path / "f.png")])
        assert rc == cli.EXIT_INPUT
        assert "sideways" in capsys.readouterr().err

    def test_schema_mismatch_exit_2(self, tmp_path, capsys):
        rc = cli.main(["scan", "--in", str(DATA / "dcs.csv"),
                       "--out", str(tmp_path / "f.png")])
        assert rc == cli.EXIT_INPUT
        assert "scan-csv-v1" in capsys.readouterr().err
