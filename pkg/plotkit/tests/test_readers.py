from pathlib import Path

import numpy as np
import pytest

from plotkit.readers import (SchemaError, SelectionError, read_dcs,
                             read_portrait, read_scan)

DATA = Path(__file__).parent / "data"


class TestScanReader:
    def test_fixture_parses(self):
        data = read_scan(DATA / "scan.csv")
        assert data.j_initial == 2
        assert np.all(np.diff(data.E) > 0)
        assert set(data.transitions()) == {0, 1, 2}
        assert data.L_values(1)
        assert data.column("sigma_1").shape == data.E.shape

    def test_wrong_schema(self, tmp_path):
        bad = tmp_path / "x.csv"
        bad.write_text("# some other file\nE_col_K,sigma_1\n1,2\n")
        with pytest.raises(SchemaError, match="scan-csv-v1"):
            read_scan(bad)

    def test_unknown_column_named(self):
        data = read_scan(DATA / "scan.csv")
        with pytest.raises(SelectionError, match="sigma_9"):
            data.column("sigma_9")


class TestDcsReader:
    def test_fixture_parses(self):
        data = read_dcs(DATA / "dcs.csv")
        assert set(data.preparations) == {
            "unpolarized", "beta0_alpha0", "betamagic_alpha0"}
        E, th, grid = data.grid("unpolarized")
        assert grid.shape == (E.size, th.size)
        assert np.isfinite(grid).all()

    def test_missing_column_named(self, tmp_path):
        bad = tmp_path / "x.csv"
        bad.write_text("# stereoscat dcs-csv-v1\n"
                       "E_col_K,preparation,theta_deg\n")
        with pytest.raises(SchemaError, match="dcs_A2_sr"):
            read_dcs(bad)

    def test_unknown_preparation_named(self):
        data = read_dcs(DATA / "dcs.csv")
        with pytest.raises(SelectionError, match="sideways"):
            data.grid("sideways")

    def test_ragged_grid_rejected(self, tmp_path):
        bad = tmp_path / "x.csv"
        bad.write_text("# stereoscat dcs-csv-v1\n"
                       "E_col_K,preparation,theta_deg,dcs_A2_sr\n"
                       "1,unpolarized,0,1\n"
                       "1,unpolarized,90,1\n"
                       "2,unpolarized,0,1\n")
        with pytest.raises(SchemaError, match="full"):
            read_dcs(bad)


class TestPortraitReader:
    def test_fixture_parses(self):
        p = read_portrait(DATA / "portrait.csv")
        assert p.density.shape == (p.theta_r_deg.size, p.phi_r_deg.size)
        assert p.density.min() >= 0.0
        # normalized axis distribution integrates to ~1
        th = np.radians(p.theta_r_deg)
        ph = np.radians(p.phi_r_deg)
        total = np.trapezoid(
            np.trapezoid(p.density, ph, axis=1) * np.sin(th), th)
        # phi grid is endpoint-free: extend the last wedge
        total *= 2 * np.pi / (ph[-1] - ph[0])
        assert total == pytest.approx(1.0, abs=0.05)

    def test_wrong_schema(self, tmp_path):
        bad = tmp_path / "x.csv"
        bad.write_text("# stereoscat scan-csv-v1\na,b,c\n")
        with pytest.raises(SchemaError, match="portrait-csv-v1"):
            read_portrait(bad)
