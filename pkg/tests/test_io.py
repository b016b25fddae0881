"""Serialization round-trips: trajectories, systems, predictors, reports."""

import numpy as np
import pytest

from innodeepc import io as iio
from innodeepc import microgrid as mg
from innodeepc.behavioral import r_controllability_test
from innodeepc.descriptor import discretize_foh, simulate, weierstrass_decompose
from innodeepc.errors import InputError
from innodeepc.varx import fit_varx


@pytest.fixture(scope="module")
def report():
    return mg.run_experiment(mg.ExperimentConfig(), seed=3)


class TestTrajectoryCsv:
    def test_round_trip_with_time_column(self, tmp_path):
        rng = np.random.default_rng(0)
        u = rng.standard_normal((40, 2))
        y = rng.standard_normal((40, 3))
        path = tmp_path / "traj.csv"
        iio.save_trajectory(path, u, y, h=0.1)
        u2, y2, t = iio.load_trajectory(path)
        np.testing.assert_array_equal(u2, u)
        np.testing.assert_array_equal(y2, y)
        np.testing.assert_array_equal(t, 0.1 * np.arange(40))
        header = path.read_text().splitlines()[0]
        assert header == "k,t_seconds,u1,u2,y1,y2,y3"

    def test_round_trip_without_time_column(self, tmp_path):
        rng = np.random.default_rng(1)
        u = rng.standard_normal((10, 1))
        y = rng.standard_normal((10, 2))
        path = tmp_path / "traj.csv"
        iio.save_trajectory(path, u, y)
        u2, y2, t = iio.load_trajectory(path)
        assert t is None
        np.testing.assert_array_equal(u2, u)
        np.testing.assert_array_equal(y2, y)

    def test_length_mismatch_rejected(self, tmp_path):
        with pytest.raises(InputError):
            iio.save_trajectory(tmp_path / "x.csv", np.zeros((5, 1)),
                                np.zeros((4, 1)))

    def test_empty_file_rejected(self, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_text("")
        with pytest.raises(InputError):
            iio.load_trajectory(path)


class TestInnovationsCsv:
    def test_header_and_values(self, tmp_path):
        rng = np.random.default_rng(2)
        e = rng.standard_normal((6, 3))
        yt = rng.standard_normal((6, 3))
        d = rng.standard_normal((6, 3))
        path = tmp_path / "innov.csv"
        iio.save_innovations(path, e, y_tilde=yt, d=d)
        lines = path.read_text().splitlines()
        assert lines[0] == ("k,e1,e2,e3,ytilde1,ytilde2,ytilde3,d1,d2,d3")
        row = lines[1].split(",")
        assert float(row[1]) == e[0, 0]
        assert float(row[4]) == yt[0, 0]
        assert float(row[7]) == d[0, 0]

    def test_shape_mismatch_rejected(self, tmp_path):
        with pytest.raises(InputError):
            iio.save_innovations(tmp_path / "x.csv", np.zeros((4, 2)),
                                 y_tilde=np.zeros((4, 3)))


class TestSystemText:
    def test_round_trip(self, tmp_path):
        sys_c = mg.build_microgrid(w_std=0.03, v_std=0.6)
        path = tmp_path / "plant.txt"
        iio.save_system(path, sys_c)
        back = iio.load_system(path)
        for name in ("E", "A", "B", "C", "D", "Q_noise", "R_noise"):
            np.testing.assert_array_equal(getattr(back, name),
                                          getattr(sys_c, name))

    def test_missing_block_rejected(self, tmp_path):
        path = tmp_path / "broken.txt"
        path.write_text("n 1\nm 1\np 1\nE\n1.0\n")
        with pytest.raises(InputError):
            iio.load_system(path)


class TestVarxText:
    def test_round_trip(self, tmp_path):
        pr = mg.MicrogridParams()
        sys_d = discretize_foh(mg.build_microgrid(pr), pr.h)
        wf = weierstrass_decompose(sys_d)
        rng = np.random.default_rng(3)
        u = rng.standard_normal((80 + wf.s - 1, 2))
        traj = simulate(sys_d, wf, u)
        model = fit_varx(u, traj.y, ell=4, anticipation=wf.s)
        path = tmp_path / "varx.txt"
        iio.save_varx(path, model)
        back = iio.load_varx(path)
        np.testing.assert_array_equal(back.theta, model.theta)
        assert (back.ell, back.anticipation, back.m, back.p) == (4, wf.s, 2, 3)
        assert back.ridge == model.ridge
        assert back.n_samples == model.n_samples
        assert back.residual_rms == model.residual_rms


class TestRankReportCsv:
    def test_columns_match_certificate(self, tmp_path):
        pr = mg.MicrogridParams()
        sys_d = discretize_foh(mg.build_microgrid(pr), pr.h)
        wf = weierstrass_decompose(sys_d)
        rng = np.random.default_rng(4)
        u = rng.standard_normal((60 + wf.s - 1, 2))
        traj = simulate(sys_d, wf, u)
        cert = r_controllability_test(u, traj.y, 6, wf.n_s, wf.s)
        path = tmp_path / "ranks.csv"
        iio.save_rank_report(path, cert)
        lines = path.read_text().splitlines()
        assert lines[0] == "lambda_real,lambda_imag,rank,expected_rank"
        assert len(lines) == 1 + len(cert.lambdas)
        first = lines[1].split(",")
        assert complex(float(first[0]), float(first[1])) == cert.lambdas[0]
        assert int(first[2]) == cert.ranks[0]
        assert int(first[3]) == cert.expected_rank


class TestReportCsv:
    def test_round_trip(self, report, tmp_path):
        path = tmp_path / "report.csv"
        iio.save_report_csv(path, report)
        back = iio.load_report_csv(path)
        assert set(back) == {"innovation", "regularized", "subspace"}
        for run in report.runs:
            cols = back[run.name]
            n = run.y.shape[0]
            np.testing.assert_array_equal(cols["k"], np.arange(n))
            np.testing.assert_array_equal(cols["u"], run.u[:n])
            np.testing.assert_array_equal(cols["y"], run.y)
            np.testing.assert_array_equal(cols["r"], run.references)
            np.testing.assert_array_equal(cols["e"], run.e_hat)
            # Predictions exist only after warmup; the head rows are nan.
            assert np.isnan(cols["yhat"][:report.warmup]).all()
            np.testing.assert_array_equal(cols["yhat"][report.warmup:],
                                          run.y_pred)


class TestConfigFile:
    def test_round_trip(self, tmp_path):
        cfg = mg.ExperimentConfig(noise_v_std=0.4, ell=11,
                                  u_set_2=(4.2, 1.9), seeds=(3, 4),
                                  include_oracle=True, warmup=30)
        path = tmp_path / "exp.cfg"
        iio.save_config(path, cfg)
        assert iio.load_config(path) == cfg

    def test_overrides_win_over_file(self, tmp_path):
        path = tmp_path / "exp.cfg"
        iio.save_config(path, mg.ExperimentConfig(ell=11))
        cfg = iio.load_config(path, overrides={"ell": "13",
                                               "lambda_g": 75.0})
        assert cfg.ell == 13
        assert cfg.lambda_g == 75.0

    def test_defaults_without_file(self):
        assert iio.load_config() == mg.ExperimentConfig()

    def test_unknown_key_rejected(self, tmp_path):
        path = tmp_path / "exp.cfg"
        path.write_text("not_a_key = 3\n")
        with pytest.raises(InputError):
            iio.load_config(path)
        with pytest.raises(InputError):
            iio.load_config(overrides={"nope": 1})

    def test_comments_and_blank_lines_ignored(self, tmp_path):
        path = tmp_path / "exp.cfg"
        path.write_text("# a comment\n\nell = 9  # trailing\n")
        assert iio.load_config(path).ell == 9

    def test_malformed_line_rejected(self, tmp_path):
        path = tmp_path / "exp.cfg"
        path.write_text("ell 9\n")
        with pytest.raises(InputError):
            iio.load_config(path)
