import math

import numpy as np
import pytest

from dyncopula.cli import EXIT_CONFIG, EXIT_NUMERICAL, main
from dyncopula.experiments import read_csv


def run(argv, capsys):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_simulate_zero_drift_columns_equal(capsys):
    code, out, _ = run(["simulate", "--n", 5, "--alpha", 0, "--seed", 1], capsys)
    assert code == 0
    lines = out.splitlines()
    assert lines[:3] == ["# path=constant(alpha=0.0)", "# n=5", "# seed=1"]
    assert lines[3] == "i,u,v"
    rows = [line.split(",") for line in lines[4:]]
    assert len(rows) == 5 and all(r[1] == r[2] for r in rows)


def test_simulate_same_seed_identical_files(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for f in (a, b):
        assert main(["simulate", "--path", "linear", "--beta", "1", "--n", "200", "--seed", "4", "--out", str(f)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_simulated_file_pearson_moment(tmp_path):
    f = tmp_path / "s.csv"
    main(["simulate", "--n", "3000", "--seed", "8", "--out", str(f)])
    _, header, rows = read_csv(f)
    u = np.array([float(r[1]) for r in rows])
    v = np.array([float(r[2]) for r in rows])
    from scipy import stats

    z = stats.norm.ppf(u) * stats.norm.ppf(v)
    rho = 1 - 1 / math.log(3000)
    assert abs(z.mean() - rho) < 4 * math.sqrt(1 + rho * rho) / math.sqrt(3000)


def test_config_errors_exit_2(capsys, tmp_path):
    code, _, err = run(["simulate", "--alpha", -1], capsys)
    assert code == EXIT_CONFIG and "negative" in err
    code, _, err = run(["simulate", "--path", "spline"], capsys)
    assert code == EXIT_CONFIG and "--path" in err
    code, _, err = run(["fit-param", tmp_path / "missing.csv"], capsys)
    assert code == EXIT_CONFIG and "cannot read" in err
    bad = tmp_path / "bad.csv"
    bad.write_text("u,v\n0.1,0.2\n0.5,x\n")
    code, _, err = run(["fit-param", bad], capsys)
    assert code == EXIT_CONFIG and "row 2" in err
    code, _, err = run(["replicate-table"], capsys)
    assert code == EXIT_CONFIG and "--table" in err


def test_numerical_failure_exit_3(capsys, tmp_path):
    # this simulated sample has no sign change of the gamma profile on the grid
    f = tmp_path / "s.csv"
    assert main(["simulate", "--path", "power", "--gamma", "0.5", "--beta", "1", "--n", "500",
                 "--seed", "10", "--out", str(f)]) == 0
    code, _, err = run(["fit-param", f, "--path", "power"], capsys)
    assert code == EXIT_NUMERICAL
    assert "numerical failure" in err and "best iterate" in err


def test_limit_footer_and_regimes(capsys):
    code, out, _ = run(["limit", "--grid", "-1"], capsys)
    assert code == 0
    assert out.splitlines()[-1] == "# lambda=1.6826894921370859"
    code, out, _ = run(["limit", "--grid", "-1", "--regime", "comonotone"], capsys)
    meta, header, rows = read_csv(__import__("io").StringIO(out))
    assert header == ["x", "y", "G", "l"]
    assert float(rows[0][2]) == pytest.approx(math.exp(-1))
    code, out, _ = run(["limit", "--grid", "-1", "--regime", "independent"], capsys)
    _, _, rows = read_csv(__import__("io").StringIO(out))
    assert float(rows[0][2]) == pytest.approx(math.exp(-2))


def test_limit_empirical_columns(capsys):
    code, out, _ = run(["limit", "--grid", "-0.5", "--reps", 200, "--n", 100], capsys)
    assert code == 0
    _, header, rows = read_csv(__import__("io").StringIO(out))
    assert header == ["x", "y", "G", "l", "empirical", "gap"]


def test_limit_rejects_nonpositive_tabulated_path(capsys, tmp_path):
    table = tmp_path / "m.csv"
    table.write_text("s,m\n0,0\n1,2\n")
    code, _, err = run(["limit", "--path", f"table:{table}"], capsys)
    assert code == EXIT_CONFIG and "m(s) > 0" in err


def _write_sample(tmp_path, name="s.csv", n=2167, seed=5, extra=()):
    f = tmp_path / name
    assert main(["simulate", "--path", "linear", "--alpha", "1", "--beta", "1", "--n", str(n),
                 "--seed", str(seed), "--out", str(f), *extra]) == 0
    return f


def test_fit_nonparam_four_curve_files(tmp_path, capsys):
    f = _write_sample(tmp_path)
    out = tmp_path / "curve.csv"
    code, _, _ = run(["fit-nonparam", f, "--out", out], capsys)
    assert code == 0
    for d in (0.2, 0.3, 0.4, 0.5):
        meta, header, rows = read_csv(tmp_path / f"curve_d{d}.csv")
        assert header == ["s", "m_hat", "route", "h", "kernel", "flag"]
        assert [r[0] for r in rows][:3] == ["0.1", "0.11", "0.12"] and rows[-1][0] == "0.9"
        assert len(rows) == 81


def test_fit_nonparam_auto_bandwidth(tmp_path, capsys):
    f = _write_sample(tmp_path, n=1000)
    code, out, err = run(["fit-nonparam", f, "--d", "auto", "--grid", "0.5"], capsys)
    assert code in (0, EXIT_CONFIG)  # a linear pilot may report m'' = 0 in principle


def test_rank_invariance_of_fits(tmp_path, capsys):
    f = _write_sample(tmp_path, n=500)
    _, _, rows = read_csv(f)
    raw = tmp_path / "raw.csv"
    # strictly increasing transforms of each margin, on the raw scale
    raw.write_text("x,y\n" + "".join(f"{math.log(float(u) / (1 - float(u)))!r},{float(v) ** 3 * 7 - 2!r}\n"
                                    for _, u, v in rows))
    for cmd in (["fit-param", "--path", "linear"], ["fit-param", "--path", "const", "--estimator", "pearson"],
                ["fit-nonparam", "--d", "0.3", "--grid", "0.2,0.5"]):
        _, a, _ = run([cmd[0], f, *cmd[1:]], capsys)
        _, b, _ = run([cmd[0], raw, *cmd[1:]], capsys)
        strip = lambda text: [line for line in text.splitlines() if not line.startswith("# input=")]
        assert strip(a) == strip(b)


def test_fit_param_with_tests(tmp_path, capsys):
    f = _write_sample(tmp_path, n=1000)
    code, out, err = run(["fit-param", f, "--path", "linear", "--hotelling", "--null-alpha", 1,
                          "--null-beta", 1, "--constancy"], capsys)
    assert code == 0
    _, header, rows = read_csv(__import__("io").StringIO(out))
    assert "hotelling_p_value" in header and "constancy_p_value" in header
    assert "linear fit (spearman)" in err
    code, _, err = run(["fit-param", f, "--path", "linear", "--hotelling"], capsys)
    assert code == EXIT_CONFIG


def test_test_subcommand(tmp_path, capsys):
    f = _write_sample(tmp_path, n=1000)
    code, out, _ = run(["test", f, "--kind", "constancy"], capsys)
    assert code == 0
    _, header, rows = read_csv(__import__("io").StringIO(out))
    assert header == ["test", "statistic", "dof", "p_value", "null"] and rows[0][0] == "constancy"
    code, out, _ = run(["test", f, "--kind", "hotelling", "--path", "linear", "--null-alpha", 1, "--null-beta", 1],
                       capsys)
    assert code == 0 and "hotelling" in out


def test_config_file_with_flag_override(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# simulation settings\npath = linear\nalpha=2\nbeta = 1\nn = 7\nseed=3\n")
    code, out_cfg, _ = run(["simulate", "--config", cfg], capsys)
    assert code == 0
    code, out_flags, _ = run(["simulate", "--path", "linear", "--alpha", 2, "--beta", 1, "--n", 7, "--seed", 3], capsys)
    assert out_cfg == out_flags
    code, out_override, _ = run(["simulate", "--config", cfg, "--seed", 4], capsys)
    assert "# seed=4" in out_override
    cfg.write_text("colour=red\n")
    code, _, err = run(["simulate", "--config", cfg], capsys)
    assert code == EXIT_CONFIG and "colour" in err


def test_replicate_table_jobs_identical(tmp_path, capsys):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["replicate-table", "--table", "1", "--reps", "4", "--n", "300", "--out", str(a)]) == 0
    assert main(["replicate-table", "--table", "1", "--reps", "4", "--n", "300", "--jobs", "2", "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
