import numpy as np
import pytest

from weightedcp.cli import (
    EXIT_INVALID_INPUT,
    EXIT_TABLE_MISS,
    EXIT_TOO_SHORT,
    EXIT_UNREADABLE,
    EXIT_USAGE,
    main,
)


def write_series(path, values, header=None):
    lines = ([header] if header else []) + [repr(float(v)) for v in values]
    path.write_text("\n".join(lines) + "\n")
    return str(path)


def parse_kv(text):
    return dict(line.split(" = ", 1) for line in text.strip().splitlines())


def data_rows(text):
    return [ln for ln in text.splitlines() if ln and not ln.startswith("#")]


class TestTestCommand:
    def test_null_series(self, tmp_path, capsys):
        x = np.random.default_rng(0).standard_normal(1000)
        assert main(["test", write_series(tmp_path / "x.csv", x)]) == 0
        out = parse_kv(capsys.readouterr().out)
        assert out["n"] == "1000"
        assert out["reject"] in ("true", "false")
        assert float(out["critical_value"]) == pytest.approx(1.20)

    def test_null_calibration(self, tmp_path, capsys):
        rng = np.random.default_rng(1)
        rejects = 0
        for i in range(200):
            path = write_series(tmp_path / f"x{i}.csv", rng.standard_normal(1000))
            assert main(["test", path]) == 0
            rejects += parse_kv(capsys.readouterr().out)["reject"] == "true"
        # about 5% with a binomial sd of 1.5%
        assert rejects <= 25

    def test_step_detected(self, tmp_path, capsys):
        x = np.random.default_rng(2).standard_normal(1000)
        x[500:] += 1.0
        prof = tmp_path / "profile.csv"
        path = write_series(tmp_path / "x.csv", x, header="value")
        assert main(["test", path, "--profile-out", str(prof)]) == 0
        out = parse_kv(capsys.readouterr().out)
        assert out["reject"] == "true"
        assert abs(int(out["k_hat"]) - 500) <= 30
        rows = data_rows(prof.read_text())
        assert rows[0] == "k,G" and len(rows) == 1000

    def test_wilcoxon_weighted(self, tmp_path, capsys):
        x = np.random.default_rng(3).standard_normal(300)
        path = write_series(tmp_path / "x.csv", x)
        assert main(["test", path, "--kernel", "wilcoxon", "--gamma", "0.3",
                     "--alpha", "0.01"]) == 0
        out = parse_kv(capsys.readouterr().out)
        assert float(out["critical_value"]) == pytest.approx(2.40)
        assert float(out["scale"]) == pytest.approx(12**-0.5, rel=1e-5)

    def test_empty_file(self, tmp_path, capsys):
        empty = tmp_path / "empty.csv"
        empty.write_text("")
        prof = tmp_path / "profile.csv"
        assert main(["test", str(empty), "--profile-out", str(prof)]) == EXIT_INVALID_INPUT
        captured = capsys.readouterr()
        assert captured.out == "" and "no observations" in captured.err
        assert not prof.exists()

    def test_unreadable(self, tmp_path, capsys):
        assert main(["test", str(tmp_path / "missing.csv")]) == EXIT_UNREADABLE
        assert "cannot read" in capsys.readouterr().err

    def test_non_numeric(self, tmp_path):
        p = tmp_path / "bad.csv"
        p.write_text("value\n1.0\nabc\n2.0\n")
        assert main(["test", str(p)]) == EXIT_INVALID_INPUT

    def test_too_short(self, tmp_path):
        assert main(["test", write_series(tmp_path / "one.csv", [1.0])]) == EXIT_TOO_SHORT

    def test_table_miss(self, tmp_path):
        path = write_series(tmp_path / "x.csv", np.arange(20.0))
        assert main(["test", path, "--gamma", "0.25"]) == EXIT_TABLE_MISS

    def test_custom_table(self, tmp_path, capsys):
        table = tmp_path / "q.csv"
        assert main(["quantiles", "--reps", "2000", "--grid-m", "500", "--gammas", "0.2",
                     "--alphas", "0.05", "--out", str(table)]) == 0
        path = write_series(tmp_path / "x.csv", np.random.default_rng(4).standard_normal(100))
        assert main(["test", path, "--gamma", "0.2", "--table", str(table)]) == 0
        out = parse_kv(capsys.readouterr().out)
        assert abs(float(out["critical_value"]) - 1.63) < 0.1

    def test_bad_gamma_is_usage_error(self, tmp_path):
        path = write_series(tmp_path / "x.csv", np.arange(20.0))
        assert main(["test", path, "--gamma", "0.6"]) == EXIT_USAGE


class TestQuantilesCommand:
    def test_small_reps_flagged(self, tmp_path):
        out = tmp_path / "q.csv"
        with pytest.warns(UserWarning):
            assert main(["quantiles", "--reps", "10", "--grid-m", "200", "--out", str(out)]) == 0
        text = out.read_text()
        assert "# high_stderr: true" in text
        assert data_rows(text)[0] == "gamma,alpha,quantile,stderr,reps,grid_m"
        assert len(data_rows(text)) == 16

    def test_rerun_byte_identical(self, tmp_path):
        args = ["quantiles", "--reps", "3000", "--grid-m", "300"]
        a, b, c = (tmp_path / f"{i}.csv" for i in "abc")
        assert main(args + ["--out", str(a)]) == 0
        assert main(args + ["--out", str(b)]) == 0
        assert main(args + ["--out", str(c), "--threads", "4"]) == 0
        assert a.read_bytes() == b.read_bytes() == c.read_bytes()

    def test_stdout(self, capsys):
        assert main(["quantiles", "--reps", "1000", "--grid-m", "200", "--gammas", "0",
                     "--alphas", "0.05"]) == 0
        assert "0,0.05," in capsys.readouterr().out


class TestEnvelopeCommand:
    def test_zero_jump(self, capsys):
        assert main(["envelope", "--delta", "0"]) == 0
        rows = data_rows(capsys.readouterr().out)
        assert rows[0] == "gamma,tau,power,stderr"
        assert len(rows) == 40
        assert {r.split(",")[2] for r in rows[1:]} == {"0.050000"}

    def test_bad_sigma(self):
        assert main(["envelope", "--sigma", "0"]) == EXIT_USAGE


class TestPowerCommands:
    def test_power_a1(self, tmp_path):
        out = tmp_path / "a1.csv"
        assert main(["power-a1", "--n", "200", "--reps", "500", "--gammas", "0,0.4",
                     "--c", "5", "--taus", "0.25,0.5", "--out", str(out)]) == 0
        text = out.read_text()
        assert "# overall_power[c=5,gamma=0.4]:" in text
        rows = data_rows(text)
        assert rows[0] == "c,gamma,tau,power,stderr"
        # two gammas and the envelope, two taus each
        assert len(rows) == 1 + 6
        assert any(r.startswith("5,envelope,") for r in rows)

    def test_power_a2(self, tmp_path):
        out = tmp_path / "a2.csv"
        assert main(["power-a2", "--n", "500", "--reps", "250", "--gammas", "0.3",
                     "--c-grid", "0,2,4", "--out", str(out)]) == 0
        text = out.read_text()
        assert "# regime: A2" in text and "# sided: maxabs" in text
        assert len(data_rows(text)) == 4

    def test_config_file(self, tmp_path):
        cfg = tmp_path / "exp.cfg"
        cfg.write_text("n = 150\nreps = 250\ngammas = 0.2\nc = 7\ntau_grid = 0.5\n")
        out = tmp_path / "a1.csv"
        assert main(["power-a1", "--config", str(cfg), "--out", str(out)]) == 0
        text = out.read_text()
        assert "# n: 150" in text
        assert "overall_power" not in text
        assert len(data_rows(text)) == 3

    def test_threads_invariant(self, tmp_path):
        args = ["power-a1", "--n", "150", "--reps", "750", "--gammas", "0,0.3", "--c", "6",
                "--taus", "0.1,0.5"]
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        assert main(args + ["--out", str(a)]) == 0
        assert main(args + ["--out", str(b), "--threads", "3"]) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_validation(self):
        assert main(["power-a1", "--n", "1", "--reps", "10"]) == EXIT_USAGE
        assert main(["power-a1", "--alpha", "1.5", "--reps", "10"]) == EXIT_USAGE

    def test_threads_must_be_positive(self):
        with pytest.raises(SystemExit):
            main(["envelope", "--threads", "0"])
