import json
import os
import time

import numpy as np
import pytest

from rodessa import demo_path
from rodessa.cli import EXIT_DATA, EXIT_NONCONVERGED, EXIT_OK, EXIT_USAGE, main
from rodessa.detect import parse_report, report_arrays
from rodessa.series import MultivariateSeries, read_csv, write_csv
from rodessa.sim import SCENARIOS, Contamination, contaminate, generate

FAST = ["--replications", "50", "--seed", "7"]


@pytest.fixture(scope="module")
def sim_csv(tmp_path_factory):
    d = tmp_path_factory.mktemp("data")
    s, _ = generate(SCENARIOS[3], 11)
    clean = d / "clean.csv"
    write_csv(str(clean), s)
    s, _ = contaminate(s, Contamination("cellwise", 0.1, 8.0, 12), 20.0)
    dirty = d / "dirty.csv"
    write_csv(str(dirty), s)
    return str(clean), str(dirty)


def _read(path):
    with open(path, "rb") as fh:
        return fh.read()


def _outputs(d):
    return {name: _read(os.path.join(d, name)) for name in sorted(os.listdir(d))}


def _config_line(text):
    for line in text.splitlines():
        if "config {" in line:
            return json.loads(line.split("config ", 1)[1].rstrip(" ->"))
    raise AssertionError("no embedded config")


class TestErrors:
    def test_missing_file(self, tmp_path, capsys):
        code = main(["fit", str(tmp_path / "nope.csv"), "--seed", "0", "--out", str(tmp_path)])
        assert code == EXIT_DATA
        assert "nope.csv" in capsys.readouterr().err

    def test_usage(self, capsys):
        assert main(["fit"]) == EXIT_USAGE
        assert main(["frobnicate"]) == EXIT_USAGE
        assert main(["fit", "x.csv", "--rank", "0"]) == EXIT_USAGE
        assert "error" in capsys.readouterr().err

    def test_calibrate_needs_shape(self, capsys):
        assert main(["calibrate", "--seed", "0"]) == EXIT_USAGE

    def test_bad_window_is_data_error(self, sim_csv, tmp_path):
        assert main(["fit", sim_csv[0], "-L", "70", "--out", str(tmp_path)] + FAST) == EXIT_DATA

    def test_malformed_csv(self, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("a,b\n1,2\n3,x\n")
        assert main(["fit", str(bad), "--seed", "0", "--out", str(tmp_path)]) == EXIT_DATA

    def test_nonconvergence(self, sim_csv, tmp_path, capsys):
        code = main(["fit", sim_csv[1], "-L", "35", "--max-iter", "1", "--out",
                     str(tmp_path)] + FAST)
        assert code == EXIT_NONCONVERGED
        assert os.path.exists(tmp_path / "reconstruction.csv")
        assert "did not converge" in capsys.readouterr().err


class TestFit:
    def test_outputs(self, sim_csv, tmp_path):
        assert main(["fit", sim_csv[1], "-L", "35", "--out", str(tmp_path)] + FAST) == EXIT_OK
        assert set(os.listdir(tmp_path)) == {"reconstruction.csv", "trace.csv", "report.json",
                                              "plot.svg"}
        rec = read_csv(str(tmp_path / "reconstruction.csv"))
        assert rec.values.shape == (70, 4)
        trace = np.loadtxt(tmp_path / "trace.csv", delimiter=",", comments="#", skiprows=2)
        assert np.all(np.diff(trace[:, 1]) <= 1e-10 * trace[0, 1])

    def test_config_everywhere(self, sim_csv, tmp_path, capsys):
        main(["fit", sim_csv[0], "-L", "35", "--out", str(tmp_path)] + FAST)
        echoed = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
        for name in ("reconstruction.csv", "trace.csv", "plot.svg"):
            assert _config_line((tmp_path / name).read_text()) == echoed
        doc = json.loads((tmp_path / "report.json").read_text())
        assert doc["config"] == echoed and echoed["seed"] == 7 and echoed["window"] == 35

    def test_entropy_seed_logged(self, sim_csv, tmp_path, caplog):
        main(["fit", sim_csv[0], "-L", "35", "--replications", "50", "--no-svg", "--out",
              str(tmp_path)])
        err = caplog.text
        assert "entropy seed" in err
        seed = int(err.split("entropy seed ")[1].split()[0])
        assert json.loads((tmp_path / "report.json").read_text())["config"]["seed"] == seed

    @pytest.mark.parametrize("method", ["CMSSA", "RLM", "CHENG", "CS"])
    def test_other_methods(self, sim_csv, tmp_path, method):
        code = main(["fit", sim_csv[1], "-L", "35", "--method", method, "--out",
                     str(tmp_path)] + FAST)
        assert code == EXIT_OK
        assert read_csv(str(tmp_path / "reconstruction.csv")).values.shape == (70, 4)

    def test_demo_under_30s(self, tmp_path):
        start = time.perf_counter()
        code = main(["fit", demo_path(), "-L", "151", "-q", "7", "--out", str(tmp_path)] + FAST)
        elapsed = time.perf_counter() - start
        assert code == EXIT_OK and elapsed < 30.0

    def test_auto_window(self, sim_csv, tmp_path, capsys):
        main(["fit", sim_csv[0], "--no-svg", "--out", str(tmp_path)] + FAST)
        cfg = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
        assert cfg["window_policy"] == "auto" and 1 < cfg["window"] < 70


class TestDetect:
    def test_contaminated(self, sim_csv, tmp_path):
        assert main(["detect", sim_csv[1], "-L", "35", "--out", str(tmp_path)] + FAST) == EXIT_OK
        lines = (tmp_path / "flags.csv").read_text().splitlines()
        assert lines[0].startswith("# rodessa") and lines[1] == "time,series,direction,weight"
        cells = [ln for ln in lines[2:] if ",*," not in ln]
        assert len(cells) >= 20
        assert all(ln.split(",")[2] in ("+1", "-1") for ln in cells)

    def test_clean(self, sim_csv, tmp_path):
        assert main(["detect", sim_csv[0], "-L", "35", "--out", str(tmp_path)] + FAST) == EXIT_OK
        doc = parse_report((tmp_path / "report.json").read_text())
        _, f, _, cf = report_arrays(doc)
        assert f.mean() < 0.05 and cf.mean() < 0.1

    def test_constant_series(self, tmp_path):
        path = tmp_path / "flat.csv"
        write_csv(str(path), MultivariateSeries(np.ones((30, 2))))
        code = main(["detect", str(path), "-L", "10", "--out", str(tmp_path / "o")] + FAST)
        assert code in (EXIT_OK, EXIT_DATA)


class TestForecast:
    def test_outputs(self, sim_csv, tmp_path):
        code = main(["forecast", sim_csv[0], "-L", "35", "-H", "20", "--out",
                     str(tmp_path)] + FAST)
        assert code == EXIT_OK
        fc = np.loadtxt(tmp_path / "forecast.csv", delimiter=",", comments="#", skiprows=2)
        assert fc.shape == (20, 4)
        doc = json.loads((tmp_path / "report.json").read_text())
        assert np.allclose(doc["forecasts"], fc)

    def test_single_step(self, sim_csv, tmp_path):
        main(["forecast", sim_csv[1], "-L", "35", "-H", "1", "--method", "CMSSA", "--out",
              str(tmp_path)] + FAST)
        lines = [ln for ln in (tmp_path / "forecast.csv").read_text().splitlines()
                 if not ln.startswith("#")]
        assert len(lines) == 2

    def test_zero_horizon(self, sim_csv, tmp_path):
        code = main(["forecast", sim_csv[0], "-L", "35", "-H", "0", "--out",
                     str(tmp_path)] + FAST)
        assert code == EXIT_OK
        assert json.loads((tmp_path / "report.json").read_text())["forecasts"] is None or \
            json.loads((tmp_path / "report.json").read_text())["forecasts"] == []


class TestCalibrate:
    def test_from_shape(self, tmp_path):
        code = main(["calibrate", "-N", "70", "-p", "4", "-L", "35", "--out", str(tmp_path)]
                    + FAST)
        assert code == EXIT_OK
        doc = json.loads((tmp_path / "calibration.json").read_text())
        assert doc["config"]["seed"] == 7 and 1 < doc["c2"] < doc["c1"]

    def test_from_file_single_series(self, tmp_path):
        path = tmp_path / "one.csv"
        write_csv(str(path), MultivariateSeries(np.arange(40.0)[:, None]))
        assert main(["calibrate", str(path), "--out", str(tmp_path)] + FAST) == EXIT_OK

    def test_cache(self, tmp_path):
        args = ["calibrate", "-N", "30", "-p", "2", "-L", "10", "--cache-dir",
                str(tmp_path / "cache")] + FAST
        assert main(args + ["--out", str(tmp_path / "a")]) == EXIT_OK
        assert os.listdir(tmp_path / "cache")
        assert main(args + ["--out", str(tmp_path / "b")]) == EXIT_OK
        assert _read(tmp_path / "a" / "calibration.json") == _read(tmp_path / "b" /
                                                                  "calibration.json")


class TestRankScan:
    def test_curve(self, sim_csv, tmp_path):
        code = main(["rank-scan", sim_csv[0], "-L", "35", "--max-rank", "4", "--out",
                     str(tmp_path)] + FAST)
        assert code == EXIT_OK
        curve = np.loadtxt(tmp_path / "rank_curve.csv", delimiter=",", comments="#",
                           skiprows=2)
        assert curve.shape == (4, 2) and curve[1, 1] < curve[0, 1]
        assert (tmp_path / "rank_curve.svg").exists()

    def test_rank_too_large(self, sim_csv, tmp_path):
        assert main(["rank-scan", sim_csv[0], "-L", "35", "--max-rank", "500", "--out",
                     str(tmp_path)] + FAST) == EXIT_USAGE


class TestSimulate:
    def test_one_replication(self, tmp_path):
        code = main(["simulate", "--replications", "1", "--seed", "3", "--jobs", "1",
                     "--out", str(tmp_path)])
        assert code == EXIT_OK
        rows = [ln for ln in (tmp_path / "study.csv").read_text().splitlines()
                if not ln.startswith("#")]
        assert len(rows) == 1 + 2 * 5
        assert (tmp_path / "study_S3_cellwise_eps0.2_RE.svg").exists()

    def test_gamma_zero(self, tmp_path):
        code = main(["simulate", "--replications", "2", "--gammas", "0", "--methods", "CMSSA",
                     "RODESSA", "--seed", "3", "--jobs", "2", "--no-svg", "--out",
                     str(tmp_path)])
        assert code == EXIT_OK
        assert os.listdir(tmp_path) == ["study.csv"]

    def test_jobs_do_not_change_results(self, tmp_path):
        base = ["simulate", "--replications", "2", "--methods", "CMSSA", "--seed", "5",
                "--no-svg"]
        main(base + ["--jobs", "1", "--out", str(tmp_path / "a")])
        main(base + ["--jobs", "2", "--out", str(tmp_path / "b")])
        assert _outputs(tmp_path / "a") == _outputs(tmp_path / "b")


class TestPlot:
    def test_from_report(self, sim_csv, tmp_path):
        main(["forecast", sim_csv[1], "-L", "35", "-H", "5", "--out", str(tmp_path)] + FAST)
        out = tmp_path / "replot.svg"
        assert main(["plot", str(tmp_path / "report.json"), "--svg", str(out)]) == EXIT_OK
        assert out.read_bytes() == (tmp_path / "plot.svg").read_bytes()

    def test_bad_geometry(self, sim_csv, tmp_path):
        main(["fit", sim_csv[0], "-L", "35", "--out", str(tmp_path)] + FAST)
        assert main(["plot", str(tmp_path / "report.json"), "--width", "0", "--out",
                     str(tmp_path)]) == EXIT_DATA


class TestDeterminism:
    @pytest.mark.parametrize("argv", [
        ["fit", "{dirty}", "-L", "35"],
        ["detect", "{dirty}", "-L", "35"],
        ["forecast", "{clean}", "-L", "35", "-H", "10"],
        ["calibrate", "-N", "40", "-p", "3", "-L", "20"],
        ["rank-scan", "{clean}", "-L", "35", "--max-rank", "3"],
    ])
    def test_rerun_identical(self, sim_csv, tmp_path, argv):
        argv = [a.format(clean=sim_csv[0], dirty=sim_csv[1]) for a in argv] + FAST
        main(argv + ["--out", str(tmp_path / "a")])
        main(argv + ["--out", str(tmp_path / "b")])
        a, b = _outputs(tmp_path / "a"), _outputs(tmp_path / "b")
        assert a and a == b
