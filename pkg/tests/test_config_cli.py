import csv
import json

import pytest

from nbsgd import recipes, runtime
from nbsgd.cli import main
from nbsgd.config import ConfigError, config_from_dict, load_config, parse_config

SEEDS = {"data": 1, "delays": 2, "topology": 3, "init": 4, "shuffle": 5}


def minimal(**over):
    cfg = {
        "seeds": dict(SEEDS),
        "problem": {"kind": "least_squares", "m": 256, "d": 5},
        "workers": 4,
        "algorithm": {"scheme": "dpsgd", "N": 2, "B": 16, "eta": 0.05},
        "topology": {"kind": "ring"},
        "iterations": 12,
        "output": {"dir": "out", "name": "mini"},
    }
    for key, value in over.items():
        if isinstance(value, dict) and isinstance(cfg.get(key), dict):
            cfg[key].update(value)
        else:
            cfg[key] = value
    return cfg


def write(tmp_path, cfg, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg) if isinstance(cfg, dict) else cfg)
    return path


def read_rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


@pytest.fixture(autouse=True)
def no_env_out(monkeypatch):
    monkeypatch.delenv("NBSGD_OUT_DIR", raising=False)


class TestConfig:
    def test_round_trip(self):
        cfg = recipes.convergence(100)
        assert parse_config(cfg.to_json()) == cfg

    def test_defaults_fill_in(self, tmp_path):
        cfg = load_config(write(tmp_path, minimal()))
        assert cfg.algorithm.mode == "nonblocking"
        assert cfg.delay.kind == "exponential"

    def test_missing_seed_rejected(self):
        raw = minimal()
        del raw["seeds"]["shuffle"]
        with pytest.raises(ConfigError, match="seeds"):
            config_from_dict(raw)

    def test_unknown_field(self):
        with pytest.raises(ConfigError, match="algorithm: unknown field.*etaa"):
            config_from_dict(minimal(algorithm={"etaa": 1.0}))

    def test_type_mismatch(self):
        with pytest.raises(ConfigError, match="workers"):
            config_from_dict(minimal(workers="four"))

    def test_malformed_json_location(self):
        with pytest.raises(ConfigError, match=r"x\.json:3:3"):
            parse_config('{\n  "workers": 4,\n  oops\n}', "x.json")

    def test_exactly_one_horizon(self):
        with pytest.raises(ConfigError):
            config_from_dict(minimal(epochs=2)).validate()


class TestSimulate:
    def test_writes_trace_and_summary(self, tmp_path, capsys):
        path = write(tmp_path, minimal())
        assert main(["simulate", str(path)]) == 0
        rows = read_rows(tmp_path / "out" / "mini_trace.csv")
        assert len(rows) == 12
        assert [int(r["k"]) for r in rows] == list(range(12))
        summary = json.loads((tmp_path / "out" / "mini_summary.json").read_text())
        assert summary["iterations"] == 12
        assert len(summary["per_worker_abandoned"]) == 4

    def test_byte_identical_reruns(self, tmp_path):
        path = write(tmp_path, minimal())
        main(["simulate", str(path)])
        first = (tmp_path / "out" / "mini_trace.csv").read_bytes()
        main(["simulate", str(path)])
        assert (tmp_path / "out" / "mini_trace.csv").read_bytes() == first

    def test_out_dir_env(self, tmp_path, monkeypatch):
        monkeypatch.setenv("NBSGD_OUT_DIR", str(tmp_path / "elsewhere"))
        assert main(["simulate", str(write(tmp_path, minimal()))]) == 0
        assert (tmp_path / "elsewhere" / "mini_trace.csv").exists()

    def test_malformed_json_exit(self, tmp_path, capsys):
        path = write(tmp_path, '{"workers": 4,\n "seeds": }')
        assert main(["simulate", str(path)]) == 2
        assert "2:" in capsys.readouterr().err

    def test_batch_too_large_exit(self, tmp_path, capsys):
        path = write(tmp_path, minimal(algorithm={"B": 128}))
        assert main(["simulate", str(path)]) == 2
        assert "B*P" in capsys.readouterr().err

    def test_missing_edge_file(self, tmp_path):
        path = write(tmp_path, minimal(topology={"kind": "edge_list", "edges_path": "nope.txt"}))
        assert main(["simulate", str(path)]) == 2

    def test_edge_list_config(self, tmp_path):
        (tmp_path / "star.txt").write_text("0 1\n0 2\n0 3\n")
        path = write(tmp_path, minimal(topology={"kind": "edge_list", "edges_path": "star.txt"}))
        assert main(["simulate", str(path)]) == 0

    def test_disconnected_edge_list_exit(self, tmp_path):
        (tmp_path / "g.txt").write_text("0 1\n2 3\n")
        path = write(tmp_path, minimal(topology={"kind": "edge_list", "edges_path": "g.txt"}))
        assert main(["simulate", str(path)]) == 2

    def test_divergence_exit(self, tmp_path, capsys):
        path = write(tmp_path, minimal(algorithm={"eta": 50.0}, iterations=200))
        assert main(["simulate", str(path)]) == 3
        rows = read_rows(tmp_path / "out" / "mini_trace.csv")
        assert 0 < len(rows) <= 200

    def test_zero_iterations(self, tmp_path):
        assert main(["simulate", str(write(tmp_path, minimal(iterations=0)))]) == 0
        assert read_rows(tmp_path / "out" / "mini_trace.csv") == []

    def test_parallel(self, tmp_path):
        a = write(tmp_path, minimal(output={"dir": "out", "name": "a"}), "a.json")
        b = write(tmp_path, minimal(output={"dir": "out", "name": "b"}), "b.json")
        assert main(["simulate", "--parallel", str(a), str(b)]) == 0
        assert read_rows(tmp_path / "out" / "a_trace.csv") == read_rows(tmp_path / "out" / "b_trace.csv")

    def test_async_and_csv_problem(self, tmp_path):
        lines = ["x1,x2,y"] + [f"{i % 3},{i % 5},{i % 7}" for i in range(64)]
        (tmp_path / "data.csv").write_text("\n".join(lines) + "\n")
        raw = minimal(problem={"kind": "least_squares", "csv": "data.csv"},
                      algorithm={"scheme": "async_centralized", "mode": "blocking"})
        assert main(["simulate", str(write(tmp_path, raw))]) == 0
        rows = read_rows(tmp_path / "out" / "mini_trace.csv")
        assert len(rows) == 12
        assert all(int(r["staleness_max"]) >= 0 for r in rows)


class TestAnalyze:
    def test_rows(self, capsys):
        assert main(["analyze", "--P", "1", "4", "--lambda", "1", "--D", "1024", "--B", "32"]) == 0
        rows = list(csv.DictReader(capsys.readouterr().out.splitlines()))
        assert len(rows) == 2
        assert float(rows[0]["iter_ratio"]) == 1.0
        p4 = rows[1]
        assert float(p4["E_max"]) == pytest.approx(25 / 12, rel=1e-11)
        assert float(p4["iter_ratio"]) == pytest.approx(0.12, rel=1e-11)
        assert float(p4["epoch_nb"]) == pytest.approx(2.0)
        assert float(p4["convergence_bound"]) == pytest.approx(16 / 100 + 24 / 20)

    def test_out_file(self, tmp_path):
        out = tmp_path / "t.csv"
        assert main(["analyze", "--P", "8", "--lambda", "0.5", "2", "--D", "4096", "--B", "64",
                     "--out", str(out)]) == 0
        assert len(read_rows(out)) == 2

    def test_range_exit(self, capsys):
        assert main(["analyze", "--P", "61", "--lambda", "1", "--D", "10000", "--B", "1"]) == 2
        assert "61" in capsys.readouterr().err


class TestValidate:
    def test_passes(self, capsys):
        assert main(["validate", "--trials", "200000", "--seed", "3"]) == 0
        out = capsys.readouterr().out
        assert "FAIL" not in out
        assert "checks passed" in out

    def test_too_few_trials(self):
        assert main(["validate", "--trials", "999"]) == 2

    def test_injected_failure(self, monkeypatch, capsys):
        real = runtime.expected_max_exp
        monkeypatch.setattr(runtime, "expected_max_exp", lambda lam, P: 1.1 * real(lam, P))
        assert main(["validate", "--trials", "100000"]) == 4
        assert "FAIL" in capsys.readouterr().out


class TestCompare:
    def test_homogeneous_ratio_one(self, tmp_path, capsys):
        delay = {"kind": "deterministic", "base": 1.0}
        a = write(tmp_path, minimal(delay=delay, algorithm={"mode": "blocking"}, iterations=60,
                                    output={"dir": "out", "name": "a"}), "a.json")
        b = write(tmp_path, minimal(delay=delay, iterations=60, output={"dir": "out", "name": "b"}), "b.json")
        assert main(["compare", str(a), str(b), "--target-gap", "0.1"]) == 0
        line = [ln for ln in capsys.readouterr().out.splitlines() if ln.startswith("ratio")][0]
        assert float(line.split("=")[1]) == pytest.approx(1.0, rel=1e-9)
        assert (tmp_path / "out" / "a_time_loss.csv").exists()

    def test_unreachable_target(self, tmp_path, capsys):
        a = write(tmp_path, minimal(output={"dir": "out", "name": "a"}), "a.json")
        b = write(tmp_path, minimal(algorithm={"mode": "blocking"}, output={"dir": "out", "name": "b"}), "b.json")
        assert main(["compare", str(a), str(b), "--target-loss", "-1"]) == 5
        assert "never reached" in capsys.readouterr().err

    def test_mismatched_problems(self, tmp_path):
        a = write(tmp_path, minimal(), "a.json")
        b = write(tmp_path, minimal(problem={"d": 6}), "b.json")
        assert main(["compare", str(a), str(b), "--target-gap", "0.5"]) == 2
