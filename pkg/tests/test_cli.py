import json
import math

import pytest

from gibbslab.cli import apply_overrides, load_config, main
from gibbslab.errors import ConfigError

MARKOV2 = '[potential]\nkind = "markov-depth"\ndepth = 2\ntable = [0.1, -0.4, 0.3, 0.2]\n'
FAIR = '[potential]\nkind = "bernoulli"\nprobs = [0.5, 0.5]\n'


@pytest.fixture(autouse=True)
def _no_env_out(monkeypatch):
    monkeypatch.delenv("GIBBSLAB_OUT", raising=False)


def write(tmp_path, text, name="cfg.toml"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def shadow_cfg(tmp_path):
    return write(tmp_path, "depth = 4\norder = 0\n" + FAIR + "[params]\nn = 500\nsamples = 1000\n")


class TestSpectral:
    def test_zero_potential(self, tmp_path):
        cfg = write(tmp_path, '[potential]\nkind = "constant"\nvalue = 0.0\n')
        assert main(["spectral", "--config", cfg, "--out", str(tmp_path / "o"), "--set", "depth=6"]) == 0
        data = json.loads((tmp_path / "o" / "spectral.json").read_text())
        assert abs(data["pressure"] - math.log(2)) < 1e-12
        assert (tmp_path / "o" / "mu.csv").exists() and (tmp_path / "o" / "manifest.json").exists()

    def test_lri_converges(self, tmp_path):
        cfg = write(tmp_path, 'depth = 8\n[potential]\nkind = "long-range-ising"\np = 4\n')
        assert main(["spectral", "--config", cfg, "--out", str(tmp_path)]) == 0
        data = json.loads((tmp_path / "spectral.json").read_text())
        assert data["residual"] < 1e-12 and data["depth"] == 8

    def test_missing_config(self, tmp_path, capsys):
        assert main(["spectral", "--config", str(tmp_path / "nope.toml"), "--out", str(tmp_path)]) == 2
        assert "not found" in capsys.readouterr().err

    def test_unknown_key(self, tmp_path):
        cfg = write(tmp_path, 'depht = 4\n[potential]\nkind = "constant"\nvalue = 0.0\n')
        assert main(["spectral", "--config", cfg, "--out", str(tmp_path)]) == 2

    def test_non_convergence_exit_3(self, tmp_path):
        cfg = write(tmp_path, 'depth = 6\nmax_iter = 1\ntol = 1e-15\n[potential]\nkind = "long-range-ising"\np = 4\n')
        assert main(["spectral", "--config", cfg, "--out", str(tmp_path)]) == 3


class TestRun:
    def test_unknown_experiment(self, tmp_path):
        assert main(["run", "foo", "--out", str(tmp_path)]) == 2

    def test_markov_approx_zeros(self, tmp_path):
        cfg = write(tmp_path, "depth = 8\norder = 2\n" + MARKOV2 + "[params]\nn = 5\n")
        assert main(["run", "markov-approx", "--config", cfg, "--out", str(tmp_path)]) == 0
        rows = [l for l in (tmp_path / "markov-approx.csv").read_text().splitlines() if not l.startswith("#")]
        assert all(abs(float(l.split(",")[1])) < 1e-12 for l in rows[1:])

    def test_asclt_bernoulli_produces_csv(self, tmp_path):
        cfg = write(tmp_path, "depth = 4\norder = 0\nseeds = [0]\n" + FAIR + "[params]\nN = [100, 1000]\n")
        code = main(["run", "asclt", "--config", cfg, "--out", str(tmp_path)])
        summary = json.loads((tmp_path / "asclt.json").read_text())
        assert (tmp_path / "asclt.csv").exists()
        assert code == (0 if all(summary["flags"].values()) else 1)

    def test_config_for_other_experiment(self, tmp_path):
        cfg = write(tmp_path, 'experiment = "pinsker"\n')
        assert main(["run", "asclt", "--config", cfg, "--out", str(tmp_path)]) == 2

    def test_manifest_round_trip(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        assert main(["run", "shadowing", "--config", shadow_cfg(tmp_path), "--out", str(a), "--seed", "7"]) == 0
        assert main(["run", "shadowing", "--config", str(a / "manifest.json"), "--out", str(b)]) == 0
        assert (a / "shadowing.csv").read_bytes() == (b / "shadowing.csv").read_bytes()

    def test_seed_changes_output(self, tmp_path):
        cfg = shadow_cfg(tmp_path)
        outs = []
        for name, seed in (("s1", "1"), ("s1b", "1"), ("s2", "2")):
            main(["run", "shadowing", "--config", cfg, "--out", str(tmp_path / name), "--seed", seed])
            outs.append((tmp_path / name / "shadowing.csv").read_bytes())
        assert outs[0] == outs[1] and outs[0] != outs[2]

    def test_env_overrides_out(self, tmp_path, monkeypatch):
        monkeypatch.setenv("GIBBSLAB_OUT", str(tmp_path / "env"))
        main(["run", "shadowing", "--config", shadow_cfg(tmp_path), "--out", str(tmp_path / "flag")])
        assert (tmp_path / "env" / "shadowing.csv").exists()
        assert not (tmp_path / "flag").exists()

    def test_set_override_recorded(self, tmp_path):
        main(["run", "shadowing", "--config", shadow_cfg(tmp_path), "--out", str(tmp_path), "--set", "params.n=300"])
        manifest = json.loads((tmp_path / "manifest.json").read_text())
        assert manifest["config"]["params"]["n"] == 300
        assert manifest["command"] == ["run", "shadowing"]


class TestSampleAndReport:
    def test_sample(self, tmp_path):
        cfg = write(tmp_path, "depth = 4\norder = 1\nlength = 50\ncount = 3\n" + FAIR)
        assert main(["sample", "--config", cfg, "--out", str(tmp_path), "--seed", "2"]) == 0
        lines = (tmp_path / "paths.txt").read_text().split()
        assert len(lines) == 3 and all(len(l) == 50 and set(l) <= {"0", "1"} for l in lines)

    def test_report(self, tmp_path, capsys):
        main(["run", "shadowing", "--config", shadow_cfg(tmp_path), "--out", str(tmp_path)])
        (tmp_path / "stray.json").write_text(json.dumps({"experiment": "x", "flags": {"f": False}}))
        assert main(["report", str(tmp_path)]) == 0
        out = capsys.readouterr().out
        assert "PASS shadowing" in out and "x:f" not in out
        assert (tmp_path / "report.csv").exists()

    def test_report_empty(self, tmp_path):
        assert main(["report", str(tmp_path)]) == 2


class TestHelpers:
    def test_overrides(self):
        cfg = apply_overrides({"a": {"b": 1}}, ["a.b=2", "a.c=[1,2]", "d=text"])
        assert cfg == {"a": {"b": 2, "c": [1, 2]}, "d": "text"}
        with pytest.raises(ConfigError):
            apply_overrides({}, ["novalue"])

    def test_bad_toml(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(write(tmp_path, "= broken"))

    def test_json_config(self, tmp_path):
        assert load_config(write(tmp_path, '{"depth": 3}', "c.json")) == {"depth": 3}
