import json
import math

import numpy as np
import pytest

from gibbslab.concentration import kantorovich_functional, sample_functional
from gibbslab.errors import ConfigError
from gibbslab.estimators import max_block_deviation, shadowing_score
from gibbslab.experiments import DEFAULTS, ExperimentConfig, ExperimentResult, run
from gibbslab.markov import bernoulli_model, sample_paths
from gibbslab.transport import BlockMeasure

LRI = {"kind": "long-range-ising", "p": 4}
MARKOV2 = {"kind": "markov-depth", "depth": 2, "table": [0.1, -0.4, 0.3, 0.2]}
FAIR = {"kind": "bernoulli", "probs": [0.5, 0.5]}


def cfg(experiment, **kw):
    return ExperimentConfig.from_dict({"experiment": experiment, **kw})


class TestConfig:
    def test_defaults_merged(self):
        c = cfg("asclt", params={"N": [100]})
        assert c.params["N"] == [100] and c.params["symbol"] == 1

    def test_unknown_experiment(self):
        with pytest.raises(ConfigError):
            cfg("foo")

    def test_unknown_param(self):
        with pytest.raises(ConfigError):
            cfg("asclt", params={"NN": 3})

    def test_unknown_top_level_key(self):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict({"experiment": "asclt", "thetta": 0.5})
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict({"depth": 4})

    def test_depth_order_consistency(self):
        with pytest.raises(ConfigError):
            cfg("asclt", depth=4, order=4)

    def test_seeds_and_theta(self):
        with pytest.raises(ConfigError):
            cfg("asclt", seeds=[])
        with pytest.raises(ConfigError):
            cfg("asclt", theta=1.5)

    def test_resolved_round_trip(self):
        c = cfg("pinsker", potential=LRI, seeds=[3])
        assert ExperimentConfig.from_dict(c.resolved()).resolved() == c.resolved()


class TestMarkovApprox:
    def test_markov_depth_two_exact(self):
        res = run(cfg("markov-approx", potential=MARKOV2, depth=8, order=2, params={"n": 6}))
        assert all(abs(r[1]) < 1e-12 for r in res.rows) and res.passed

    def test_bernoulli_exact(self):
        res = run(cfg("markov-approx", potential={"kind": "bernoulli", "probs": [0.7, 0.3]}, depth=8, order=2,
                      params={"n": 5, "orders": [1, 2, 3]}))
        assert all(abs(r[1]) < 1e-12 for r in res.rows)

    def test_lri_decay(self):
        res = run(cfg("markov-approx", potential=LRI, depth=10, order=2, params={"n": 6, "orders": [2, 3, 4]}))
        col = [r[2] for r in res.rows]
        assert col[0] > col[1] > col[2] > 0
        assert res.passed and res.summary["dbar_is_lower_bound"]

    def test_order_beyond_depth(self):
        with pytest.raises(ConfigError):
            run(cfg("markov-approx", potential=LRI, depth=6, order=2, params={"orders": [7]}))


class TestEmpiricalMeasure:
    def test_single_point(self, S_bern03):
        mu = BlockMeasure.from_spectral(S_bern03, 4)
        d = sample_functional(kantorovich_functional(mu, 1), bernoulli_model([0.7, 0.3]), 200, 0)
        assert np.all((d > 0) & (d <= 1))

    def test_bernoulli_ordering(self):
        res = run(cfg("empirical-measure", potential=FAIR, depth=6, order=0,
                      params={"n": [1000, 100000], "samples": 60}))
        assert res.rows[1][1] < res.rows[0][1]
        assert res.flags["mean_decreasing"]


class TestASCLT:
    def test_zero_function_is_delta(self):
        from gibbslab.estimators import asclt_update, observable
        from gibbslab.transport import w1_real

        st = asclt_update(None, observable(1, lambda w: 0.0), np.zeros(500, dtype=int), 500)
        assert w1_real(st.atoms, st.weights, "gaussian", 0.0) == 0.0

    def test_small_run(self):
        res = run(cfg("asclt", potential=FAIR, depth=4, order=0, seeds=[0, 1], params={"N": [100, 1000]}))
        assert res.summary["sigma2"] == pytest.approx(0.25, abs=1e-10)
        assert [r[:2] for r in res.rows] == [[0, 100], [0, 1000], [1, 100], [1, 1000]]
        assert all(0 < r[2] < 1 for r in res.rows)


class TestShadowing:
    def test_two_point_law(self, S_bern03):
        paths = sample_paths(bernoulli_model([0.7, 0.3]), 1, 20_000, 3)
        s = shadowing_score(paths, (1,), 1)
        assert set(np.unique(s)) <= {0.0, 1.0}
        assert s.mean() == pytest.approx(0.7, abs=0.02)

    def test_small_run(self):
        res = run(cfg("shadowing", potential=FAIR, depth=4, order=0, params={"n": 1000, "samples": 2000}))
        assert res.passed
        assert res.summary["u_A"] == pytest.approx(2 * math.sqrt(res.summary["C_hat"] * math.log(2)))


class TestBlockFrequency:
    def test_k1_binomial(self, S_zero):
        paths = sample_paths(bernoulli_model([0.5, 0.5]), 400, 50, 1)
        D = max_block_deviation(paths, S_zero, 1, 400)
        np.testing.assert_allclose(D, np.abs(paths.mean(axis=1) - 0.5), atol=1e-14)

    def test_n_equals_k(self):
        res = run(cfg("block-frequency", potential=FAIR, depth=6, order=0,
                      params={"k": [2], "n": [2], "samples": 500, "zeta": 0.3}))
        fixed = [r for r in res.rows if r[0] == "fixed"]
        assert all(r[4] >= 1 for r in fixed) and res.flags["envelope"]

    def test_small_run(self):
        res = run(cfg("block-frequency", potential=FAIR, depth=6, order=0,
                      params={"k": [1, 2], "n": [100, 1000], "samples": 1000}))
        assert res.passed and "zeta_trend" in res.flags


def test_hitting_entropy_small():
    res = run(cfg("hitting-entropy", potential={"kind": "bernoulli", "probs": [0.7, 0.3]}, depth=4, order=0,
                  params={"n": [6, 10], "trials": 100}))
    assert res.summary["entropy"] == pytest.approx(-(0.3 * math.log(0.3) + 0.7 * math.log(0.7)))
    assert [r[0] for r in res.rows] == [6, 10]


def test_concentration_small():
    res = run(cfg("concentration", potential=FAIR, depth=4, order=0, params={"n": 128, "samples": 5000}))
    assert res.passed and res.summary["sum_lip2"] == 128


def test_variance_small():
    res = run(cfg("variance", potential=LRI, depth=10, order=4, params={"n": [100], "samples": 2000}))
    assert [r[0] for r in res.rows] == ["birkhoff", "kantorovich", "shadowing"] and res.passed


def test_pinsker_small():
    res = run(cfg("pinsker", potential=LRI, depth=8, order=2, params={"instances": 20}))
    assert len(res.rows) == 20 and res.flags["bound_holds"]
    assert res.summary["B_hat"] == max(r[-1] for r in res.rows)


class TestOutputs:
    def test_provenance_and_csv(self, tmp_path):
        res = run(cfg("markov-approx", potential=MARKOV2, depth=8, order=2, seeds=[4], params={"n": 4}))
        for key in ("potential", "depth", "order", "seeds"):
            assert key in res.provenance
        paths = res.write(tmp_path)
        text = (tmp_path / "markov-approx.csv").read_text()
        header = [line for line in text.splitlines() if line.startswith("#")]
        assert any(line.startswith("# seeds=[4]") for line in header)
        data = json.loads((tmp_path / "markov-approx.json").read_text())
        assert data["flags"] == res.flags and data["provenance"]["order"] == 2
        assert set(paths) == {"csv", "json"}

    def test_full_precision_floats(self):
        res = ExperimentResult("x", ["a"], [[0.1 + 0.2]], {}, {}, {})
        assert res.csv_text().splitlines()[-1] == repr(0.1 + 0.2)

    def test_deterministic(self):
        c = {"experiment": "shadowing", "potential": FAIR, "depth": 4, "order": 0,
             "params": {"n": 500, "samples": 1000}}
        assert run(c).csv_text() == run(c).csv_text()
        other = dict(c, seeds=[1])
        assert run(other).csv_text() != run(c).csv_text()

    def test_every_experiment_has_defaults(self):
        from gibbslab.experiments import EXPERIMENTS

        assert set(EXPERIMENTS) == set(DEFAULTS)
