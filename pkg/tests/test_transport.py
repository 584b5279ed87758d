import io
import math

import numpy as np
import pytest
from scipy import stats

from gibbslab.errors import DomainError, ResourceError
from gibbslab.markov import MarkovModel, bernoulli_model, markov_from_equilibrium
from gibbslab.potentials import bernoulli_potential, long_range_ising
from gibbslab.transfer import solve
from gibbslab.transport import (
    BlockMeasure,
    dbar_n,
    pinsker_gap,
    relative_entropy_n,
    relative_entropy_rate,
    transport_simplex,
    w1_lp,
    w1_real,
    w1_tree,
)

from oracles import dtheta_cost, hamming_cost, kl, lp_transport, product_measure, w1_cdf_gaussian


def random_measure(rng, m, alpha=1.0):
    return BlockMeasure(m, rng.dirichlet(np.full(2**m, alpha)))


class TestBlockMeasure:
    def test_validation(self):
        with pytest.raises(DomainError):
            BlockMeasure(2, [0.5, 0.5, 0.1, 0.0])
        with pytest.raises(DomainError):
            BlockMeasure(2, [0.5, 0.5])
        with pytest.raises(DomainError):
            BlockMeasure(1, [1.5, -0.5])

    def test_marginal_consistency(self, S_lri):
        mu = BlockMeasure.from_spectral(S_lri, 6)
        np.testing.assert_allclose(mu.marginal(3), S_lri.marginal(3), atol=1e-15)

    def test_point(self):
        assert BlockMeasure.point([1, 0]).masses.tolist() == [0, 0, 1, 0]


class TestTree:
    def test_identical(self):
        mu = random_measure(np.random.default_rng(0), 4)
        assert w1_tree(mu, mu) == 0.0

    def test_point_masses(self):
        d = w1_tree(BlockMeasure.point([0, 1, 1]), BlockMeasure.point([1, 1, 1]))
        assert 1 - 0.5**3 <= d <= 1.0

    def test_depth_mismatch(self):
        with pytest.raises(DomainError):
            w1_tree(BlockMeasure.point([0]), BlockMeasure.point([0, 1]))

    def test_metric(self):
        rng = np.random.default_rng(1)
        for _ in range(100):
            a, b, c = (random_measure(rng, 3, 0.5) for _ in range(3))
            assert w1_tree(a, b) == w1_tree(b, a)
            assert w1_tree(a, c) <= w1_tree(a, b) + w1_tree(b, c) + 1e-9


class TestSimplex:
    @pytest.mark.parametrize("shape", [(3, 3), (4, 7), (8, 8), (16, 16)])
    def test_matches_highs(self, shape):
        rng = np.random.default_rng(shape[0] * 31 + shape[1])
        for _ in range(10):
            a = rng.dirichlet(np.ones(shape[0]))
            b = rng.dirichlet(np.ones(shape[1]))
            C = rng.random(shape)
            val, plan = transport_simplex(a, b, C)
            ref, _ = lp_transport(a, b, C)
            assert val == pytest.approx(ref, abs=1e-10)
            np.testing.assert_allclose(plan.sum(axis=1), a, atol=1e-12)
            np.testing.assert_allclose(plan.sum(axis=0), b, atol=1e-12)
            assert plan.min() >= 0

    def test_degenerate_instances(self):
        # point masses and integer costs produce heavily degenerate bases
        for n in (4, 8):
            a = np.zeros(2**n)
            a[0] = 1.0
            b = product_measure(0.5, n)
            C = hamming_cost(n)
            val, _ = transport_simplex(a, b, C)
            assert val == pytest.approx(n / 2, abs=1e-12)

    def test_infeasible(self):
        with pytest.raises(DomainError):
            transport_simplex([0.5, 0.5], [0.2, 0.2], np.ones((2, 2)))


class TestLP:
    def test_identical_diagonal(self):
        mu = random_measure(np.random.default_rng(2), 3)
        val, plan = w1_lp(mu, mu)
        assert val == pytest.approx(0.0, abs=1e-15)
        np.testing.assert_allclose(np.diag(plan.plan), mu.masses, atol=1e-15)

    def test_bernoulli_depth_one(self):
        val, _ = w1_lp(BlockMeasure(1, [0.7, 0.3]), BlockMeasure(1, [0.4, 0.6]))
        assert val == pytest.approx(0.3, abs=1e-15)

    @pytest.mark.parametrize("m", [2, 3, 4])
    def test_tree_bracket_and_oracle(self, m):
        rng = np.random.default_rng(m)
        for _ in range(30):
            mu, nu = random_measure(rng, m), random_measure(rng, m)
            val, plan = w1_lp(mu, nu)
            ref, _ = lp_transport(mu.masses, nu.masses, dtheta_cost(m, 0.5))
            assert val == pytest.approx(ref, abs=1e-10)
            t = w1_tree(mu, nu)
            assert val <= t + 0.5**m + 1e-9 and t <= val + 0.5**m + 1e-9

    def test_plan_export(self):
        _, plan = w1_lp(BlockMeasure.point([0, 1]), BlockMeasure.point([1, 1]))
        buf = io.StringIO()
        plan.write_csv(buf)
        assert buf.getvalue().splitlines() == ["source,target,mass", "1,3,1.0"]


class TestDbar:
    def test_identical(self):
        mu = random_measure(np.random.default_rng(3), 3)
        assert dbar_n(mu, mu)[0] == pytest.approx(0.0, abs=1e-15)

    @pytest.mark.parametrize("n", [1, 2, 3])
    def test_product_bernoulli(self, n):
        p, q = 0.3, 0.55
        mu, nu = BlockMeasure(n, product_measure(p, n)), BlockMeasure(n, product_measure(q, n))
        val, _ = dbar_n(mu, nu)
        ref, _ = lp_transport(mu.masses, nu.masses, hamming_cost(n))
        assert val == pytest.approx(n * abs(p - q), abs=1e-12)
        assert ref == pytest.approx(n * abs(p - q), abs=1e-9)

    def test_point_masses(self):
        x, y = [0, 1, 1, 0], [1, 1, 0, 0]
        assert dbar_n(BlockMeasure.point(x), BlockMeasure.point(y))[0] == 2.0

    def test_range_and_tv_lower_bound(self):
        rng = np.random.default_rng(4)
        for _ in range(30):
            mu, nu = random_measure(rng, 3), random_measure(rng, 3)
            d = dbar_n(mu, nu)[0]
            assert 0 <= d / 3 <= 1
            assert d >= 0.5 * np.abs(mu.marginal(1) - nu.marginal(1)).sum() - 1e-12
            a, b = random_measure(rng, 1), random_measure(rng, 1)
            assert dbar_n(a, b)[0] == pytest.approx(0.5 * np.abs(a.masses - b.masses).sum(), abs=1e-14)

    def test_guard(self):
        mu = BlockMeasure.point([0] * 10)
        with pytest.raises(ResourceError):
            dbar_n(mu, mu)


class TestRelativeEntropy:
    def test_equal(self):
        mu = random_measure(np.random.default_rng(5), 3)
        assert relative_entropy_n(mu, mu) == 0.0

    @pytest.mark.parametrize("n", [1, 2, 3, 4])
    def test_product_additivity(self, n):
        p, q = 0.3, 0.6
        val = relative_entropy_n(BlockMeasure(n, product_measure(p, n)), BlockMeasure(n, product_measure(q, n)))
        assert val == pytest.approx(n * kl([p, 1 - p], [q, 1 - q]), rel=1e-12)

    def test_point_mass(self):
        mu = random_measure(np.random.default_rng(6), 2)
        assert relative_entropy_n(BlockMeasure.point([1, 0]), mu) == pytest.approx(-math.log(mu.masses[2]))

    def test_infinite_sentinel(self):
        assert relative_entropy_n(BlockMeasure(1, [0.5, 0.5]), BlockMeasure.point([0])) == math.inf

    def test_nonnegative_random(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            a, b = random_measure(rng, 2), random_measure(rng, 2)
            assert relative_entropy_n(a, b) > 0

    def test_rate_exact_markov(self, S_markov2, markov2):
        nu = markov_from_equilibrium(S_markov2, 1)
        assert abs(relative_entropy_rate(nu, S_markov2, markov2)) <= 1e-8

    def test_rate_uniform(self, S_zero, zero_phi):
        assert abs(relative_entropy_rate(bernoulli_model([0.5, 0.5]), S_zero, zero_phi)) <= 1e-12

    def test_rate_bernoulli(self, S_bern03, bern03):
        q = 0.45
        val = relative_entropy_rate(bernoulli_model([1 - q, q]), S_bern03, bern03)
        assert val == pytest.approx(kl([1 - q, q], [0.7, 0.3]), abs=1e-12)
        per_symbol = relative_entropy_n(BlockMeasure(4, product_measure(q, 4)), BlockMeasure.from_spectral(S_bern03, 4)) / 4
        assert per_symbol == pytest.approx(val, abs=1e-12)

    def test_rate_needs_depth(self):
        phi = long_range_ising(4.0)
        with pytest.raises(ResourceError):
            relative_entropy_rate(bernoulli_model([0.5, 0.5]), solve(phi, 3), phi, tol=1e-6)


class TestPinsker:
    def test_equilibrium(self, S_lri):
        g = pinsker_gap(markov_from_equilibrium(S_lri, 5), S_lri, 4)
        assert g.lhs == pytest.approx(0.0, abs=1e-12) and g.rhs == pytest.approx(0.0, abs=1e-6)
        S = solve(bernoulli_potential([0.6, 0.4]), 6)
        g = pinsker_gap(bernoulli_model([0.6, 0.4]), S, 3)
        assert g.ratio == 0.0

    def test_bernoulli_pair(self):
        p, q = 0.4, 0.45
        S = solve(bernoulli_potential([1 - p, p]), 6)
        g = pinsker_gap(bernoulli_model([1 - q, q]), S, 3)
        assert g.lhs == pytest.approx(3 * abs(p - q), abs=1e-12)
        assert g.rhs == pytest.approx(math.sqrt(3 * 3 * kl([1 - q, q], [1 - p, p])), rel=1e-10)
        assert 0 < g.ratio < 1

    def test_depth_guard(self, S_bern03):
        with pytest.raises(DomainError):
            pinsker_gap(bernoulli_model([0.5, 0.5]), S_bern03, S_bern03.depth + 1)


class TestW1Real:
    def test_identical_atoms(self):
        x = [0.3, -1.0, 2.0]
        assert w1_real(x, ref="atoms", ref_atoms=x) == 0.0

    def test_deltas(self):
        assert w1_real([1.5], ref="atoms", ref_atoms=[-0.5]) == pytest.approx(2.0)
        assert w1_real([1.5, -1.0], [0.5, 0.5], ref="delta0") == pytest.approx(1.25)
        assert w1_real([1.5], ref="gaussian", sigma2=0.0) == pytest.approx(1.5)

    def test_gaussian_quadrature_oracle(self):
        rng = np.random.default_rng(8)
        x = rng.normal(0.3, 1.4, size=40)
        w = rng.random(40)
        w /= w.sum()
        for s2 in (0.5, 1.0, 3.0):
            assert w1_real(x, w, "gaussian", s2) == pytest.approx(w1_cdf_gaussian(x, w, math.sqrt(s2)), abs=1e-9)

    def test_single_atom_gaussian(self):
        # W1(delta_a, N(0, 1)) = E|Z - a| = 2 phi(a) + a (2 Phi(a) - 1)
        a = 0.7
        ref = 2 * stats.norm.pdf(a) + a * (2 * stats.norm.cdf(a) - 1)
        assert w1_real([a], ref="gaussian", sigma2=1.0) == pytest.approx(ref, abs=1e-12)

    def test_normal_samples(self):
        x = np.random.default_rng(9).normal(size=100_000)
        assert w1_real(x, ref="gaussian", sigma2=1.0) < 0.02

    def test_negative_weights(self):
        with pytest.raises(DomainError):
            w1_real([0.0, 1.0], [1.5, -0.5])
