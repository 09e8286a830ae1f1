"""Classical Hopfield reference: storage, recall, and energy bookkeeping."""

import itertools

import numpy as np
import pytest

from pchn.hopfield import (HopfieldNet, async_sweep, hebbian_store, hn_energy,
                           interaction_energy, recall)


def _pm1(rng, shape):
    return np.where(rng.random(shape) < 0.5, -1.0, 1.0)


class TestHebbianStore:
    def test_single_pattern_outer_product(self):
        x = np.array([[1.0, -1.0, 1.0]])
        net = hebbian_store(x)
        expect = np.outer(x[0], x[0])
        np.fill_diagonal(expect, 0.0)
        np.testing.assert_array_equal(net.W, expect)
        np.testing.assert_array_equal(net.b, 0.0)

    def test_two_patterns_sum(self):
        x = np.array([[1.0, 1.0, -1.0, -1.0],
                      [1.0, -1.0, 1.0, -1.0]])
        net = hebbian_store(x)
        expect = x.T @ x
        np.fill_diagonal(expect, 0.0)
        np.testing.assert_array_equal(net.W, expect)

    def test_symmetric_zero_diagonal(self):
        rng = np.random.default_rng(5)
        net = hebbian_store(_pm1(rng, (7, 40)))
        np.testing.assert_array_equal(net.W, net.W.T)
        np.testing.assert_array_equal(np.diag(net.W), 0.0)

    def test_rejects_non_pm1(self):
        with pytest.raises(ValueError):
            hebbian_store(np.array([[1.0, 0.5, -1.0]]))


class TestAsyncSweep:
    def test_two_unit_example(self):
        # W couples the units ferromagnetically; from (-1, 1) the first
        # visited unit flips to match the other
        net = HopfieldNet(W=np.array([[0.0, 1.0], [1.0, 0.0]]), b=np.zeros(2))
        v = np.array([-1.0, 1.0])
        out = async_sweep(net, v, order=[0, 1])
        np.testing.assert_array_equal(out, [1.0, 1.0])

    def test_zero_field_keeps_previous_value(self):
        net = HopfieldNet(W=np.zeros((2, 2)), b=np.zeros(2))
        v = np.array([1.0, -1.0])
        out = async_sweep(net, v, order=[0, 1])
        np.testing.assert_array_equal(out, v)

    def test_energy_never_increases_along_updates(self):
        """Every single-neuron update must keep hn_energy non-increasing;
        checked exhaustively along full recalls at d=100."""
        rng = np.random.default_rng(19)
        x = _pm1(rng, (10, 100))
        net = hebbian_store(x)
        for k in range(10):
            v = x[k].copy()
            flip = rng.choice(100, size=13, replace=False)
            v[flip] *= -1
            e_prev = hn_energy(net, v)
            for _ in range(50):
                order = rng.permutation(100)
                changed = False
                for i in order:
                    h = net.W[i] @ v + net.b[i]
                    new = 1.0 if h > 0 else (-1.0 if h < 0 else v[i])
                    if new != v[i]:
                        v[i] = new
                        changed = True
                    e = hn_energy(net, v)
                    assert e <= e_prev + 1e-9
                    e_prev = e
                if not changed:
                    break


class TestEnergies:
    def test_quadratic_interaction_equals_hn_energy_up_to_constant(self):
        """The two energy forms differ by the constant N*d/2 on sign
        vectors; checked on all 2^d states for small d."""
        rng = np.random.default_rng(23)
        for d in (4, 6, 8, 10):
            x = _pm1(rng, (3, d))
            net = hebbian_store(x)
            states = np.array(list(itertools.product([-1.0, 1.0], repeat=d)))
            gaps = [hn_energy(net, v) - interaction_energy(x, v) for v in states]
            np.testing.assert_allclose(gaps, gaps[0], atol=1e-9)

    def test_interaction_energy_value(self):
        x = np.array([[1.0, 1.0], [1.0, -1.0]])
        v = np.array([1.0, 1.0])
        # overlaps are 2 and 0
        assert interaction_energy(x, v) == -2.0

    def test_hn_energy_value(self):
        net = HopfieldNet(W=np.array([[0.0, 2.0], [2.0, 0.0]]),
                          b=np.array([1.0, 0.0]))
        v = np.array([1.0, -1.0])
        # -0.5 * (v W v) - b.v = -0.5 * (-4) - 1 = 1
        assert hn_energy(net, v) == 1.0


class TestRecall:
    def test_stored_patterns_are_fixed_points(self):
        rng = np.random.default_rng(31)
        x = _pm1(rng, (10, 100))
        net = hebbian_store(x)
        for k in range(10):
            res = recall(net, x[k], seed=k)
            assert res.converged
            assert res.sweeps == 1
            np.testing.assert_array_equal(res.v, x[k])

    def test_recovers_flipped_probes_below_capacity(self):
        """N=10 patterns in d=100 sits under the ~0.138 d capacity, so
        13-bit corruptions should almost always come back exactly."""
        n_exact = 0
        for seed in range(20):
            rng = np.random.default_rng(1000 + seed)
            x = _pm1(rng, (10, 100))
            net = hebbian_store(x)
            k = int(rng.integers(10))
            v = x[k].copy()
            flip = rng.choice(100, size=13, replace=False)
            v[flip] *= -1
            res = recall(net, v, seed=seed)
            assert res.converged
            n_exact += bool(np.array_equal(res.v, x[k]))
        assert n_exact >= 18

    def test_recall_invariant_to_weight_rescaling(self):
        """Sign dynamics only read the sign of the field, so scaling W
        by a positive constant cannot change the trajectory."""
        rng = np.random.default_rng(37)
        x = _pm1(rng, (5, 60))
        net = hebbian_store(x)
        scaled = HopfieldNet(W=3.7 * net.W, b=net.b.copy())
        v0 = x[2].copy()
        v0[:9] *= -1
        a = recall(net, v0, seed=9)
        b = recall(scaled, v0, seed=9)
        np.testing.assert_array_equal(a.v, b.v)
        assert a.sweeps == b.sweeps

    def test_single_pattern_full_recovery(self):
        rng = np.random.default_rng(41)
        x = _pm1(rng, (1, 50))
        net = hebbian_store(x)
        v = x[0].copy()
        v[:10] *= -1
        res = recall(net, v, seed=0)
        np.testing.assert_array_equal(res.v, x[0])

    def test_deterministic_given_seed(self):
        rng = np.random.default_rng(43)
        x = _pm1(rng, (8, 80))
        net = hebbian_store(x)
        v0 = _pm1(rng, 80)
        a = recall(net, v0, seed=17)
        b = recall(net, v0, seed=17)
        np.testing.assert_array_equal(a.v, b.v)
        assert a.sweeps == b.sweeps
