"""Vehicle models and the fixed-step integrator."""

import numpy as np
import pytest

from symreach.dynamics import (Dynamics, DynamicsId, NumericalBlowup,
                               eval_f, n_samples, simulate, simulate_batch,
                               state_deviation)


def robot(L=1.0):
    return Dynamics(DynamicsId.ROBOT, v=1.0, L=L)


LIN = Dynamics(DynamicsId.LINEAR3D)


class TestEvalF:
    def test_aligned_heading_moves_straight(self):
        f = eval_f(robot(), np.array([0.0, 0.0, 0.0]), np.array([5.0, 0.0]))
        assert np.allclose(f, [1.0, 0.0, 0.0])

    def test_linear_equilibrium(self):
        x = np.array([1.0, 2.0, 3.0])
        assert np.allclose(eval_f(LIN, x, x), 0.0)

    def test_robot_turn_rate_hand_value(self):
        # target straight above: alpha = pi/2, so dheading = 2 v / L
        f = eval_f(robot(), np.array([0.0, 0.0, 0.0]), np.array([0.0, 5.0]))
        assert np.allclose(f, [1.0, 0.0, 2.0])

    def test_road_mode_chases_destination(self):
        f4 = eval_f(robot(), np.array([0.0, 0.0, 0.0]),
                    np.array([-3.0, 0.0, 5.0, 0.0]))
        f2 = eval_f(robot(), np.array([0.0, 0.0, 0.0]), np.array([5.0, 0.0]))
        assert np.allclose(f4, f2)

    def test_speed_invariant(self):
        rng = np.random.default_rng(2)
        dyn = robot()
        X = rng.uniform(-5, 5, size=(200, 3))
        F = eval_f(dyn, X, np.array([1.0, 1.0]))
        assert np.allclose(np.hypot(F[:, 0], F[:, 1]), dyn.v)


class TestSimulate:
    def test_zero_horizon_single_state(self):
        tr = simulate(LIN, np.array([1.0, 1.0, 1.0]), np.zeros(3), 0.0, 0.01)
        assert tr.states.shape == (1, 3)
        assert tr.dur == 0.0

    def test_linear_contracts(self):
        x0 = np.array([4.0, -3.0, 2.0])
        tr = simulate(LIN, x0, np.zeros(3), 10.0, 0.01)
        assert np.linalg.norm(tr.lstate) < 1e-3 * np.linalg.norm(x0)

    def test_sample_counts(self):
        assert n_samples(1.0, 0.1) == 11
        assert n_samples(1.05, 0.1) == 12  # final partial step
        tr = simulate(LIN, np.ones(3), np.zeros(3), 1.05, 0.1)
        assert tr.states.shape[0] == 12

    def test_linear_matches_closed_form(self):
        # x(t) = p + exp(D t) (x0 - p), D = diag(-3,-3,-1)
        x0 = np.array([2.0, -1.0, 3.0])
        p = np.array([0.5, 0.5, 0.5])
        tr = simulate(LIN, x0, p, 1.0, 1e-3)
        t = np.arange(tr.states.shape[0]) * 1e-3
        rates = np.array([-3.0, -3.0, -1.0])
        closed = p + np.exp(np.outer(t, rates)) * (x0 - p)
        assert np.max(np.abs(tr.states - closed)) < 1e-6

    def test_rk4_order_both_models(self):
        # halving dt reduces endpoint error about 16x against a dt/100 ref
        cases = [(LIN, np.array([2.0, -1.0, 1.5]), np.zeros(3)),
                 (robot(), np.array([-4.0, -0.5, -np.pi / 4]),
                  np.array([0.0, 0.0]))]
        for dyn, x0, p in cases:
            T = 1.6
            ref = simulate(dyn, x0, p, T, T / 3200).lstate
            e1 = state_deviation(dyn, simulate(dyn, x0, p, T, T / 16).lstate, ref)
            e2 = state_deviation(dyn, simulate(dyn, x0, p, T, T / 32).lstate, ref)
            ratio = e1 / e2
            assert 8.0 <= ratio <= 32.0, ratio

    def test_robot_approach_vs_fine_reference(self):
        dyn = robot(L=0.4)
        x0 = np.array([-4.5, -0.5, -np.pi / 4])
        p = np.array([-2.4, -1.4])
        coarse = simulate(dyn, x0, p, 2.0, 0.01)
        fine = simulate(dyn, x0, p, 2.0, 0.0001)
        assert state_deviation(dyn, coarse.states[-1], fine.states[-1]) < 1e-4
        d = np.linalg.norm(coarse.states[:, :2] - p, axis=1)
        settled = d[50:]  # after the initial heading transient
        assert np.all(np.diff(settled) < 1e-9)

    def test_heading_stays_wrapped(self):
        tr = simulate(robot(L=0.4), np.array([0.0, 0.3, 3.0]),
                      np.array([1.0, 0.0]), 20.0, 0.01)
        assert np.all(tr.states[:, 2] >= -np.pi - 1e-12)
        assert np.all(tr.states[:, 2] < np.pi + 1e-12)

    def test_blowup_detected(self):
        with np.errstate(over="ignore", invalid="ignore"):
            with pytest.raises(NumericalBlowup):
                simulate(LIN, np.array([1e3, 0.0, 0.0]), np.zeros(3),
                         600.0, 1.5)

    def test_batch_matches_single(self):
        rng = np.random.default_rng(4)
        X0 = rng.uniform(-2, 2, size=(5, 3))
        p = np.array([1.0, 1.0])
        batch = simulate_batch(robot(), X0, p, 0.5, 0.01)
        for i in range(5):
            single = simulate(robot(), X0[i], p, 0.5, 0.01)
            assert np.array_equal(batch[i], single.states)
