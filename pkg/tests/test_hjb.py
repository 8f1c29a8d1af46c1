import math

import numpy as np
import pytest

import jumpcontrol as jc
from jumpcontrol.hjb import NonconvergenceError, hamiltonian


class TestHamiltonian:
    def test_hand_computed_layer(self, m2):
        # v = (0, 1): at state 0, action a gives a * (v(1) - v(0)) = a, so
        # the maximum is 2 at action index 1; state 1 is absorbing, H = 0
        vals, am = hamiltonian(m2, 0.3, np.array([0.0, 1.0]))
        assert vals == pytest.approx([2.0, 0.0])
        assert list(am) == [1, 0]

    def test_tie_breaks_to_lowest_action(self, aflat):
        # identical rows across actions: every state ties, argmax must be 0
        _, am = hamiltonian(aflat, 0.0, np.linspace(0.0, 1.0, aflat.n_states))
        assert np.all(am == 0)


class TestPicard:
    def test_m2_closed_form(self, m2):
        sol = jc.solve_hjb_picard(m2, n_steps=2000)
        assert abs(sol.values.values[0, 0] - (1.0 - math.exp(-2.0))) <= 1e-4
        assert np.allclose(sol.values.values[:, 1], 1.0, atol=1e-12)
        # working action is everywhere the higher rate
        assert np.all(sol.argmax[:-1, 0] == 1)

    def test_terminal_layer_exact(self, threestate):
        sol = jc.solve_hjb_picard(threestate, n_steps=200)
        assert np.array_equal(sol.values.values[-1], threestate.terminal_cost)

    def test_sup_norm_bound(self, threestate):
        sol = jc.solve_hjb_picard(threestate, n_steps=2000)
        cap = (
            np.abs(threestate.terminal_cost).max()
            + threestate.horizon * np.abs(threestate.running_cost).max()
        )
        assert np.abs(sol.values.values).max() <= cap + 1e-8

    def test_agrees_with_marching(self, threestate):
        picard = jc.solve_hjb_picard(threestate, n_steps=2000)
        march = jc.solve_hjb_marching(threestate, n_steps=40_000)
        gap = np.abs(picard.values.values[0] - march.values.values[0]).max()
        assert gap <= 1e-3

    def test_single_action_reduces_to_kolmogorov(self, single_action):
        sol = jc.solve_hjb_picard(single_action, n_steps=1000)
        grid = jc.evaluate_policy(
            single_action, jc.constant_policy(single_action, 0), n_steps=1000
        )
        assert np.abs(sol.values.values - grid.values).max() <= 1e-6

    def test_nonconvergence_raises(self, threestate):
        with pytest.raises(NonconvergenceError) as exc:
            jc.solve_hjb_picard(threestate, n_steps=100, tol=1e-16, max_iter=2)
        assert exc.value.iterations == 2

    def test_iteration_count_reported(self, m2):
        sol = jc.solve_hjb_picard(m2, n_steps=500)
        assert 1 <= sol.iterations < 100
        assert sol.residual < 1e-9


class TestMonotonicity:
    def test_value_monotone_in_terminal_cost(self, threestate):
        # raising g pointwise cannot lower the value anywhere
        p = threestate
        bigger = jc.Problem(
            p.states, p.actions, p.rates, p.lambda0,
            p.running_cost, p.terminal_cost + 0.25, p.horizon,
        )
        lo = jc.solve_hjb_picard(p, n_steps=500).values.values
        hi = jc.solve_hjb_picard(bigger, n_steps=500).values.values
        assert np.all(hi >= lo - 1e-12)

    def test_value_dominates_every_constant_policy(self, threestate):
        sol = jc.solve_hjb_picard(threestate, n_steps=2000)
        for a in range(threestate.n_actions):
            grid = jc.evaluate_policy(threestate, jc.constant_policy(threestate, a), n_steps=2000)
            assert np.all(sol.values.values >= grid.values - 1e-8)


class TestExtractFeedback:
    def test_feedback_achieves_value(self, threestate):
        sol = jc.solve_hjb_picard(threestate, n_steps=2000)
        alpha = jc.extract_feedback(sol)
        grid = jc.evaluate_policy(threestate, alpha, n_steps=2000)
        assert np.abs(grid.values[0] - sol.values.values[0]).max() <= 1e-3

    def test_policy_table_shape(self, m2):
        sol = jc.solve_hjb_picard(m2, n_steps=100)
        alpha = jc.extract_feedback(sol)
        assert alpha.table.shape == (101, 2)
        assert alpha.horizon == m2.horizon
