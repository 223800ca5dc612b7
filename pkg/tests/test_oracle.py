"""
Tests for the exact solvers, the Hoeffding bound, Monte-Carlo satisfaction
and the accepting-visit diagnostic.
"""

import csv
import math

import numpy as np
import pytest

from src.core.a2c import A2CLearner, TrainConfig
from src.core.oracle import (
    ConvergenceError,
    augment_and_solve,
    buchi_value,
    chain_reach_closed_form,
    check_values_in_range,
    conditional_visits_estimate,
    hoeffding_lower,
    horizon_word,
    mec_decomposition,
    monte_carlo_satisfaction,
    reach_policy,
    reach_value_iteration,
    squeeze_check,
    top_level_conjuncts,
    visits_growth,
    write_csv,
    write_summary_csv,
    write_trajectories_csv,
)
from src.core.product import AugmentedProduct, augment_finite, build_finite_product
from src.envs.base import FiniteMdp, FiniteMdpEnvironment
from src.envs.finite import chain_mdp, random_finite_mdp, reach_fixture, single_visit_fixture
from src.envs.labeling import TableLabeling
from src.logic.automata import builtin_automata
from src.logic.ltl import format_ltl, parse_ltl

CHAIN_VALUES = {0.5: 0.693147, 0.9: 0.255843, 0.99: 0.046517}


# ======================== Helpers ========================

def read_csv(path):
    with open(path, newline="", encoding="utf-8") as f:
        return list(csv.reader(f))


def fixture_satisfaction(success, text, n_traj, horizon, seed=0):
    mdp, table = reach_fixture(success)
    labeling = TableLabeling(table, ap=["t"])
    ap = AugmentedProduct(FiniteMdpEnvironment(mdp), builtin_automata()["boat_pos"], labeling, 0.9)
    actor = A2CLearner(ap.encoding_size, ap.n_inputs, TrainConfig()).actor
    return monte_carlo_satisfaction(ap, actor, parse_ltl(text, ["t"]), labeling, n_traj, horizon, seed)


# ======================== Reachability ========================

class TestReachability:
    def test_reach_fixture(self):
        mdp, _ = reach_fixture(0.7)
        values = reach_value_iteration(mdp, target=[1])
        assert values[0] == pytest.approx(0.7, abs=1e-9)
        assert values[1] == 1.0 and values[2] == 0.0

    def test_max_over_actions(self):
        rows = {(0, 0): {1: 0.4, 2: 0.6}, (0, 1): {1: 0.9, 2: 0.1}, (1, 0): {1: 1.0}, (2, 0): {2: 1.0}}
        mdp = FiniteMdp.from_rows(3, rows)
        values = reach_value_iteration(mdp, target=[1])
        assert values[0] == pytest.approx(0.9)
        assert reach_policy(mdp, values.values, target=[1])[0] == 1

    def test_policy_does_not_idle(self):
        rows = {(0, 0): {0: 1.0}, (0, 1): {1: 1.0}, (1, 0): {1: 1.0}}
        mdp = FiniteMdp.from_rows(2, rows)
        values = reach_value_iteration(mdp, target=[1])
        assert values[0] == 1.0
        assert reach_policy(mdp, values.values, target=[1])[0] == 1

    def test_convergence_failure(self):
        mdp = augment_finite(chain_mdp(50), 0.9)
        with pytest.raises(ConvergenceError) as info:
            reach_value_iteration(mdp, tol=1e-12, max_iter=1)
        assert info.value.residual > 1e-12
        with pytest.raises(ValueError):
            reach_value_iteration(mdp, tol=0.0)

    def test_chain_values(self):
        mdp = chain_mdp(2000, first_accepting=2)
        for zeta, expected in CHAIN_VALUES.items():
            assert chain_reach_closed_form(zeta) == pytest.approx(expected, abs=1e-6)
            values = augment_and_solve(mdp, zeta)
            assert values[1] == pytest.approx(expected, abs=1e-3)
            assert check_values_in_range(values.values)

    def test_chain_drawn_with_accepting_states_from_three(self):
        assert chain_reach_closed_form(0.5, first_accepting=3) == pytest.approx(2 * math.log(2) - 1)
        mdp = chain_mdp(2000)
        for zeta in CHAIN_VALUES:
            expected = chain_reach_closed_form(zeta, first_accepting=3)
            assert augment_and_solve(mdp, zeta)[1] == pytest.approx(expected, abs=1e-3)

    @pytest.mark.slow
    def test_chain_values_at_full_truncation(self):
        mdp = chain_mdp(10_000, first_accepting=2)
        for zeta, expected in CHAIN_VALUES.items():
            assert augment_and_solve(mdp, zeta)[1] == pytest.approx(expected, abs=1e-3)

    def test_closed_form_domain(self):
        for zeta in (0.0, 1.0):
            with pytest.raises(ValueError):
                chain_reach_closed_form(zeta)
        with pytest.raises(ValueError):
            chain_reach_closed_form(0.5, first_accepting=1)

    def test_values_increase_as_zeta_decreases(self):
        rng = np.random.default_rng(9)
        for _ in range(20):
            mdp = random_finite_mdp(int(rng.integers(2, 7)), 2, 0.4, rng)
            previous = None
            for zeta in (0.999, 0.99, 0.9, 0.5):
                values = augment_and_solve(mdp, zeta).values
                if previous is not None:
                    assert np.all(values >= previous - 1e-8)
                previous = values


# ======================== Büchi ========================

class TestBuchi:
    def test_end_components(self):
        mdp, _ = reach_fixture(0.7)
        assert {states for states, _ in mec_decomposition(mdp)} == {frozenset({1}), frozenset({2})}

        rows = {(0, 0): {1: 1.0}, (0, 1): {0: 0.5, 2: 0.5}, (1, 0): {0: 1.0}, (2, 0): {2: 1.0}}
        components = dict(mec_decomposition(FiniteMdp.from_rows(3, rows)))
        assert components[frozenset({0, 1})] == {0: [0], 1: [0]}
        assert components[frozenset({2})] == {2: [0]}

    def test_truncated_chain_has_no_accepting_end_component(self):
        assert buchi_value(chain_mdp(100))[1] == 0.0

    def test_reach_fixture_product(self):
        mdp, table = reach_fixture(0.7)
        labels = TableLabeling(table, ap=["t"]).state_letters()
        product = build_finite_product(mdp, builtin_automata()["boat_pos"], labels)
        assert buchi_value(product.mdp)[product.mdp.initial] == pytest.approx(0.7, abs=1e-9)

    def test_augmented_values_squeeze_the_buchi_value(self):
        report = squeeze_check(20, 5, 2, np.random.default_rng(17))
        assert report.order_violations == 0
        assert report.monotonicity_violations == 0
        assert report.holds(0.05)

    def test_squeeze_with_epsilon_products(self, example_automaton):
        rng = np.random.default_rng(23)
        automaton = example_automaton("persistence")
        letters = [frozenset({"L_none"}), frozenset({"L_t"})]
        for _ in range(20):
            mdp = random_finite_mdp(int(rng.integers(2, 6)), 2, 0.0, rng)
            labels = [letters[int(rng.integers(0, 2))] for _ in range(mdp.n_states)]
            product = build_finite_product(mdp, automaton, labels).mdp
            buchi = buchi_value(product).values
            reach = augment_and_solve(product, 0.999).values
            assert np.all(reach >= buchi - 1e-8)

    @pytest.mark.parametrize("zeta", [0.9, 0.999])
    def test_negated_product_bounds_the_satisfaction_from_below(self, zeta):
        rng = np.random.default_rng(29)
        letters = [frozenset({"L_none"}), frozenset({"L_t"})]
        pos, negated = builtin_automata()["boat_pos"], builtin_automata()["boat_neg"]
        for _ in range(20):
            mdp = random_finite_mdp(int(rng.integers(2, 7)), 2, 0.0, rng)
            labels = [letters[int(rng.integers(0, 2))] for _ in range(mdp.n_states)]
            pos_product = build_finite_product(mdp, pos, labels).mdp
            neg_product = build_finite_product(mdp, negated, labels).mdp

            satisfied = buchi_value(pos_product)[pos_product.initial]
            lower = 1.0 - augment_and_solve(neg_product, zeta)[neg_product.initial]
            upper = augment_and_solve(pos_product, zeta)[pos_product.initial]
            assert 0.0 <= lower <= satisfied + 1e-6
            assert satisfied <= upper + 1e-6
            # Exact Büchi values of a formula and its negation cannot overlap
            assert 1.0 - buchi_value(neg_product)[neg_product.initial] <= satisfied + 1e-6


# ======================== Hoeffding ========================

class TestHoeffding:
    def test_evaluation_example(self):
        result = hoeffding_lower(50_000, 49_485, 0.0147)
        assert result.lower == pytest.approx(0.975, abs=1e-9)
        assert result.upper == 1.0
        assert result.failure_probability == pytest.approx(4.13e-10, rel=1e-2)

    def test_all_successes(self):
        result = hoeffding_lower(100, 100, 0.1)
        assert result.lower == pytest.approx(0.9)
        assert result.confidence == pytest.approx(1 - math.exp(-2), abs=1e-12)

    def test_zero_epsilon(self):
        result = hoeffding_lower(10, 7, 0.0)
        assert result.lower == 0.7
        assert result.confidence == 0.0

    def test_invalid_arguments(self):
        with pytest.raises(ValueError):
            hoeffding_lower(0, 0, 0.0)
        with pytest.raises(ValueError):
            hoeffding_lower(10, 11, 0.1)
        with pytest.raises(ValueError):
            hoeffding_lower(10, 5, 0.6)
        with pytest.raises(ValueError):
            hoeffding_lower(10, 5, -0.1)


# ======================== Monte-Carlo satisfaction ========================

class TestMonteCarlo:
    def test_zero_horizon_counts_every_trajectory(self):
        report = fixture_satisfaction(0.0, "<>t", 25, 0)
        assert report.satisfied == 25 and report.frequency == 1.0

    def test_deterministic_outcomes(self):
        assert fixture_satisfaction(1.0, "<>t", 50, 5).satisfied == 50
        assert fixture_satisfaction(0.0, "<>t", 50, 5).satisfied == 0

    def test_frequency(self):
        report = fixture_satisfaction(0.7, "<>t", 2000, 5)
        assert abs(report.frequency - 0.7) < 0.05

    def test_failure_breakdown(self):
        formula = parse_ltl("<>t & [](!t)", ["t"])
        first, second = top_level_conjuncts(formula)
        report = fixture_satisfaction(1.0, "<>t & [](!t)", 40, 5)
        assert report.satisfied == 0
        assert report.failures == {format_ltl(first): 0, format_ltl(second): 40}

    def test_trajectory_rows(self, tmp_path):
        report = fixture_satisfaction(0.7, "<>t", 10, 5)
        assert report.header == ["trajectory", "step", "s0", "s1", "s2", "q", "action", "letter"]
        assert len(report.rows) == 50
        assert report.rows[0][:2] == [0, 0]
        path = tmp_path / "trajectories.csv"
        write_trajectories_csv(str(path), report)
        assert len(read_csv(path)) == 51

    def test_horizon_word(self):
        letters = [frozenset(), frozenset({"t"})]
        word = horizon_word(letters)
        assert word.prefix == (frozenset(),)
        assert word.cycle == (frozenset({"t"}),)


# ======================== Visits ========================

class TestVisits:
    def test_single_visit_fixture_is_bounded(self):
        growth = visits_growth(single_visit_fixture(), [10, 100, 1000], n_traj=200, seed=0)
        assert [e.mean for e in growth.estimates] == [1.0, 1.0, 1.0]
        assert not growth.unbounded

    def test_no_accepting_states(self):
        mdp, _ = reach_fixture(0.7)
        estimate = conditional_visits_estimate(mdp, 50, 20)
        assert estimate.mean == 0.0 and estimate.qualifying == 50

    @pytest.mark.slow
    def test_chain_visits_keep_growing(self):
        growth = visits_growth(chain_mdp(2000), [10, 100, 1000], n_traj=4000, seed=1)
        assert all(e.defined for e in growth.estimates)
        assert growth.unbounded


# ======================== Output ========================

class TestOutput:
    def test_summary_columns(self, tmp_path):
        report = fixture_satisfaction(1.0, "<>t & [](!t)", 20, 5)
        bound = hoeffding_lower(20, 20, 0.1)
        path = tmp_path / "summary.csv"
        write_summary_csv(str(path), report, bound)
        header, row = read_csv(path)
        assert header[:8] == ["trajectories", "satisfied", "frequency", "horizon", "epsilon", "lower", "upper", "confidence"]
        assert [h for h in header if h.startswith("fail:")] == [f"fail:{name}" for name in report.failures]
        assert row[0] == "20" and float(row[5]) == pytest.approx(0.9)

    def test_append_writes_the_header_once(self, tmp_path):
        path = str(tmp_path / "nested" / "rows.csv")
        write_csv(path, ["a", "b"], [[1, 2]])
        write_csv(path, ["a", "b"], [[3, 4]], append=True)
        assert read_csv(path) == [["a", "b"], ["1", "2"], ["3", "4"]]

    def test_value_range(self):
        assert check_values_in_range(np.array([0.0, 0.5, 1.0 + 1e-10]))
        assert not check_values_in_range(np.array([0.2, 1.01]))
        assert not check_values_in_range(np.array([-0.01]))
