"""
Unit tests for rmdp.core - types, validation, backward induction and the brute-force oracle.
"""

import pytest
import sys
import os
import numpy as np

# Add repository root to path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..'))

from rmdp.core import (
    AmbiguitySet,
    FiniteHorizonMDP,
    Kernel,
    PolicyMD,
    PolicyMR,
    RobustInstance,
    brute_force_evaluate,
    decision_rows,
    embed_md,
    evaluate,
    evaluate_batch,
    evaluate_md_exact,
    is_integral,
    round_to_md,
    stage_values,
    state_visitation,
    successor_tables,
    trajectory_cost,
    validate,
)
from rmdp.errors import InvalidInputError, SizeGuardError
from rmdp.generators import (
    PartitionSpec,
    local_minimizer_instance,
    partition_instance,
    random_instance,
    random_policy,
)


def partition_policy(weights, chosen):
    """Action 0 at the decision stage of every weight index in `chosen`, action 1 elsewhere."""
    act = []
    for t in range(len(weights)):
        act += [[0 if t in chosen else 1], [0, 0]]
    return PolicyMD(act=act, num_actions=[2, 1] * len(weights))


def gadget_policy(pi1, pi2_0, pi2_1):
    return PolicyMR(dist=[np.array([pi1]), np.array([pi2_0, pi2_1]), np.ones((4, 1))])


class TestEvaluate:
    """Backward induction against hand-derived values and the oracle."""

    def setup_method(self):
        self.partition = partition_instance(PartitionSpec(weights=(1, 2, 3)))
        self.gadget = local_minimizer_instance()

    def test_partition_all_action_zero_under_first_kernel(self):
        """Test that choosing action 0 everywhere costs the full weight sum."""
        policy = embed_md(partition_policy((1, 2, 3), {0, 1, 2}))
        value = evaluate(self.partition.mdp, self.partition.ambiguity[0], policy, 0)
        assert value == 6.0
        assert brute_force_evaluate(self.partition.mdp, self.partition.ambiguity[0], policy, 0) == pytest.approx(6.0, abs=1e-10)

    def test_zero_costs_give_zero(self):
        """Test all-zero costs."""
        rng = np.random.default_rng(3)
        instance = random_instance(rng, horizon=3, zero_cost_prob=1.0)
        policy = random_policy(instance.mdp, rng)
        assert evaluate(instance.mdp, instance.ambiguity[0], policy, 0) == 0.0

    def test_gadget_second_row_policy(self):
        """Test the gadget under the second-row policy against the oracle."""
        policy = gadget_policy((0, 1), (0, 1), (0, 1))
        kernel = self.gadget.ambiguity[0]
        assert evaluate(self.gadget.mdp, kernel, policy, 0) == pytest.approx(1.0, abs=1e-12)
        assert brute_force_evaluate(self.gadget.mdp, kernel, policy, 0) == pytest.approx(1.0, abs=1e-10)

    def test_single_stage(self):
        """Test a one-stage instance with no transitions."""
        mdp = FiniteHorizonMDP(horizon=1, num_states=[1], num_actions=[3], cost=[np.array([[1.0, 2.0, 4.0]])])
        kernel = Kernel(trans=[])
        policy = PolicyMR(dist=[np.array([[0.5, 0.25, 0.25]])])
        assert evaluate(mdp, kernel, policy, 0) == pytest.approx(2.0)
        assert brute_force_evaluate(mdp, kernel, policy, 0) == pytest.approx(2.0)

    def test_partition_singleton_action_one_is_zero(self):
        """Test single weight with action 1."""
        instance = partition_instance(PartitionSpec(weights=(5,)))
        policy = embed_md(partition_policy((5,), set()))
        assert brute_force_evaluate(instance.mdp, instance.ambiguity[0], policy, 0) == 0.0

    def test_deterministic_bits(self):
        """Test that repeated evaluation is bit-identical."""
        rng = np.random.default_rng(11)
        instance = random_instance(rng, horizon=4)
        policy = random_policy(instance.mdp, rng)
        first = evaluate(instance.mdp, instance.ambiguity[1], policy, 0)
        second = evaluate(instance.mdp, instance.ambiguity[1], policy, 0)
        assert first == second

    def test_dimension_mismatch_rejected(self):
        """Test rejection of policies and initial states that do not fit the MDP."""
        policy = PolicyMR.uniform(self.partition.mdp)
        with pytest.raises(InvalidInputError):
            evaluate(self.gadget.mdp, self.gadget.ambiguity[0], policy, 0)
        with pytest.raises(InvalidInputError):
            evaluate(self.partition.mdp, self.partition.ambiguity[0], policy, 1)

    def test_oracle_equivalence_random_instances(self):
        """200 random instances, T <= 4, |S_t| <= 3, |A_t| <= 3, K <= 3."""
        rng = np.random.default_rng(2024)
        for _ in range(200):
            instance = random_instance(rng, num_kernels=int(rng.integers(1, 4)))
            policy = random_policy(instance.mdp, rng)
            for kernel in instance.ambiguity:
                fast = evaluate(instance.mdp, kernel, policy, 0)
                slow = brute_force_evaluate(instance.mdp, kernel, policy, 0)
                assert abs(fast - slow) <= 1e-10

    def test_cost_scaling_is_linear(self):
        """Test that doubling the costs doubles the value."""
        rng = np.random.default_rng(5)
        instance = random_instance(rng, horizon=3)
        policy = random_policy(instance.mdp, rng)
        mdp = instance.mdp
        scaled = FiniteHorizonMDP(
            horizon=mdp.horizon, num_states=mdp.num_states, num_actions=mdp.num_actions,
            cost=[2.0 * c for c in mdp.cost],
        )
        kernel = instance.ambiguity[0]
        assert evaluate(scaled, kernel, policy, 0) == 2.0 * evaluate(mdp, kernel, policy, 0)

    def test_affine_in_a_single_state_row(self):
        """Test that the value is affine in one state's action distribution."""
        rng = np.random.default_rng(8)
        instance = random_instance(rng, num_states=[2, 2, 2], num_actions=[3, 3, 3])
        base = random_policy(instance.mdp, rng)
        kernel = instance.ambiguity[0]

        def with_row(row):
            dist = [np.array(d) for d in base.dist]
            dist[1][1] = row
            return evaluate(instance.mdp, kernel, PolicyMR(dist=dist), 0)

        p, q = np.array([1.0, 0.0, 0.0]), np.array([0.2, 0.3, 0.5])
        middle = with_row(0.25 * p + 0.75 * q)
        assert middle == pytest.approx(0.25 * with_row(p) + 0.75 * with_row(q), abs=1e-10)

    def test_batch_matches_single(self):
        """Test batched evaluation against one-at-a-time evaluation."""
        rng = np.random.default_rng(13)
        instance = random_instance(rng, horizon=3, max_states=3, max_actions=3)
        policies = [random_policy(instance.mdp, rng) for _ in range(5)]
        batch = [np.stack([p.dist[t] for p in policies]) for t in range(instance.mdp.horizon)]
        kernel = instance.ambiguity[0]
        values = evaluate_batch(instance.mdp, kernel, batch, 0)
        for value, policy in zip(values, policies):
            assert value == pytest.approx(evaluate(instance.mdp, kernel, policy, 0), abs=1e-12)

    def test_visitation_is_a_distribution(self):
        """Test that state visitation sums to one at every stage."""
        rng = np.random.default_rng(17)
        instance = random_instance(rng, horizon=4)
        policy = random_policy(instance.mdp, rng)
        for d in state_visitation(instance.mdp, instance.ambiguity[0], policy, 0):
            assert d.sum() == pytest.approx(1.0, abs=1e-12)
            assert np.all(d >= 0)

    def test_stage_values_terminal_is_cost_average(self):
        """Test terminal and stage-2 values of the uniform gadget policy."""
        policy = gadget_policy((0.5, 0.5), (0.5, 0.5), (0.5, 0.5))
        V, Q = stage_values(self.gadget.mdp, self.gadget.ambiguity[0], policy)
        np.testing.assert_array_equal(V[2], np.array([1.0, 0.0, -1.0, 1.0]))
        np.testing.assert_allclose(Q[1], np.array([[1.0, 0.0], [-1.0, 1.0]]))

    def test_brute_force_size_guard(self):
        """Test the trajectory limit of the oracle."""
        policy = PolicyMR.uniform(self.partition.mdp)
        with pytest.raises(SizeGuardError):
            brute_force_evaluate(self.partition.mdp, self.partition.ambiguity[0], policy, 0, max_trajectories=10)


class TestPolicies:
    """Deterministic/randomized conversions and the exact integer path."""

    def test_embed_point_mass(self):
        """Test embedding a deterministic policy as point masses."""
        policy = PolicyMD(act=[[0]], num_actions=[2])
        np.testing.assert_array_equal(embed_md(policy).dist[0], np.array([[1.0, 0.0]]))

    def test_round_trip(self):
        """Test that rounding an embedded deterministic policy gives it back."""
        policy = PolicyMD(act=[[1, 0], [2, 2, 0]], num_actions=[2, 3])
        assert round_to_md(embed_md(policy)).as_tuple() == policy.as_tuple()

    @pytest.mark.parametrize("act,num_actions", [
        ([[-1]], [2]),
        ([[2]], [2]),
        ([[0, 1], [1, 3]], [2, 3]),
        ([[0]], [2, 2]),
    ])
    def test_actions_out_of_range_rejected(self, act, num_actions):
        """Test deterministic policies with an action outside its stage's range."""
        with pytest.raises(InvalidInputError):
            PolicyMD(act=act, num_actions=num_actions)

    def test_exact_path_matches_float_evaluation(self):
        """Test exact integer evaluation against floating-point evaluation."""
        weights = (4, 1, 7, 2)
        instance = partition_instance(PartitionSpec(weights=weights))
        policy = partition_policy(weights, {0, 2})
        assert is_integral(instance.mdp, instance.ambiguity)
        for kernel in instance.ambiguity:
            exact = evaluate_md_exact(instance.mdp, kernel, policy, 0)
            assert isinstance(exact, int)
            assert exact == evaluate(instance.mdp, kernel, embed_md(policy), 0)
        assert evaluate_md_exact(instance.mdp, instance.ambiguity[0], policy, 0) == 11
        assert evaluate_md_exact(instance.mdp, instance.ambiguity[1], policy, 0) == 3

    def test_trajectory_cost_on_plain_tables(self):
        """Test the shared trajectory walk on hand-built integer tables."""
        costs = [[[1, 5]], [[2], [7]], [[4], [0]]]
        successors = [[[0, 1]], [[1], [0]]]
        assert trajectory_cost(costs, successors, [[0], [0, 0], [0, 0]], 0) == 1 + 2 + 0
        assert trajectory_cost(costs, successors, [[1], [0, 0], [0, 0]], 0) == 5 + 7 + 4
        weights = (4, 1, 7, 2)
        instance = partition_instance(PartitionSpec(weights=weights))
        policy = partition_policy(weights, {0, 2})
        costs = [c.astype(np.int64).tolist() for c in instance.mdp.cost]
        for kernel in instance.ambiguity:
            walked = trajectory_cost(costs, successor_tables(kernel), policy.as_tuple(), 0)
            assert walked == evaluate_md_exact(instance.mdp, kernel, policy, 0)

    def test_exact_path_rejects_fractional_instances(self):
        """Test that exact evaluation refuses fractional kernels."""
        rng = np.random.default_rng(1)
        instance = random_instance(rng, horizon=2, num_kernels=1)
        assert not is_integral(instance.mdp, instance.ambiguity)
        with pytest.raises(InvalidInputError):
            evaluate_md_exact(instance.mdp, instance.ambiguity[0], PolicyMD.first_actions(instance.mdp), 0)

    def test_decision_rows_skip_dummy_stages(self):
        """Test decision rows."""
        instance = partition_instance(PartitionSpec(weights=(1, 2)))
        assert decision_rows(instance.mdp) == [(0, 0, 2), (2, 0, 2)]

    def test_arrays_are_read_only(self):
        """Test that policy arrays cannot be written."""
        policy = PolicyMR.uniform(local_minimizer_instance().mdp)
        with pytest.raises(ValueError):
            policy.dist[0][0, 0] = 1.0


class TestValidate:
    """Violation messages name the stage, the pair and the rule."""

    def setup_method(self):
        self.instance = partition_instance(PartitionSpec(weights=(1, 2, 3)))

    def test_generator_output_is_valid(self):
        """Test generator output."""
        assert validate(self.instance) == []

    def test_row_not_summing_to_one(self):
        """Test the message for a row that does not sum to one."""
        mdp = FiniteHorizonMDP(horizon=2, num_states=[1, 2], num_actions=[2, 1],
                               cost=[np.zeros((1, 2)), np.zeros((2, 1))])
        bad = Kernel(trans=[np.array([[[0.5, 0.4], [0.0, 1.0]]])])
        violations = validate(RobustInstance(mdp=mdp, ambiguity=AmbiguitySet(kernels=(bad,))))
        assert len(violations) == 1
        assert "kernel 0 stage 1" in violations[0]
        assert "(state 0, action 0)" in violations[0]
        assert "sum-to-one" in violations[0]

    def test_missing_cost_pair(self):
        """Test the message for a missing cost entry."""
        mdp = FiniteHorizonMDP(horizon=2, num_states=[1, 2], num_actions=[2, 1],
                               cost=[np.array([[0.0, np.nan]]), np.zeros((2, 1))])
        kernel = Kernel(trans=[np.array([[[1.0, 0.0], [0.0, 1.0]]])])
        violations = validate(RobustInstance(mdp=mdp, ambiguity=AmbiguitySet(kernels=(kernel,))))
        assert violations == ["stage 1: cost missing for (state 0, action 1)"]

    def test_empty_ambiguity_and_bad_initial_state(self):
        """Test empty ambiguity set and out-of-range initial state together."""
        instance = RobustInstance(mdp=self.instance.mdp, ambiguity=AmbiguitySet(kernels=()), initial_state=3)
        violations = validate(instance)
        assert "ambiguity set is empty" in violations
        assert any("initial state 3" in v for v in violations)

    def test_kernel_stage_count(self):
        """Test a kernel with too few stages."""
        kernel = Kernel(trans=self.instance.ambiguity[0].trans[:-1])
        instance = RobustInstance(mdp=self.instance.mdp, ambiguity=AmbiguitySet(kernels=(kernel,)))
        assert any("transition stages" in v for v in validate(instance))
