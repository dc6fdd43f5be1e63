"""
Unit tests for rmdp.generators - gadgets, random instances and the discounted embedding.
"""

import pytest
import sys
import os
import numpy as np

# Add repository root to path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..'))

from rmdp.core import PolicyMD, PolicyMR, embed_md, evaluate, validate
from rmdp.errors import InvalidInputError, NumericalError, SizeGuardError
from rmdp.generators import (
    LOCAL_MIN_MATRIX,
    MatrixGadgetSpec,
    PartitionSpec,
    discounted_values,
    evaluate_discounted,
    extend_infinite_horizon,
    gadget_matrix,
    local_minimizer_instance,
    matrix_gadget_instance,
    multi_model_instance,
    near_trap_policy,
    partition_instance,
    random_instance,
    random_policy,
    stationary_policy,
    subset_sum_oracle,
    trap_policy,
)
from rmdp.robust import robust_value


class TestPartitionGadget:
    """Set-partition gadget and the independent subset-sum oracle."""

    def test_shape(self):
        """Test state and action counts of the partition instance."""
        instance = partition_instance(PartitionSpec(weights=(1, 2, 3)))
        mdp = instance.mdp
        assert mdp.horizon == 6
        assert mdp.num_states == (1, 2, 1, 2, 1, 2)
        assert mdp.num_actions == (2, 1, 2, 1, 2, 1)
        assert len(instance.ambiguity) == 2
        assert validate(instance) == []

    def test_kernels_are_mirrored(self):
        """Test that the two kernels mirror each other."""
        instance = partition_instance(PartitionSpec(weights=(4,)))
        first, second = instance.ambiguity
        np.testing.assert_array_equal(first.trans[0][0], np.eye(2))
        np.testing.assert_array_equal(second.trans[0][0], np.eye(2)[::-1])

    def test_side_values(self):
        """Test the two per-kernel values of a chosen subset."""
        weights = (3, 1, 4, 1, 5)
        instance = partition_instance(PartitionSpec(weights=weights))
        chosen = {0, 2}
        act = []
        for t in range(len(weights)):
            act += [[0 if t in chosen else 1], [0, 0]]
        policy = embed_md(PolicyMD(act=act, num_actions=instance.mdp.num_actions))
        evaluation = robust_value(instance, policy)
        assert evaluation.per_kernel_values == [7.0, 7.0]

    @pytest.mark.parametrize("weights,expected", [
        ((1,), False),
        ((1, 1), True),
        ((1, 2), False),
        ((2, 2, 2), False),
        ((1, 2, 3), True),
        ((1, 1, 3), False),
        ((3, 1, 1, 2, 2, 1), True),
    ])
    def test_subset_sum_oracle(self, weights, expected):
        """Test the subset-sum oracle."""
        assert subset_sum_oracle(PartitionSpec(weights=weights)) is expected

    def test_oracle_guards(self):
        """Test oracle limits."""
        with pytest.raises(InvalidInputError):
            subset_sum_oracle(PartitionSpec(weights=(1.5, 1.5)))
        with pytest.raises(SizeGuardError):
            subset_sum_oracle(PartitionSpec(weights=(100, 100)), max_total=50)

    def test_parse(self):
        """Test weight list parsing."""
        assert PartitionSpec.parse("1, 2,3").weights == (1, 2, 3)
        with pytest.raises(InvalidInputError):
            PartitionSpec.parse("1,x")
        with pytest.raises(InvalidInputError):
            PartitionSpec.parse("1,0")
        with pytest.raises(InvalidInputError):
            PartitionSpec.parse("")

    @pytest.mark.parametrize("weights", [(float("inf"),), (1.0, float("inf")), (float("nan"),)])
    def test_non_finite_weights_rejected(self, weights):
        """Test that infinite or NaN weights are refused before the oracle sees them."""
        with pytest.raises(InvalidInputError):
            PartitionSpec(weights=weights)

    def test_parse_rejects_inf(self):
        """Test that "inf" in a weight list is a bad input."""
        with pytest.raises(InvalidInputError):
            PartitionSpec.parse("1,inf")
        with pytest.raises(InvalidInputError):
            PartitionSpec.parse("inf")


class TestMatrixGadget:
    """Three-stage gadget whose robust value is max of two bilinear forms."""

    def setup_method(self):
        self.instance = local_minimizer_instance()

    def test_shape_and_matrix(self):
        """Test gadget shape and cost matrix."""
        mdp = self.instance.mdp
        assert mdp.num_states == (1, 2, 4)
        assert mdp.num_actions == (2, 2, 1)
        np.testing.assert_array_equal(gadget_matrix(self.instance), np.array(LOCAL_MIN_MATRIX))
        assert validate(self.instance) == []

    def test_trap_policy(self):
        """Test the trap policy."""
        trap = trap_policy(self.instance)
        np.testing.assert_array_equal(trap.dist[0], [[1.0, 0.0]])
        np.testing.assert_array_equal(trap.dist[1], [[0.0, 1.0], [0.0, 1.0]])

    def test_near_trap_is_close_and_valid(self):
        """Test that the near-trap start is close to the trap and valid."""
        policy = near_trap_policy(self.instance, np.random.default_rng(7))
        trap = trap_policy(self.instance)
        distance = np.sqrt(sum(np.sum((p - q) ** 2) for p, q in zip(policy.dist[:2], trap.dist[:2])))
        assert distance < 0.05
        for d in policy.dist:
            np.testing.assert_allclose(d.sum(axis=1), 1.0, atol=1e-12)

    def test_values_match_bilinear_forms_on_a_grid(self):
        """V1 = sum_i pi1_i sum_j pi2_ij A_ij; the second kernel mirrors the stage-2 row."""
        A = np.array(LOCAL_MIN_MATRIX)
        grid = np.linspace(0.0, 1.0, 21)
        for p in grid:
            for a in grid:
                for b in grid:
                    first = np.array([p, 1 - p])
                    second = np.array([[a, 1 - a], [b, 1 - b]])
                    policy = PolicyMR(dist=[first[None], second, np.ones((4, 1))])
                    values = robust_value(self.instance, policy).per_kernel_values
                    assert values[0] == pytest.approx(first @ (second * A).sum(axis=1), abs=1e-12)
                    assert values[1] == pytest.approx(first @ (second[::-1] * A).sum(axis=1), abs=1e-12)

    def test_general_gadget(self):
        """Test the gadget built from another matrix."""
        A = np.arange(9, dtype=float).reshape(3, 3)
        instance = matrix_gadget_instance(MatrixGadgetSpec(n=3, A=A))
        assert instance.mdp.num_states == (1, 3, 9)
        assert validate(instance) == []
        act = [[2], [0, 1, 2], [0] * 9]
        policy = embed_md(PolicyMD(act=act, num_actions=instance.mdp.num_actions))
        values = robust_value(instance, policy).per_kernel_values
        assert values == [A[2, 2], A[2, 0]]

    def test_bad_matrix_rejected(self):
        """Test matrix validation."""
        with pytest.raises(InvalidInputError):
            MatrixGadgetSpec(n=2, A=np.zeros((2, 3)))
        with pytest.raises(InvalidInputError):
            MatrixGadgetSpec(n=1, A=np.array([[np.inf]]))
        with pytest.raises(InvalidInputError):
            gadget_matrix(partition_instance(PartitionSpec(weights=(1,))))


class TestRandomInstances:
    """Seeded generator used by the property suites."""

    def test_reproducible(self):
        """Test seeding."""
        first = random_instance(np.random.default_rng(123))
        second = random_instance(np.random.default_rng(123))
        assert first.mdp.num_states == second.mdp.num_states
        for c1, c2 in zip(first.mdp.cost, second.mdp.cost):
            np.testing.assert_array_equal(c1, c2)

    def test_always_valid(self):
        """Test that random instances always validate."""
        rng = np.random.default_rng(31)
        for _ in range(100):
            instance = random_instance(rng, num_kernels=int(rng.integers(1, 4)))
            assert validate(instance) == []

    def test_denominator_rows(self):
        """Test rational rows with a fixed denominator."""
        rng = np.random.default_rng(2)
        instance = random_instance(rng, num_states=[1, 2, 4], num_actions=[2, 2, 1], probability_denominator=8)
        for kernel in instance.ambiguity:
            for table in kernel.trans:
                assert np.all(table >= 1 / 8)
                np.testing.assert_array_equal(table * 8, np.round(table * 8))

    def test_multi_model_rejects_incompatible_kernel(self):
        """Test that multi-model instances need compatible kernels."""
        partition = partition_instance(PartitionSpec(weights=(1, 2)))
        gadget = local_minimizer_instance()
        with pytest.raises(InvalidInputError):
            multi_model_instance(partition.mdp, [gadget.ambiguity[0]])
        with pytest.raises(InvalidInputError):
            multi_model_instance(partition.mdp, [])


class TestInfiniteHorizonEmbedding:
    """Stationary embedding with an absorbing zero-cost sink."""

    def setup_method(self):
        self.base = partition_instance(PartitionSpec(weights=(1, 2, 3)))
        self.inst = extend_infinite_horizon(self.base, 0.9)

    def test_structure(self):
        """Test sink state and discounted layout of the embedding."""
        assert self.inst.num_states == 10
        assert self.inst.sink_state == 9
        assert self.inst.stage_of_state[-1] == 7
        for kernel in self.inst.kernels:
            np.testing.assert_array_equal(kernel.sum(axis=2), np.ones(kernel.shape[:2]))
            assert kernel[9, 0, 9] == 1.0
            assert np.all(kernel[self.inst.state_index(5, 0), :, 9] == 1.0)
        assert np.all(self.inst.cost[9] == 0.0)

    @pytest.mark.parametrize("gamma", [0.9, 0.99, 0.999])
    def test_partition_discounted_value(self, gamma):
        """Test the discounted value of the partition embedding, with and near gamma = 1."""
        inst = extend_infinite_horizon(self.base, gamma)
        act = [[0], [0, 0]] * 3
        policy = embed_md(PolicyMD(act=act, num_actions=self.base.mdp.num_actions))
        value = evaluate_discounted(inst, 0, stationary_policy(inst, policy), inst.initial_state)
        assert value == pytest.approx(gamma + 2 * gamma ** 3 + 3 * gamma ** 5, rel=1e-9)

    def test_partition_discounted_value_near_one(self):
        """Test the two close-to-one discount factors against fixed numbers."""
        act = [[0], [0, 0]] * 3
        policy = embed_md(PolicyMD(act=act, num_actions=self.base.mdp.num_actions))
        for gamma, expected in ((0.99, 5.7835681497), (0.999, 5.978035968015)):
            inst = extend_infinite_horizon(self.base, gamma)
            value = evaluate_discounted(inst, 0, stationary_policy(inst, policy), inst.initial_state)
            assert value == pytest.approx(expected, abs=1e-9)

    @pytest.mark.parametrize("gamma", [0.9, 0.99, 0.999])
    def test_values_bounded_by_cost_over_one_minus_gamma(self, gamma):
        """Test |V| <= max|c| / (1 - gamma) at every state on random instances."""
        rng = np.random.default_rng(12)
        for _ in range(10):
            base = random_instance(rng, num_kernels=2)
            inst = extend_infinite_horizon(base, gamma)
            matrix = stationary_policy(inst, random_policy(base.mdp, rng))
            bound = np.max(np.abs(inst.cost)) / (1.0 - gamma)
            for k in range(len(inst.kernels)):
                assert np.all(np.abs(discounted_values(inst, k, matrix)) <= bound + 1e-9)

    def test_matches_discounted_finite_evaluation(self):
        """Test the embedding against discounted finite-horizon evaluation."""
        rng = np.random.default_rng(6)
        base = random_instance(rng, horizon=4)
        inst = extend_infinite_horizon(base, 0.7)
        policy = random_policy(base.mdp, rng)
        V = discounted_values(inst, 1, stationary_policy(inst, policy))
        expected = evaluate(base.mdp, base.ambiguity[1], policy, 0, discount=0.7)
        assert V[inst.initial_state] == pytest.approx(expected, abs=1e-10)
        assert abs(V[inst.sink_state]) <= 1e-12

    @pytest.mark.parametrize("gamma", [0.0, 1.0, -0.5, 1.5])
    def test_gamma_range(self, gamma):
        """Test gamma outside [0, 1)."""
        with pytest.raises(InvalidInputError):
            extend_infinite_horizon(self.base, gamma)

    def test_padded_action_mass_rejected(self):
        """Test that padded actions may not carry mass."""
        matrix = stationary_policy(self.inst, PolicyMR.uniform(self.base.mdp))
        matrix[1] = [0.5, 0.5]
        with pytest.raises(InvalidInputError):
            discounted_values(self.inst, 0, matrix)

    def test_residual_contract(self):
        """Test the linear solve residual."""
        matrix = stationary_policy(self.inst, PolicyMR.uniform(self.base.mdp))
        with pytest.raises(NumericalError):
            discounted_values(self.inst, 0, matrix, tol=-1.0)
