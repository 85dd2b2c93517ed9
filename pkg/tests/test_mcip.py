import numpy as np
import pytest

from nnfvi.fvi import FviConfig, exact_dp, greedy_policy, run_nnfvi
from nnfvi.mcd import McdConfig
from nnfvi.mcip import (
    CapacityState,
    DemandModel,
    McipInstance,
    adjustment_cost,
    build_mcip_mdp,
    constant_capacity_policy,
    dp_model,
    draw_demand_paths,
    iid_uniform_demand,
    inflexible_two_stage,
    mcip_reward,
    operating_profit,
    random_walk_demand,
    sensitivity_sweep,
    simulate_policy,
    simulate_policy_on_paths,
    synthetic_instance,
    with_parameters,
)
from nnfvi.mdp import ActionBox, enumerate_actions
from nnfvi.neural import TrainConfig

from test_simplex import enumerate_vertex_optimum


def tiny_fvi_config(seed=0, s1=40, s2=6, neurons=6):
    return FviConfig(
        state_samples=s1, transition_samples=s2, neurons=neurons,
        train=TrainConfig(restarts=2, max_epochs=400),
        mcd=McdConfig(engine="brute"),
        seed=seed,
    )


class TestDemandModels:
    def test_iid_kernel_rows_uniform(self):
        support = np.array([[1.0, 2.0], [2.0, 3.0], [3.0, 4.0]])
        model = iid_uniform_demand(support)
        np.testing.assert_allclose(model.kernel, 1.0 / 3)

    def test_random_walk_reflects_at_borders(self):
        model = random_walk_demand(np.arange(4).reshape(-1, 1), 0.3, 0.3)
        np.testing.assert_allclose(model.kernel.sum(axis=1), 1.0)
        assert model.kernel[0, 0] == pytest.approx(0.7)  # reflected down-step
        assert model.kernel[3, 3] == pytest.approx(0.7)

    def test_rejects_bad_kernel(self):
        with pytest.raises(ValueError, match="sum to one"):
            DemandModel(support=np.ones((2, 1)), kernel=np.array([[0.5, 0.4],
                                                                  [0.5, 0.5]]))

    def test_index_and_transition(self):
        model = random_walk_demand(np.array([[1.0], [2.0], [3.0]]))
        assert model.index_of(np.array([2.0])) == 1
        assert model.next_index(1, 0.0) == 0
        assert model.next_index(1, 0.999) == 2


class TestOperatingProfit:
    def test_zero_capacity_full_penalty(self):
        inst = synthetic_instance(seed=0)
        d = inst.demand.support[2]
        value, z = operating_profit(inst, 1, np.zeros(2), d)
        np.testing.assert_allclose(z, 0.0, atol=1e-9)
        assert value == pytest.approx(-float(inst.penalties[0] @ d))

    def test_nonbinding_capacity_best_facility(self):
        inst = synthetic_instance(seed=1)
        d = inst.demand.support[0]
        huge = np.full(2, float(d.sum()) + 1.0)
        value, _ = operating_profit(inst, 2, huge, d)
        expected = float(np.sum(inst.revenues[1].max(axis=1) * d))
        assert value == pytest.approx(expected, abs=1e-8)

    def test_matches_vertex_oracle(self):
        rng = np.random.default_rng(2)
        inst = synthetic_instance(seed=3, customers=3, facilities=2)
        I, N = 3, 2
        for trial in range(10):
            K = rng.uniform(0.0, 3.0, size=N)
            d = inst.demand.support[rng.integers(0, inst.demand.size)]
            t = int(rng.integers(1, inst.horizon + 1))
            margin = (inst.revenues[t - 1] + inst.penalties[t - 1][:, None]).ravel()
            rows = []
            rhs = []
            for n in range(N):
                row = np.zeros(I * N)
                row[n::N] = 1.0
                rows.append(row)
                rhs.append(K[n])
            for i in range(I):
                row = np.zeros(I * N)
                row[i * N:(i + 1) * N] = 1.0
                rows.append(row)
                rhs.append(d[i])
            box = np.repeat(np.minimum.outer(d, K).reshape(-1), 1)
            expected_alloc = enumerate_vertex_optimum(
                margin, np.vstack(rows), np.asarray(rhs), box, True)
            got, _ = operating_profit(inst, t, K, d)
            assert got == pytest.approx(
                expected_alloc - float(inst.penalties[t - 1] @ d), abs=1e-8)

    def test_complete_recourse_never_infeasible(self):
        rng = np.random.default_rng(4)
        for seed in range(5):
            inst = synthetic_instance(seed=seed)
            for _ in range(200):
                K = rng.uniform(0, inst.capacity_max.astype(float))
                d = inst.demand.support[rng.integers(0, inst.demand.size)]
                t = int(rng.integers(1, inst.horizon + 1))
                operating_profit(inst, t, K, d)  # raises on any failure

    def test_monotone_in_capacity(self):
        rng = np.random.default_rng(5)
        inst = synthetic_instance(seed=6)
        for _ in range(30):
            K = rng.uniform(0, 2.5, size=2)
            bump = rng.uniform(0, 0.5, size=2)
            d = inst.demand.support[rng.integers(0, inst.demand.size)]
            lo, _ = operating_profit(inst, 1, K, d)
            hi, _ = operating_profit(inst, 1, K + bump, d)
            assert hi >= lo - 1e-8

    def test_midpoint_concavity_in_capacity(self):
        rng = np.random.default_rng(6)
        inst = synthetic_instance(seed=7)
        for _ in range(30):
            K1 = rng.uniform(0, 3, size=2)
            K2 = rng.uniform(0, 3, size=2)
            d = inst.demand.support[rng.integers(0, inst.demand.size)]
            mid, _ = operating_profit(inst, 2, 0.5 * (K1 + K2), d)
            v1, _ = operating_profit(inst, 2, K1, d)
            v2, _ = operating_profit(inst, 2, K2, d)
            assert mid >= 0.5 * v1 + 0.5 * v2 - 1e-8


class TestReward:
    def test_no_change_no_adjustment(self):
        inst = synthetic_instance(seed=8)
        K = np.array([2.0, 1.0])
        d = inst.demand.support[1]
        state = CapacityState(capacity=K, demand=d)
        q, _ = operating_profit(inst, 1, K, d)
        assert mcip_reward(inst, 1, state, K) == pytest.approx(q)

    def test_pure_expansion_charges_expansion_price(self):
        inst = synthetic_instance(seed=9)
        state = CapacityState(capacity=np.zeros(2), demand=inst.demand.support[0])
        target = np.array([2.0, 1.0])
        q, _ = operating_profit(inst, 1, np.zeros(2), state.demand)
        expected = q - float(inst.expansion_costs[0] @ target)
        assert mcip_reward(inst, 1, state, target) == pytest.approx(expected)

    def test_pure_contraction_earns_salvage(self):
        inst = synthetic_instance(seed=10)
        K = np.array([3.0, 2.0])
        state = CapacityState(capacity=K, demand=inst.demand.support[0])
        q, _ = operating_profit(inst, 2, K, state.demand)
        expected = q + float(inst.salvage_values[1] @ K)
        assert mcip_reward(inst, 2, state, np.zeros(2)) == pytest.approx(expected)

    def test_terminal_action_forced_to_zero(self):
        inst = synthetic_instance(seed=11)
        K = np.array([1.0, 2.0])
        state = CapacityState(capacity=K, demand=inst.demand.support[2])
        T = inst.horizon
        a = np.array([3.0, 3.0])  # ignored at the terminal period
        assert mcip_reward(inst, T, state, a) == pytest.approx(
            mcip_reward(inst, T, state, np.zeros(2)))

    def test_reward_bound_holds_on_samples(self):
        rng = np.random.default_rng(12)
        inst = synthetic_instance(seed=13)
        bound = inst.reward_bound()
        for _ in range(300):
            K = rng.uniform(0, inst.capacity_max.astype(float))
            d = inst.demand.support[rng.integers(0, inst.demand.size)]
            a = rng.integers(0, inst.capacity_max + 1).astype(float)
            t = int(rng.integers(1, inst.horizon + 1))
            r = mcip_reward(inst, t, CapacityState(K, d), a)
            assert abs(r) <= bound + 1e-9


class TestMdpConstruction:
    def test_linear_part_structure(self):
        inst = synthetic_instance(seed=14)
        spec = build_mcip_mdp(inst)
        B = spec.transition_B(spec.initial_state, 0.5)
        np.testing.assert_array_equal(B[:2], np.eye(2))
        np.testing.assert_array_equal(B[2:], np.zeros((2, 2)))

    def test_action_writes_capacity_block(self):
        inst = synthetic_instance(seed=15)
        spec = build_mcip_mdp(inst)
        from nnfvi.mdp import affine_transition
        x = spec.initial_state
        a = np.array([2, 1])
        nxt = affine_transition(spec, x, a, 0.3)
        np.testing.assert_allclose(nxt[:2], [2.0, 1.0])

    def test_demand_transition_matches_model_sampling(self):
        inst = synthetic_instance(seed=16)
        spec = build_mcip_mdp(inst)
        model = inst.demand
        x = spec.initial_state
        idx = model.index_of(x[2:])
        for u in (0.05, 0.4, 0.95):
            nxt = spec.transition_A(x, u)
            np.testing.assert_allclose(
                nxt[2:], model.support[model.next_index(idx, u)])

    def test_state_sampler_demand_on_lattice(self):
        inst = synthetic_instance(seed=17)
        spec = build_mcip_mdp(inst)
        states = spec.state_sampler(np.random.default_rng(0), 50)
        for row in states:
            d = row[2:]
            dists = np.abs(inst.demand.support - d).sum(axis=1)
            assert dists.min() < 1e-12
            assert np.all(row[:2] >= 0) and np.all(row[:2] <= inst.capacity_max)

    def test_stage_reward_matches_callback(self):
        inst = synthetic_instance(seed=18)
        spec = build_mcip_mdp(inst)
        rng = np.random.default_rng(1)
        for t in (1, 2, inst.horizon):
            x = spec.state_sampler(rng, 1)[0]
            sr = spec.stage_reward_builder(t, x)
            sr.spot_check(enumerate_actions(spec.action_box))
            for a in enumerate_actions(spec.action_box)[:4]:
                assert sr.evaluate(a) == pytest.approx(spec.reward(t, x, a))


class TestExtendedValueEquivalence:
    def _extended_recursion(self, inst):
        """Independent backward recursion over lattice points (Eq.-17 style)."""
        levels = enumerate_actions(ActionBox(inst.capacity_max))
        support = inst.demand.support
        kernel = inst.demand.kernel
        T = inst.horizon
        tables = {}
        for t in range(T, 0, -1):
            V = np.empty((len(levels), len(support)))
            for e, K in enumerate(levels):
                for x in range(len(support)):
                    state = CapacityState(K.astype(float), support[x])
                    best = -np.inf
                    for a, Ka in enumerate(levels):
                        val = mcip_reward(inst, t, state, Ka.astype(float))
                        if t < T:
                            cont = sum(kernel[x, x2] * tables[t + 1][a, x2]
                                       for x2 in range(len(support)))
                            val += inst.discount * cont
                        best = max(best, val)
                    V[e, x] = best
            tables[t] = V
        return tables

    def test_dp_equals_extended_recursion_on_lattice(self):
        inst = synthetic_instance(seed=19, capacity_max=2, demand_points=2,
                                  horizon=2)
        dp = exact_dp(dp_model(inst))
        reference = self._extended_recursion(inst)
        for t in range(1, inst.horizon + 1):
            np.testing.assert_allclose(dp.values[t - 1], reference[t],
                                       rtol=0, atol=1e-9)

    def test_terminal_midpoint_concavity(self):
        inst = synthetic_instance(seed=20)
        T = inst.horizon
        rng = np.random.default_rng(2)
        for _ in range(20):
            K1 = rng.uniform(0, 3, size=2)
            K2 = rng.uniform(0, 3, size=2)
            d = inst.demand.support[rng.integers(0, inst.demand.size)]

            def terminal_value(K):
                return mcip_reward(inst, T, CapacityState(K, d), np.zeros(2))

            mid = terminal_value(0.5 * (K1 + K2))
            assert mid >= 0.5 * terminal_value(K1) + 0.5 * terminal_value(K2) - 1e-8


class TestSimulation:
    def test_zero_capacity_matches_analytic_expectation(self):
        inst = synthetic_instance(seed=21, markov=False)  # iid demand
        policy = constant_capacity_policy(inst, np.zeros(2))
        result = simulate_policy(inst, policy, 4000, np.random.default_rng(3))
        # reward with zero capacity is minus the penalty bill; demand is iid
        expected = -float(inst.penalties[0] @ inst.initial_demand)
        for t in range(2, inst.horizon + 1):
            mean_bill = np.mean(inst.demand.support @ inst.penalties[t - 1])
            expected -= inst.discount ** (t - 1) * mean_bill
        assert result.mean == pytest.approx(expected, abs=4 * result.std_error)

    def test_deterministic_demand_hand_rollout(self):
        inst = synthetic_instance(seed=22, horizon=2, demand_points=1)
        # single support point: path is deterministic
        plan = np.array([1, 1])
        policy = constant_capacity_policy(inst, plan)
        result = simulate_policy(inst, policy, 3, np.random.default_rng(0))
        d = inst.demand.support[0]
        r1 = mcip_reward(inst, 1, CapacityState(np.zeros(2), d), plan.astype(float))
        r2 = mcip_reward(inst, 2, CapacityState(plan.astype(float), d), np.zeros(2))
        expected = r1 + inst.discount * r2
        assert result.mean == pytest.approx(expected, abs=1e-9)
        assert result.std_error == pytest.approx(0.0, abs=1e-12)

    def test_standard_error_scaling(self):
        inst = synthetic_instance(seed=23, horizon=2)
        policy = constant_capacity_policy(inst, np.array([1, 1]))
        small = simulate_policy(inst, policy, 100, np.random.default_rng(5))
        large = simulate_policy(inst, policy, 10_000, np.random.default_rng(6))
        ratio = small.std_error / large.std_error
        assert 10.0 * 0.7 <= ratio <= 10.0 * 1.3

    def test_common_paths_reused_across_policies(self):
        inst = synthetic_instance(seed=24)
        paths = draw_demand_paths(inst, 50, np.random.default_rng(7))
        a = simulate_policy_on_paths(inst, constant_capacity_policy(inst, np.zeros(2)), paths)
        b = simulate_policy_on_paths(inst, constant_capacity_policy(inst, np.zeros(2)), paths)
        np.testing.assert_array_equal(a.npvs, b.npvs)


class TestInflexibleDesign:
    def test_degenerate_single_period_matches_dp(self):
        inst = synthetic_instance(seed=25, horizon=1)
        paths = draw_demand_paths(inst, 1, np.random.default_rng(0))
        plan, value = inflexible_two_stage(inst, paths)
        np.testing.assert_array_equal(plan, [0, 0])
        dp = exact_dp(dp_model(inst))
        e = dp.model.endo_levels.tolist().index(
            inst.initial_capacity.astype(int).tolist())
        x = inst.demand.index_of(inst.initial_demand)
        assert value == pytest.approx(dp.value(1, e, x), abs=1e-7)

    def test_prohibitive_expansion_keeps_initial_capacity(self):
        inst = synthetic_instance(seed=26)
        inst = McipInstance(
            customers=inst.customers, facilities=inst.facilities,
            horizon=inst.horizon, discount=inst.discount,
            revenues=inst.revenues, penalties=inst.penalties,
            expansion_costs=inst.expansion_costs * 1e5,
            salvage_values=inst.salvage_values,
            initial_capacity=inst.initial_capacity,
            capacity_max=inst.capacity_max,
            demand=inst.demand, initial_demand=inst.initial_demand,
        )
        paths = draw_demand_paths(inst, 10, np.random.default_rng(1))
        plan, _ = inflexible_two_stage(inst, paths)
        np.testing.assert_array_equal(plan, inst.initial_capacity.astype(int))

    def test_in_sample_objective_matches_rollout(self):
        # the MILP objective on the scenario set equals the simulated value
        # of the returned plan on those same scenarios
        inst = synthetic_instance(seed=27)
        paths = draw_demand_paths(inst, 8, np.random.default_rng(2))
        plan, value = inflexible_two_stage(inst, paths)
        rolled = simulate_policy_on_paths(
            inst, constant_capacity_policy(inst, plan), paths)
        assert value == pytest.approx(rolled.mean, abs=1e-6)

    def test_plan_beats_arbitrary_constant_plans_in_sample(self):
        inst = synthetic_instance(seed=28)
        paths = draw_demand_paths(inst, 12, np.random.default_rng(3))
        plan, value = inflexible_two_stage(inst, paths)
        for other in ([0, 0], [3, 3], [1, 2]):
            rolled = simulate_policy_on_paths(
                inst, constant_capacity_policy(inst, np.asarray(other)), paths)
            assert value >= rolled.mean - 1e-6


class TestSweep:
    def test_single_cell_equals_direct_calls(self):
        inst = synthetic_instance(seed=29)
        cfg = tiny_fvi_config(seed=5, s1=25, s2=4, neurons=4)
        cells = sensitivity_sweep(inst, [0.85], [0.5], cfg,
                                  n_paths=60, n_scenarios=6, seed=11)
        assert len(cells) == 1
        cell = cells[0]

        inst2 = with_parameters(inst, gamma=0.85, salvage_ratio=0.5)
        spec = build_mcip_mdp(inst2)
        fitted, _ = run_nnfvi(spec, cfg)
        policy = greedy_policy(spec, fitted.nets, cfg.mcd,
                               cfg.transition_samples, seed=cfg.seed + 1)
        paths = draw_demand_paths(inst2, 60, np.random.default_rng(11))
        flex = simulate_policy_on_paths(inst2, policy, paths)
        assert cell.flexible_enpv == pytest.approx(flex.mean, abs=1e-9)
        assert cell.gamma == 0.85 and cell.ratio == 0.5

    def test_salvage_ratio_rewrite(self):
        inst = synthetic_instance(seed=30)
        inst2 = with_parameters(inst, salvage_ratio=0.25)
        np.testing.assert_allclose(inst2.salvage_values,
                                   0.25 * inst.expansion_costs)
        with pytest.raises(ValueError):
            with_parameters(inst, salvage_ratio=1.5)


class TestInstanceSerialization:
    def test_json_round_trip(self):
        inst = synthetic_instance(seed=31)
        clone = McipInstance.loads(inst.dumps())
        np.testing.assert_allclose(clone.revenues, inst.revenues)
        np.testing.assert_allclose(clone.demand.kernel, inst.demand.kernel)
        assert clone.horizon == inst.horizon

    def test_salvage_above_expansion_rejected(self):
        inst = synthetic_instance(seed=32)
        with pytest.raises(ValueError, match="salvage"):
            McipInstance(
                customers=inst.customers, facilities=inst.facilities,
                horizon=inst.horizon, discount=inst.discount,
                revenues=inst.revenues, penalties=inst.penalties,
                expansion_costs=inst.expansion_costs,
                salvage_values=inst.expansion_costs * 2.0,
                initial_capacity=inst.initial_capacity,
                capacity_max=inst.capacity_max,
                demand=inst.demand, initial_demand=inst.initial_demand,
            )
