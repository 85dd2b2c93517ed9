"""Multi-facility capacity investment benchmark.

Facilities serve customer demand through a per-period allocation LP; at the
end of each period the installed capacity can be expanded or contracted at
linear cost, with unit salvage value never above unit expansion cost.  The
problem is exposed three ways: as an affine-transition MDP for the fitted
value iteration driver, as a finite tabular model for the exact DP oracle,
and as Monte-Carlo rollouts for out-of-sample policy evaluation.  A
two-stage "inflexible" baseline fixes one capacity plan for the whole
horizon and is solved as a deterministic-equivalent MILP.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .bnb import MilpProblem, solve_milp
from .fvi import FviConfig, TabularMdp, greedy_policy, run_nnfvi
from .mcd import McdConfig, StageReward
from .mdp import ActionBox, MdpSpec, enumerate_actions
from .simplex import LEQ, LpProblem, solve_lp


@dataclass(frozen=True)
class DemandModel:
    """Finite Markov demand: joint support rows and a row-stochastic kernel."""

    support: np.ndarray  # (M, I) demand vectors
    kernel: np.ndarray   # (M, M)
    kind: str = "markov-lattice"

    def __post_init__(self):
        support = np.atleast_2d(np.asarray(self.support, dtype=float))
        kernel = np.asarray(self.kernel, dtype=float)
        if np.any(support < 0):
            raise ValueError("demand support must be non-negative")
        if not np.all(np.isfinite(support)):
            raise ValueError("demand support must be bounded")
        m = support.shape[0]
        if kernel.shape != (m, m):
            raise ValueError("kernel shape must match the support size")
        if np.any(kernel < -1e-15):
            raise ValueError("kernel entries must be non-negative")
        if np.any(np.abs(kernel.sum(axis=1) - 1.0) > 1e-12):
            raise ValueError("kernel rows must sum to one")
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "kernel", kernel)

    @property
    def size(self) -> int:
        return self.support.shape[0]

    @property
    def max_demand(self) -> np.ndarray:
        return self.support.max(axis=0)

    def index_of(self, d: np.ndarray) -> int:
        """Row index of ``d``; off-lattice vectors map to the nearest row."""
        d = np.asarray(d, dtype=float)
        return int(np.argmin(np.abs(self.support - d).sum(axis=1)))

    def next_index(self, idx: int, u: float) -> int:
        """Inverse-CDF transition given one uniform draw."""
        return int(np.searchsorted(np.cumsum(self.kernel[idx]), u, side="right"))

    def sample_path(self, start_idx: int, length: int,
                    rng: np.random.Generator) -> np.ndarray:
        path = np.empty(length, dtype=np.int64)
        path[0] = start_idx
        for t in range(1, length):
            path[t] = self.next_index(path[t - 1], float(rng.uniform()))
        return path


def iid_uniform_demand(support: np.ndarray) -> DemandModel:
    """Each period's demand is an independent uniform draw over the rows."""
    support = np.atleast_2d(np.asarray(support, dtype=float))
    m = support.shape[0]
    return DemandModel(support=support, kernel=np.full((m, m), 1.0 / m),
                       kind="iid-discrete")


def random_walk_demand(support: np.ndarray, p_down: float = 0.3,
                       p_up: float = 0.3) -> DemandModel:
    """Reflected random walk over the ordered support rows."""
    support = np.atleast_2d(np.asarray(support, dtype=float))
    m = support.shape[0]
    if not 0 <= p_down + p_up <= 1:
        raise ValueError("step probabilities must sum to at most one")
    kernel = np.zeros((m, m))
    p_stay = 1.0 - p_down - p_up
    for i in range(m):
        down = max(i - 1, 0)
        up = min(i + 1, m - 1)
        kernel[i, down] += p_down
        kernel[i, up] += p_up
        kernel[i, i] += p_stay
    return DemandModel(support=support, kernel=kernel, kind="markov-lattice")


@dataclass(frozen=True)
class CapacityState:
    """Installed capacity carried into the period plus the realized demand."""

    capacity: np.ndarray
    demand: np.ndarray


@dataclass
class McipInstance:
    """Problem data; arrays are period-major with period index ``t - 1``."""

    customers: int
    facilities: int
    horizon: int
    discount: float
    revenues: np.ndarray          # (T, I, N) unit revenue
    penalties: np.ndarray         # (T, I) unit shortfall penalty
    expansion_costs: np.ndarray   # (T, N) unit expansion cost
    salvage_values: np.ndarray    # (T, N) unit salvage value
    initial_capacity: np.ndarray  # (N,)
    capacity_max: np.ndarray      # (N,) integer limits
    demand: DemandModel
    initial_demand: np.ndarray    # (I,)

    def __post_init__(self):
        I, N, T = self.customers, self.facilities, self.horizon
        self.revenues = np.asarray(self.revenues, dtype=float).reshape(T, I, N)
        self.penalties = np.asarray(self.penalties, dtype=float).reshape(T, I)
        self.expansion_costs = np.asarray(self.expansion_costs, dtype=float).reshape(T, N)
        self.salvage_values = np.asarray(self.salvage_values, dtype=float).reshape(T, N)
        self.initial_capacity = np.asarray(self.initial_capacity, dtype=float).ravel()
        self.capacity_max = np.asarray(self.capacity_max, dtype=np.int64).ravel()
        self.initial_demand = np.asarray(self.initial_demand, dtype=float).ravel()
        if np.any(self.salvage_values > self.expansion_costs + 1e-12):
            raise ValueError("unit salvage value may not exceed unit expansion cost")
        if self.initial_capacity.shape != (N,) or self.capacity_max.shape != (N,):
            raise ValueError("capacity vectors must have one entry per facility")
        if np.any(self.initial_capacity < 0) or np.any(
                self.initial_capacity > self.capacity_max):
            raise ValueError("initial capacity must lie inside [0, capacity_max]")
        if self.demand.support.shape[1] != I:
            raise ValueError("demand support dimension must match the customer count")
        if self.initial_demand.shape != (I,):
            raise ValueError("initial demand must have one entry per customer")
        if not 0.0 < self.discount < 1.0:
            raise ValueError("discount must lie in (0, 1)")

    def reward_bound(self) -> float:
        """Coarse uniform bound on |reward| from the cost and revenue limits."""
        d_max = self.demand.max_demand
        adj = float(np.sum(self.expansion_costs.max(axis=0) * self.capacity_max))
        margin = (self.revenues.max(axis=(0, 2)) + self.penalties.max(axis=0))
        return adj + float(margin @ d_max)

    def to_json_dict(self) -> dict:
        return {
            "customers": self.customers,
            "facilities": self.facilities,
            "horizon": self.horizon,
            "discount": self.discount,
            "revenues": self.revenues.tolist(),
            "penalties": self.penalties.tolist(),
            "expansion_costs": self.expansion_costs.tolist(),
            "salvage_values": self.salvage_values.tolist(),
            "initial_capacity": self.initial_capacity.tolist(),
            "capacity_max": self.capacity_max.tolist(),
            "initial_demand": self.initial_demand.tolist(),
            "demand": {
                "kind": self.demand.kind,
                "support": self.demand.support.tolist(),
                "kernel": self.demand.kernel.tolist(),
            },
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2)

    @staticmethod
    def from_json_dict(data: dict) -> "McipInstance":
        demand = DemandModel(
            support=np.asarray(data["demand"]["support"], dtype=float),
            kernel=np.asarray(data["demand"]["kernel"], dtype=float),
            kind=data["demand"].get("kind", "markov-lattice"),
        )
        return McipInstance(
            customers=int(data["customers"]),
            facilities=int(data["facilities"]),
            horizon=int(data["horizon"]),
            discount=float(data["discount"]),
            revenues=np.asarray(data["revenues"], dtype=float),
            penalties=np.asarray(data["penalties"], dtype=float),
            expansion_costs=np.asarray(data["expansion_costs"], dtype=float),
            salvage_values=np.asarray(data["salvage_values"], dtype=float),
            initial_capacity=np.asarray(data["initial_capacity"], dtype=float),
            capacity_max=np.asarray(data["capacity_max"], dtype=float),
            demand=demand,
            initial_demand=np.asarray(data["initial_demand"], dtype=float),
        )

    @staticmethod
    def loads(text: str) -> "McipInstance":
        return McipInstance.from_json_dict(json.loads(text))


def synthetic_instance(customers: int = 2, facilities: int = 2, horizon: int = 3,
                       seed: int = 0, capacity_max: int = 3,
                       demand_points: int = 3, markov: bool = True,
                       salvage_ratio: float = 0.5) -> McipInstance:
    """Seeded synthetic instance family used by tests and benchmarks."""
    rng = np.random.default_rng(seed)
    I, N, T = customers, facilities, horizon
    revenues = rng.uniform(4.0, 8.0, size=(T, I, N))
    penalties = rng.uniform(1.0, 3.0, size=(T, I))
    expansion = rng.uniform(2.0, 5.0, size=(T, N))
    salvage = salvage_ratio * expansion
    cap_max = np.full(N, capacity_max, dtype=np.int64)

    # increasing joint demand levels so the walk ordering is meaningful
    base = rng.uniform(1.0, 2.0, size=I)
    levels = np.stack([
        np.round(base * (k + 1), 1) for k in range(demand_points)
    ])
    demand = (random_walk_demand(levels) if markov else iid_uniform_demand(levels))
    return McipInstance(
        customers=I, facilities=N, horizon=T,
        discount=0.9,
        revenues=revenues, penalties=penalties,
        expansion_costs=expansion, salvage_values=salvage,
        initial_capacity=np.zeros(N), capacity_max=cap_max,
        demand=demand,
        initial_demand=levels[demand_points // 2],
    )


def operating_profit(instance: McipInstance, t: int, capacity: np.ndarray,
                     demand: np.ndarray) -> tuple[float, np.ndarray]:
    """Optimal one-period allocation profit and the allocation itself.

    Solves the revenue-minus-penalty LP given installed capacity and realized
    demand; capacity may be fractional (the extended-value domain).  The LP
    always admits the zero allocation, so a non-optimal status is a solver
    defect rather than a model state.
    """
    I, N = instance.customers, instance.facilities
    capacity = np.asarray(capacity, dtype=float)
    demand = np.asarray(demand, dtype=float)
    margin = (instance.revenues[t - 1] + instance.penalties[t - 1][:, None]).ravel()

    rows = []
    rhs = []
    for n in range(N):
        row = np.zeros(I * N)
        row[n::N] = 1.0  # z is laid out customer-major
        rows.append(row)
        rhs.append(capacity[n])
    for i in range(I):
        row = np.zeros(I * N)
        row[i * N:(i + 1) * N] = 1.0
        rows.append(row)
        rhs.append(demand[i])

    lp = LpProblem(
        c=margin, A=np.vstack(rows), b=np.asarray(rhs),
        senses=[LEQ] * (I + N),
        lower=np.zeros(I * N), upper=np.full(I * N, np.inf),
        maximize=True,
    )
    sol = solve_lp(lp)
    if sol.status != "optimal":
        raise RuntimeError(
            f"allocation LP reported {sol.status}; it must always be feasible"
        )
    value = sol.objective - float(instance.penalties[t - 1] @ demand)
    return value, sol.x.reshape(I, N)


def adjustment_cost(instance: McipInstance, t: int, capacity_from: np.ndarray,
                    capacity_to: np.ndarray) -> float:
    """Cost of moving capacity: expansion paid, contraction recovered."""
    delta = np.asarray(capacity_to, dtype=float) - np.asarray(capacity_from, dtype=float)
    q_minus = instance.salvage_values[t - 1]
    q_plus = instance.expansion_costs[t - 1]
    return float(np.sum(np.maximum(q_minus * delta, q_plus * delta)))


def mcip_reward(instance: McipInstance, t: int, state: CapacityState,
                action: np.ndarray) -> float:
    """Stage reward: allocation profit minus the capacity-adjustment charge.

    In the final period all capacity is salvaged, so the nominal action is
    overridden by the zero vector.
    """
    target = np.zeros(instance.facilities) if t == instance.horizon \
        else np.asarray(action, dtype=float)
    profit, _ = operating_profit(instance, t, state.capacity, state.demand)
    return profit - adjustment_cost(instance, t, state.capacity, target)


def _stage_reward_builder(instance: McipInstance) -> Callable:
    N, T = instance.facilities, instance.horizon

    def build(t: int, x: np.ndarray) -> StageReward:
        capacity = np.asarray(x[:N], dtype=float)
        demand = np.asarray(x[N:], dtype=float)
        profit, _ = operating_profit(instance, t, capacity, demand)
        if t == T:
            constant = profit - adjustment_cost(instance, t, capacity, np.zeros(N))
            return StageReward(
                constant=constant,
                evaluate=lambda a, c=constant: c,
                pieces=[[] for _ in range(N)],
            )
        q_minus = instance.salvage_values[t - 1]
        q_plus = instance.expansion_costs[t - 1]
        pieces = [
            [(-q_minus[n], q_minus[n] * capacity[n]),
             (-q_plus[n], q_plus[n] * capacity[n])]
            for n in range(N)
        ]

        def evaluate(a, p=profit, cap=capacity, t=t):
            return p - adjustment_cost(instance, t, cap, np.asarray(a, dtype=float))

        return StageReward(constant=profit, evaluate=evaluate, pieces=pieces)

    return build


def build_mcip_mdp(instance: McipInstance) -> MdpSpec:
    """Affine-transition MDP view: the action overwrites the capacity block.

    The state is ``(capacity, demand)``; the affine offset carries the next
    demand draw, the linear part is the identity on capacity rows and zero on
    demand rows.  State sampling is uniform over the actual finite state
    space (integer capacity lattice times demand rows): transitions only ever
    land on integer capacities, so that is where the fit has to be good.
    """
    I, N = instance.customers, instance.facilities
    n1 = N + I
    demand = instance.demand
    d_lo = demand.support.min(axis=0)
    d_hi = demand.support.max(axis=0)
    bounds = np.zeros((n1, 2))
    bounds[:N, 1] = instance.capacity_max
    bounds[N:, 0] = d_lo
    bounds[N:, 1] = d_hi

    linear = np.vstack([np.eye(N), np.zeros((I, N))])

    def transition_A(x, u):
        idx = demand.index_of(x[N:])
        nxt = demand.next_index(idx, float(u))
        return np.concatenate([np.zeros(N), demand.support[nxt]])

    lattice_caps = enumerate_actions(ActionBox(instance.capacity_max))
    lattice = np.array([
        np.concatenate([K.astype(float), demand.support[x]])
        for K in lattice_caps for x in range(demand.size)
    ])

    def state_sampler(rng, count):
        # covering design over the finite state space: full sweeps plus a
        # uniformly chosen remainder; unsampled states would otherwise leave
        # the regression free to extrapolate arbitrarily there
        L = lattice.shape[0]
        full, rem = divmod(count, L)
        rows = np.concatenate([
            np.tile(np.arange(L), full),
            rng.choice(L, size=rem, replace=False),
        ]).astype(np.int64)
        rng.shuffle(rows)
        return lattice[rows]

    def reward(t, x, a):
        state = CapacityState(capacity=x[:N], demand=x[N:])
        return mcip_reward(instance, t, state, a)

    def noise_batch(rng, count):
        # stratified uniforms: the batch average is still unbiased, but the
        # realized demand-row frequencies track the kernel row much closer
        us = (np.arange(count) + rng.uniform(size=count)) / count
        return list(rng.permutation(us))

    return MdpSpec(
        horizon=instance.horizon,
        discount=instance.discount,
        state_dim=n1,
        state_bounds=bounds,
        action_box=ActionBox(instance.capacity_max),
        noise_sampler=lambda rng: float(rng.uniform()),
        transition_A=transition_A,
        transition_B=lambda x, u: linear,
        reward=reward,
        r_max=instance.reward_bound(),
        initial_state=np.concatenate([instance.initial_capacity,
                                      instance.initial_demand]),
        state_sampler=state_sampler,
        stage_reward_builder=_stage_reward_builder(instance),
        noise_batch_sampler=noise_batch,
    )


def dp_model(instance: McipInstance) -> TabularMdp:
    """Finite tabular view for the exact-DP oracle, with cached profits."""
    capacity_levels = enumerate_actions(ActionBox(instance.capacity_max))
    profit_cache: dict = {}

    def reward(t, e, x, a):
        key = (t, e, x)
        if key not in profit_cache:
            profit_cache[key] = operating_profit(
                instance, t, capacity_levels[e].astype(float),
                instance.demand.support[x])[0]
        target = np.zeros(instance.facilities) if t == instance.horizon \
            else capacity_levels[a].astype(float)
        return profit_cache[key] - adjustment_cost(
            instance, t, capacity_levels[e].astype(float), target)

    return TabularMdp(
        horizon=instance.horizon,
        discount=instance.discount,
        endo_levels=capacity_levels,
        exo_levels=instance.demand.support,
        exo_kernel=instance.demand.kernel,
        reward=reward,
    )


@dataclass
class SimulationResult:
    mean: float
    std_error: float
    npvs: np.ndarray

    @property
    def n_paths(self) -> int:
        return self.npvs.size


def draw_demand_paths(instance: McipInstance, n_paths: int,
                      rng: np.random.Generator) -> np.ndarray:
    """Demand index paths of length ``horizon`` starting at the known demand."""
    start = instance.demand.index_of(instance.initial_demand)
    paths = np.empty((n_paths, instance.horizon), dtype=np.int64)
    for p in range(n_paths):
        paths[p] = instance.demand.sample_path(start, instance.horizon, rng)
    return paths


def simulate_policy_on_paths(instance: McipInstance, policy: Callable,
                             paths: np.ndarray) -> SimulationResult:
    """Discounted rollout of ``policy`` along pre-drawn demand paths.

    Reusing one path set across policies gives common-random-number
    comparisons.
    """
    n_paths, T = paths.shape
    if T != instance.horizon:
        raise ValueError("path length must equal the horizon")
    N = instance.facilities
    npvs = np.empty(n_paths)
    for p in range(n_paths):
        capacity = instance.initial_capacity.astype(float).copy()
        total = 0.0
        for t in range(1, T + 1):
            demand = instance.demand.support[paths[p, t - 1]]
            x = np.concatenate([capacity, demand])
            action = np.zeros(N) if t == T else np.asarray(
                policy(t, x), dtype=float)
            state = CapacityState(capacity=capacity, demand=demand)
            total += instance.discount ** (t - 1) * mcip_reward(
                instance, t, state, action)
            capacity = action
        npvs[p] = total
    se = float(npvs.std(ddof=1) / np.sqrt(n_paths)) if n_paths > 1 else 0.0
    return SimulationResult(mean=float(npvs.mean()), std_error=se, npvs=npvs)


def simulate_policy(instance: McipInstance, policy: Callable, n_paths: int,
                    rng: np.random.Generator) -> SimulationResult:
    return simulate_policy_on_paths(
        instance, policy, draw_demand_paths(instance, n_paths, rng))


def constant_capacity_policy(instance: McipInstance,
                             plan: np.ndarray) -> Callable:
    """Hold ``plan`` every period; the terminal period salvages everything."""
    plan = np.asarray(plan, dtype=float)

    def policy(t: int, x: np.ndarray) -> np.ndarray:
        if t == instance.horizon:
            return np.zeros(instance.facilities)
        return plan.copy()

    return policy


def inflexible_two_stage(instance: McipInstance,
                         scenario_paths: np.ndarray) -> tuple[np.ndarray, float]:
    """Single capacity plan maximizing the scenario-averaged discounted value.

    The plan is installed at the end of period 1, held through period T-1,
    and salvaged at T; allocations keep full recourse.  Solved as one
    deterministic-equivalent MILP over a binary expansion of the plan.
    Returns the plan and its in-sample objective estimate.
    """
    I, N, T = instance.customers, instance.facilities, instance.horizon
    gamma = instance.discount
    q1 = operating_profit(instance, 1, instance.initial_capacity,
                          instance.initial_demand)[0]
    if T == 1:
        value = q1 - adjustment_cost(instance, 1, instance.initial_capacity,
                                     np.zeros(N))
        return np.zeros(N, dtype=np.int64), value

    n_scen = scenario_paths.shape[0]
    bit_counts = [int(np.ceil(np.log2(ub))) + 1 if ub > 0 else 0
                  for ub in instance.capacity_max]
    bit_positions = [(n, l) for n in range(N) for l in range(bit_counts[n])]
    n_bits = len(bit_positions)
    pow2 = np.asarray([1 << l for _, l in bit_positions], dtype=float)

    def bit_cols(n):
        return [k for k, (dim, _) in enumerate(bit_positions) if dim == n]

    # variables: bits | adjustment auxiliaries c_n | allocations z per (w, t, i, n)
    n_alloc = n_scen * (T - 1) * I * N
    n_vars = n_bits + N + n_alloc

    def z_col(w, t, i, n):
        # t runs 2..T, stored from index 0
        base = n_bits + N
        return base + (((w * (T - 1)) + (t - 2)) * I + i) * N + n

    rows, rhs = [], []
    # plan bounded by the capacity limits
    for n in range(N):
        cols = bit_cols(n)
        if not cols:
            continue
        row = np.zeros(n_vars)
        row[cols] = pow2[cols]
        rows.append(row)
        rhs.append(float(instance.capacity_max[n]))
    # adjustment auxiliaries c_n >= q(plan_n - K0_n) for both unit prices
    for n in range(N):
        cols = bit_cols(n)
        for q in (instance.salvage_values[0, n], instance.expansion_costs[0, n]):
            row = np.zeros(n_vars)
            row[cols] = q * pow2[cols]
            row[n_bits + n] = -1.0
            rows.append(row)
            rhs.append(q * float(instance.initial_capacity[n]))
    # allocation rows per scenario and period
    constant = q1
    objective = np.zeros(n_vars)
    objective[n_bits:n_bits + N] = -1.0  # pay the period-1 adjustment
    for w in range(n_scen):
        for t in range(2, T + 1):
            d = instance.demand.support[scenario_paths[w, t - 1]]
            margin = instance.revenues[t - 1] + instance.penalties[t - 1][:, None]
            weight = gamma ** (t - 1) / n_scen
            constant -= weight * float(instance.penalties[t - 1] @ d)
            for i in range(I):
                for n in range(N):
                    objective[z_col(w, t, i, n)] = weight * margin[i, n]
            for n in range(N):
                row = np.zeros(n_vars)
                for i in range(I):
                    row[z_col(w, t, i, n)] = 1.0
                cols = bit_cols(n)
                row[cols] = -pow2[cols]
                rows.append(row)
                rhs.append(0.0)
            for i in range(I):
                row = np.zeros(n_vars)
                for n in range(N):
                    row[z_col(w, t, i, n)] = 1.0
                rows.append(row)
                rhs.append(float(d[i]))
    # terminal salvage income on the plan
    for k, (n, _) in enumerate(bit_positions):
        objective[k] += gamma ** (T - 1) * instance.salvage_values[T - 1, n] * pow2[k]

    lower = np.zeros(n_vars)
    upper = np.concatenate([
        np.ones(n_bits), np.full(N, np.inf), np.full(n_alloc, np.inf),
    ])
    lower[n_bits:n_bits + N] = -np.inf  # auxiliaries float to the active price
    lp = LpProblem(c=objective, A=np.vstack(rows), b=np.asarray(rhs),
                   senses=[LEQ] * len(rows), lower=lower, upper=upper,
                   maximize=True)
    sol = solve_milp(MilpProblem(lp=lp, binary_indices=list(range(n_bits))),
                     tol=1e-7)
    if sol.status != "optimal":
        raise RuntimeError(f"inflexible design MILP reported {sol.status}")
    bits = np.round(sol.x[:n_bits])
    plan = np.zeros(N, dtype=np.int64)
    for k, (n, l) in enumerate(bit_positions):
        plan[n] += (1 << l) * int(bits[k])
    return plan, float(sol.objective + constant)


@dataclass
class SweepCell:
    gamma: float
    ratio: float
    inflexible_enpv: float
    inflexible_se: float
    flexible_enpv: float
    flexible_se: float

    @property
    def value_of_flexibility(self) -> float:
        return self.flexible_enpv - self.inflexible_enpv

    @property
    def improvement_pct(self) -> float:
        denom = max(abs(self.inflexible_enpv), 1e-9)
        return 100.0 * self.value_of_flexibility / denom


def with_parameters(instance: McipInstance, gamma: Optional[float] = None,
                    salvage_ratio: Optional[float] = None) -> McipInstance:
    """Copy of the instance with a new discount and/or salvage-to-cost ratio."""
    updates: dict = {}
    if gamma is not None:
        updates["discount"] = gamma
    if salvage_ratio is not None:
        if not 0.0 <= salvage_ratio <= 1.0:
            raise ValueError("salvage ratio must lie in [0, 1]")
        updates["salvage_values"] = salvage_ratio * instance.expansion_costs
    return dataclasses.replace(instance, **updates)


def sensitivity_sweep(instance: McipInstance, gammas: Sequence[float],
                      ratios: Sequence[float], fvi_config: FviConfig,
                      n_paths: int = 1000, n_scenarios: int = 30,
                      seed: int = 0) -> list[SweepCell]:
    """Flexible-vs-inflexible comparison over a (discount, ratio) grid.

    Within each cell the two designs are evaluated on one shared set of
    out-of-sample demand paths; the in-sample scenario set for the
    inflexible design is drawn separately.
    """
    cells = []
    for gamma in gammas:
        for ratio in ratios:
            inst = with_parameters(instance, gamma=gamma, salvage_ratio=ratio)
            spec = build_mcip_mdp(inst)
            fitted, _ = run_nnfvi(spec, fvi_config)
            policy = greedy_policy(spec, fitted.nets, fvi_config.mcd,
                                   fvi_config.transition_samples,
                                   seed=fvi_config.seed + 1)
            eval_paths = draw_demand_paths(
                inst, n_paths, np.random.default_rng(seed))
            flexible = simulate_policy_on_paths(inst, policy, eval_paths)

            scen = draw_demand_paths(
                inst, n_scenarios, np.random.default_rng(seed + 10_000))
            plan, _ = inflexible_two_stage(inst, scen)
            inflexible = simulate_policy_on_paths(
                inst, constant_capacity_policy(inst, plan), eval_paths)

            cells.append(SweepCell(
                gamma=float(gamma), ratio=float(ratio),
                inflexible_enpv=inflexible.mean,
                inflexible_se=inflexible.std_error,
                flexible_enpv=flexible.mean,
                flexible_se=flexible.std_error,
            ))
    return cells
