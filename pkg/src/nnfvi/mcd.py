"""Action-selection engines over a ReLU recourse: multi-cut decomposition,
integer L-shaped, and brute-force enumeration.

All three maximize ``reward(a) + discount * recourse(a) + discount * w0``
over the integer action box.  The decomposition engines iterate a first-stage
MILP over the binary expansion of the action, accumulating integer optimality
cuts (both engines) and combined gradient/positive-neuron cuts (multi-cut
only), and maintain certified lower/upper bounds on the optimum.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .bnb import MilpProblem, NodeLimitError, solve_milp
from .cuts import (
    BinaryEncoding,
    IntegerOptimalityCut,
    LinearCut,
    RecourseContext,
    binary_encoding,
    combined_cut,
    integer_optimality_cut,
    recourse_upper_bound,
    recourse_value,
    recourse_values,
)
from .mdp import enumerate_actions
from .simplex import LEQ, LpNumericalError, LpProblem

ENGINES = ("mcd", "brute", "lshaped")


@dataclass(frozen=True)
class McdConfig:
    """Decomposition controls; the default stop rule is 0.35% gap or 100 steps."""

    max_iterations: int = 100
    gap_tolerance: float = 0.0035
    engine: str = "mcd"
    milp_tolerance: float = 1e-9
    gap_floor: float = 1e-6  # denominator floor for the relative gap

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.gap_tolerance < 0:
            raise ValueError("gap_tolerance must be >= 0")
        if self.engine not in ENGINES:
            raise ValueError(f"engine must be one of {ENGINES}")

    def stop_criterion_label(self) -> str:
        return f"{self.gap_tolerance * 100:g}%/{self.max_iterations} steps"


@dataclass
class StageReward:
    """Stage reward ``r(a) = constant + sum_n min_k (slope_k a_n + icept_k)``.

    ``pieces[n]`` lists the affine pieces whose pointwise minimum gives
    dimension ``n``'s concave contribution; an empty list contributes zero.
    ``evaluate`` is the ground-truth callback used by brute force and for
    anchor evaluations; ``pieces`` may be ``None`` when the reward cannot be
    linearized, which restricts the engines to brute force.
    """

    constant: float
    evaluate: Callable[[np.ndarray], float]
    pieces: Optional[list] = None

    def linear_value(self, a: np.ndarray) -> float:
        if self.pieces is None:
            raise ValueError("reward has no linear pieces")
        a = np.asarray(a, dtype=float)
        total = self.constant
        for n, dim_pieces in enumerate(self.pieces):
            if dim_pieces:
                total += min(slope * a[n] + icept for slope, icept in dim_pieces)
        return float(total)

    def spot_check(self, actions: np.ndarray, tol: float = 1e-8) -> None:
        """Verify the piece representation against the callback on ``actions``."""
        for a in np.asarray(actions):
            lin = self.linear_value(a)
            ref = self.evaluate(np.asarray(a))
            if abs(lin - ref) > tol * max(1.0, abs(ref)):
                raise ValueError(
                    f"piece value {lin} disagrees with callback {ref} at action {a}"
                )


def linear_stage_reward(gain: np.ndarray, constant: float = 0.0) -> StageReward:
    """Purely linear reward ``constant + gain @ a`` as a one-piece StageReward."""
    gain = np.asarray(gain, dtype=float)
    return StageReward(
        constant=constant,
        evaluate=lambda a, g=gain, c=constant: float(c + g @ np.asarray(a, dtype=float)),
        pieces=[[(float(g), 0.0)] for g in gain],
    )


@dataclass
class SelectionResult:
    action: np.ndarray
    objective: float          # best certified value found (lower bound)
    upper_bound: float
    iterations: int
    trace: list = field(default_factory=list)  # (iteration, lower, upper, action)

    def trace_rows(self) -> list:
        """CSV-ready rows: iteration, lower bound, upper bound, action string."""
        return [
            (it, lo, hi, " ".join(str(int(v)) for v in act))
            for (it, lo, hi, act) in self.trace
        ]


@dataclass
class FirstStage:
    """Assembled first-stage MILP plus the bookkeeping to decode its solution."""

    milp: MilpProblem
    encoding: BinaryEncoding
    eta_index: int
    constant_offset: float

    def decode_action(self, x: np.ndarray) -> np.ndarray:
        bits = np.round(x[: self.encoding.total_bits])
        return self.encoding.decode(bits)


def build_first_stage(ctx: RecourseContext, enc: BinaryEncoding,
                      reward: StageReward,
                      integer_cuts: Sequence[IntegerOptimalityCut],
                      combined_cuts: Sequence[LinearCut],
                      eta_bar: float) -> FirstStage:
    """First-stage MILP: bits, the recourse variable, and reward auxiliaries.

    Rows: per-dimension bound on the bit expansion, the recourse upper bound,
    one row per integer optimality cut, one per combined cut, and one per
    reward piece.  The objective is the discounted recourse variable plus the
    reward auxiliaries; objective constants (reward constant and the network's
    output bias) are carried in ``constant_offset``.
    """
    if reward.pieces is None:
        raise ValueError("MILP engines need a piecewise-linear stage reward")
    box = ctx.spec.action_box
    n2 = box.dims
    gamma = ctx.spec.discount
    n_bits = enc.total_bits
    positions = enc.bit_positions()
    pow2 = enc.weights()

    piece_dims = [n for n in range(n2) if reward.pieces[n]]
    rho_of_dim = {n: n_bits + 1 + k for k, n in enumerate(piece_dims)}
    n_vars = n_bits + 1 + len(piece_dims)
    eta = n_bits

    def bit_cols(n: int) -> list[int]:
        return [k for k, (dim, _) in enumerate(positions) if dim == n]

    rows, rhs = [], []

    for n in range(n2):
        cols = bit_cols(n)
        if not cols:
            continue
        row = np.zeros(n_vars)
        row[cols] = pow2[cols]
        rows.append(row)
        rhs.append(float(box.upper_bounds[n]))

    bound_row = np.zeros(n_vars)
    bound_row[eta] = 1.0
    rows.append(bound_row)
    rhs.append(eta_bar)

    for cut in integer_cuts:
        # eta + (eta_bar - v) * (sum_ones alpha - sum_zeros alpha) <= v + (eta_bar - v)|ones|
        spread = cut.eta_bar - cut.anchor_value
        row = np.zeros(n_vars)
        row[eta] = 1.0
        for k, pos in enumerate(positions):
            if pos in cut.ones:
                row[k] = spread
            else:
                row[k] = -spread
        rows.append(row)
        rhs.append(cut.anchor_value + spread * len(cut.ones))

    for cut in combined_cuts:
        # eta <= coef @ a + const with a_n = sum_l 2^l alpha_{n,l}
        row = np.zeros(n_vars)
        row[eta] = 1.0
        for k, (dim, _) in enumerate(positions):
            row[k] = -cut.coef[dim] * pow2[k]
        rows.append(row)
        rhs.append(cut.const)

    for n in piece_dims:
        cols = bit_cols(n)
        for slope, icept in reward.pieces[n]:
            row = np.zeros(n_vars)
            row[rho_of_dim[n]] = 1.0
            row[cols] = -slope * pow2[cols]
            rows.append(row)
            rhs.append(icept)

    c = np.zeros(n_vars)
    c[eta] = gamma
    for n in piece_dims:
        c[rho_of_dim[n]] = 1.0

    lower = np.concatenate([np.zeros(n_bits), np.full(1 + len(piece_dims), -np.inf)])
    upper = np.concatenate([np.ones(n_bits), np.full(1 + len(piece_dims), np.inf)])
    lp = LpProblem(
        c=c,
        A=np.vstack(rows) if rows else np.zeros((0, n_vars)),
        b=np.asarray(rhs),
        senses=[LEQ] * len(rows),
        lower=lower,
        upper=upper,
        maximize=True,
    )
    milp = MilpProblem(lp=lp, binary_indices=list(range(n_bits)))
    offset = reward.constant + gamma * ctx.net.output_bias
    return FirstStage(milp=milp, encoding=enc, eta_index=eta,
                      constant_offset=offset)


def _objective(ctx: RecourseContext, reward: StageReward, a: np.ndarray) -> float:
    gamma = ctx.spec.discount
    return (reward.evaluate(a) + gamma * recourse_value(ctx, a)
            + gamma * ctx.net.output_bias)


def select_action_bruteforce(ctx: RecourseContext,
                             reward: StageReward) -> SelectionResult:
    """Exact enumeration; ties resolve to the lexicographically smallest action."""
    actions = enumerate_actions(ctx.spec.action_box)
    gamma = ctx.spec.discount
    rec = recourse_values(ctx, actions)
    rewards = np.fromiter(
        (reward.evaluate(a) for a in actions), dtype=float, count=len(actions)
    )
    values = rewards + gamma * rec + gamma * ctx.net.output_bias
    best = int(np.argmax(values))  # first maximum = lexicographically smallest
    top = float(values[best])
    return SelectionResult(
        action=actions[best].copy(),
        objective=top,
        upper_bound=top,
        iterations=len(actions),
        trace=[(1, top, top, actions[best].copy())],
    )


def _decompose(ctx: RecourseContext, reward: StageReward, config: McdConfig,
               initial_action: np.ndarray, use_combined: bool) -> SelectionResult:
    box = ctx.spec.action_box
    a_m = box.check(initial_action)
    enc = binary_encoding(box)
    eta_bar = recourse_upper_bound(ctx)

    integer_cuts: list[IntegerOptimalityCut] = []
    combined_cuts: list[LinearCut] = []
    visited: dict[tuple, float] = {}
    lower, upper = -np.inf, np.inf
    trace: list = []
    m = 0

    while True:
        m += 1
        value = _objective(ctx, reward, a_m)
        visited[tuple(int(v) for v in a_m)] = value
        lower = max(lower, value)

        if m >= config.max_iterations:
            trace.append((m, lower, upper, a_m.copy()))
            break

        integer_cuts.append(integer_optimality_cut(ctx, enc, a_m, eta_bar))
        if use_combined:
            combined_cuts.append(combined_cut(ctx, a_m))

        fp = build_first_stage(ctx, enc, reward, integer_cuts, combined_cuts,
                               eta_bar)
        # seed the search with the best action seen so far: a known-feasible
        # incumbent lets the tree prune from the first node
        best_seen = max(visited, key=lambda k: visited[k])
        warm = enc.encode(np.asarray(best_seen, dtype=np.int64))
        try:
            sol = solve_milp(fp.milp, tol=config.milp_tolerance, warm_start=warm)
        except (LpNumericalError, NodeLimitError) as err:
            warnings.warn(
                f"first-stage MILP failed ({err}); falling back to brute force",
                RuntimeWarning,
            )
            return select_action_bruteforce(ctx, reward)
        if sol.status != "optimal":
            warnings.warn(
                f"first-stage MILP status {sol.status}; falling back to brute force",
                RuntimeWarning,
            )
            return select_action_bruteforce(ctx, reward)

        a_next = fp.decode_action(sol.x)
        key = tuple(int(v) for v in a_next)
        if key in visited:
            # the revisited anchor's integer cut makes its first-stage value
            # exact, so the incumbent is certified optimal
            upper = lower
            trace.append((m, lower, upper, a_m.copy()))
            break

        upper = min(upper, sol.bound + fp.constant_offset)
        trace.append((m, lower, upper, a_m.copy()))

        gap = upper - lower
        if gap <= config.gap_tolerance * max(abs(upper), config.gap_floor):
            break
        a_m = np.asarray(key, dtype=np.int64)

    best_key = max(visited, key=lambda k: visited[k])
    return SelectionResult(
        action=np.asarray(best_key, dtype=np.int64),
        objective=visited[best_key],
        upper_bound=upper,
        iterations=m,
        trace=trace,
    )


def select_action_mcd(ctx: RecourseContext, reward: StageReward,
                      config: McdConfig,
                      initial_action: Optional[np.ndarray] = None) -> SelectionResult:
    """Multi-cut decomposition: integer optimality cuts plus combined cuts."""
    if initial_action is None:
        initial_action = np.zeros(ctx.spec.action_box.dims, dtype=np.int64)
    return _decompose(ctx, reward, config, initial_action, use_combined=True)


def select_action_lshaped(ctx: RecourseContext, reward: StageReward,
                          config: McdConfig,
                          initial_action: Optional[np.ndarray] = None) -> SelectionResult:
    """Integer L-shaped baseline: integer optimality cuts only."""
    if initial_action is None:
        initial_action = np.zeros(ctx.spec.action_box.dims, dtype=np.int64)
    return _decompose(ctx, reward, config, initial_action, use_combined=False)


def select_action(ctx: RecourseContext, reward: StageReward, config: McdConfig,
                  initial_action: Optional[np.ndarray] = None) -> SelectionResult:
    """Dispatch on ``config.engine``."""
    if config.engine == "brute":
        return select_action_bruteforce(ctx, reward)
    if config.engine == "mcd":
        return select_action_mcd(ctx, reward, config, initial_action)
    return select_action_lshaped(ctx, reward, config, initial_action)
