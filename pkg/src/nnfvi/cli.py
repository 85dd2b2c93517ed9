"""Batch experiment harness.

Subcommands: ``fvi-run`` (train and evaluate on an instance), ``mcd-bench``
(action-selection engine comparison on seeded random networks),
``case-study`` (flexible vs inflexible sensitivity sweep), and ``dp-oracle``
(exact value tables and the gap against a fitted run).

All randomness flows from explicit seeds in the JSON config; outputs are CSV
files written atomically, each carrying the config hash in a leading comment
and unit-suffixed column names.  Wall-clock measurements go to separate
files so the result CSVs are byte-identical across reruns.  Exit codes:
0 success, 1 domain error, 2 usage error; failures emit a JSON error object
on stderr.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from .cuts import RecourseContext
from .fvi import (
    DpSizeError,
    FittedValueSet,
    FviConfig,
    exact_dp,
    run_nnfvi,
)
from .mcd import (
    McdConfig,
    StageReward,
    linear_stage_reward,
    select_action,
)
from .mcip import McipInstance, build_mcip_mdp, dp_model, sensitivity_sweep, \
    synthetic_instance
from .mdp import ActionBox, MdpSpec
from .neural import ReluNet, TrainConfig

EXIT_OK = 0
EXIT_DOMAIN = 1
EXIT_USAGE = 2


class UsageError(ValueError):
    """Bad invocation or malformed configuration."""


def _config_hash(config: dict) -> str:
    canonical = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()[:16]


def _write_csv(path: Path, header: list, rows: list, config_hash: str):
    """Atomic CSV write with the config hash on a comment line."""
    buf = io.StringIO()
    buf.write(f"# config_sha256={config_hash}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(buf.getvalue())
    os.replace(tmp, path)


def _load_config(path: str) -> dict:
    p = Path(path)
    if not p.exists():
        raise UsageError(f"config file {path} does not exist")
    try:
        return json.loads(p.read_text())
    except json.JSONDecodeError as err:
        raise UsageError(f"config file {path} is not valid JSON: {err}") from err


def _require_seed(config: dict) -> int:
    if "seed" not in config:
        raise UsageError("config must set an explicit seed")
    return int(config["seed"])


def _instance_from_config(config: dict) -> McipInstance:
    block = config.get("instance")
    if block is None:
        raise UsageError("config must carry an 'instance' block")
    if "path" in block:
        path = Path(block["path"])
        if not path.exists():
            raise UsageError(f"instance file {path} does not exist")
        return McipInstance.loads(path.read_text())
    if "synthetic" in block:
        params = dict(block["synthetic"])
        if "seed" not in params:
            raise UsageError("synthetic instance block must set a seed")
        return synthetic_instance(**params)
    raise UsageError("instance block needs either 'path' or 'synthetic'")


def _fvi_config_from(config: dict, seed: int, engine: str) -> FviConfig:
    fvi = dict(config.get("fvi", {}))
    mcd = dict(config.get("mcd", {}))
    train = TrainConfig(
        restarts=int(fvi.pop("restarts", 5)),
        max_epochs=int(fvi.pop("max_epochs", 200)),
    )
    return FviConfig(
        state_samples=int(fvi.get("state_samples", 100)),
        transition_samples=int(fvi.get("transition_samples", 20)),
        neurons=int(fvi.get("neurons", 20)),
        regularization=float(fvi.get("regularization", 0.0)),
        train=train,
        mcd=McdConfig(
            engine=engine,
            max_iterations=int(mcd.get("max_iterations", 100)),
            gap_tolerance=float(mcd.get("gap_tolerance", 0.0035)),
        ),
        seed=seed,
    )


def cmd_fvi_run(config: dict, out_dir: Path) -> int:
    """Train the fitted value iteration and record losses, value, and nets."""
    seed = _require_seed(config)
    engine = config.get("engine", "brute")
    instance = _instance_from_config(config)
    spec = build_mcip_mdp(instance)
    fvi_config = _fvi_config_from(config, seed, engine)
    chash = _config_hash(config)

    start = time.perf_counter()
    fitted, v_hat = run_nnfvi(spec, fvi_config)
    elapsed = time.perf_counter() - start

    rows = [["net", str(t), repr(fitted.training_losses[t])]
            for t in sorted(fitted.training_losses)]
    rows.append(["value_estimate", "1", repr(v_hat)])
    _write_csv(out_dir / "fvi_results.csv",
               ["record", "period", "value_currency_or_loss"], rows, chash)
    _write_csv(out_dir / "fvi_timings.csv",
               ["record", "wall_time_s"],
               [["run_nnfvi", repr(elapsed)]], chash)
    (out_dir / "fitted_nets.json").write_text(fitted.dumps())
    return EXIT_OK


def make_bench_instance(seed: int, facilities: int, neurons: int = 8,
                        transition_samples: int = 4,
                        capacity_levels: int = 3) -> tuple[RecourseContext, StageReward]:
    """Seeded random action-selection instance shaped like the benchmark:
    a random network over a random affine transition with a linear reward."""
    rng = np.random.default_rng(seed)
    n2 = facilities
    n1 = n2 + 1
    bounds = np.column_stack([np.full(n1, -1e9), np.full(n1, 1e9)])

    def noise_sampler(r):
        return {"A": r.normal(size=n1), "B": r.normal(size=(n1, n2))}

    spec = MdpSpec(
        horizon=2, discount=0.9, state_dim=n1, state_bounds=bounds,
        action_box=ActionBox(np.full(n2, capacity_levels)),
        noise_sampler=noise_sampler,
        transition_A=lambda x, xi: xi["A"],
        transition_B=lambda x, xi: xi["B"],
        reward=lambda t, x, a: 0.0,
        r_max=1e9,
    )
    net = ReluNet(
        input_weights=rng.normal(size=(neurons, n1)),
        input_biases=rng.normal(size=neurons),
        output_weights=rng.normal(size=neurons) * 10.0,
        output_bias=float(rng.normal() * 10.0),
    )
    x = rng.normal(size=n1)
    noises = [spec.noise_sampler(rng) for _ in range(transition_samples)]
    ctx = RecourseContext(net, spec, x, noises)
    reward = linear_stage_reward(rng.normal(size=n2) * 5.0,
                                 constant=float(rng.normal() * 10.0))
    return ctx, reward


def cmd_mcd_bench(config: dict, out_dir: Path) -> int:
    """Engine comparison on seeded random instances; emits results and traces."""
    seed = _require_seed(config)
    suite = dict(config.get("suite", {}))
    n_instances = int(suite.get("instances", 0))
    facilities = suite.get("facilities", [3])
    neurons = int(suite.get("neurons", 8))
    s2 = int(suite.get("transition_samples", 4))
    levels = int(suite.get("capacity_levels", 3))
    engines = config.get("engines", ["brute", "lshaped", "mcd"])
    mcd_block = dict(config.get("mcd", {}))
    max_iter = int(mcd_block.get("max_iterations", 100))
    gap_tol = float(mcd_block.get("gap_tolerance", 0.0035))
    chash = _config_hash(config)

    header = ["instance", "facilities", "algorithm", "stop_criterion",
              "iterations", "cpu_time_s", "objective_currency",
              "relative_gap_pct"]
    rows = []
    trace_rows = []
    case = 0
    for n2 in facilities:
        for k in range(n_instances):
            case += 1
            ctx, reward = make_bench_instance(
                seed + 1000 * case, int(n2), neurons=neurons,
                transition_samples=s2, capacity_levels=levels)
            results = {}
            for engine in engines:
                cfg = McdConfig(engine=engine, max_iterations=max_iter,
                                gap_tolerance=gap_tol)
                start = time.perf_counter()
                res = select_action(ctx, reward, cfg)
                elapsed = time.perf_counter() - start
                results[engine] = (res, elapsed)
                for it, lo, hi, action in res.trace_rows():
                    trace_rows.append([case, engine, it, repr(lo), repr(hi),
                                       action])
            reference = results.get("brute")
            for engine in engines:
                res, elapsed = results[engine]
                if engine == "brute":
                    stop, gap = "-", "-"
                else:
                    stop = McdConfig(engine=engine, max_iterations=max_iter,
                                     gap_tolerance=gap_tol).stop_criterion_label()
                    if reference is not None:
                        ref_obj = reference[0].objective
                        gap = repr(100.0 * (ref_obj - res.objective)
                                   / max(abs(ref_obj), 1e-9))
                    else:
                        gap = "-"
                rows.append([case, int(n2), engine, stop, res.iterations,
                             repr(elapsed), repr(res.objective), gap])

    _write_csv(out_dir / "mcd_bench.csv", header, rows, chash)
    _write_csv(out_dir / "mcd_bench_traces.csv",
               ["instance", "algorithm", "iteration",
                "lower_bound_currency", "upper_bound_currency", "action"],
               trace_rows, chash)
    return EXIT_OK


def cmd_case_study(config: dict, out_dir: Path) -> int:
    """Sensitivity sweep over discount factors and salvage-to-expansion ratios."""
    seed = _require_seed(config)
    engine = config.get("engine", "brute")
    instance = _instance_from_config(config)
    gammas = config.get("gammas")
    ratios = config.get("ratios")
    if not gammas or not ratios:
        raise UsageError("case-study config needs non-empty 'gammas' and 'ratios'")
    fvi_config = _fvi_config_from(config, seed, engine)
    n_paths = int(config.get("n_paths", 1000))
    n_scenarios = int(config.get("n_scenarios", 30))
    chash = _config_hash(config)

    cells = sensitivity_sweep(instance, gammas, ratios, fvi_config,
                              n_paths=n_paths, n_scenarios=n_scenarios,
                              seed=seed)
    header = ["gamma", "salvage_expansion_ratio",
              "inflexible_enpv_currency", "inflexible_se_currency",
              "flexible_enpv_currency", "flexible_se_currency",
              "value_of_flexibility_currency", "improvement_pct"]
    rows = [[repr(c.gamma), repr(c.ratio),
             repr(c.inflexible_enpv), repr(c.inflexible_se),
             repr(c.flexible_enpv), repr(c.flexible_se),
             repr(c.value_of_flexibility), repr(c.improvement_pct)]
            for c in cells]
    _write_csv(out_dir / "case_study.csv", header, rows, chash)
    return EXIT_OK


def cmd_dp_oracle(config: dict, out_dir: Path) -> int:
    """Exact value tables, plus the gap against a fitted run when supplied."""
    instance = _instance_from_config(config)
    chash = _config_hash(config)
    try:
        tables = exact_dp(dp_model(instance))
    except DpSizeError as err:
        raise DpSizeError(
            f"{err}; value iteration here costs O(|states|^2 x |actions| x "
            "horizon)"
        ) from err

    value_rows = tables.to_csv_rows()
    _write_csv(out_dir / "dp_values.csv", value_rows[0], value_rows[1:], chash)

    e0 = int(np.flatnonzero(
        (tables.model.endo_levels == instance.initial_capacity.astype(int))
        .all(axis=1))[0])
    x0 = instance.demand.index_of(instance.initial_demand)
    v_dp = tables.value(1, e0, x0)
    summary = [["dp_value_currency", repr(v_dp)]]
    fitted_path = config.get("fitted_path")
    if fitted_path:
        path = Path(fitted_path)
        if not path.exists():
            raise UsageError(f"fitted-run file {path} does not exist")
        fitted = FittedValueSet.loads(path.read_text())
        gap = abs(fitted.value_estimate - v_dp) / max(abs(v_dp), 1e-12)
        summary.append(["fitted_value_currency", repr(fitted.value_estimate)])
        summary.append(["relative_gap_pct", repr(100.0 * gap)])
    _write_csv(out_dir / "dp_summary.csv", ["record", "value"], summary, chash)
    return EXIT_OK


COMMANDS = {
    "fvi-run": cmd_fvi_run,
    "mcd-bench": cmd_mcd_bench,
    "case-study": cmd_case_study,
    "dp-oracle": cmd_dp_oracle,
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nnfvi",
        description="Fitted value iteration with multi-cut action selection",
    )
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True, help="JSON config path")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--seed", type=int, default=None,
                        help="override the config seed")
    parser.add_argument("--engine", choices=["brute", "mcd", "lshaped"],
                        default=None, help="override the config engine")
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as err:
        return EXIT_USAGE if err.code not in (0, None) else EXIT_OK
    try:
        config = _load_config(args.config)
        if args.seed is not None:
            config["seed"] = args.seed
        if args.engine is not None:
            config["engine"] = args.engine
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](config, out_dir)
    except UsageError as err:
        json.dump({"error": "usage", "message": str(err)}, sys.stderr)
        sys.stderr.write("\n")
        return EXIT_USAGE
    except Exception as err:  # domain failures: solver errors, bad data
        json.dump({"error": type(err).__name__, "message": str(err)},
                  sys.stderr)
        sys.stderr.write("\n")
        return EXIT_DOMAIN


if __name__ == "__main__":
    raise SystemExit(main())
