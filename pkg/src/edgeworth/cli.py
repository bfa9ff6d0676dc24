"""Command-line entry point: simulate, example3, manifold, verify.

All outputs are plain CSV/JSON data keyed to the scenario, flags, and seed;
repeated invocations with the same inputs produce byte-identical files.
Exit codes: 0 success, 1 verification failure, 2 configuration error,
3 sampling failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from . import engine, geometry, prefs, verify
from .engine import (
    ArctanNormal,
    OutcomeDistribution,
    PriorSpec,
    SimConfig,
    Tabulated,
    UniformArc,
)
from .errors import (
    ConvergenceError,
    EdgeworthError,
    LPError,
    SamplingError,
    ScenarioError,
    SpecificationError,
)
from .geometry import ManifoldKind
from .prefs import UtilitySpec
from .trade import Allocation, Economy, SpeedPrior

SUMMARY_SCHEMA_VERSION = 1

EXIT_OK = 0
EXIT_VERIFY_FAILED = 1
EXIT_CONFIG = 2
EXIT_SAMPLING = 3

BUNDLED_SCENARIOS = ("example4_sticky", "example5_uniform", "example5_maxspeed")


def _fmt(x: float) -> str:
    return repr(float(x))


def _require_keys(obj: dict, allowed: set[str], required: set[str], where: str) -> None:
    unknown = set(obj) - allowed
    if unknown:
        raise ScenarioError(f"unknown keys in {where}: {sorted(unknown)}")
    missing = required - set(obj)
    if missing:
        raise ScenarioError(f"missing keys in {where}: {sorted(missing)}")


def _parse_q_prior(obj: dict):
    _require_keys(obj, {"kind", "center_rate", "sigma_angle", "grid", "densities"}, {"kind"}, "prior.q_prior")
    kind = obj["kind"]
    if kind == "arctan_normal":
        _require_keys(obj, {"kind", "center_rate", "sigma_angle"}, {"kind", "center_rate", "sigma_angle"}, "prior.q_prior")
        return ArctanNormal(float(obj["center_rate"]), float(obj["sigma_angle"]))
    if kind == "uniform_arc":
        _require_keys(obj, {"kind"}, {"kind"}, "prior.q_prior")
        return UniformArc()
    if kind == "tabulated":
        _require_keys(obj, {"kind", "grid", "densities"}, {"kind", "grid", "densities"}, "prior.q_prior")
        return Tabulated(np.asarray(obj["grid"], dtype=np.float64), np.asarray(obj["densities"], dtype=np.float64))
    raise ScenarioError(f"unknown price prior kind: {kind!r}")


def _parse_s_prior(obj: dict) -> SpeedPrior:
    _require_keys(obj, {"kind"}, {"kind"}, "prior.s_prior")
    try:
        return SpeedPrior(obj["kind"])
    except ValueError as exc:
        raise ScenarioError(f"unknown speed prior kind: {obj['kind']!r}") from exc


def load_scenario(data: dict) -> tuple[SimConfig, str | None]:
    """Validate a parsed scenario document and build the simulation config."""
    _require_keys(data, {"economy", "prior", "engine", "output_dir"}, {"economy", "prior", "engine"}, "scenario")
    econ = data["economy"]
    _require_keys(econ, {"households"}, {"households"}, "economy")
    if not isinstance(econ["households"], list) or len(econ["households"]) < 2:
        raise ScenarioError("economy.households must list at least two households")
    specs = []
    labels = []
    endowments = []
    for k, hh in enumerate(econ["households"]):
        _require_keys(hh, {"label", "utility", "endowment"}, {"utility", "endowment"}, f"household {k}")
        try:
            specs.append(UtilitySpec.from_dict(hh["utility"]))
        except SpecificationError as exc:
            raise ScenarioError(f"household {k}: {exc}") from exc
        labels.append(str(hh.get("label", f"h{k + 1}")))
        endowments.append(np.asarray(hh["endowment"], dtype=np.float64))
    prior_obj = data["prior"]
    _require_keys(prior_obj, {"q_prior", "s_prior"}, {"q_prior", "s_prior"}, "prior")
    eng = data["engine"]
    _require_keys(
        eng,
        {"runs", "max_steps", "pareto_tol", "master_seed"},
        {"runs", "master_seed"},
        "engine",
    )
    try:
        economy = Economy.of(specs, labels)
        initial = Allocation(np.stack(endowments))
        prior = PriorSpec(_parse_q_prior(prior_obj["q_prior"]), _parse_s_prior(prior_obj["s_prior"]))
        cfg = SimConfig(
            economy,
            initial,
            prior,
            master_seed=int(eng["master_seed"]),
            runs=int(eng.get("runs", 1)),
            max_steps=int(eng.get("max_steps", 500)),
            pareto_tol=float(eng.get("pareto_tol", 1e-8)),
        )
    except SpecificationError as exc:
        raise ScenarioError(str(exc)) from exc
    out_dir = data.get("output_dir")
    return cfg, out_dir


def resolve_scenario(arg: str) -> dict:
    """Read a scenario document from a path or a bundled name."""
    path = Path(arg)
    if path.exists():
        text = path.read_text()
    elif arg in BUNDLED_SCENARIOS:
        text = resources.files("edgeworth.scenarios").joinpath(f"{arg}.json").read_text()
    else:
        raise ScenarioError(
            f"scenario {arg!r} is neither a readable file nor one of {BUNDLED_SCENARIOS}"
        )
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"scenario is not valid JSON: {exc}") from exc


def _write_outcomes(path: Path, dist: OutcomeDistribution, economy: Economy) -> None:
    h, l = economy.size, economy.n_goods
    header = (
        ["run"]
        + [f"q_{i + 1}" for i in range(l - 1)]
        + [f"h{i + 1}_g{j + 1}" for i in range(h) for j in range(l)]
        + ["steps", "terminal"]
    )
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for r in range(dist.runs):
            row = [str(r)]
            row += [_fmt(v) for v in dist.terminal_qs[r]]
            row += [_fmt(v) for v in dist.samples[r].reshape(-1)]
            row += [str(int(dist.steps[r])), dist.terminal_tags[r].value]
            writer.writerow(row)


def _write_summary(path: Path, dist: OutcomeDistribution) -> None:
    doc = {
        "schema_version": SUMMARY_SCHEMA_VERSION,
        "runs": dist.runs,
        "mean": dist.mean,
        "mode_bin": dist.mode_bin,
        "mean_bin": dist.mean_bin,
        "bands": {k: list(v) for k, v in dist.bands.items()},
        "household_means": dist.household_means.tolist(),
        "histogram": {
            "edges": dist.bin_edges.tolist(),
            "counts": dist.bin_counts.tolist(),
        },
        "steps_mean": float(dist.steps.mean()),
        "terminal_counts": {
            tag.value: int(sum(1 for t in dist.terminal_tags if t is tag))
            for tag in engine.Terminal
        },
    }
    path.write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n")


def _write_trajectories(path: Path, cfg: SimConfig) -> None:
    h, l = cfg.economy.size, cfg.economy.n_goods
    header = (
        ["run", "step"]
        + [f"q_{i + 1}" for i in range(l - 1)]
        + [f"sigma_{i + 1}" for i in range(h)]
        + [f"h{i + 1}_g{j + 1}" for i in range(h) for j in range(l)]
    )
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for r in range(cfg.runs):
            t = engine.run_trajectory(cfg, r)
            blank_q = [""] * (l - 1)
            blank_s = [""] * h
            for k, state in enumerate(t.states):
                row = [str(r), str(k)]
                row += [_fmt(v) for v in t.prices[k - 1]] if k else blank_q
                row += [_fmt(v) for v in t.speeds[k - 1].sigma] if k else blank_s
                row += [_fmt(v) for v in state.bundles.reshape(-1)]
                writer.writerow(row)


def cmd_simulate(args: argparse.Namespace) -> int:
    data = resolve_scenario(args.scenario)
    cfg, scenario_out = load_scenario(data)
    overrides = {}
    if args.runs is not None:
        overrides["runs"] = args.runs
    if args.seed is not None:
        overrides["master_seed"] = args.seed
    if args.max_steps is not None:
        overrides["max_steps"] = args.max_steps
    if args.pareto_tol is not None:
        overrides["pareto_tol"] = args.pareto_tol
    if overrides:
        import dataclasses

        try:
            cfg = dataclasses.replace(cfg, **overrides)
        except SpecificationError as exc:
            raise ScenarioError(str(exc)) from exc
    if args.bins < 1:
        raise ScenarioError("--bins must be at least 1")
    out_dir = Path(args.out or scenario_out or ".")
    out_dir.mkdir(parents=True, exist_ok=True)
    dist = engine.run_monte_carlo(cfg, bins=args.bins)
    _write_outcomes(out_dir / "outcomes.csv", dist, cfg.economy)
    _write_summary(out_dir / "summary.json", dist)
    if args.trace:
        _write_trajectories(out_dir / "trajectories.csv", cfg)
    print(
        f"simulate: {dist.runs} runs, mean={dist.mean:.6f}, "
        f"band 5-95=({dist.bands['5-95'][0]:.6f}, {dist.bands['5-95'][1]:.6f}) -> {out_dir}"
    )
    return EXIT_OK


def cmd_example3(args: argparse.Namespace) -> int:
    dist = engine.example3_process(engine.run_rng(args.seed, 0), args.runs)
    out_dir = Path(args.out or ".")
    out_dir.mkdir(parents=True, exist_ok=True)
    max_j = int(dist.steps.max())
    rows = []
    for j in range(1, max_j + 1):
        empirical = float(np.mean(dist.steps == j))
        rows.append((j, engine.example3_ladder_value(j), empirical, 2.0**-j))
    with (out_dir / "example3.csv").open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["j", "value", "empirical_mass", "exact_mass"])
        for j, value, emp, exact in rows:
            writer.writerow([str(j), _fmt(value), _fmt(emp), _fmt(exact)])
    print(f"{'j':>3s} {'value':>20s} {'empirical':>12s} {'exact':>12s}")
    for j, value, emp, exact in rows:
        print(f"{j:>3d} {value:>20.12f} {emp:>12.6f} {exact:>12.6f}")
    return EXIT_OK


def _parse_vector(text: str, name: str) -> np.ndarray:
    try:
        vec = np.array([float(v) for v in text.split(",")], dtype=np.float64)
    except ValueError as exc:
        raise ScenarioError(f"{name} must be comma-separated numbers") from exc
    if vec.size == 0:
        raise ScenarioError(f"{name} must not be empty")
    return vec


def _parse_grid(text: str) -> np.ndarray:
    try:
        lo, hi, n = text.split(":")
        return np.linspace(float(lo), float(hi), int(n))
    except ValueError as exc:
        raise ScenarioError("grid must look like lo:hi:count") from exc


def cmd_manifold(args: argparse.Namespace) -> int:
    utility = {"family": args.family, "weights": _parse_vector(args.weights, "weights").tolist()}
    if args.sigma is not None:
        utility["sigma"] = args.sigma
    try:
        spec = UtilitySpec.from_dict(utility)
        anchor = prefs.as_bundle(_parse_vector(args.anchor, "anchor"), spec.dimension)
    except (SpecificationError, EdgeworthError) as exc:
        raise ScenarioError(str(exc)) from exc
    axis = _parse_grid(args.grid)
    if np.any(axis <= 0.0):
        raise ScenarioError("grid values must be strictly positive")
    if spec.dimension == 2:
        grid = [np.array([v]) for v in axis]
    else:
        mesh = np.meshgrid(*([axis] * (spec.dimension - 1)), indexing="ij")
        grid = [np.array(point) for point in zip(*(m.reshape(-1) for m in mesh))]
    kind = ManifoldKind(args.kind)
    sample = geometry.sample_manifold(spec, kind, anchor, grid)
    out_dir = Path(args.out or ".")
    out_dir.mkdir(parents=True, exist_ok=True)
    l = spec.dimension
    header = (
        ["kind"]
        + [f"anchor_{j + 1}" for j in range(l)]
        + [f"y_{j + 1}" for j in range(l)]
        + [f"p_{j + 1}" for j in range(l)]
        + [f"q_{j + 1}" for j in range(l - 1)]
        + ["u"]
    )
    with (out_dir / "manifold.csv").open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for y in sample.points:
            p = prefs.inverse_normalized_demand(spec, y)
            fp = geometry.flatten(spec, y)
            row = [kind.value]
            row += [_fmt(v) for v in anchor]
            row += [_fmt(v) for v in y]
            row += [_fmt(v) for v in p]
            row += [_fmt(v) for v in fp.q]
            row.append(_fmt(fp.u))
            writer.writerow(row)
    print(f"manifold: {len(sample.points)} points -> {out_dir / 'manifold.csv'}")
    return EXIT_OK


def write_contract_curve_csv(specs, aggregate, grid_size: int, path: Path) -> int:
    """Export the 2x2 contract curve in the manifold CSV column style.

    Rows carry one household-1 bundle per curve point next to the aggregate
    it splits; household 2 holds the complement.
    """
    allocations = geometry.contract_curve_2x2(specs, aggregate, grid_size)
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["kind", "aggregate_1", "aggregate_2", "y_1", "y_2"])
        for alloc in allocations:
            total = alloc.aggregate
            first = alloc.bundle(0)
            writer.writerow(
                ["contract_curve"] + [_fmt(v) for v in total] + [_fmt(v) for v in first]
            )
    return len(allocations)


def cmd_verify(args: argparse.Namespace) -> int:
    reports = verify.run_all(seed=args.seed, name_filter=args.filter, inject_fault=args.inject_fault)
    if not reports:
        print(f"no verification suite matches filter {args.filter!r}", file=sys.stderr)
        return EXIT_CONFIG
    for report in reports:
        print(report.line())
    return EXIT_OK if all(r.passed for r in reports) else EXIT_VERIFY_FAILED


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="edgeworth",
        description="Stochastic non-tatonnement trade simulation for pure-exchange economies",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="Monte Carlo a scenario and export outcome data")
    sim.add_argument("--scenario", required=True, help="path to a scenario JSON or a bundled name")
    sim.add_argument("--runs", type=int, default=None)
    sim.add_argument("--seed", type=int, default=None, help="override the master seed")
    sim.add_argument("--max-steps", type=int, default=None)
    sim.add_argument("--pareto-tol", type=float, default=None)
    sim.add_argument("--trace", action="store_true", help="also write full trajectories.csv")
    sim.add_argument("--bins", type=int, default=64, help="histogram bin count (default: 64)")
    sim.add_argument("--out", default=None, help="output directory (default: cwd)")
    sim.set_defaults(func=cmd_simulate)

    ex3 = sub.add_parser("example3", help="the explicit coin-flip price-ladder process")
    ex3.add_argument("--runs", type=int, default=10_000)
    ex3.add_argument("--seed", type=int, default=1)
    ex3.add_argument("--out", default=None)
    ex3.set_defaults(func=cmd_example3)

    man = sub.add_parser("manifold", help="export a canonical manifold in all three domains")
    man.add_argument("--family", required=True, choices=[f.value for f in prefs.Family])
    man.add_argument("--weights", required=True, help="comma-separated positive weights")
    man.add_argument("--sigma", type=float, default=None, help="CES elasticity in (0, 1)")
    man.add_argument("--anchor", required=True, help="comma-separated bundle coordinates")
    man.add_argument("--kind", required=True, choices=[k.value for k in ManifoldKind])
    man.add_argument("--grid", default="0.25:4.0:25", help="rate grid as lo:hi:count")
    man.add_argument("--out", default=None)
    man.set_defaults(func=cmd_manifold)

    ver = sub.add_parser("verify", help="run the numeric falsification suites")
    ver.add_argument("--filter", default=None, help="substring filter on suite names")
    ver.add_argument("--seed", type=int, default=0)
    ver.add_argument(
        "--inject-fault",
        action="store_true",
        help="corrupt the demand map to demonstrate harness sensitivity",
    )
    ver.set_defaults(func=cmd_verify)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ScenarioError, SpecificationError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SamplingError, LPError, ConvergenceError) as exc:
        print(f"sampling failure: {exc}", file=sys.stderr)
        return EXIT_SAMPLING


if __name__ == "__main__":
    sys.exit(main())
