"""Command-line entry point.

Exit codes: 0 success, 1 domain failure (infeasible scenario, IK failure),
2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import math
import os
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .chain import ModelError, load_chain_file
from .evaluation import PerturbationSpec, SeedSet, evaluate, fitness_vs_success
from .ik import IKRequest, Target, Tolerances, solve
from .reachability import DEFAULT_CELL_SIZE, DEFAULT_CELL_STRIDE, MapError, build_map, save_map
from .scenario import Scenario, ScenarioError, load_scenario
from .seedgen import ScenarioInfeasible, SeedResult, evolve, snapshot
from .transforms import Pose, PoseError, pose_from_dict

log = logging.getLogger("ikseed")

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_CONFIG = 2


class ConfigError(Exception):
    pass


# -- helpers ---------------------------------------------------------------


def _threads(args) -> int:
    if args.threads is not None:
        n = args.threads
    else:
        env = os.environ.get("IKSEED_THREADS")
        try:
            n = int(env) if env else 1
        except ValueError:
            raise ConfigError(f"IKSEED_THREADS must be an integer, got {env!r}") from None
    if n < 1:
        raise ConfigError("thread count must be >= 1")
    return n


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _write_manifest(path: Path, command: str, config: dict, inputs, rng_seeds: dict):
    manifest = {
        "command": command,
        "config": config,
        "inputs": {str(Path(p).resolve()): _sha256(p) for p in inputs},
        "rng_seeds": rng_seeds,
        "tool_version": __version__,
        "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
    }
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _dump_json(obj, path: Path):
    path.write_text(json.dumps(obj, indent=1, sort_keys=True, allow_nan=False) + "\n")


def _parse_maps(items) -> dict:
    out = {}
    for it in items or []:
        arm, sep, p = it.partition("=")
        if not sep or not arm or not p:
            raise ConfigError(f"--map expects ARM=PATH, got {it!r}")
        out[arm] = p
    return out


def _scenario(args) -> Scenario:
    sc = load_scenario(args.config, _parse_maps(args.map))
    missing = [a for a in sc.arms if not Path(sc.map_paths.get(a, "")).is_file()]
    if missing and not args.build_missing_maps:
        raise ConfigError(f"reachability maps missing for arms {missing}; run build-map or pass --build-missing-maps")
    for arm in missing:
        mb = sc.map_build
        m = build_map(
            sc.chain,
            arm,
            intervals=math.radians(float(mb.get("interval_deg", 2.0))),
            cell_size=float(mb.get("cell_size", DEFAULT_CELL_SIZE)),
            cell_stride=float(mb.get("cell_stride", DEFAULT_CELL_STRIDE)),
            threads=_threads(args),
        )
        log.info("built in-memory map for arm %s (%d samples)", arm, m.sample_count)
        sc.set_map(arm, m)
    return sc


def _scenario_inputs(sc: Scenario, args) -> list:
    inputs = [sc.path]
    if sc.robot_path:
        inputs.append(sc.robot_path)
    inputs.extend(p for a, p in sorted(sc.map_paths.items()) if Path(p).is_file())
    return inputs


def seed_result_dict(sc: Scenario, res: SeedResult) -> dict:
    return res.to_dict(sc.chain.joint_names)


def write_history_csv(res: SeedResult, path: Path):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["generation", "best_fitness"])
    for g, f in enumerate(res.history):
        w.writerow([g, repr(float(f))])
    path.write_text(buf.getvalue())


def load_seed_file(path, chain) -> tuple[dict, float, str, dict]:
    """(step -> state, fitness, label, raw) from a gen-seed result file."""
    try:
        raw = json.loads(Path(path).read_text())
        names = raw.get("joint_names")
        if names is not None and tuple(names) != chain.joint_names:
            raise ConfigError(f"{path}: joint names do not match the robot model")
        seeds = {int(s["step"]): np.array(s["q"], dtype=float) for s in raw["states"]}
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: not a seed file ({exc})") from None
    fit = raw.get("fitness")
    return seeds, float("nan") if fit is None else float(fit), str(raw.get("label", Path(path).stem)), raw


# -- commands --------------------------------------------------------------


def cmd_build_map(args) -> int:
    chain = load_chain_file(args.model)
    info = chain.arm(args.arm)
    if args.intervals:
        intervals = [math.radians(float(v)) for v in args.intervals.split(",")]
    else:
        intervals = math.radians(args.interval_deg)
    m = build_map(
        chain,
        args.arm,
        intervals=intervals,
        cell_size=args.cell_size,
        cell_stride=args.cell_stride,
        threads=_threads(args),
        prune_k=args.prune_k,
    )
    out = Path(args.out)
    save_map(m, out)
    print(f"{m.sample_count} samples, {len(m.cell_keys)} cells over {info.positional.size} joints -> {out}")
    config = {
        "model": str(Path(args.model).resolve()),
        "arm": args.arm,
        "intervals_deg": [math.degrees(v) for v in m.meta["intervals"]],
        "cell_size": args.cell_size,
        "cell_stride": args.cell_stride,
        "prune_k": args.prune_k,
    }
    _write_manifest(out.with_name(out.name + ".manifest.json"), "build-map", config, [args.model], {})
    return EXIT_OK


def _snapshot_generations(res: SeedResult, explicit, auto: int) -> list[int]:
    last = len(res.history) - 1
    gens = []
    for g in explicit or []:
        v = last if g == "best" else int(g)
        if not 0 <= v <= last:
            raise ConfigError(f"snapshot generation {g} outside 0..{last}")
        gens.append(v)
    if auto:
        # first generations reaching evenly spaced fractions of the total gain
        h = np.asarray(res.history)
        lo, hi = h[0], h[-1]
        for frac in np.linspace(0.0, 1.0, auto):
            gens.append(int(np.argmax(h >= lo + frac * (hi - lo))))
    return sorted(set(gens))


def cmd_gen_seed(args) -> int:
    threads = _threads(args)
    sc = _scenario(args)
    seed = sc.ga.rng_seed if args.rng_seed is None else args.rng_seed
    out = Path(args.out)
    try:
        res = evolve(sc, seed=seed, threads=threads)
    except ScenarioInfeasible as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    _dump_json(seed_result_dict(sc, res), out)
    hist = Path(args.history) if args.history else out.with_name(out.stem + "_history.csv")
    write_history_csv(res, hist)
    written = [str(out), str(hist)]
    for g in _snapshot_generations(res, args.snapshot, args.auto_snapshots):
        snap = snapshot(sc, res, g)
        d = seed_result_dict(sc, snap)
        d["label"] = f"gen{g}"
        p = out.with_name(f"{out.stem}_gen{g}.json")
        _dump_json(d, p)
        written.append(str(p))
    print(f"fitness {res.fitness:.6g} after {res.generations} generations ({res.stop_reason})")
    for p in written:
        print(p)
    config = {
        "scenario": str(sc.path),
        "ga": {k: getattr(sc.ga, k) for k in ("population", "parents", "max_generations", "stagnation", "mutation_prob", "mutation_sigma", "init_retries")},
        "query_radius": sc.query_radius,
        "snapshots": args.snapshot or [],
        "auto_snapshots": args.auto_snapshots,
        "outputs": written,
    }
    _write_manifest(out.with_name(out.name + ".manifest.json"), "gen-seed", config, _scenario_inputs(sc, args), {"ga": seed})
    return EXIT_OK


def _parse_pose_arg(text: str) -> Pose:
    text = text.strip()
    try:
        if text.startswith("{"):
            return pose_from_dict(json.loads(text)).validate()
        vals = [float(v) for v in text.split(",")]
    except (ValueError, json.JSONDecodeError) as exc:
        raise ConfigError(f"malformed pose {text!r}: {exc}") from None
    if len(vals) == 3:
        return Pose.from_translation(vals)
    if len(vals) == 6:
        return pose_from_dict({"translation": vals[:3], "rpy": vals[3:]}).validate()
    if len(vals) == 7:
        q = np.array(vals[3:])
        if not abs(np.linalg.norm(q) - 1.0) < 1e-6:
            raise ConfigError("pose quaternion must be unit length")
        return pose_from_dict({"translation": vals[:3], "quaternion": q.tolist()}).validate()
    raise ConfigError("pose needs 3 (x,y,z), 6 (+roll,pitch,yaw) or 7 (+qw,qx,qy,qz) numbers")


def _active(chain, spec):
    if not spec:
        return np.arange(chain.dof, dtype=np.intp)
    names = []
    for tok in spec.split(","):
        tok = tok.strip()
        if tok.startswith("arm:"):
            names.extend(chain.joint_names[i] for i in chain.arm(tok[4:]).joints)
        else:
            names.append(tok)
    return chain.indices(names)


def cmd_solve(args) -> int:
    chain = load_chain_file(args.model)
    seeds, _, _, raw = load_seed_file(args.seed, chain)
    step = args.step if args.step is not None else min(seeds)
    if step not in seeds:
        raise ConfigError(f"seed file has no state for step {step}")
    if len(args.frame) != len(args.target):
        raise ConfigError("give one --frame per --target")
    targets = []
    for frame, text in zip(args.frame, args.target):
        if not chain.has_link(frame):
            raise ConfigError(f"unknown frame {frame!r}")
        targets.append(Target(frame, _parse_pose_arg(text)))
    req = IKRequest(
        chain=chain,
        active=_active(chain, args.active),
        seed=seeds[step],
        targets=tuple(targets),
        tolerances=Tolerances(args.position_tol, args.orientation_tol),
        max_iterations=args.max_iterations,
        w=args.w,
        position_only=args.position_only,
    )
    out = solve(req)
    print(json.dumps(out.to_dict(chain), sort_keys=True))
    return EXIT_OK if out.success else EXIT_FAIL


def _report_csv(reports) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, ["seed_set", "fitness", "step", "label", "successes", "attempts", "ratio"], lineterminator="\n")
    w.writeheader()
    for r in reports:
        for row in r.rows():
            row = dict(row, fitness=repr(row["fitness"]), ratio=repr(row["ratio"]))
            w.writerow(row)
    return buf.getvalue()


def cmd_evaluate(args) -> int:
    threads = _threads(args)
    sc = _scenario(args)
    sets = []
    for p in args.seeds:
        seeds, fit, label, _ = load_seed_file(p, sc.chain)
        sets.append(SeedSet(label, seeds, fit))
    labels = [s.label for s in sets]
    if len(set(labels)) != len(labels):
        raise ConfigError(f"seed set labels must be unique, got {labels}")
    pert = sc.perturbation
    pos = args.position_range if args.position_range is not None else float(pert.get("position", 0.07))
    ori = args.orientation_range_deg if args.orientation_range_deg is not None else float(pert.get("orientation_deg", 5.0))
    spec = PerturbationSpec(pos, math.radians(ori), args.stream)
    try:
        reports = evaluate(sc, sets, spec, trials=args.trials, rng_seed=args.rng_seed, threads=threads)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.csv").write_text(_report_csv(reports))
    doc = {
        "scenario": sc.name,
        "trials": args.trials,
        "perturbation": {"position_range": pos, "orientation_range_deg": ori, "stream": args.stream},
        "rng_seed": args.rng_seed,
        "reports": [r.to_dict() for r in reports],
    }
    if len(reports) >= 2:
        try:
            doc["comparison"] = fitness_vs_success(reports)
        except ValueError as exc:
            doc["comparison"] = {"error": str(exc)}
    (out / "report.json").write_text(json.dumps(doc, indent=1, sort_keys=True, default=_json_default) + "\n")
    for r in reports:
        print(f"{r.label}: total {r.total_successes}/{r.total_attempts} ({100 * r.total_ratio:.2f}%), trajectory {r.trajectory_successes}/{r.trials}")
    config = {
        "scenario": str(sc.path),
        "seed_files": [str(Path(p).resolve()) for p in args.seeds],
        "trials": args.trials,
        "perturbation": doc["perturbation"],
    }
    _write_manifest(out / "manifest.json", "evaluate", config, _scenario_inputs(sc, args) + list(args.seeds), {"perturbation": args.rng_seed})
    return EXIT_OK


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    raise TypeError(type(o).__name__)


# -- parser ----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ikseed", description="IK seed generation and evaluation")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def threads(sp):
        sp.add_argument("--threads", type=int, default=None, help="worker threads (default $IKSEED_THREADS or 1)")

    def scenario_opts(sp):
        sp.add_argument("--config", "--scenario", dest="config", required=True, help="scenario JSON file")
        sp.add_argument("--map", action="append", metavar="ARM=PATH", help="override a map path from the scenario")
        sp.add_argument("--build-missing-maps", action="store_true", help="build absent maps in memory from the scenario's map_build settings")

    b = sub.add_parser("build-map", help="sample an arm and write a reachability map")
    b.add_argument("--model", required=True)
    b.add_argument("--arm", required=True)
    b.add_argument("--interval-deg", type=float, default=2.0, help="lattice step for every joint (default 2)")
    b.add_argument("--intervals", help="comma-separated per-joint steps in degrees")
    b.add_argument("--cell-size", type=float, default=DEFAULT_CELL_SIZE)
    b.add_argument("--cell-stride", type=float, default=DEFAULT_CELL_STRIDE)
    b.add_argument("--prune-k", type=int, default=None, help="keep at most K samples per cell")
    b.add_argument("--out", required=True)
    threads(b)
    b.set_defaults(func=cmd_build_map)

    g = sub.add_parser("gen-seed", help="run the GA and write the best seeds")
    scenario_opts(g)
    g.add_argument("--out", required=True, help="result JSON path")
    g.add_argument("--history", help="fitness history CSV (default <out>_history.csv)")
    g.add_argument("--rng-seed", type=int, default=None, help="override the scenario's GA seed")
    g.add_argument("--snapshot", action="append", metavar="GEN", help="also write the best seeds as of generation GEN (or 'best')")
    g.add_argument("--auto-snapshots", type=int, default=0, metavar="N", help="N snapshots at evenly spaced fractions of the fitness gain")
    threads(g)
    g.set_defaults(func=cmd_gen_seed)

    s = sub.add_parser("solve", help="solve one IK problem from a seed file")
    s.add_argument("--model", required=True)
    s.add_argument("--seed", required=True, help="seed file written by gen-seed")
    s.add_argument("--step", type=int, default=None, help="trajectory step of the seed state (default first)")
    s.add_argument("--frame", action="append", required=True, help="target frame (repeat per target)")
    s.add_argument("--target", action="append", required=True, help="x,y,z[,r,p,y | ,qw,qx,qy,qz] or pose JSON")
    s.add_argument("--active", help="comma-separated joints or arm:<name> (default all)")
    s.add_argument("--position-tol", type=float, default=1e-4)
    s.add_argument("--orientation-tol", type=float, default=1e-3)
    s.add_argument("--max-iterations", type=int, default=200)
    s.add_argument("--w", type=float, default=1.0)
    s.add_argument("--position-only", action="store_true")
    s.set_defaults(func=cmd_solve)

    e = sub.add_parser("evaluate", help="perturbed-target IK success of seed files")
    scenario_opts(e)
    e.add_argument("seeds", nargs="+", help="seed files from gen-seed")
    e.add_argument("--trials", type=int, default=100)
    e.add_argument("--position-range", type=float, default=None, help="+- meters per axis (default from scenario)")
    e.add_argument("--orientation-range-deg", type=float, default=None, help="+- degrees per RPY axis (default from scenario)")
    e.add_argument("--rng-seed", type=int, default=0)
    e.add_argument("--stream", type=int, default=0, help="perturbation stream id")
    e.add_argument("--out-dir", required=True)
    threads(e)
    e.set_defaults(func=cmd_evaluate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, ScenarioError, ModelError, MapError, PoseError, KeyError, FileNotFoundError, ValueError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"error: {msg}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
