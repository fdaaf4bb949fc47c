"""Seed-quality evaluation by perturbed-target IK trials.

Every trial perturbs all trajectory targets once, from a random stream keyed
by (rng seed, stream id, trial), and then solves the trajectory from each
seed set in turn. All seed sets therefore face the same targets. A failed
step ends the trial, so step k is attempted only where step k-1 succeeded.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .ik import Target, solve_trajectory
from .scenario import Scenario
from .transforms import Pose, rpy_to_matrix

Z95 = 1.959963984540054


@dataclass(frozen=True)
class PerturbationSpec:
    position_range: float = 0.07
    orientation_range: float = math.radians(5.0)
    stream: int = 0

    def __post_init__(self):
        if not (self.position_range >= 0 and self.orientation_range >= 0):
            raise ValueError("perturbation ranges must be non-negative")


@dataclass(frozen=True)
class SeedSet:
    label: str
    seeds: dict  # step -> full joint state
    fitness: float = float("nan")


def perturb(target: Pose, spec: PerturbationSpec, rng: np.random.Generator) -> Pose:
    """Uniform offset per axis; the RPY offset is applied in the world frame."""
    dp = rng.uniform(-spec.position_range, spec.position_range, size=3)
    rpy = rng.uniform(-spec.orientation_range, spec.orientation_range, size=3)
    t = target.translation + dp if spec.position_range > 0 else target.translation
    R = rpy_to_matrix(*rpy) @ target.rotation if spec.orientation_range > 0 else target.rotation
    return Pose(R, t)


def trial_rng(rng_seed: int, spec: PerturbationSpec, trial: int) -> np.random.Generator:
    return np.random.default_rng([int(rng_seed), int(spec.stream), int(trial)])


def perturbed_targets(scenario: Scenario, spec: PerturbationSpec, rng_seed: int, trial: int) -> list[tuple[Target, ...]]:
    rng = trial_rng(rng_seed, spec, trial)
    out = []
    for k in range(len(scenario.steps)):
        out.append(tuple(Target(t.frame, perturb(t.pose, spec, rng)) for t in scenario.targets(k)))
    return out


@dataclass
class EvalReport:
    label: str
    fitness: float
    step_labels: list[str]
    successes: np.ndarray  # per step
    attempts: np.ndarray  # per step
    trials: int
    completed: np.ndarray = field(repr=False, default=None)  # per trial: steps solved

    @property
    def trajectory_successes(self) -> int:
        return int(np.sum(self.completed == len(self.step_labels)))

    @property
    def total_successes(self) -> int:
        return int(self.successes.sum())

    @property
    def total_attempts(self) -> int:
        return int(self.attempts.sum())

    @property
    def total_ratio(self) -> float:
        return self.total_successes / self.total_attempts if self.total_attempts else float("nan")

    @property
    def trajectory_ratio(self) -> float:
        return self.trajectory_successes / self.trials

    def check(self) -> None:
        """Gating and conservation invariants."""
        if self.attempts[0] != self.trials or not np.array_equal(self.attempts[1:], self.successes[:-1]):
            raise RuntimeError(f"report {self.label!r}: step denominators break gating")
        if self.completed is not None and self.total_successes != int(self.completed.sum()):
            raise RuntimeError(f"report {self.label!r}: step counts do not add up")

    def rows(self) -> list[dict]:
        out = []
        for k, lab in enumerate(self.step_labels):
            s, a = int(self.successes[k]), int(self.attempts[k])
            out.append({"seed_set": self.label, "fitness": self.fitness, "step": k, "label": lab, "successes": s, "attempts": a, "ratio": s / a if a else float("nan")})
        out.append({"seed_set": self.label, "fitness": self.fitness, "step": "trajectory", "label": "whole", "successes": self.trajectory_successes, "attempts": self.trials, "ratio": self.trajectory_ratio})
        out.append({"seed_set": self.label, "fitness": self.fitness, "step": "total", "label": "total", "successes": self.total_successes, "attempts": self.total_attempts, "ratio": self.total_ratio})
        return out

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "fitness": None if math.isnan(self.fitness) else self.fitness,
            "trials": self.trials,
            "steps": [{"step": k, "label": lab, "successes": int(s), "attempts": int(a)} for k, (lab, s, a) in enumerate(zip(self.step_labels, self.successes, self.attempts))],
            "trajectory": {"successes": self.trajectory_successes, "attempts": self.trials},
            "total": {"successes": self.total_successes, "attempts": self.total_attempts, "ratio": self.total_ratio},
        }


def _check_seeds(scenario: Scenario, ss: SeedSet):
    if sorted(ss.seeds) != sorted(scenario.seeded_steps):
        raise ValueError(f"seed set {ss.label!r} covers steps {sorted(ss.seeds)}, scenario seeds {scenario.seeded_steps}")
    for k, q in ss.seeds.items():
        if np.asarray(q).shape != (scenario.chain.dof,):
            raise ValueError(f"seed set {ss.label!r} step {k}: wrong state size")


def evaluate(
    scenario: Scenario,
    seed_sets,
    spec: PerturbationSpec = PerturbationSpec(),
    trials: int = 100,
    rng_seed: int = 0,
    threads: int = 1,
) -> list[EvalReport]:
    if trials < 1:
        raise ValueError("trials must be >= 1")
    seed_sets = list(seed_sets)
    for ss in seed_sets:
        _check_seeds(scenario, ss)
    n_steps = len(scenario.steps)
    ik = scenario.ik

    def run_trial(t):
        targets = perturbed_targets(scenario, spec, rng_seed, t)
        done = []
        for ss in seed_sets:
            outs = solve_trajectory(
                scenario.chain,
                scenario.online_dof,
                ss.seeds,
                targets,
                ik.tolerances,
                ik.max_iterations,
                damping=ik.damping,
                w=scenario.goodness.w,
            )
            done.append(sum(o.success for o in outs))
        return done

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            completed = np.array(list(ex.map(run_trial, range(trials))), dtype=np.int64)
    else:
        completed = np.array([run_trial(t) for t in range(trials)], dtype=np.int64)
    reports = []
    labels = [s.label for s in scenario.steps]
    for j, ss in enumerate(seed_sets):
        c = completed[:, j]
        succ = np.array([int(np.sum(c > k)) for k in range(n_steps)])
        att = np.concatenate([[trials], succ[:-1]])
        rep = EvalReport(ss.label, float(ss.fitness), labels, succ, att, trials, c)
        rep.check()
        reports.append(rep)
    return reports


def _wald(p1, n1, p2, n2):
    d = p2 - p1
    se = math.sqrt(p1 * (1 - p1) / n1 + p2 * (1 - p2) / n2)
    return d, (d - Z95 * se, d + Z95 * se)


def fitness_vs_success(reports: list[EvalReport]) -> dict:
    """Rank correlation of fitness and total success, plus success deltas.

    Deltas are taken between consecutive sets in ascending fitness and from
    the lowest to the highest. Each has an unpaired Wald interval on the total
    ratio and a paired interval on whole-trajectory success per trial.
    """
    if len(reports) < 2:
        raise ValueError("need at least two seed sets")
    reps = sorted(reports, key=lambda r: r.fitness)
    fit = np.array([r.fitness for r in reps])
    ratio = np.array([r.total_ratio for r in reps])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        rho = stats.spearmanr(fit, ratio).statistic
    rho = float(rho)
    pairs = [(i, i + 1) for i in range(len(reps) - 1)]
    if len(reps) > 2:
        pairs.append((0, len(reps) - 1))
    deltas = []
    for i, j in pairs:
        a, b = reps[i], reps[j]
        d, ci = _wald(a.total_ratio, a.total_attempts, b.total_ratio, b.total_attempts)
        entry = {"from": a.label, "to": b.label, "total_delta": d, "total_ci95": list(ci)}
        if a.completed is not None and b.completed is not None and a.trials == b.trials:
            diff = (b.completed == len(b.step_labels)).astype(float) - (a.completed == len(a.step_labels)).astype(float)
            md = float(diff.mean())
            se = float(diff.std(ddof=1) / math.sqrt(diff.size)) if diff.size > 1 else 0.0
            entry["paired_trajectory_delta"] = md
            entry["paired_trajectory_ci95"] = [md - Z95 * se, md + Z95 * se]
        deltas.append(entry)
    return {
        "spearman": None if math.isnan(rho) else rho,
        "spearman_defined": not math.isnan(rho),
        "order": [r.label for r in reps],
        "fitness": fit.tolist(),
        "total_ratio": ratio.tolist(),
        "deltas": deltas,
    }
