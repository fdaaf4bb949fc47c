"""Genetic-algorithm IK seed generator.

The gene holds trunk/base values. For each goal the arm joints come from the
reachability map plus the analytic wrist, and the best candidate per arm is
the one of highest goodness. Fitness is the minimum over all goals and arms.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .chain import forward_kinematics
from .goodness import BatchScorer
from .provider import candidate_arrays
from .scenario import GAParams, Scenario
from .transforms import compose, inverse

log = logging.getLogger(__name__)

NEG_INF = float("-inf")


class ScenarioInfeasible(RuntimeError):
    """No gene in repeated random populations reaches every goal."""


@dataclass
class GARun:
    best_gene: np.ndarray
    best_fitness: float
    history: list[float]  # best fitness after each generation, generation 0 first
    history_genes: list[np.ndarray]
    generations: int
    stop_reason: str
    evaluations: int


def run_ga(fitness_fn, lower, upper, params: GAParams, seed: int | None = None) -> GARun:
    """Maximize ``fitness_fn`` over the box [lower, upper].

    ``fitness_fn`` maps an (m, k) array of genes to m fitness values and may
    return -inf for infeasible genes. Parents are the best ``params.parents``
    finite genes and survive unchanged, so the history never decreases.
    """
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    if lower.shape != upper.shape or lower.ndim != 1 or not np.all(lower < upper):
        raise ValueError("gene bounds must be 1-D with lower < upper")
    rng = np.random.default_rng(params.rng_seed if seed is None else seed)
    k = lower.size
    span = upper - lower
    sigma = params.mutation_sigma * span
    n_pop = params.population

    def evaluate(G):
        f = np.asarray(fitness_fn(G), dtype=float)
        if f.shape != (G.shape[0],) or np.isnan(f).any():
            raise ValueError("fitness function must return one non-NaN value per gene")
        return f

    evaluations = 0
    for attempt in range(params.init_retries):
        pop = lower + rng.random((n_pop, k)) * span
        fit = evaluate(pop)
        evaluations += n_pop
        if np.isfinite(fit).any():
            break
        log.info("initial population %d has no feasible gene", attempt)
    else:
        raise ScenarioInfeasible(f"scenario infeasible: no feasible gene in {params.init_retries} random populations")

    def rank(pop, fit):
        # stable: ties keep population order
        order = np.argsort(-fit, kind="stable")
        return pop[order], fit[order]

    pop, fit = rank(pop, fit)
    history = [float(fit[0])]
    history_genes = [pop[0].copy()]
    stale = 0
    gen = 0
    reason = "max_generations"
    while gen < params.max_generations:
        if stale >= params.stagnation:
            reason = "stagnation"
            break
        gen += 1
        n_par = min(params.parents, int(np.isfinite(fit).sum()))
        parents, pfit = pop[:n_par], fit[:n_par]
        n_child = n_pop - n_par
        a = rng.integers(0, n_par, size=n_child)
        b = rng.integers(0, n_par, size=n_child)
        mask = rng.random((n_child, k)) < 0.5
        children = np.where(mask, parents[a], parents[b])
        mutate = rng.random((n_child, k)) < params.mutation_prob
        children = children + mutate * rng.normal(size=(n_child, k)) * sigma
        children = np.clip(children, lower, upper)
        cfit = evaluate(children)
        evaluations += n_child
        pop, fit = rank(np.vstack([parents, children]), np.concatenate([pfit, cfit]))
        if fit[0] > history[-1]:
            stale = 0
        else:
            stale += 1
        history.append(float(fit[0]))
        history_genes.append(pop[0].copy())
    return GARun(pop[0].copy(), float(fit[0]), history, history_genes, gen, reason, evaluations)


# -- scenario fitness ------------------------------------------------------


@dataclass
class GoalState:
    label: str
    step: int
    q: np.ndarray
    goodness: float  # min over the goal's arms
    arm_goodness: dict = field(default_factory=dict)
    candidates: dict = field(default_factory=dict)  # arm -> number of candidates


@dataclass
class SeedResult:
    scenario: str
    best_gene: np.ndarray
    fitness: float
    states: list[GoalState]
    history: list[float]
    history_genes: list[np.ndarray]
    generations: int
    stop_reason: str
    rng_seed: int
    gene_names: list[str]

    def seeds(self) -> dict:
        return {s.step: s.q.copy() for s in self.states}

    def to_dict(self, joint_names) -> dict:
        return {
            "scenario": self.scenario,
            "rng_seed": self.rng_seed,
            "fitness": self.fitness,
            "generations": self.generations,
            "stop_reason": self.stop_reason,
            "gene_names": self.gene_names,
            "best_gene": [float(v) for v in self.best_gene],
            "joint_names": list(joint_names),
            "states": [
                {
                    "label": s.label,
                    "step": s.step,
                    "goodness": s.goodness,
                    "arm_goodness": s.arm_goodness,
                    "candidates": s.candidates,
                    "q": [float(v) for v in s.q],
                }
                for s in self.states
            ],
            "history": [{"generation": i, "best_fitness": f} for i, f in enumerate(self.history)],
        }


class FitnessEvaluator:
    """Scenario fitness with cached per-arm batch scorers."""

    def __init__(self, scenario: Scenario, threads: int = 1):
        self.sc = scenario
        self.threads = max(1, int(threads))
        chain = scenario.chain
        self.scorers = {
            arm: BatchScorer(chain, scenario.online_dof, chain.arm(arm).frames.hand, scenario.goodness) for arm in scenario.arms
        }
        self.maps = {arm: scenario.map_for(arm) for arm in scenario.arms}

    def _arm_best(self, q, arm, hand_world):
        """(best full state, goodness, candidate count) for one arm; goodness -inf if none."""
        sc = self.sc
        info = sc.chain.arm(arm)
        base = forward_kinematics(sc.chain, q, info.frames.arm_base)
        local = compose(inverse(base), hand_world)
        Q_arm, _, _, _ = candidate_arrays(self.maps[arm], sc.chain, arm, local, sc.query_radius)
        if Q_arm.shape[0] == 0:
            return None, NEG_INF, 0
        Q = np.repeat(q[None, :], Q_arm.shape[0], axis=0)
        Q[:, info.joints] = Q_arm
        g = self.scorers[arm](Q)
        i = int(np.argmax(g))  # first maximum: nearest center wins ties
        return Q[i], float(g[i]), Q_arm.shape[0]

    def goal_states(self, gene) -> list[GoalState] | None:
        sc = self.sc
        out = []
        for gi, goal in enumerate(sc.goals):
            q = sc.state_for_goal(gene, gi)
            arm_g, counts = {}, {}
            for arm, hand in goal.hands.items():
                best, g, n = self._arm_best(q, arm, hand)
                counts[arm] = n
                if best is None:
                    return None
                info = sc.chain.arm(arm)
                q[info.joints] = best[info.joints]
                arm_g[arm] = g
            out.append(GoalState(goal.label, goal.step, q, min(arm_g.values()), arm_g, counts))
        return out

    def fitness(self, gene) -> float:
        states = self.goal_states(gene)
        if states is None:
            return NEG_INF
        return min(self.sc.weight(i) * s.goodness for i, s in enumerate(states))

    def __call__(self, G) -> np.ndarray:
        G = np.atleast_2d(G)
        if self.threads > 1 and G.shape[0] > 1:
            with ThreadPoolExecutor(max_workers=self.threads) as ex:
                return np.array(list(ex.map(self.fitness, G)))
        return np.array([self.fitness(g) for g in G])


def gene_names(scenario: Scenario) -> list[str]:
    names = []
    for s in scenario.slots:
        n = scenario.chain.joint_names[s.joint]
        names.append(n if s.goal is None else f"{n}@{scenario.goals[s.goal].label}")
    return names


def fitness(scenario: Scenario, gene) -> float:
    return FitnessEvaluator(scenario).fitness(np.asarray(gene, dtype=float))


def goal_states(scenario: Scenario, gene) -> list[GoalState]:
    states = FitnessEvaluator(scenario).goal_states(np.asarray(gene, dtype=float))
    if states is None:
        raise ScenarioInfeasible("gene does not reach every goal")
    return states


def evolve(scenario: Scenario, seed: int | None = None, threads: int = 1) -> SeedResult:
    ev = FitnessEvaluator(scenario, threads)
    seed = scenario.ga.rng_seed if seed is None else int(seed)
    run = run_ga(ev, scenario.gene_lower, scenario.gene_upper, scenario.ga, seed)
    states = ev.goal_states(run.best_gene)
    log.info("GA finished after %d generations (%s): fitness %.6g", run.generations, run.stop_reason, run.best_fitness)
    return SeedResult(
        scenario=scenario.name,
        best_gene=run.best_gene,
        fitness=run.best_fitness,
        states=states,
        history=run.history,
        history_genes=run.history_genes,
        generations=run.generations,
        stop_reason=run.stop_reason,
        rng_seed=seed,
        gene_names=gene_names(scenario),
    )


def snapshot(scenario: Scenario, result: SeedResult, generation: int) -> SeedResult:
    """The best-so-far seeds as they stood after ``generation``."""
    if not 0 <= generation < len(result.history):
        raise ValueError(f"generation {generation} not in 0..{len(result.history) - 1}")
    gene = result.history_genes[generation]
    states = goal_states(scenario, gene)
    return SeedResult(
        scenario=result.scenario,
        best_gene=gene.copy(),
        fitness=result.history[generation],
        states=states,
        history=result.history[: generation + 1],
        history_genes=result.history_genes[: generation + 1],
        generations=generation,
        stop_reason="snapshot",
        rng_seed=result.rng_seed,
        gene_names=result.gene_names,
    )
