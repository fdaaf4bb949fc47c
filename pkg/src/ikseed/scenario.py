"""Seed-generation scenarios: goals, gene layout and solver settings.

A scenario file is JSON. Paths inside it are relative to the file itself.
The trajectory is ``via_points`` when present, otherwise the goals in order;
each goal names the trajectory step it seeds.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .chain import KinematicChain, load_chain_file
from .goodness import GoodnessParams
from .ik import Target, Tolerances
from .reachability import DEFAULT_RADIUS, ReachabilityMap, load_map
from .transforms import PoseError, pose_from_dict


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class GeneVar:
    dof: str
    lo: float
    hi: float
    per_goal: bool = False


@dataclass(frozen=True)
class GeneSlot:
    """One entry of the flat gene vector."""

    joint: int
    lo: float
    hi: float
    goal: int | None  # None: shared by all goals


@dataclass(frozen=True)
class Step:
    label: str
    hands: dict  # arm -> Pose in world frame


@dataclass(frozen=True)
class Goal:
    label: str
    step: int
    hands: dict


@dataclass(frozen=True)
class GAParams:
    population: int = 50
    parents: int = 10
    max_generations: int = 300
    stagnation: int = 100
    mutation_prob: float = 0.1
    mutation_sigma: float = 0.05  # fraction of each variable's range
    init_retries: int = 10
    rng_seed: int = 0

    def __post_init__(self):
        if not 1 <= self.parents <= self.population:
            raise ScenarioError("need 1 <= parents <= population")
        if self.max_generations < 0 or self.stagnation < 1:
            raise ScenarioError("max_generations must be >= 0 and stagnation >= 1")
        if not 0 <= self.mutation_prob <= 1 or self.mutation_sigma < 0:
            raise ScenarioError("bad mutation settings")
        if self.init_retries < 1:
            raise ScenarioError("init_retries must be >= 1")


@dataclass(frozen=True)
class IKSettings:
    tolerances: Tolerances = Tolerances()
    max_iterations: int = 200
    damping: float = 1e-3


@dataclass(eq=False)
class Scenario:
    name: str
    chain: KinematicChain
    steps: list[Step]
    goals: list[Goal]
    gene_vars: list[GeneVar]
    fixed_dof: dict
    coupled_dof: list[str]
    online_dof: np.ndarray
    goodness: GoodnessParams
    ga: GAParams
    query_radius: float
    ik: IKSettings = IKSettings()
    goal_weights: dict | None = None
    perturbation: dict = field(default_factory=dict)
    map_paths: dict = field(default_factory=dict)
    map_build: dict = field(default_factory=dict)
    robot_path: Path | None = None
    source: dict = field(default_factory=dict)
    path: Path | None = None

    def __post_init__(self):
        self.slots = self._layout()
        self.base_state = self._base_state()
        self._maps: dict[str, ReachabilityMap] = {}

    # -- layout ------------------------------------------------------------

    def _layout(self) -> list[GeneSlot]:
        slots = []
        for v in self.gene_vars:
            j = self.chain.index(v.dof)
            if v.per_goal:
                slots.extend(GeneSlot(j, v.lo, v.hi, g) for g in range(len(self.goals)))
            else:
                slots.append(GeneSlot(j, v.lo, v.hi, None))
        return slots

    def _base_state(self) -> np.ndarray:
        # joints the scenario does not mention rest at zero, pulled into limits
        q = self.chain.clamp(np.zeros(self.chain.dof))
        for name, v in self.fixed_dof.items():
            q[self.chain.index(name)] = v
        return q

    @property
    def gene_size(self) -> int:
        return len(self.slots)

    @property
    def gene_lower(self) -> np.ndarray:
        return np.array([s.lo for s in self.slots])

    @property
    def gene_upper(self) -> np.ndarray:
        return np.array([s.hi for s in self.slots])

    @property
    def arms(self) -> list[str]:
        seen = []
        for st in self.steps:
            for a in st.hands:
                if a not in seen:
                    seen.append(a)
        return seen

    def state_for_goal(self, gene, g: int) -> np.ndarray:
        """Trunk/base state of goal ``g``: base state, gene values, couplings."""
        q = self.base_state.copy()
        for s, v in zip(self.slots, gene):
            if s.goal is None or s.goal == g:
                q[s.joint] = v
        if self.coupled_dof:
            q = self.chain.apply_couplings(q, self.coupled_dof)
        return q

    def weight(self, g: int) -> float:
        if not self.goal_weights:
            return 1.0
        return float(self.goal_weights.get(self.goals[g].label, 1.0))

    # -- trajectory --------------------------------------------------------

    def targets(self, k: int) -> tuple[Target, ...]:
        return tuple(Target(self.chain.arm(a).frames.hand, p) for a, p in self.steps[k].hands.items())

    @property
    def seeded_steps(self) -> list[int]:
        return [g.step for g in self.goals]

    # -- maps --------------------------------------------------------------

    def map_for(self, arm: str) -> ReachabilityMap:
        m = self._maps.get(arm)
        if m is None:
            path = self.map_paths.get(arm)
            if path is None:
                raise ScenarioError(f"no reachability map configured for arm {arm!r}")
            if not Path(path).exists():
                raise FileNotFoundError(f"reachability map {path} not found; run build-map first")
            m = load_map(path, self.chain)
            self._maps[arm] = m
        return m

    def set_map(self, arm: str, m: ReachabilityMap) -> None:
        self._maps[arm] = m


def _pose(raw, where):
    try:
        return pose_from_dict(raw).validate()
    except PoseError as exc:
        raise ScenarioError(f"{where}: {exc}") from None


def _hands(raw, chain, where):
    if not isinstance(raw, dict) or not raw:
        raise ScenarioError(f"{where}: 'hands' must map arm names to poses")
    out = {}
    for arm, p in raw.items():
        try:
            chain.arm(arm)
        except (KeyError, ValueError) as exc:
            raise ScenarioError(f"{where}: unknown arm {arm!r}") from exc
        out[arm] = _pose(p, f"{where}.{arm}")
    return out


def _dof_names(chain, items):
    """Expand ``arm:<name>`` tokens into that arm's joints."""
    names = []
    for it in items:
        if isinstance(it, str) and it.startswith("arm:"):
            names.extend(chain.joint_names[i] for i in chain.arm(it[4:]).joints)
        else:
            names.append(it)
    return names


def scenario_from_dict(raw: dict, base_dir: Path | str = ".", chain: KinematicChain | None = None) -> Scenario:
    base_dir = Path(base_dir)
    try:
        robot_path = None
        if chain is None:
            robot_path = (base_dir / raw["robot"]).resolve()
            chain = load_chain_file(robot_path)
        steps_raw = raw.get("via_points")
        goals_raw = raw["goals"]
        if not goals_raw:
            raise ScenarioError("scenario needs at least one goal")
        if steps_raw is None:
            steps = [Step(str(g.get("label", i)), _hands(g["hands"], chain, f"goals[{i}]")) for i, g in enumerate(goals_raw)]
            goals = [Goal(s.label, i, s.hands) for i, s in enumerate(steps)]
        else:
            steps = [Step(str(s.get("label", i)), _hands(s["hands"], chain, f"via_points[{i}]")) for i, s in enumerate(steps_raw)]
            goals = []
            for i, g in enumerate(goals_raw):
                k = int(g["step"])
                if not 0 <= k < len(steps):
                    raise ScenarioError(f"goals[{i}]: step {k} out of range")
                goals.append(Goal(str(g.get("label", steps[k].label)), k, steps[k].hands))
            if goals[0].step != 0:
                raise ScenarioError("the first goal must seed step 0")
        if sorted(g.step for g in goals) != [g.step for g in goals] or len({g.step for g in goals}) != len(goals):
            raise ScenarioError("goal steps must be strictly increasing")

        gene_vars = []
        for i, v in enumerate(raw.get("gene_vars", [])):
            lo, hi = (float(x) for x in v["range"])
            if not lo < hi:
                raise ScenarioError(f"gene_vars[{i}]: need lo < hi")
            j = chain.index(v["dof"])
            if lo < chain.lower[j] or hi > chain.upper[j]:
                raise ScenarioError(f"gene_vars[{i}]: range exceeds limits of {v['dof']!r}")
            gene_vars.append(GeneVar(v["dof"], lo, hi, bool(v.get("per_goal", False))))
        if not gene_vars:
            raise ScenarioError("scenario needs at least one gene variable")

        fixed = {}
        for name, val in raw.get("fixed_dof", {}).items():
            j = chain.index(name)
            if not chain.lower[j] <= val <= chain.upper[j]:
                raise ScenarioError(f"fixed_dof {name!r} outside its limits")
            fixed[name] = float(val)
        coupled = list(raw.get("coupled_dof", []))
        for name in coupled:
            if name not in chain.couplings:
                raise ScenarioError(f"coupled_dof {name!r} has no coupling in the robot model")
        online = chain.indices(_dof_names(chain, raw.get("online_dof", [])))
        if online.size == 0:
            raise ScenarioError("online_dof must not be empty")

        g = raw.get("goodness", {})
        goodness = GoodnessParams(
            d_max=float(g.get("d_max", 0.25)),
            w=float(g.get("w", 1.0)),
            d_max_per_joint=g.get("d_max_per_joint"),
        )
        ga = GAParams(**raw.get("ga", {}))
        ik_raw = raw.get("ik", {})
        ik = IKSettings(
            tolerances=Tolerances(float(ik_raw.get("position_tol", 1e-4)), float(ik_raw.get("orientation_tol", 1e-3))),
            max_iterations=int(ik_raw.get("max_iterations", 200)),
            damping=float(ik_raw.get("damping", 1e-3)),
        )
        radius = float(raw.get("query_radius", DEFAULT_RADIUS))
        if radius < 0:
            raise ScenarioError("query_radius must be non-negative")
        maps = {arm: (base_dir / p).resolve() for arm, p in raw.get("map", {}).items()}
        weights = raw.get("goal_weights")
        if weights:
            labels = {gl.label for gl in goals}
            if not set(weights) <= labels or any(not w > 0 for w in weights.values()):
                raise ScenarioError("goal_weights must be positive and name existing goals")
    except KeyError as exc:
        raise ScenarioError(f"missing or unknown entry: {exc}") from None
    except TypeError as exc:
        raise ScenarioError(f"malformed scenario: {exc}") from None
    sc = Scenario(
        name=str(raw.get("name", "scenario")),
        chain=chain,
        steps=steps,
        goals=goals,
        gene_vars=gene_vars,
        fixed_dof=fixed,
        coupled_dof=coupled,
        online_dof=online,
        goodness=goodness,
        ga=ga,
        query_radius=radius,
        ik=ik,
        goal_weights=weights,
        perturbation=dict(raw.get("perturbation", {})),
        map_paths=maps,
        map_build=dict(raw.get("map_build", {})),
        robot_path=robot_path,
        source=raw,
    )
    for arm in sc.arms:
        if not np.isin(chain.arm(arm).joints, online).all():
            raise ScenarioError(f"online_dof must include every joint of arm {arm!r}")
    return sc


def load_scenario(path, maps: dict | None = None) -> Scenario:
    """Load a scenario file; ``maps`` overrides per-arm map paths."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}: not valid JSON ({exc})") from None
    sc = scenario_from_dict(raw, path.parent)
    sc.path = path.resolve()
    for arm, p in (maps or {}).items():
        sc.map_paths[arm] = Path(p).resolve()
    return sc
