"""Configuration utilities for GRAIL.

Experiments are described by INI files. Bundled presets live in the
``presets`` directory next to this module; a file may name one with
``preset = <name>`` in ``[experiment]`` and override any of its keys.
User-level defaults (``output_dir``, ``workers``) can be set in
``config.ini`` inside the per-user configuration directory.
"""

from __future__ import annotations

import os
from configparser import ConfigParser, Error as ConfigParserError
from dataclasses import dataclass, field, replace
from functools import lru_cache
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple, Union

from .core import GoalId
from .demogen import GRID_REGIMES, ROUTE_CHOICES, BiasSpec, NoiseSpec, TurnInsertionSpec
from .envs import GridEnv, GridSpec, GridState, ReachEnv, ReachSpec
from .errors import ConfigError, ContractViolation
from .learners import LEARNERS, AdversarialParams, BcParams, PpoParams, QParams
from .scoring import SHORT_NAMES, ScoreMetric

_APP_DIR_NAME = "GRAIL"
_SECTION = "grail"
_PRESET_DIR = Path(__file__).parent / "presets"
DEFAULTS_PRESET = "defaults"

GOAL_PRESETS: Dict[str, Tuple[Tuple[int, int], ...]] = {
    "grid2": ((7, 1), (7, 7)),
    "grid4": ((7, 1), (7, 7), (7, 3), (7, 5)),
    "grid6": ((7, 1), (7, 7), (7, 3), (7, 5), (5, 1), (5, 7)),
}
REACH_REGIMES = ("optimal", "gaussian", "uniform")


def get_config_dir() -> str:
    """Return the user-specific configuration directory.

    On Windows, uses %APPDATA% (Roaming). On other OSes, uses XDG_CONFIG_HOME
    or ~/.config.
    """
    if os.name == "nt":
        base = os.getenv("APPDATA") or os.path.join(os.path.expanduser("~"), "AppData", "Roaming")
    else:
        base = os.getenv("XDG_CONFIG_HOME") or os.path.join(os.path.expanduser("~"), ".config")
    return os.path.join(base, _APP_DIR_NAME)


def get_config_path() -> str:
    return os.path.join(get_config_dir(), "config.ini")


def read_config() -> Dict[str, Optional[str]]:
    """Read user-level defaults from the INI file.

    Returns a dict with keys: 'output_dir', 'workers'. Missing keys map to None.
    """
    parser = ConfigParser()
    parser.read(get_config_path(), encoding="utf-8")
    output_dir = parser.get(_SECTION, "output_dir", fallback=None)
    workers = parser.get(_SECTION, "workers", fallback=None)
    return {"output_dir": output_dir, "workers": workers}


def list_presets() -> List[str]:
    return sorted(p.stem for p in _PRESET_DIR.glob("*.ini") if p.stem != DEFAULTS_PRESET)


@lru_cache
def read_preset(name: str) -> str:
    """Read and cache a bundled preset.

    Raises:
        ConfigError: If no preset has that name.
    """
    path = _PRESET_DIR / f"{name}.ini"
    if not path.is_file():
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(list_presets())}")
    return path.read_text(encoding="utf-8")


def _new_parser() -> ConfigParser:
    return ConfigParser(inline_comment_prefixes=("#",))


@dataclass(frozen=True)
class ExperimentConfig:
    """A fully resolved experiment description.

    Attributes:
        env (str): ``grid`` or ``reach``.
        goal_set (str): Preset name of the goal set, or ``custom``.
        goals (tuple[GoalId, ...]): Candidate goals in index order.
        regime (str): Demonstration regime.
        routes (str): ``lexicographic`` or ``distinct`` shortest plans for the
            optimal and suboptimal grid regimes.
        learners (tuple[str, ...]): Learners to train.
        metrics (tuple[ScoreMetric, ...]): Scoring rules to evaluate.
        fractions (tuple[float, ...]): Observability fractions.
        seeds (int): Independent repetitions.
        demos_dir (Path | None): Read demonstrations from files written by
            ``gen-demos`` instead of generating them.
        text (str): The merged INI text, recorded in result manifests.
    """

    env: str = "grid"
    goal_set: str = "grid2"
    goals: Tuple[GoalId, ...] = ()
    regime: str = "optimal"
    noise_level: float = 0.0
    learners: Tuple[str, ...] = ("bc",)
    metrics: Tuple[ScoreMetric, ...] = (ScoreMetric(),)
    fractions: Tuple[float, ...] = (0.1, 0.3, 0.5)
    demos_per_goal: int = 10
    train_per_goal: int = 7
    test_per_goal: int = 3
    seeds: int = 10
    master_seed: int = 0
    output_dir: Path = Path("results")
    demos_dir: Optional[Path] = None
    workers: int = 1
    posterior_temperature: float = 1.0
    grid: GridSpec = field(default_factory=GridSpec)
    reach: ReachSpec = field(default_factory=ReachSpec)
    bias: BiasSpec = field(default_factory=BiasSpec)
    insertion: TurnInsertionSpec = field(default_factory=TurnInsertionSpec)
    routes: str = "lexicographic"
    bc: BcParams = field(default_factory=BcParams)
    gail: AdversarialParams = field(default_factory=AdversarialParams)
    airl: AdversarialParams = field(default_factory=AdversarialParams)
    qlearning: QParams = field(default_factory=QParams)
    ppo: PpoParams = field(default_factory=PpoParams)
    text: str = ""

    @property
    def horizon(self) -> int:
        return self.grid.horizon if self.env == "grid" else self.reach.horizon

    def learner_params(self, name: str) -> Any:
        return getattr(self, name)

    def noise(self) -> Optional[NoiseSpec]:
        if self.env != "reach" or self.regime == "optimal":
            return None
        return NoiseSpec(self.regime, self.noise_level)

    def make_env(self, goal: GoalId) -> Union[GridEnv, ReachEnv]:
        if self.env == "grid":
            return GridEnv(self.grid, goal)
        return ReachEnv(self.reach, goal)

    def with_output_dir(self, path: Union[str, Path]) -> "ExperimentConfig":
        return replace(self, output_dir=Path(path))

    def with_demos_dir(self, path: Union[str, Path]) -> "ExperimentConfig":
        return replace(self, demos_dir=Path(path))

    def summary(self) -> Dict[str, Any]:
        return {
            "env": self.env,
            "goal_set": self.goal_set,
            "goals": [g.label for g in self.goals],
            "regime": self.regime,
            "noise_level": self.noise_level,
            "learners": list(self.learners),
            "metrics": [m.describe() for m in self.metrics],
            "fractions": list(self.fractions),
            "demos_per_goal": self.demos_per_goal,
            "train_per_goal": self.train_per_goal,
            "test_per_goal": self.test_per_goal,
            "seeds": self.seeds,
            "master_seed": self.master_seed,
        }


class _Reader:
    """Typed access to a parser that collects problems instead of stopping at the first."""

    def __init__(self, parser: ConfigParser) -> None:
        self.parser = parser
        self.problems: List[str] = []

    def get(self, section: str, key: str, convert: Callable[[str], Any], default: Any) -> Any:
        raw = self.parser.get(section, key, fallback=None)
        if raw is None or raw.strip() == "":
            return default
        try:
            return convert(raw.strip())
        except (ValueError, TypeError) as exc:
            self.problems.append(f"[{section}] {key} = {raw!r}: {exc}")
            return default

    def build(self, what: str, factory: Callable[..., Any], default: Any, **kwargs: Any) -> Any:
        try:
            return factory(**kwargs)
        except ContractViolation as exc:
            self.problems.append(f"{what}: {exc}")
            return default


def _csv(raw: str) -> Tuple[str, ...]:
    return tuple(item.strip() for item in raw.split(",") if item.strip())


def _ints(raw: str) -> Tuple[int, ...]:
    return tuple(int(v) for v in _csv(raw))


def _floats(raw: str) -> Tuple[float, ...]:
    return tuple(float(v) for v in _csv(raw))


def _points(raw: str) -> Tuple[Tuple[float, float, float], ...]:
    points = []
    for chunk in raw.split(";"):
        if chunk.strip():
            values = _floats(chunk)
            if len(values) != 3:
                raise ValueError(f"reach goal {chunk.strip()!r} needs three coordinates")
            points.append(values)
    return tuple(points)


def _ppo_kwargs(r: _Reader, section: str, base: PpoParams) -> Dict[str, Any]:
    return {
        "clip": r.get(section, "clip", float, base.clip),
        "gamma": r.get(section, "gamma", float, base.gamma),
        "lr": r.get(section, "lr", float, base.lr),
        "table_lr": r.get(section, "table_lr", float, base.table_lr),
        "epochs": r.get(section, "epochs", int, base.epochs),
        "batch": r.get(section, "batch", int, base.batch),
        "rounds": r.get(section, "rounds", int, base.rounds),
        "steps_per_round": r.get(section, "steps_per_round", int, base.steps_per_round),
        "init_log_scale": r.get(section, "init_log_scale", float, base.init_log_scale),
        "hidden": r.get(section, "hidden", _ints, base.hidden),
    }


def _adversarial(r: _Reader, section: str) -> AdversarialParams:
    base = AdversarialParams()
    policy = r.build(f"[{section}]", PpoParams, base.policy, **_ppo_kwargs(r, section, base.policy))
    return r.build(
        f"[{section}]", AdversarialParams, base,
        disc_lr=r.get(section, "disc_lr", float, base.disc_lr),
        disc_updates_per_round=r.get(section, "disc_updates_per_round", int, base.disc_updates_per_round),
        replay_capacity=r.get(section, "replay_capacity", int, base.replay_capacity),
        demo_batch=r.get(section, "demo_batch", int, base.demo_batch),
        policy=policy,
    )


def _resolve_goals(r: _Reader, env: str, raw: str, reach: ReachSpec) -> Tuple[str, Tuple[GoalId, ...]]:
    if raw in GOAL_PRESETS:
        if env != "grid":
            r.problems.append(f"goal preset {raw} is for the grid environment")
            return raw, ()
        return raw, tuple(GoalId.grid(i, x, y) for i, (x, y) in enumerate(GOAL_PRESETS[raw]))
    if raw == "reach4":
        if env != "reach":
            r.problems.append("goal preset reach4 is for the reach environment")
            return raw, ()
        return raw, tuple(GoalId.reach(i) for i in range(len(reach.goals)))
    labels = _csv(raw)
    goals = []
    for i, label in enumerate(labels):
        try:
            goal = GoalId(i, label)
            if env == "grid":
                goal.cell
            else:
                goal.target
        except ContractViolation as exc:
            r.problems.append(f"[experiment] goals: {exc}")
            continue
        goals.append(goal)
    return "custom", tuple(goals)


def parse_config(parser: ConfigParser, text: str = "") -> ExperimentConfig:
    """Build and validate an :class:`ExperimentConfig` from a parsed INI.

    Raises:
        ConfigError: Listing every problem found.
    """
    r = _Reader(parser)
    d = ExperimentConfig()
    e = "experiment"
    env = r.get(e, "env", str, d.env)
    if env not in ("grid", "reach"):
        r.problems.append(f"[experiment] env must be grid or reach, got {env!r}")

    gd = GridSpec()
    start = r.get("grid", "start", _ints, tuple(gd.start))
    if len(start) != 3:
        r.problems.append(f"[grid] start needs x, y, dir; got {list(start)}")
    grid = r.build("[grid]", GridSpec, gd,
                   width=r.get("grid", "width", int, gd.width),
                   height=r.get("grid", "height", int, gd.height),
                   obstacle=r.get("grid", "obstacle", _ints, gd.obstacle),
                   start=GridState(*start) if len(start) == 3 else gd.start,
                   max_steps=r.get("grid", "max_steps", int, gd.max_steps),
                   horizon=r.get("grid", "horizon", int, gd.horizon))
    insertion = r.build("[grid]", TurnInsertionSpec, TurnInsertionSpec(),
                        probability=r.get("grid", "insertion_probability", float, 0.5))
    routes = r.get("grid", "routes", str, d.routes)
    if routes not in ROUTE_CHOICES:
        r.problems.append(f"[grid] routes must be one of {ROUTE_CHOICES}, got {routes!r}")
    rd = ReachSpec()
    reach = r.build("[reach]", ReachSpec, rd,
                    start=r.get("reach", "start", _floats, rd.start),
                    step_scale=r.get("reach", "step_scale", float, rd.step_scale),
                    goals=r.get("reach", "goals", _points, rd.goals),
                    horizon=r.get("reach", "horizon", int, rd.horizon),
                    tolerance=r.get("reach", "tolerance", float, rd.tolerance),
                    feature_scale=r.get("reach", "feature_scale", float, rd.feature_scale))
    bias = r.build("[bias]", BiasSpec, BiasSpec(),
                   preferences=dict(parser.items("bias")) if parser.has_section("bias") else {})

    goal_set, goals = _resolve_goals(r, env, r.get(e, "goals", str, d.goal_set), reach)
    if not goals:
        r.problems.append("[experiment] goals is empty")
    if env == "grid" and goals:
        r.problems.extend(f"[experiment] goals: {p}" for p in grid.goal_violations(goals))
    if env == "reach":
        r.problems.extend(f"[experiment] goals: {g.label} is not a reach target"
                          for g in goals if g.target >= len(reach.goals))

    regime = r.get(e, "regime", str, d.regime)
    allowed = GRID_REGIMES if env == "grid" else REACH_REGIMES
    if regime not in allowed:
        r.problems.append(f"[experiment] regime for {env} must be one of {allowed}, got {regime!r}")
    noise_level = r.get(e, "noise_level", float, d.noise_level)
    if noise_level < 0:
        r.problems.append("[experiment] noise_level must be non-negative")

    learners = r.get(e, "learners", _csv, d.learners)
    unknown = [name for name in learners if name not in LEARNERS]
    if unknown or not learners:
        r.problems.append(f"[experiment] learners must be a non-empty subset of {sorted(LEARNERS)}, got {list(learners)}")

    s = "scoring"
    metric_params = {
        "epsilon": r.get(s, "epsilon", float, 0.01),
        "samples": r.get(s, "samples", int, 16),
        "kl_direction": r.get(s, "kl_direction", str, "policy_first"),
        "tie_tolerance": r.get(s, "tie_tolerance", float, 0.0),
    }
    metrics = []
    for name in r.get(e, "metrics", _csv, ("mse",)):
        if name not in SHORT_NAMES and name not in SHORT_NAMES.values():
            r.problems.append(f"[experiment] unknown metric {name!r}; expected one of {sorted(SHORT_NAMES)}")
            continue
        metric = r.build("[scoring]", ScoreMetric.from_name, None, name=name, **metric_params)
        if metric is not None:
            metrics.append(metric)
    if not metrics:
        r.problems.append("[experiment] metrics is empty")

    fractions = r.get(e, "fractions", _floats, d.fractions)
    if not fractions or any(not 0.0 < f <= 1.0 for f in fractions):
        r.problems.append(f"[experiment] fractions must lie in (0, 1], got {list(fractions)}")

    default_demos = (d.demos_per_goal, d.train_per_goal, d.test_per_goal) if env == "grid" else (200, 150, 50)
    demos_per_goal = r.get(e, "demos_per_goal", int, default_demos[0])
    train_per_goal = r.get(e, "train_per_goal", int, default_demos[1])
    test_per_goal = r.get(e, "test_per_goal", int, default_demos[2])
    if train_per_goal < 1 or test_per_goal < 1 or train_per_goal + test_per_goal != demos_per_goal:
        r.problems.append(
            f"[experiment] train_per_goal ({train_per_goal}) + test_per_goal ({test_per_goal}) "
            f"must equal demos_per_goal ({demos_per_goal}), both at least 1"
        )
    master_seed = r.get(e, "master_seed", int, d.master_seed)
    seeds = r.get(e, "seeds", int, d.seeds)
    if seeds < 1:
        r.problems.append("[experiment] seeds must be at least 1")
    workers = r.get(e, "workers", int, d.workers)
    if workers < 1:
        r.problems.append("[experiment] workers must be at least 1")
    posterior_temperature = r.get(s, "posterior_temperature", float, d.posterior_temperature)
    if posterior_temperature <= 0:
        r.problems.append("[scoring] posterior_temperature must be positive")

    bd = BcParams()
    bc = r.build("[bc]", BcParams, bd,
                 batch=r.get("bc", "batch", int, bd.batch),
                 lr=r.get("bc", "lr", float, bd.lr),
                 epochs=r.get("bc", "epochs", int, bd.epochs),
                 laplace=r.get("bc", "laplace", float, bd.laplace),
                 hidden=r.get("bc", "hidden", _ints, bd.hidden))
    qd = QParams()
    qlearning = r.build("[qlearning]", QParams, qd,
                        alpha=r.get("qlearning", "alpha", float, qd.alpha),
                        epsilon=r.get("qlearning", "epsilon", float, qd.epsilon),
                        gamma=r.get("qlearning", "gamma", float, qd.gamma),
                        episodes=r.get("qlearning", "episodes", int, qd.episodes),
                        temperature=r.get("qlearning", "temperature", float, qd.temperature))
    ppo = r.build("[ppo]", PpoParams, PpoParams(), **_ppo_kwargs(r, "ppo", PpoParams()))
    gail = _adversarial(r, "gail")
    airl = _adversarial(r, "airl")

    if r.problems:
        raise ConfigError("invalid experiment config:\n  - " + "\n  - ".join(r.problems))
    return ExperimentConfig(
        env=env, goal_set=goal_set, goals=goals, regime=regime, noise_level=noise_level,
        learners=tuple(learners), metrics=tuple(metrics), fractions=tuple(fractions),
        demos_per_goal=demos_per_goal, train_per_goal=train_per_goal, test_per_goal=test_per_goal,
        seeds=seeds, master_seed=master_seed,
        output_dir=Path(r.get(e, "output_dir", str, str(d.output_dir))), workers=workers,
        posterior_temperature=posterior_temperature, grid=grid, reach=reach, bias=bias,
        insertion=insertion, routes=routes, bc=bc, gail=gail, airl=airl, qlearning=qlearning, ppo=ppo, text=text,
    )


def _merged_text(parser: ConfigParser) -> str:
    lines = []
    for section in parser.sections():
        lines.append(f"[{section}]")
        lines.extend(f"{k} = {v}" for k, v in parser.items(section))
        lines.append("")
    return "\n".join(lines)


def load_config(path: Optional[Union[str, Path]] = None, text: Optional[str] = None,
                preset: Optional[str] = None) -> ExperimentConfig:
    """Resolve an experiment config.

    Layers, later ones winning: bundled defaults, user ``config.ini``
    (``output_dir``, ``workers``), the named preset, then the file or text.

    Args:
        path: INI file to read.
        text: INI text (used instead of ``path``).
        preset: Preset to apply when the file does not name one.

    Raises:
        ConfigError: If the file is unreadable or the result is invalid.
    """
    if path is not None:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
    text = text or ""
    try:
        own = _new_parser()
        own.read_string(text)
        preset = own.get("experiment", "preset", fallback=None) or preset
        parser = _new_parser()
        parser.read_string(read_preset(DEFAULTS_PRESET))
        user = read_config()
        for key, value in user.items():
            if value is not None:
                parser.set("experiment", key, value)
        if preset:
            parser.read_string(read_preset(preset))
        parser.read_string(text)
    except ConfigParserError as exc:
        raise ConfigError(f"cannot parse config: {exc}") from exc
    return parse_config(parser, _merged_text(parser))
