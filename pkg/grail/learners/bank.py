"""Policy banks: one trained policy per goal, plus their on-disk layout.

A saved bank is a directory with one ``{learner}_{goal}.policy`` JSON file per
goal and a ``bank.json`` manifest listing every file with its SHA-256 digest.
"""

from __future__ import annotations

import hashlib
import json
import logging
import time
from concurrent.futures import Future, ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

from ..core import DemoSet, GoalId, Policy, RngStream
from ..errors import BankVersionError, ContractViolation, CorruptBank, GoalTrainingError
from .base import Learner
from .policies import policy_from_record, policy_to_record

log = logging.getLogger(__name__)

MANIFEST_NAME = "bank.json"
MANIFEST_VERSION = 1


@dataclass
class PolicyBank:
    """Trained policies keyed by goal, with training metadata.

    Attributes:
        learner (str): Learner registry name.
        env_kind (str): Environment the policies act in.
        goals (tuple[GoalId, ...]): Goals in index order.
        policies (dict[GoalId, Policy]): One policy per goal.
        hyperparams (dict): Hyperparameters used for training.
        master_seed (int): Seed the per-goal streams derive from.
        train_seconds (dict[GoalId, float]): Wall-clock training time per goal.
        env_calls (dict[GoalId, int]): Environment transitions used per goal.
        reward_heads (dict): AIRL reward heads; never persisted.
    """

    learner: str
    env_kind: str
    goals: Tuple[GoalId, ...]
    policies: Dict[GoalId, Policy]
    hyperparams: Dict[str, Any] = field(default_factory=dict)
    master_seed: int = 0
    train_seconds: Dict[GoalId, float] = field(default_factory=dict)
    env_calls: Dict[GoalId, int] = field(default_factory=dict)
    reward_heads: Dict[GoalId, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.goals:
            raise ContractViolation("a policy bank needs at least one goal")
        missing = [g.label for g in self.goals if g not in self.policies]
        if missing:
            raise ContractViolation(f"bank has no policy for {', '.join(missing)}")

    def __len__(self) -> int:
        return len(self.goals)

    def __getitem__(self, goal: GoalId) -> Policy:
        return self.policies[goal]

    @property
    def kind(self) -> str:
        return self.policies[self.goals[0]].kind

    @property
    def policy_calls(self) -> int:
        return sum(p.calls for p in self.policies.values())

    @property
    def total_env_calls(self) -> int:
        return sum(self.env_calls.values())


def _train_goal(learner: Learner, goal: GoalId, make_env: Callable[[GoalId], Any], demos: Optional[DemoSet],
                master_seed: int) -> Tuple[Policy, float, int]:
    env = make_env(goal)
    rng = RngStream(master_seed, f"train/{goal.label}")
    trajectories = demos.per_goal.get(goal, ()) if learner.uses_demos and demos is not None else ()
    if learner.uses_demos and not trajectories:
        raise GoalTrainingError(goal.label, ContractViolation("no demonstrations"))
    started = time.perf_counter()
    try:
        policy = learner.fit(goal, trajectories, env, rng)
    except Exception as exc:
        raise GoalTrainingError(goal.label, exc) from exc
    return policy, time.perf_counter() - started, getattr(env, "calls", 0)


def _report(learner: str, goal: GoalId, seconds: float, calls: int) -> None:
    log.info("Trained %s policy for %s in %.2fs (%d env interactions)", learner, goal, seconds, calls)


def _log_finished(learner: str, goal: GoalId) -> Callable[[Future], None]:
    def finished(future: Future) -> None:
        if future.exception() is None:
            _, seconds, calls = future.result()
            _report(learner, goal, seconds, calls)
    return finished


def train_bank(learner: Learner, goals: Sequence[GoalId], make_env: Callable[[GoalId], Any],
               demos: Optional[DemoSet], master_seed: int, workers: int = 1) -> PolicyBank:
    """Train one policy per goal on stream ``train/<goal>``.

    Args:
        learner (Learner): Configured learner.
        goals (Sequence[GoalId]): Goals to train, any order.
        make_env (Callable): Builds a fresh environment bound to a goal.
        demos (DemoSet | None): Training demonstrations (offline learners).
        master_seed (int): Seed the per-goal streams derive from.
        workers (int): Concurrent trainings; results do not depend on it.

    Raises:
        GoalTrainingError: If any goal fails; names the first failing goal.
    """
    goals = tuple(sorted(goals, key=lambda g: g.index))
    results: Dict[GoalId, Tuple[Policy, float, int]] = {}
    if workers <= 1:
        for goal in goals:
            results[goal] = _train_goal(learner, goal, make_env, demos, master_seed)
            _report(learner.name, goal, results[goal][1], results[goal][2])
    else:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            futures = {}
            for goal in goals:
                future = executor.submit(_train_goal, learner, goal, make_env, demos, master_seed)
                future.add_done_callback(_log_finished(learner.name, goal))
                futures[goal] = future
            for goal in goals:
                results[goal] = futures[goal].result()
    bank = PolicyBank(
        learner=learner.name,
        env_kind=make_env(goals[0]).kind,
        goals=goals,
        policies={g: results[g][0] for g in goals},
        hyperparams=learner.hyperparams(),
        master_seed=master_seed,
        train_seconds={g: results[g][1] for g in goals},
        env_calls={g: results[g][2] for g in goals},
    )
    bank.reward_heads.update(getattr(learner, "reward_heads", {}))
    return bank


def policy_file_name(learner: str, goal: GoalId) -> str:
    return f"{learner}_{goal.label}.policy"


def _dumps(record: Dict[str, Any]) -> bytes:
    return json.dumps(record, sort_keys=True, separators=(",", ":")).encode("utf-8")


def save_bank(bank: PolicyBank, path: Union[str, Path]) -> Path:
    """Write every policy file, then the manifest."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    entries: List[Dict[str, Any]] = []
    for goal in bank.goals:
        meta = {
            "learner": bank.learner,
            "goal": goal.label,
            "hyperparams": bank.hyperparams,
            "seed": bank.master_seed,
            "train_seconds": bank.train_seconds.get(goal, 0.0),
        }
        payload = _dumps(policy_to_record(bank.policies[goal], meta))
        name = policy_file_name(bank.learner, goal)
        (path / name).write_bytes(payload)
        entries.append({
            "index": goal.index,
            "label": goal.label,
            "file": name,
            "sha256": hashlib.sha256(payload).hexdigest(),
            "train_seconds": bank.train_seconds.get(goal, 0.0),
            "env_calls": bank.env_calls.get(goal, 0),
        })
    manifest = {
        "version": MANIFEST_VERSION,
        "learner": bank.learner,
        "env": bank.env_kind,
        "master_seed": bank.master_seed,
        "hyperparams": bank.hyperparams,
        "goals": entries,
    }
    (path / MANIFEST_NAME).write_text(json.dumps(manifest, indent=2, sort_keys=True), encoding="utf-8")
    log.info("Saved %s bank with %d goals to %s", bank.learner, len(entries), path)
    return path


def load_bank(path: Union[str, Path]) -> PolicyBank:
    """Load and verify a bank; nothing is returned unless every file checks out.

    Raises:
        CorruptBank: Unreadable manifest, missing goal file, digest mismatch or
            malformed policy record (names the goal where one is involved).
        BankVersionError: Unknown manifest version or policy format.
    """
    path = Path(path)
    try:
        manifest = json.loads((path / MANIFEST_NAME).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise CorruptBank(f"cannot read bank manifest in {path}: {exc}") from exc
    if manifest.get("version") != MANIFEST_VERSION:
        raise BankVersionError(f"unsupported bank manifest version {manifest.get('version')!r}")
    policies: Dict[GoalId, Policy] = {}
    seconds: Dict[GoalId, float] = {}
    calls: Dict[GoalId, int] = {}
    try:
        entries = manifest["goals"]
        for entry in entries:
            goal = GoalId(int(entry["index"]), entry["label"])
            file = path / entry["file"]
            if not file.is_file():
                raise CorruptBank(f"policy file for goal {goal.label} is missing", goal=goal.label)
            payload = file.read_bytes()
            if hashlib.sha256(payload).hexdigest() != entry["sha256"]:
                raise CorruptBank(f"digest mismatch for goal {goal.label}", goal=goal.label)
            try:
                record = json.loads(payload.decode("utf-8"))
            except (UnicodeDecodeError, json.JSONDecodeError) as exc:
                raise CorruptBank(f"policy file for goal {goal.label} is unreadable: {exc}", goal=goal.label) from exc
            policies[goal] = policy_from_record(record)
            seconds[goal] = float(entry.get("train_seconds", 0.0))
            calls[goal] = int(entry.get("env_calls", 0))
        return PolicyBank(
            learner=manifest["learner"],
            env_kind=manifest["env"],
            goals=tuple(sorted(policies, key=lambda g: g.index)),
            policies=policies,
            hyperparams=manifest.get("hyperparams", {}),
            master_seed=int(manifest["master_seed"]),
            train_seconds=seconds,
            env_calls=calls,
        )
    except ContractViolation as exc:
        raise CorruptBank(f"bank in {path} is inconsistent: {exc}") from exc
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptBank(f"malformed bank manifest in {path}: {exc}") from exc
