"""Experiment driver: demos, banks, recognition runs and result tables.

One experiment is a grid of learner x metric x observability fraction,
repeated over seeds. Each seed writes its own run file under ``runs/``;
``raw.csv``, ``predictions.csv``, ``aggregated.csv`` and ``manifest.json``
are reduced from those.
"""

from __future__ import annotations

import json
import logging
import platform
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import stats
from tqdm import tqdm

from . import __version__
from .config import ExperimentConfig
from .core import DemoSet, GoalId, RngStream, Trajectory, derive_seed, read_trajectories, write_trajectories
from .demogen import demo_file_name, distinct_plans, gen_grid_demos, gen_reach_demos, split_demos
from .envs import interactions
from .errors import ContractViolation, GrailError
from .learners import PolicyBank, QPolicy, make_learner, save_bank, train_bank
from .recognizer import Recognizer
from .scoring import ScoreMetric, supports

log = logging.getLogger(__name__)

RAW_COLUMNS = [
    "env", "regime", "goals", "learner", "metric", "fraction", "seed", "accuracy", "precision", "recall", "f1",
    "ties", "train_s", "infer_s", "env_calls_train", "env_calls_infer",
]
RUN_EXTRA_COLUMNS = ["micro_precision", "micro_recall", "micro_f1", "predictions"]
GROUP_COLUMNS = ["env", "regime", "goals", "learner", "metric", "fraction"]
SCORE_COLUMNS = ["accuracy", "precision", "recall", "f1", "micro_f1"]
PREDICTION_COLUMNS = [
    "seed", "learner", "metric", "fraction", "test_index", "true_goal", "predicted_goal", "tied", "scores",
    "prefix_length", "seconds",
]
_FLOAT_FORMAT = "%.6f"


def classification_metrics(pairs: Sequence[Tuple[GoalId, GoalId]], goals: Sequence[GoalId]) -> Dict[str, float]:
    """Accuracy plus macro- and micro-averaged precision, recall and F1.

    Per-class ratios with a zero denominator count as 0.

    Raises:
        ContractViolation: If ``pairs`` is empty or mentions a goal outside ``goals``.
    """
    if not pairs:
        raise ContractViolation("classification metrics need at least one prediction")
    labels = [g.label for g in goals]
    for true, predicted in pairs:
        for goal in (true, predicted):
            if goal.label not in labels:
                raise ContractViolation(f"goal {goal.label} is not in the goal set")
    tp = np.zeros(len(labels))
    fp = np.zeros(len(labels))
    fn = np.zeros(len(labels))
    for true, predicted in pairs:
        t, p = labels.index(true.label), labels.index(predicted.label)
        if t == p:
            tp[t] += 1
        else:
            fp[p] += 1
            fn[t] += 1

    def ratio(num: np.ndarray, den: np.ndarray) -> np.ndarray:
        return np.divide(num, den, out=np.zeros_like(num), where=den > 0)

    precision = ratio(tp, tp + fp)
    recall = ratio(tp, tp + fn)
    f1 = ratio(2 * precision * recall, precision + recall)
    micro_p = float(ratio(np.array([tp.sum()]), np.array([tp.sum() + fp.sum()]))[0])
    micro_r = float(ratio(np.array([tp.sum()]), np.array([tp.sum() + fn.sum()]))[0])
    micro_f1 = 2 * micro_p * micro_r / (micro_p + micro_r) if micro_p + micro_r > 0 else 0.0
    return {
        "accuracy": float(tp.sum() / len(pairs)),
        "precision": float(precision.mean()),
        "recall": float(recall.mean()),
        "f1": float(f1.mean()),
        "micro_precision": micro_p,
        "micro_recall": micro_r,
        "micro_f1": micro_f1,
    }


@dataclass(frozen=True)
class StatSummary:
    mean: float
    std: float
    ci_low: float
    ci_high: float
    n: int


def aggregate_stats(values: Iterable[float]) -> StatSummary:
    """Mean, sample std and the 95% t-interval ``mean +/- t(0.975, n-1) * std / sqrt(n)``."""
    arr = np.asarray(list(values), dtype=float)
    if arr.size < 1:
        raise ContractViolation("cannot summarise an empty sample")
    mean = float(arr.mean())
    if arr.size == 1:
        return StatSummary(mean, 0.0, mean, mean, 1)
    std = float(arr.std(ddof=1))
    half = float(stats.t.ppf(0.975, arr.size - 1)) * std / np.sqrt(arr.size)
    return StatSummary(mean, std, mean - half, mean + half, int(arr.size))


def expected_policy_kind(learner: str, env_kind: str) -> str:
    if learner == "qlearning":
        return "qtable"
    return "tabular" if env_kind == "grid" else "mlp"


def load_demos(config: ExperimentConfig, seed: int, directory: Path) -> Dict[GoalId, List[Trajectory]]:
    """One seed's demonstrations from the files ``gen-demos`` wrote.

    Raises:
        ContractViolation: If a file holds the wrong number of trajectories
            or a trajectory for another goal.
    """
    demos: Dict[GoalId, List[Trajectory]] = {}
    for goal in config.goals:
        path = Path(directory) / demo_file_name(config.env, goal, config.regime, seed)
        trajectories = read_trajectories(path, config.goals)
        if len(trajectories) != config.demos_per_goal:
            raise ContractViolation(f"{path} holds {len(trajectories)} trajectories, expected {config.demos_per_goal}")
        if any(t.goal != goal for t in trajectories):
            raise ContractViolation(f"{path} holds trajectories for another goal")
        demos[goal] = trajectories
    log.info("Loaded demonstrations for seed %d from %s", seed, directory)
    return demos


def generate_demos(config: ExperimentConfig, seed: int) -> Dict[GoalId, List[Trajectory]]:
    """All demonstrations of one seed, on stream ``demos/<goal>`` per goal.

    Reads them from ``config.demos_dir`` instead when that is set.
    """
    if config.demos_dir is not None:
        return load_demos(config, seed, config.demos_dir)
    demos: Dict[GoalId, List[Trajectory]] = {}
    routes = {}
    if config.env == "grid" and config.routes == "distinct" and config.regime != "biased":
        routes = distinct_plans(config.grid, config.grid.start, config.goals)
    for goal in config.goals:
        rng = RngStream(seed, f"demos/{goal.label}")
        if config.env == "grid":
            demos[goal] = gen_grid_demos(config.grid, goal, config.regime, config.demos_per_goal, rng,
                                         config.bias, config.insertion, routes.get(goal))
        else:
            demos[goal] = gen_reach_demos(config.reach, goal, config.noise(), config.demos_per_goal, rng)
    return demos


def write_demos(config: ExperimentConfig, demos: Dict[GoalId, List[Trajectory]], seed: int, directory: Path) -> List[Path]:
    return [
        write_trajectories(directory / demo_file_name(config.env, goal, config.regime, seed), trajectories)
        for goal, trajectories in demos.items()
    ]


def seed_values(config: ExperimentConfig) -> List[int]:
    return [derive_seed(config.master_seed, f"seed/{i}") for i in range(config.seeds)]


def train_banks(config: ExperimentConfig, train: DemoSet, seed: int) -> Dict[str, Tuple[PolicyBank, int, float]]:
    """Train every configured learner; returns bank, env interactions and seconds per learner."""
    banks = {}
    for name in config.learners:
        kind = expected_policy_kind(name, config.env)
        if not any(supports(m, kind) for m in config.metrics):
            log.warning("Skipping %s: no configured metric can score %s policies", name, kind)
            continue
        before = interactions.value
        started = time.perf_counter()
        bank = train_bank(make_learner(name, config.learner_params(name)), config.goals, config.make_env,
                          train, seed, config.workers)
        banks[name] = (bank, interactions.value - before, time.perf_counter() - started)
    return banks


def run_seed(config: ExperimentConfig, index: int, seed: int) -> Tuple[List[Dict[str, Any]], List[Dict[str, Any]]]:
    """Run one repetition; returns run rows and per-trajectory prediction rows."""
    demos = generate_demos(config, seed)
    split = {g: split_demos(trajs, config.train_per_goal) for g, trajs in demos.items()}
    train = DemoSet({g: s[0] for g, s in split.items()})
    test = [(g, j, traj) for g in config.goals for j, traj in enumerate(split[g][1])]
    rows: List[Dict[str, Any]] = []
    predictions: List[Dict[str, Any]] = []
    for name, (bank, train_calls, train_s) in train_banks(config, train, seed).items():
        for metric in config.metrics:
            if not supports(metric, bank.kind):
                log.warning("Skipping %s with %s: unsupported for %s policies", name, metric.kind, bank.kind)
                continue
            recognizer = Recognizer(bank, metric, RngStream(seed, f"infer/{name}/{metric.kind}"))
            for fraction in config.fractions:
                rows.append(_recognise_all(config, recognizer, test, fraction, index, name, metric,
                                           train_calls, train_s, predictions))
    return rows, predictions


def _recognise_all(config: ExperimentConfig, recognizer: Recognizer, test, fraction: float, index: int,
                   learner: str, metric: ScoreMetric, train_calls: int, train_s: float,
                   predictions: List[Dict[str, Any]]) -> Dict[str, Any]:
    pairs = []
    ties = 0
    infer_s = 0.0
    before = interactions.value
    for goal, j, traj in test:
        report = recognizer.recognize(traj, fraction, key=f"{fraction}/{goal.label}/{j}")
        pairs.append((goal, report.chosen))
        ties += int(report.tied)
        infer_s += report.seconds
        predictions.append({
            "seed": index, "learner": learner, "metric": metric.kind, "fraction": fraction,
            "test_index": j, "true_goal": goal.label, "predicted_goal": report.chosen.label,
            "tied": report.tied,
            "scores": json.dumps({g.label: s for g, s in report.per_goal_scores.items()}),
            "prefix_length": report.prefix_length, "seconds": report.seconds,
        })
    scores = classification_metrics(pairs, config.goals)
    if ties:
        log.info("%s/%s at %.2f: %d of %d predictions tied", learner, metric.kind, fraction, ties, len(pairs))
    return {
        "env": config.env, "regime": config.regime, "goals": len(config.goals), "learner": learner,
        "metric": metric.kind, "fraction": fraction, "seed": index, **scores, "ties": ties,
        "train_s": train_s, "infer_s": infer_s, "env_calls_train": train_calls,
        "env_calls_infer": interactions.value - before, "predictions": len(pairs),
    }


def aggregate(raw: pd.DataFrame) -> pd.DataFrame:
    """One row per learner x metric x goal count x fraction with mean/std/CI per score.

    Carries no wall-clock columns, so reruns with the same seed are byte-identical.
    """
    records = []
    for key, group in raw.groupby(GROUP_COLUMNS, sort=True):
        record = dict(zip(GROUP_COLUMNS, key))
        record["n"] = len(group)
        for column in SCORE_COLUMNS:
            summary = aggregate_stats(group[column])
            record.update({
                f"{column}_mean": summary.mean, f"{column}_std": summary.std,
                f"{column}_ci_low": summary.ci_low, f"{column}_ci_high": summary.ci_high,
            })
        record["ties"] = int(group["ties"].sum())
        record["env_calls_train"] = int(group["env_calls_train"].sum())
        record["env_calls_infer"] = int(group["env_calls_infer"].sum())
        records.append(record)
    return pd.DataFrame.from_records(records)


def run_experiment(config: ExperimentConfig, quiet: bool = False) -> Path:
    """Run every seed and write the result files under ``config.output_dir``.

    A failing seed is logged and skipped, whatever it raised; the others
    still run.

    Returns:
        Path: The output directory.

    Raises:
        GrailError: If every seed failed.
    """
    out = Path(config.output_dir)
    runs_dir = out / "runs"
    runs_dir.mkdir(parents=True, exist_ok=True)
    failed: Dict[int, str] = {}
    seeds = seed_values(config)
    for index, seed in enumerate(tqdm(seeds, desc="seeds", disable=quiet)):
        log.info("Seed %d/%d (%d)", index + 1, len(seeds), seed)
        try:
            rows, predictions = run_seed(config, index, seed)
        except GrailError as exc:
            log.error("Seed %d aborted: %s", index, exc)
            failed[index] = str(exc)
            continue
        except Exception as exc:
            log.exception("Seed %d aborted by an unexpected error", index)
            failed[index] = f"{type(exc).__name__}: {exc}"
            continue
        pd.DataFrame(rows, columns=RAW_COLUMNS + RUN_EXTRA_COLUMNS).to_csv(runs_dir / f"seed_{index}.csv", index=False)
        pd.DataFrame(predictions, columns=PREDICTION_COLUMNS).to_csv(runs_dir / f"seed_{index}_predictions.csv", index=False)
    if len(failed) == len(seeds):
        raise GrailError(f"all {len(seeds)} seeds failed")
    completed = [i for i in range(len(seeds)) if i not in failed]
    runs = pd.concat([pd.read_csv(runs_dir / f"seed_{i}.csv") for i in completed], ignore_index=True)
    runs[RAW_COLUMNS].to_csv(out / "raw.csv", index=False)
    pd.concat([pd.read_csv(runs_dir / f"seed_{i}_predictions.csv") for i in completed], ignore_index=True) \
        .to_csv(out / "predictions.csv", index=False)
    aggregate(runs).to_csv(out / "aggregated.csv", index=False, float_format=_FLOAT_FORMAT)
    manifest = {
        "grail_version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "averaging": "macro (micro_f1 also reported)",
        "config": config.summary(),
        "config_text": config.text,
        "seed_values": seeds,
        "demos_dir": str(config.demos_dir) if config.demos_dir is not None else None,
        "failed_seeds": failed,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2), encoding="utf-8")
    log.info("Wrote results for %d seeds to %s", len(completed), out)
    return out


def generate_demo_files(config: ExperimentConfig, directory: Optional[Path] = None) -> List[Path]:
    """Write every seed's demonstrations as JSON Lines files."""
    directory = directory or Path(config.output_dir) / "demos"
    paths: List[Path] = []
    for seed in seed_values(config):
        paths.extend(write_demos(config, generate_demos(config, seed), seed, directory))
    log.info("Wrote %d demonstration files to %s", len(paths), directory)
    return paths


def train_bank_files(config: ExperimentConfig, directory: Optional[Path] = None) -> List[Path]:
    """Train the first seed's banks and save one directory per learner."""
    directory = directory or Path(config.output_dir) / "banks"
    seed = seed_values(config)[0]
    demos = generate_demos(config, seed)
    train = DemoSet({g: split_demos(trajs, config.train_per_goal)[0] for g, trajs in demos.items()})
    return [save_bank(bank, directory / name) for name, (bank, _, _) in train_banks(config, train, seed).items()]


def export_visit_heatmap(bank: PolicyBank, path: Path) -> Tuple[Path, Path]:
    """Write Q-learning visit counts per state, plus per-position totals.

    Rows are ``goal, x, y, dir, visits``; the totals file (``<stem>_positions.csv``)
    sums over headings.

    Raises:
        ContractViolation: If the bank was not trained with Q-learning.
    """
    if bank.kind != "qtable":
        raise ContractViolation(f"visit counts need a Q-learning bank, got {bank.learner} ({bank.kind})")
    records = []
    for goal in bank.goals:
        policy = bank[goal]
        assert isinstance(policy, QPolicy)
        visits = policy.table.state_visits()
        for (x, y, d), count in zip(policy.table.index.states, visits):
            records.append({"goal": goal.label, "x": int(x), "y": int(y), "dir": int(d), "visits": int(count)})
    frame = pd.DataFrame.from_records(records, columns=["goal", "x", "y", "dir", "visits"])
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False)
    positions = frame.groupby(["goal", "x", "y"], sort=False, as_index=False)["visits"].sum()
    positions_path = path.with_name(f"{path.stem}_positions.csv")
    positions.to_csv(positions_path, index=False)
    return path, positions_path
