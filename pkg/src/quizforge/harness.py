"""Experiment orchestration: alpha sweeps, transfer runs, reports.

A plan is a cross-product of datasets x targets x algorithms x alphas; each
cell trains once and runs `runs` greedy inferences from seeded random start
quizzes, yielding one MetricsRow per run. Reports aggregate rows per cell.

Wall-clock timings go to a separate sidecar (timings.csv) so that the main
report files are byte-identical across repeated runs of the same plan+seed.
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .agents import (InferenceResult, TrainConfig, TrainLog, infer_quiz,
                     train_agent)
from .datagen import Dataset, DatasetSpec, generate_synthetic, load_dataset_csv, sample_topic_subset
from .domain import TargetSpec, diff_match, topic_match
from .environment import EpisodeConfig, Universe, build_universe
from .nets import ParamSet
from .oracle import oracle_best

REPORT_SCHEMA = "quizforge.report.v1"
CURVES_SCHEMA = "quizforge.curves.v1"
TRAJECTORIES_SCHEMA = "quizforge.trajectories.v1"

DEFAULT_ALPHAS = (0.0, 0.25, 0.5, 0.75, 1.0)
_BIAS_POSITIONS_10 = (5, 8)  # half the quiz on each of two topics


class DimensionMismatchError(ValueError):
    pass


class EmptyWindowError(ValueError):
    pass


def stable_seed(*parts) -> int:
    """Deterministic 63-bit seed from arbitrary key parts (hash() is salted)."""
    digest = hashlib.sha256("\x1f".join(str(p) for p in parts).encode()).digest()
    return int.from_bytes(digest[:8], "little") >> 1


# ---------------------------------------------------------------------------
# named teacher targets


def _uniform(n: int) -> np.ndarray:
    return np.full(n, 1.0 / n)


def _two_point_bias(n: int, positions) -> np.ndarray:
    vec = np.zeros(n)
    for p in positions:
        vec[p] = 0.5
    return vec


def _bias_positions(n_topics: int) -> tuple[int, int]:
    if n_topics == 10:
        return _BIAS_POSITIONS_10
    rng = np.random.default_rng(_BIAS_POSITIONS_10)
    a, b = rng.choice(n_topics, size=2, replace=False)
    return int(a), int(b)


def _alt_bias_positions(n_topics: int) -> tuple[int, int]:
    base = set(_bias_positions(n_topics))
    for attempt in range(1000):
        rng = np.random.default_rng([97, attempt])
        a, b = rng.choice(n_topics, size=2, replace=False)
        if {int(a), int(b)} != base:
            return int(a), int(b)
    raise ValueError(f"cannot place an alternative bias with {n_topics} topics")


def make_target(name: str, n_topics: int, n_levels: int, alpha: float = 0.5,
                beta: float = 0.85) -> TargetSpec:
    """Named targets: uniform, bias (two favored topics), bias-alt (a second
    biased pair with different support), bias-level (two favored levels)."""
    name = name.lower()
    if name == "uniform":
        tc, td = _uniform(n_topics), _uniform(n_levels)
    elif name == "bias":
        tc = _two_point_bias(n_topics, _bias_positions(n_topics))
        td = _uniform(n_levels)
    elif name == "bias-alt":
        tc = _two_point_bias(n_topics, _alt_bias_positions(n_topics))
        td = _uniform(n_levels)
    elif name == "bias-level":
        tc = _uniform(n_topics)
        td = _two_point_bias(n_levels, (0, n_levels - 1))
    else:
        raise ValueError(f"unknown target name {name!r}")
    return TargetSpec(tc=tc, td=td, alpha=alpha, beta=beta)


# ---------------------------------------------------------------------------
# plans


@dataclass(frozen=True)
class PlanDataset:
    """One dataset reference: synthetic parameters or a CSV path."""

    name: str
    spec: DatasetSpec | None = None
    path: str | None = None
    topic_subset: int | None = None  # sample this many topics after loading

    def materialize(self, base_seed: int) -> Dataset:
        if (self.spec is None) == (self.path is None):
            raise ValueError(f"dataset {self.name!r}: set exactly one of spec/path")
        ds = generate_synthetic(self.spec) if self.spec else load_dataset_csv(self.path)
        if self.topic_subset is not None:
            ds = sample_topic_subset(ds, self.topic_subset,
                                     seed=stable_seed(base_seed, self.name, "topics"))
        return ds


@dataclass(frozen=True)
class ExperimentPlan:
    datasets: tuple[PlanDataset, ...]
    targets: tuple[str, ...] = ("uniform",)
    algorithms: tuple[str, ...] = ("dqn", "oracle")
    alphas: tuple[float, ...] = DEFAULT_ALPHAS
    runs: int = 10
    seed: int = 0
    universe_size: int = 10_000
    quiz_size: int = 10
    train: TrainConfig = TrainConfig()

    def __post_init__(self):
        if self.runs < 1:
            raise ValueError("runs must be >= 1")
        if any(not 0.0 <= a <= 1.0 for a in self.alphas):
            raise ValueError(f"alphas must lie in [0, 1], got {self.alphas}")


@dataclass
class MetricsRow:
    """Inference metrics for one run (run >= 0) or a cell aggregate (run == -1)."""

    dataset: str
    target: str
    algorithm: str
    alpha: float
    run: int
    mean_similarity: float
    mean_iterations: float
    mean_infer_time_sec: float
    success_rate: float
    action_histogram: tuple[float, float, float, float]


@dataclass
class CellArtifacts:
    dataset: str
    target: str
    algorithm: str
    alpha: float
    universe: Universe
    spec: TargetSpec
    train_log: TrainLog | None
    inferences: list[InferenceResult]

    @property
    def key(self) -> str:
        return cell_key(self.dataset, self.target, self.algorithm, self.alpha)


@dataclass
class PlanResult:
    plan: ExperimentPlan
    rows: list[MetricsRow] = field(default_factory=list)
    cells: dict[str, CellArtifacts] = field(default_factory=dict)
    failures: list[tuple[str, str]] = field(default_factory=list)


def cell_key(dataset: str, target: str, algorithm: str, alpha: float) -> str:
    return f"{dataset}/{target}/{algorithm}/alpha={alpha:g}"


def _train_action_histogram(log: TrainLog | None) -> tuple[float, float, float, float]:
    if log is None:
        return (0.0, 0.0, 0.0, 0.0)
    totals = log.action_totals().astype(np.float64)
    total = totals.sum()
    if total == 0:
        return (0.0, 0.0, 0.0, 0.0)
    return tuple(float(x) for x in totals / total)


def _inference_starts(u: Universe, base_seed: int, key: str, runs: int) -> list[int]:
    rng = np.random.default_rng(stable_seed(base_seed, key, "starts"))
    return [int(i) for i in rng.integers(len(u), size=runs)]


def run_cell(u: Universe, spec: TargetSpec, dataset: str, target: str,
             algorithm: str, alpha: float, cfg: TrainConfig, runs: int,
             base_seed: int) -> tuple[list[MetricsRow], CellArtifacts]:
    """Train (or scan, for the oracle) one cell and run its inferences."""
    key = cell_key(dataset, target, algorithm, alpha)
    rows: list[MetricsRow] = []
    if algorithm == "oracle":
        res = oracle_best(u, spec)
        art = CellArtifacts(dataset, target, algorithm, alpha, u, spec, None, [])
        for r in range(runs):
            rows.append(MetricsRow(
                dataset=dataset, target=target, algorithm=algorithm, alpha=alpha,
                run=r, mean_similarity=res.match, mean_iterations=float(res.scan_count),
                mean_infer_time_sec=res.elapsed_sec,
                success_rate=float(res.match >= spec.beta),
                action_histogram=(0.0, 0.0, 0.0, 0.0)))
        return rows, art

    cell_cfg = replace(cfg, seed=stable_seed(base_seed, key, "train"))
    params, log = train_agent(algorithm, u, spec, cell_cfg)
    hist = _train_action_histogram(log)
    ecfg = cell_cfg.episode_config()
    match_vec = u.target_matches(spec)
    inferences = []
    for r, start in enumerate(_inference_starts(u, base_seed, key, runs)):
        res = infer_quiz(params, u, spec, ecfg, start,
                         rng_seed=stable_seed(base_seed, key, "infer", r),
                         match_vec=match_vec)
        inferences.append(res)
        rows.append(MetricsRow(
            dataset=dataset, target=target, algorithm=algorithm, alpha=alpha,
            run=r, mean_similarity=res.match, mean_iterations=float(res.iterations),
            mean_infer_time_sec=res.elapsed_sec, success_rate=float(res.success),
            action_histogram=hist))
    art = CellArtifacts(dataset, target, algorithm, alpha, u, spec, log, inferences)
    return rows, art


def run_plan(plan: ExperimentPlan, progress=None) -> PlanResult:
    """Execute every cell of the plan; failures are recorded, not fatal."""
    result = PlanResult(plan=plan)
    for ds_ref in plan.datasets:
        try:
            dataset = ds_ref.materialize(plan.seed)
            universe = build_universe(dataset, plan.quiz_size, plan.universe_size,
                                      seed=stable_seed(plan.seed, ds_ref.name, "universe"))
        except Exception as exc:  # noqa: BLE001 - recorded per contract
            result.failures.append((ds_ref.name, repr(exc)))
            continue
        for target_name in plan.targets:
            for alpha in plan.alphas:
                spec = make_target(target_name, universe.n_topics, universe.n_levels,
                                   alpha=alpha, beta=plan.train.beta)
                for algorithm in plan.algorithms:
                    key = cell_key(ds_ref.name, target_name, algorithm, alpha)
                    if progress:
                        progress(key)
                    try:
                        rows, art = run_cell(universe, spec, ds_ref.name, target_name,
                                             algorithm, alpha, plan.train, plan.runs,
                                             plan.seed)
                    except Exception as exc:  # noqa: BLE001
                        result.failures.append((key, repr(exc)))
                        continue
                    result.rows.extend(rows)
                    result.cells[key] = art
    return result


def transfer_run(source_params: ParamSet, u: Universe, spec: TargetSpec,
                 cfg: TrainConfig, runs: int = 10, seed: int = 0,
                 dataset: str = "", target: str = "",
                 algorithm: str = "transfer") -> tuple[MetricsRow, list[InferenceResult]]:
    """Inference-only reuse of a trained model on a new target or universe.

    Returns the aggregated row (run == -1) plus the per-start inference
    results. Raises DimensionMismatchError when the model's input width does
    not match the destination universe.
    """
    if source_params.spec.input_dim != u.state_dim:
        raise DimensionMismatchError(
            f"model expects {source_params.spec.input_dim}-dim states, "
            f"universe provides {u.state_dim}")
    key = cell_key(dataset, target, algorithm, spec.alpha)
    # the destination target's threshold governs episode termination
    ecfg = EpisodeConfig(max_steps=cfg.max_steps, beta=spec.beta,
                         reward_scheme=cfg.reward_scheme, gamma=cfg.gamma)
    match_vec = u.target_matches(spec)
    results = [
        infer_quiz(source_params, u, spec, ecfg, start,
                   rng_seed=stable_seed(seed, key, "infer", r), match_vec=match_vec)
        for r, start in enumerate(_inference_starts(u, seed, key, runs))
    ]
    row = MetricsRow(
        dataset=dataset, target=target, algorithm=algorithm, alpha=spec.alpha,
        run=-1,
        mean_similarity=float(np.mean([r.match for r in results])),
        mean_iterations=float(np.mean([r.iterations for r in results])),
        mean_infer_time_sec=float(np.mean([r.elapsed_sec for r in results])),
        success_rate=float(np.mean([r.success for r in results])),
        action_histogram=(0.0, 0.0, 0.0, 0.0))
    return row, results


def action_distribution(log: TrainLog, window: tuple[int, int]) -> np.ndarray:
    """Normalized action frequencies over episodes [start, end)."""
    start, end = window
    if start < 0 or end > len(log.episodes) or start >= end:
        raise EmptyWindowError(f"window {window} outside log of {len(log.episodes)} episodes")
    totals = np.zeros(4)
    for st in log.episodes[start:end]:
        totals += np.asarray(st.action_counts, dtype=np.float64)
    if totals.sum() == 0:
        raise EmptyWindowError(f"window {window} contains no steps")
    return totals / totals.sum()


# ---------------------------------------------------------------------------
# report emission


def aggregate_rows(rows: list[MetricsRow]) -> list[MetricsRow]:
    """Collapse per-run rows into one aggregate row per cell (run == -1)."""
    groups: dict[tuple, list[MetricsRow]] = {}
    for row in rows:
        groups.setdefault((row.dataset, row.target, row.algorithm, row.alpha), []).append(row)
    out = []
    for (dataset, target, algorithm, alpha), group in groups.items():
        hists = np.mean([g.action_histogram for g in group], axis=0)
        out.append(MetricsRow(
            dataset=dataset, target=target, algorithm=algorithm, alpha=alpha,
            run=-1,
            mean_similarity=float(np.mean([g.mean_similarity for g in group])),
            mean_iterations=float(np.mean([g.mean_iterations for g in group])),
            mean_infer_time_sec=float(np.mean([g.mean_infer_time_sec for g in group])),
            success_rate=float(np.mean([g.success_rate for g in group])),
            action_histogram=tuple(float(h) for h in hists)))
    return out


_REPORT_FIELDS = ("dataset", "target", "algorithm", "alpha", "runs",
                  "mean_similarity", "mean_iterations", "success_rate",
                  "share_sim_topic", "share_sim_level", "share_diss_topic",
                  "share_diss_level")


def emit_report(result: PlanResult, out_dir) -> dict[str, str]:
    """Write report.csv / runs.csv / curves.jsonl / trajectories.jsonl.

    Timings land in timings.csv, which is the only non-reproducible file.
    Returns the mapping of artifact names to paths.
    """
    from pathlib import Path

    if not result.rows:
        raise ValueError("no rows to report")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    plan_echo = _plan_to_json(result.plan)
    paths = {}

    run_counts: dict[tuple, int] = {}
    for row in result.rows:
        k = (row.dataset, row.target, row.algorithm, row.alpha)
        run_counts[k] = run_counts.get(k, 0) + 1

    paths["report"] = str(out / "report.csv")
    with open(paths["report"], "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(_REPORT_FIELDS)
        for row in aggregate_rows(result.rows):
            writer.writerow([
                row.dataset, row.target, row.algorithm, repr(row.alpha),
                run_counts[(row.dataset, row.target, row.algorithm, row.alpha)],
                repr(row.mean_similarity), repr(row.mean_iterations),
                repr(row.success_rate), *(repr(h) for h in row.action_histogram)])

    paths["runs"] = str(out / "runs.csv")
    with open(paths["runs"], "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(("dataset", "target", "algorithm", "alpha", "run",
                         "similarity", "iterations", "success"))
        for row in result.rows:
            writer.writerow([row.dataset, row.target, row.algorithm,
                             repr(row.alpha), row.run, repr(row.mean_similarity),
                             repr(row.mean_iterations), repr(row.success_rate)])

    paths["timings"] = str(out / "timings.csv")
    with open(paths["timings"], "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(("dataset", "target", "algorithm", "alpha", "run",
                         "infer_time_sec"))
        for row in result.rows:
            writer.writerow([row.dataset, row.target, row.algorithm,
                             repr(row.alpha), row.run, repr(row.mean_infer_time_sec)])

    paths["curves"] = str(out / "curves.jsonl")
    with open(paths["curves"], "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"schema": CURVES_SCHEMA, "plan": plan_echo},
                            sort_keys=True) + "\n")
        for key in sorted(result.cells):
            log = result.cells[key].train_log
            if log is None:
                continue
            for st in log.episodes:
                total = max(1, sum(st.action_counts))
                fh.write(json.dumps({
                    "cell": key, "episode": st.episode, "epsilon": float(st.epsilon),
                    "max_q": float(st.max_q),
                    "action_shares": [c / total for c in st.action_counts],
                    "terminal_match": float(st.terminal_match),
                    "steps": st.steps,
                }, sort_keys=True) + "\n")

    paths["trajectories"] = str(out / "trajectories.jsonl")
    with open(paths["trajectories"], "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"schema": TRAJECTORIES_SCHEMA, "plan": plan_echo},
                            sort_keys=True) + "\n")
        for key in sorted(result.cells):
            art = result.cells[key]
            for run, res in enumerate(art.inferences):
                fh.write(_trajectory_record(art, key, run, 0, res.start_index))
                for si, rec in enumerate(res.trace, start=1):
                    fh.write(_trajectory_record(art, key, run, si, rec.to_quiz))

    paths["config"] = str(out / "report.config.json")
    with open(paths["config"], "w", encoding="utf-8") as fh:
        json.dump({"schema": REPORT_SCHEMA, "plan": plan_echo,
                   "failures": result.failures}, fh, sort_keys=True, indent=2)
        fh.write("\n")
    return paths


def _trajectory_record(art: CellArtifacts, key: str, run: int, step_i: int,
                       quiz_idx: int) -> str:
    quiz = art.universe.quizzes[quiz_idx]
    tm = topic_match(quiz, art.spec.tc)
    dm = diff_match(quiz, art.spec.td)
    return json.dumps({
        "cell": key, "run": run, "step": step_i, "quiz": int(quiz_idx),
        "topic_match": tm, "diff_match": dm,
        "target_match": art.spec.alpha * tm + (1.0 - art.spec.alpha) * dm,
    }, sort_keys=True) + "\n"


def _plan_to_json(plan: ExperimentPlan) -> dict:
    return json.loads(json.dumps(asdict(plan), default=str))
