"""Command-line entry point: dataset generation, universe build, training,
inference, oracle scans, transfer, and plan execution.

Every flag can also be set in an INI config file (see --config); flags
override the file, and QUIZFORGE_SEED overrides any seed from either source.
The effective configuration is echoed into each artifact for provenance.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict, fields
from pathlib import Path

import numpy as np

from . import __version__
from .agents import (ALGORITHMS, TrainConfig, infer_quiz, train_agent,
                     write_train_log)
from .config import (ConfigError, ConfigFile, env_seed_override,
                     parse_float_list, resolve)
from .datagen import (DatasetSpec, filter_topics, generate_synthetic,
                      load_dataset_csv, sample_topic_subset, save_dataset_csv)
from .domain import TargetSpec
from .environment import (EpisodeConfig, build_universe, load_universe,
                          save_universe)
from .harness import (DEFAULT_ALPHAS, ExperimentPlan, PlanDataset, emit_report,
                      make_target, run_plan, transfer_run)
from .nets import load_params, save_params
from .oracle import oracle_best

TARGET_NAMES = ("uniform", "bias", "bias-alt", "bias-level")

# TrainConfig fields that need non-scalar parsing
_TUPLE_FIELDS = {"hidden"}


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    for f in fields(TrainConfig):
        flag = "--" + f.name.replace("_", "-")
        if f.name in _TUPLE_FIELDS:
            p.add_argument(flag, type=str, default=None, metavar="N,N",
                           help=f"[train] {f.name}")
        elif f.type in ("int", int):
            p.add_argument(flag, type=int, default=None, help=f"[train] {f.name}")
        elif f.type in ("float", float):
            p.add_argument(flag, type=float, default=None, help=f"[train] {f.name}")
        else:
            p.add_argument(flag, type=str, default=None, help=f"[train] {f.name}")


def _train_config(args, cfg: ConfigFile) -> TrainConfig:
    kwargs = {}
    for f in fields(TrainConfig):
        if f.name in _TUPLE_FIELDS:
            raw = resolve(getattr(args, f.name), cfg, "train", f.name, str, None)
            if raw is not None:
                kwargs[f.name] = tuple(int(x) for x in str(raw).split(","))
        elif f.type in ("int", int):
            val = resolve(getattr(args, f.name), cfg, "train", f.name, int, None)
            if val is not None:
                kwargs[f.name] = val
        elif f.type in ("float", float):
            val = resolve(getattr(args, f.name), cfg, "train", f.name, float, None)
            if val is not None:
                kwargs[f.name] = val
        else:
            val = resolve(getattr(args, f.name), cfg, "train", f.name, str, None)
            if val is not None:
                kwargs[f.name] = val
    if "seed" in kwargs:
        kwargs["seed"] = env_seed_override(kwargs["seed"])
    else:
        kwargs["seed"] = env_seed_override(0)
    return TrainConfig(**kwargs)


def _add_target_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--target", choices=TARGET_NAMES, default=None,
                   help="named teacher target ([target] name)")
    p.add_argument("--tc", type=str, default=None,
                   help="explicit topic target, comma-separated proportions")
    p.add_argument("--td", type=str, default=None,
                   help="explicit difficulty target, comma-separated proportions")
    p.add_argument("--alpha", type=float, default=None,
                   help="scalarization weight in [0,1] ([target] alpha)")
    p.add_argument("--target-beta", type=float, default=None, dest="target_beta",
                   help="success threshold in (0,1] ([target] beta)")


def _resolve_target(args, cfg: ConfigFile, n_topics: int, n_levels: int,
                    fallback: dict | None = None) -> TargetSpec:
    fallback = fallback or {}
    alpha = resolve(args.alpha, cfg, "target", "alpha", float,
                    fallback.get("alpha", 0.5))
    beta = resolve(args.target_beta, cfg, "target", "beta", float,
                   fallback.get("beta", 0.85))
    tc_raw = resolve(args.tc, cfg, "target", "tc", str, None)
    td_raw = resolve(args.td, cfg, "target", "td", str, None)
    name = resolve(args.target, cfg, "target", "name", str, None)
    if tc_raw is not None or td_raw is not None:
        if tc_raw is None or td_raw is None:
            raise ConfigError("[target] tc and td must be given together")
        return TargetSpec(tc=parse_float_list(str(tc_raw)),
                          td=parse_float_list(str(td_raw)), alpha=alpha, beta=beta)
    if name is None:
        if "tc" in fallback and "td" in fallback:
            return TargetSpec(tc=np.asarray(fallback["tc"]),
                              td=np.asarray(fallback["td"]), alpha=alpha, beta=beta)
        name = "uniform"
    return make_target(str(name), n_topics, n_levels, alpha=alpha, beta=beta)


def _target_provenance(spec: TargetSpec) -> dict:
    return {"tc": [float(x) for x in spec.tc], "td": [float(x) for x in spec.td],
            "alpha": float(spec.alpha), "beta": float(spec.beta)}


def _write_meta(path: Path, payload: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")


# ---------------------------------------------------------------------------
# subcommands


def cmd_gen_synthetic(args) -> int:
    cfg = ConfigFile(args.config)
    spec = DatasetSpec(
        n_mcqs=resolve(args.n_mcqs, cfg, "dataset", "n_mcqs", int, 2000),
        n_topics=resolve(args.n_topics, cfg, "dataset", "n_topics", int, 10),
        n_levels=resolve(args.n_levels, cfg, "dataset", "n_levels", int, 5),
        topic_concentration=resolve(args.topic_concentration, cfg, "dataset",
                                    "topic_concentration", float, 1.0),
        level_concentration=resolve(args.level_concentration, cfg, "dataset",
                                    "level_concentration", float, 1.0),
        seed=env_seed_override(resolve(args.seed, cfg, "dataset", "seed", int, 0)),
    )
    dataset = generate_synthetic(spec)
    save_dataset_csv(dataset, args.out)
    _write_meta(Path(args.out).with_suffix(".meta.json"),
                {"command": "gen-synthetic", "config": asdict(spec),
                 "meta": dataset.meta})
    print(f"wrote {len(dataset)} MCQs ({dataset.n_topics} topics, "
          f"{dataset.n_levels} levels) to {args.out}")
    return 0


def cmd_load_data(args) -> int:
    dataset = load_dataset_csv(args.data)
    if args.topics:
        dataset = filter_topics(dataset, [int(t) for t in args.topics.split(",")])
    elif args.topic_subset:
        seed = env_seed_override(args.seed if args.seed is not None else 0)
        dataset = sample_topic_subset(dataset, args.topic_subset, seed=seed)
    counts = np.zeros(dataset.n_topics, dtype=int)
    for m in dataset.mcqs:
        counts[m.topic] += 1
    print(f"{args.data}: {len(dataset)} MCQs, {dataset.n_topics} topics, "
          f"{dataset.n_levels} levels")
    for label, count in zip(dataset.topic_labels, counts):
        print(f"  {label}: {count}")
    if args.out:
        save_dataset_csv(dataset, args.out)
        _write_meta(Path(args.out).with_suffix(".meta.json"),
                    {"command": "load-data", "source": str(args.data),
                     "topic_labels": dataset.topic_labels,
                     "level_labels": dataset.level_labels, "meta": dataset.meta})
        print(f"normalized copy written to {args.out}")
    return 0


def cmd_build_env(args) -> int:
    cfg = ConfigFile(args.config)
    dataset = load_dataset_csv(resolve(args.data, cfg, "universe", "data", str, None))
    subset = resolve(args.topic_subset, cfg, "universe", "topic_subset", int, None)
    seed = env_seed_override(resolve(args.seed, cfg, "universe", "seed", int, 0))
    if subset:
        dataset = sample_topic_subset(dataset, subset, seed=seed)
    k = resolve(args.quiz_size, cfg, "universe", "quiz_size", int, 10)
    n = resolve(args.size, cfg, "universe", "size", int, 10_000)
    universe = build_universe(dataset, k=k, n=n, seed=seed)
    save_universe(args.out, universe)
    print(f"universe of {len(universe)} quizzes (k={k}, state dim "
          f"{universe.state_dim}) written to {args.out}")
    return 0


def cmd_train(args) -> int:
    from dataclasses import replace

    cfg = ConfigFile(args.config)
    tcfg = _train_config(args, cfg)  # validate config before heavy IO
    universe = load_universe(args.env)
    spec = _resolve_target(args, cfg, universe.n_topics, universe.n_levels,
                           fallback={"beta": tcfg.beta})
    tcfg = replace(tcfg, beta=spec.beta)  # the target's threshold is authoritative
    algo = resolve(args.algo, cfg, "train", "algorithm", str, "dqn").lower()
    if algo not in ALGORITHMS:
        raise ConfigError(f"[train] algorithm: {algo!r} not one of {ALGORITHMS}")
    params, log = train_agent(algo, universe, spec, tcfg)
    extra = {"command": "train", "algorithm": algo, "config": asdict(tcfg),
             "target": _target_provenance(spec), "env": str(args.env)}
    save_params(args.out, params, extra=extra)
    log_path = args.log or str(Path(args.out).with_suffix(".train.jsonl"))
    write_train_log(log, log_path)
    successes = sum(1 for st in log.episodes if st.success)
    print(f"trained {algo} for {len(log.episodes)} episodes "
          f"({successes} reached beta); checkpoint {args.out}, log {log_path}")
    return 0


def cmd_infer(args) -> int:
    cfg = ConfigFile(args.config)
    universe = load_universe(args.env)
    params, extra = load_params(args.checkpoint)
    spec = _resolve_target(args, cfg, universe.n_topics, universe.n_levels,
                           fallback=extra.get("target", {}))
    tcfg = _train_config(args, cfg)
    ecfg = EpisodeConfig(max_steps=tcfg.max_steps, beta=spec.beta,
                         reward_scheme=tcfg.reward_scheme, gamma=tcfg.gamma)
    seed = env_seed_override(args.seed if args.seed is not None else 0)
    match_vec = universe.target_matches(spec)
    if args.start is not None:
        starts = [args.start]
    else:
        rng = np.random.default_rng(seed)
        starts = [int(i) for i in rng.integers(len(universe), size=args.runs)]
    records = []
    for run, start in enumerate(starts):
        res = infer_quiz(params, universe, spec, ecfg, start, rng_seed=seed,
                         match_vec=match_vec)
        records.append(res)
        ids = sorted(universe.quizzes[res.quiz_index].mcq_ids)
        print(f"run {run}: start {start} -> quiz {res.quiz_index} "
              f"match {res.match:.4f} in {res.iterations} iterations "
              f"({res.elapsed_sec * 1e3:.2f} ms); mcqs {ids}")
    mean_match = float(np.mean([r.match for r in records]))
    mean_iter = float(np.mean([r.iterations for r in records]))
    print(f"mean match {mean_match:.4f}, mean iterations {mean_iter:.1f}, "
          f"success rate {np.mean([r.success for r in records]):.2f}")
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(json.dumps({"schema": "quizforge.infer.v1",
                                 "target": _target_provenance(spec),
                                 "checkpoint": str(args.checkpoint)},
                                sort_keys=True) + "\n")
            for run, res in enumerate(records):
                fh.write(json.dumps({
                    "run": run, "start": res.start_index, "quiz": res.quiz_index,
                    "match": res.match, "iterations": res.iterations,
                    "success": res.success,
                    "mcq_ids": sorted(int(i) for i in
                                      universe.quizzes[res.quiz_index].mcq_ids),
                }, sort_keys=True) + "\n")
        print(f"wrote {args.out}")
    return 0


def cmd_oracle(args) -> int:
    cfg = ConfigFile(args.config)
    universe = load_universe(args.env)
    spec = _resolve_target(args, cfg, universe.n_topics, universe.n_levels)
    res = oracle_best(universe, spec)
    quiz = universe.quizzes[res.quiz_index]
    print(f"best quiz: index {res.quiz_index}, match {res.match:.4f}, "
          f"scanned {res.scan_count} quizzes in {res.elapsed_sec * 1e3:.2f} ms")
    print(f"mcq ids: {sorted(quiz.mcq_ids)}")
    print(f"topic vector: {[round(float(x), 4) for x in quiz.topic_vec]}")
    print(f"difficulty vector: {[round(float(x), 4) for x in quiz.diff_vec]}")
    if args.out:
        _write_meta(Path(args.out), {
            "schema": "quizforge.oracle.v1", "quiz_index": res.quiz_index,
            "match": res.match, "scan_count": res.scan_count,
            "mcq_ids": sorted(int(i) for i in quiz.mcq_ids),
            "topic_vec": [float(x) for x in quiz.topic_vec],
            "diff_vec": [float(x) for x in quiz.diff_vec],
            "target": _target_provenance(spec)})
        print(f"wrote {args.out}")
    return 0


def cmd_transfer(args) -> int:
    cfg = ConfigFile(args.config)
    universe = load_universe(args.env)
    params, extra = load_params(args.checkpoint)
    spec = _resolve_target(args, cfg, universe.n_topics, universe.n_levels,
                           fallback=extra.get("target", {}))
    tcfg = _train_config(args, cfg)
    seed = env_seed_override(args.seed if args.seed is not None else 0)
    row, _ = transfer_run(params, universe, spec, tcfg, runs=args.runs,
                          seed=seed, dataset=str(args.env),
                          target=args.target or "custom",
                          algorithm=extra.get("algorithm", "transfer"))
    print(f"transfer: similarity {row.mean_similarity:.4f}, iterations "
          f"{row.mean_iterations:.1f}, success rate {row.success_rate:.2f} "
          f"over {args.runs} starts")
    return 0


def _plan_from_config(cfg: ConfigFile, seed_override: int | None) -> ExperimentPlan:
    if not cfg.has_section("plan"):
        raise ConfigError("plan config needs a [plan] section")
    names = cfg.get("plan", "datasets", "str_list", ())
    if not names:
        raise ConfigError("[plan] datasets: at least one dataset name required")
    datasets = []
    for name in names:
        section = f"dataset.{name}"
        if not cfg.has_section(section):
            raise ConfigError(f"missing [{section}] section for dataset {name!r}")
        kind = cfg.get(section, "kind", str, "synthetic")
        subset = cfg.get(section, "topic_subset", int, None)
        if kind == "synthetic":
            spec = DatasetSpec(
                n_mcqs=cfg.get(section, "n_mcqs", int, 2000),
                n_topics=cfg.get(section, "n_topics", int, 10),
                n_levels=cfg.get(section, "n_levels", int, 5),
                topic_concentration=cfg.get(section, "topic_concentration", float, 1.0),
                level_concentration=cfg.get(section, "level_concentration", float, 1.0),
                seed=cfg.get(section, "seed", int, 0),
            )
            datasets.append(PlanDataset(name=name, spec=spec, topic_subset=subset))
        elif kind == "csv":
            path = cfg.get(section, "path", str, None)
            if not path:
                raise ConfigError(f"[{section}] path: required for kind=csv")
            datasets.append(PlanDataset(name=name, path=path, topic_subset=subset))
        else:
            raise ConfigError(f"[{section}] kind: {kind!r} not synthetic or csv")

    train_kwargs = {}
    for f in fields(TrainConfig):
        if f.name in _TUPLE_FIELDS:
            raw = cfg.get("train", f.name, str, None)
            if raw is not None:
                train_kwargs[f.name] = tuple(int(x) for x in raw.split(","))
        elif f.type in ("int", int):
            val = cfg.get("train", f.name, int, None)
            if val is not None:
                train_kwargs[f.name] = val
        elif f.type in ("float", float):
            val = cfg.get("train", f.name, float, None)
            if val is not None:
                train_kwargs[f.name] = val
        else:
            val = cfg.get("train", f.name, str, None)
            if val is not None:
                train_kwargs[f.name] = val

    seed = cfg.get("plan", "seed", int, 0)
    if seed_override is not None:
        seed = seed_override
    seed = env_seed_override(seed)
    return ExperimentPlan(
        datasets=tuple(datasets),
        targets=cfg.get("plan", "targets", "str_list", ("uniform",)),
        algorithms=tuple(a.lower() for a in
                         cfg.get("plan", "algorithms", "str_list", ("dqn", "oracle"))),
        alphas=cfg.get("plan", "alphas", "float_list", DEFAULT_ALPHAS),
        runs=cfg.get("plan", "runs", int, 10),
        seed=seed,
        universe_size=cfg.get("plan", "universe_size", int, 10_000),
        quiz_size=cfg.get("plan", "quiz_size", int, 10),
        train=TrainConfig(**train_kwargs),
    )


def cmd_run_plan(args) -> int:
    cfg = ConfigFile(args.config)
    plan = _plan_from_config(cfg, args.seed)
    progress = (lambda key: print(f"running {key}", flush=True)) if args.verbose else None
    result = run_plan(plan, progress=progress)
    for key, err in result.failures:
        print(f"FAILED {key}: {err}", file=sys.stderr)
    if not result.rows:
        print("no cells completed", file=sys.stderr)
        return 1
    paths = emit_report(result, args.out)
    print(f"completed {len(result.cells)} cells "
          f"({len(result.failures)} failures); report in {args.out}")
    for name, path in sorted(paths.items()):
        print(f"  {name}: {path}")
    return 0


def cmd_report(args) -> int:
    import csv as csv_mod

    from .harness import MetricsRow, aggregate_rows

    rows = []
    with open(args.runs_csv, newline="", encoding="utf-8") as fh:
        for rec in csv_mod.DictReader(fh):
            rows.append(MetricsRow(
                dataset=rec["dataset"], target=rec["target"],
                algorithm=rec["algorithm"], alpha=float(rec["alpha"]),
                run=int(rec["run"]), mean_similarity=float(rec["similarity"]),
                mean_iterations=float(rec["iterations"]),
                mean_infer_time_sec=0.0, success_rate=float(rec["success"]),
                action_histogram=(0.0, 0.0, 0.0, 0.0)))
    if not rows:
        print(f"{args.runs_csv}: no rows", file=sys.stderr)
        return 1
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        writer = csv_mod.writer(fh)
        writer.writerow(("dataset", "target", "algorithm", "alpha", "runs",
                         "mean_similarity", "mean_iterations", "success_rate"))
        counts: dict[tuple, int] = {}
        for row in rows:
            k = (row.dataset, row.target, row.algorithm, row.alpha)
            counts[k] = counts.get(k, 0) + 1
        for agg in aggregate_rows(rows):
            k = (agg.dataset, agg.target, agg.algorithm, agg.alpha)
            writer.writerow([agg.dataset, agg.target, agg.algorithm,
                             repr(agg.alpha), counts[k], repr(agg.mean_similarity),
                             repr(agg.mean_iterations), repr(agg.success_rate)])
    print(f"aggregated {len(rows)} runs into {args.out}")
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="quizforge",
        description="Compose quizzes from MCQ pools with RL agents.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-synthetic", help="generate a synthetic MCQ pool CSV")
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--n-mcqs", type=int, default=None)
    p.add_argument("--n-topics", type=int, default=None)
    p.add_argument("--n-levels", type=int, default=None)
    p.add_argument("--topic-concentration", type=float, default=None)
    p.add_argument("--level-concentration", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_gen_synthetic)

    p = sub.add_parser("load-data", help="validate / normalize a dataset CSV")
    p.add_argument("--data", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--topics", default=None,
                   help="keep only these comma-separated topic indices")
    p.add_argument("--topic-subset", type=int, default=None,
                   help="keep a seeded random subset of this many topics")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_load_data)

    p = sub.add_parser("build-env", help="materialize a quiz universe")
    p.add_argument("--config", default=None)
    p.add_argument("--data", default=None, help="dataset CSV ([universe] data)")
    p.add_argument("--out", required=True)
    p.add_argument("--size", type=int, default=None, help="[universe] size")
    p.add_argument("--quiz-size", type=int, default=None, help="[universe] quiz_size")
    p.add_argument("--topic-subset", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_build_env)

    p = sub.add_parser("train", help="train an agent on a universe")
    p.add_argument("--config", default=None)
    p.add_argument("--env", required=True, help="universe .npz from build-env")
    p.add_argument("--algo", choices=ALGORITHMS, default=None)
    p.add_argument("--out", required=True, help="checkpoint .npz path")
    p.add_argument("--log", default=None, help="train log JSONL path")
    _add_target_flags(p)
    _add_train_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("infer", help="greedy inference from a checkpoint")
    p.add_argument("--config", default=None)
    p.add_argument("--env", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--start", type=int, default=None)
    p.add_argument("--runs", type=int, default=10)
    p.add_argument("--out", default=None, help="write per-run JSONL here")
    _add_target_flags(p)
    _add_train_flags(p)  # provides --seed among the rest
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("oracle", help="exhaustive best-quiz scan")
    p.add_argument("--config", default=None)
    p.add_argument("--env", required=True)
    p.add_argument("--out", default=None, help="write the winner as JSON here")
    _add_target_flags(p)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("transfer", help="reuse a checkpoint on a new target/universe")
    p.add_argument("--config", default=None)
    p.add_argument("--env", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--runs", type=int, default=10)
    _add_target_flags(p)
    _add_train_flags(p)  # provides --seed among the rest
    p.set_defaults(func=cmd_transfer)

    p = sub.add_parser("run-plan", help="execute an experiment plan config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True, help="report directory")
    p.add_argument("--seed", type=int, default=None, help="override [plan] seed")
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(func=cmd_run_plan)

    p = sub.add_parser("report", help="re-aggregate a runs.csv into a report table")
    p.add_argument("--runs-csv", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
