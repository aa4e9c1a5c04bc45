"""Synthetic MCQ pool generation and CSV dataset ingest.

Synthetic pools draw one categorical distribution over topics and one over
difficulty levels from a Dirichlet (concentration 1.0 -> uniform-ish pools,
0.5 -> biased pools), then sample every MCQ independently from both. The
RNG is numpy's PCG64 seeded from DatasetSpec.seed, so datasets reproduce
bit-for-bit across platforms.

CSV schema: id,topic,difficulty,question,choice_a,choice_b,choice_c,choice_d,answer
(only id/topic/difficulty are required; text columns round-trip unmodified).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .domain import Mcq

CSV_COLUMNS = ("id", "topic", "difficulty", "question",
               "choice_a", "choice_b", "choice_c", "choice_d", "answer")
REQUIRED_COLUMNS = ("id", "topic", "difficulty")


class ParseError(ValueError):
    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class UnknownColumnError(ValueError):
    pass


class EmptyDatasetError(ValueError):
    pass


class EmptyResultError(ValueError):
    pass


@dataclass(frozen=True)
class DatasetSpec:
    """Knobs for one synthetic pool."""

    n_mcqs: int
    n_topics: int
    n_levels: int
    topic_concentration: float = 1.0
    level_concentration: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.n_mcqs < 1 or self.n_topics < 1 or self.n_levels < 1:
            raise ValueError("n_mcqs, n_topics and n_levels must all be >= 1")
        if self.topic_concentration <= 0 or self.level_concentration <= 0:
            raise ValueError("Dirichlet concentrations must be > 0")


@dataclass
class Dataset:
    """An MCQ pool with dense topic/level indices and the label sidecar."""

    mcqs: list[Mcq]
    topic_labels: list[str]
    level_labels: list[str]
    meta: dict = field(default_factory=dict)

    @property
    def n_topics(self) -> int:
        return len(self.topic_labels)

    @property
    def n_levels(self) -> int:
        return len(self.level_labels)

    def __len__(self) -> int:
        return len(self.mcqs)


def _dirichlet(rng: np.random.Generator, concentration: float, size: int) -> np.ndarray:
    # gamma(mu, 1) draws normalized to sum 1 == Dirichlet(mu * ones)
    draws = rng.gamma(concentration, 1.0, size=size)
    total = draws.sum()
    if total == 0.0:  # conceivable only for extreme concentrations
        return np.full(size, 1.0 / size)
    return draws / total


def generate_synthetic(spec: DatasetSpec) -> Dataset:
    """Sample a synthetic pool; deterministic given spec.seed."""
    rng = np.random.default_rng(spec.seed)
    topic_cat = _dirichlet(rng, spec.topic_concentration, spec.n_topics)
    level_cat = _dirichlet(rng, spec.level_concentration, spec.n_levels)
    topics = rng.choice(spec.n_topics, size=spec.n_mcqs, p=topic_cat)
    levels = rng.choice(spec.n_levels, size=spec.n_mcqs, p=level_cat)
    mcqs = [Mcq(id=i, topic=int(topics[i]), level=int(levels[i]))
            for i in range(spec.n_mcqs)]
    return Dataset(
        mcqs=mcqs,
        topic_labels=[f"topic_{i:03d}" for i in range(spec.n_topics)],
        level_labels=[str(i + 1) for i in range(spec.n_levels)],
        meta={
            "kind": "synthetic",
            "seed": spec.seed,
            "topic_concentration": spec.topic_concentration,
            "level_concentration": spec.level_concentration,
            "topic_categorical": [float(p) for p in topic_cat],
            "level_categorical": [float(p) for p in level_cat],
        },
    )


def _label_sort_key(label: str):
    # numeric labels sort by value ("2" < "10"), everything else alphabetically
    try:
        return (0, float(label), label)
    except ValueError:
        return (1, 0.0, label)


def load_dataset_csv(path) -> Dataset:
    """Read a dataset CSV, assigning dense topic/level indices from the labels."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise EmptyDatasetError(f"{path}: no header row")
        unknown = set(reader.fieldnames) - set(CSV_COLUMNS)
        if unknown:
            raise UnknownColumnError(f"{path}: unknown columns {sorted(unknown)}")
        missing = set(REQUIRED_COLUMNS) - set(reader.fieldnames)
        if missing:
            raise UnknownColumnError(f"{path}: missing required columns {sorted(missing)}")

        rows = []
        for line_no, row in enumerate(reader, start=2):
            raw_id = (row.get("id") or "").strip()
            topic = (row.get("topic") or "").strip()
            level = (row.get("difficulty") or "").strip()
            if not raw_id:
                raise ParseError("missing id", line_no)
            if not topic:
                raise ParseError("missing topic", line_no)
            if not level:
                raise ParseError("missing difficulty", line_no)
            try:
                mcq_id = int(raw_id)
            except ValueError:
                raise ParseError(f"id {raw_id!r} is not an integer", line_no) from None
            if mcq_id < 0:
                raise ParseError(f"id {mcq_id} is negative", line_no)
            rows.append((line_no, mcq_id, topic, level, row))

    if not rows:
        raise EmptyDatasetError(f"{path}: no data rows")

    seen: dict[int, int] = {}
    for line_no, mcq_id, _, _, _ in rows:
        if mcq_id in seen:
            raise ParseError(f"duplicate id {mcq_id} (first seen line {seen[mcq_id]})", line_no)
        seen[mcq_id] = line_no

    topic_labels = sorted({r[2] for r in rows}, key=_label_sort_key)
    level_labels = sorted({r[3] for r in rows}, key=_label_sort_key)
    topic_index = {lab: i for i, lab in enumerate(topic_labels)}
    level_index = {lab: i for i, lab in enumerate(level_labels)}

    mcqs = []
    for _, mcq_id, topic, level, row in rows:
        choices = tuple((row.get(f"choice_{c}") or "") for c in "abcd")
        mcqs.append(Mcq(
            id=mcq_id,
            topic=topic_index[topic],
            level=level_index[level],
            question=row.get("question") or "",
            choices=choices if any(choices) else (),
            answer=row.get("answer") or "",
        ))
    return Dataset(mcqs=mcqs, topic_labels=topic_labels, level_labels=level_labels,
                   meta={"kind": "csv", "path": str(path)})


def save_dataset_csv(dataset: Dataset, path) -> None:
    """Export to the CSV schema; synthetic pools get empty text columns."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for m in dataset.mcqs:
            choices = list(m.choices) + [""] * (4 - len(m.choices))
            writer.writerow([
                m.id, dataset.topic_labels[m.topic], dataset.level_labels[m.level],
                m.question, *choices[:4], m.answer,
            ])


def filter_topics(dataset: Dataset, topics) -> Dataset:
    """Keep only MCQs whose topic is in `topics`, re-indexed densely."""
    chosen = sorted(set(int(t) for t in topics))
    if not chosen:
        raise ValueError("topics must be non-empty")
    for t in chosen:
        if t < 0 or t >= dataset.n_topics:
            raise ValueError(f"topic index {t} out of range [0, {dataset.n_topics})")
    remap = {orig: new for new, orig in enumerate(chosen)}
    kept = [
        Mcq(id=m.id, topic=remap[m.topic], level=m.level,
            question=m.question, choices=m.choices, answer=m.answer)
        for m in dataset.mcqs if m.topic in remap
    ]
    if not kept:
        raise EmptyResultError(f"no MCQ has a topic in {chosen}")
    meta = dict(dataset.meta)
    meta["topic_subset"] = chosen
    return Dataset(
        mcqs=kept,
        topic_labels=[dataset.topic_labels[t] for t in chosen],
        level_labels=list(dataset.level_labels),
        meta=meta,
    )


def sample_topic_subset(dataset: Dataset, n_topics: int, seed: int = 0) -> Dataset:
    """Filter to a uniformly drawn subset of n_topics topics."""
    if n_topics > dataset.n_topics:
        raise ValueError(f"cannot sample {n_topics} of {dataset.n_topics} topics")
    rng = np.random.default_rng(seed)
    chosen = rng.choice(dataset.n_topics, size=n_topics, replace=False)
    return filter_topics(dataset, chosen)
