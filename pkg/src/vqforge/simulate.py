"""Synthetic subjects and session logs with ground-truth labels.

Sincere subjects score ``clamp(round(q + bias + noise), 0, 100)`` with a
per-subject Gaussian bias and per-rating Gaussian noise. Three spammer kinds
mimic insincere behaviour: uniform random scores, one constant score, and
"nudging" the slider a few points from its random start position. Optional
faults inject the remaining gate failures (environment, quiz, negative
delay, inconsistent repeats or golden scores, dropout, no lenses) so every
screening outcome can be produced on demand.

Each subject draws from its own generator seeded by ``(seed, subject index)``,
so results do not depend on generation order.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from .cleaning import RatingTable
from .errors import BadSpec
from .screening import (
    EnvReport, Playback, QuizResult, Rating, Survey, VideoLoad, write_golden_csv,
    write_session_log,
)

SUBJECT_KINDS = ("sincere", "spammer_uniform", "spammer_constant", "spammer_nudge")
FAULTS = ("none", "env_fail", "quiz_fail", "negative_delay", "repeat_flip", "golden_flip",
          "dropout", "no_lenses")
STALL_DELAY = (2.5, 6.0)


@dataclass(frozen=True)
class SubjectModel:
    kind: str = "sincere"
    bias_std: float = 5.0
    noise_std: float = 10.0
    stall_prob: float = 0.0
    training_stall_prob: float = 0.0
    fault: str = "none"

    def __post_init__(self):
        if self.kind not in SUBJECT_KINDS:
            raise BadSpec(f"unknown subject kind {self.kind!r}")
        if self.fault not in FAULTS:
            raise BadSpec(f"unknown fault {self.fault!r}")
        if self.bias_std < 0 or self.noise_std < 0:
            raise BadSpec("standard deviations must be non-negative")
        for p in (self.stall_prob, self.training_stall_prob):
            if not 0 <= p <= 1:
                raise BadSpec(f"probability {p} outside [0, 1]")


@dataclass(frozen=True)
class WorldModel:
    n_videos: int = 200
    q_lo: float = 20.0
    q_hi: float = 80.0
    n_golden_pool: int = 20
    n_training: int = 5
    n_test: int = 90
    n_repeat: int = 4
    n_golden: int = 4

    @property
    def n_unique_test(self):
        return self.n_test - self.n_repeat - self.n_golden

    def __post_init__(self):
        if not 0 <= self.q_lo <= self.q_hi <= 100:
            raise BadSpec(f"quality range [{self.q_lo}, {self.q_hi}] must lie in [0, 100]")
        if self.n_repeat + self.n_golden >= self.n_test:
            raise BadSpec("n_repeat + n_golden must be smaller than n_test")
        if self.n_videos < self.n_unique_test:
            raise BadSpec(f"need at least {self.n_unique_test} videos, got {self.n_videos}")
        if self.n_golden_pool < self.n_golden:
            raise BadSpec("golden pool smaller than the per-session golden count")
        if self.n_repeat > self.n_unique_test:
            raise BadSpec("more repeats than unique test videos")


@dataclass(frozen=True)
class PopulationSpec:
    n_subjects: int = 500
    spammer_fraction: float = 0.0
    spammer_kinds: tuple = ("spammer_uniform", "spammer_constant", "spammer_nudge")
    bias_std: float = 5.0
    noise_std: float = 10.0
    stall_prob: float = 0.0
    training_stall_prob: float = 0.0
    no_lens_fraction: float = 0.0

    def __post_init__(self):
        if self.n_subjects < 1:
            raise BadSpec("population must have at least one subject")
        if not 0 <= self.spammer_fraction <= 1 or not 0 <= self.no_lens_fraction <= 1:
            raise BadSpec("fractions must lie in [0, 1]")
        if isinstance(self.spammer_kinds, str):
            kinds = tuple(k.strip() for k in self.spammer_kinds.split(",") if k.strip())
            object.__setattr__(self, "spammer_kinds", kinds)
        if not self.spammer_kinds or any(k not in SUBJECT_KINDS[1:] for k in self.spammer_kinds):
            raise BadSpec(f"bad spammer kinds {self.spammer_kinds!r}")

    def models(self, seed):
        """One SubjectModel per subject; spammer positions are drawn from ``seed``."""
        n_spam = int(round(self.spammer_fraction * self.n_subjects))
        base = SubjectModel("sincere", self.bias_std, self.noise_std, self.stall_prob,
                            self.training_stall_prob)
        models = [base] * self.n_subjects
        rng = np.random.default_rng([int(seed), 0x5A11])
        positions = np.sort(rng.choice(self.n_subjects, size=n_spam, replace=False))
        for j, pos in enumerate(positions):
            kind = self.spammer_kinds[j % len(self.spammer_kinds)]
            models[pos] = SubjectModel(kind, 0.0, 0.0, self.stall_prob, self.training_stall_prob)
        n_nolens = int(round(self.no_lens_fraction * self.n_subjects))
        if n_nolens:
            for pos in np.sort(rng.choice(self.n_subjects, size=n_nolens, replace=False)):
                m = models[pos]
                models[pos] = SubjectModel(m.kind, m.bias_std, m.noise_std, m.stall_prob,
                                           m.training_stall_prob, "no_lenses")
        return models


@dataclass
class StudyResult:
    sessions: dict
    table: RatingTable
    golden: dict
    labels: pd.DataFrame
    quality: dict = field(repr=False, default_factory=dict)

    def write(self, out_dir):
        """Write logs/<subject>.jsonl, ratings.csv, flags.csv, golden.csv and labels.csv."""
        out = Path(out_dir)
        (out / "logs").mkdir(parents=True, exist_ok=True)
        for sid, events in sorted(self.sessions.items()):
            with open(out / "logs" / f"{sid}.jsonl", "w") as fh:
                write_session_log(events, fh, sid)
        self.table.to_csv(out / "ratings.csv")
        self.table.flags_to_csv(out / "flags.csv")
        with open(out / "golden.csv", "w") as fh:
            write_golden_csv(self.golden, fh)
        self.labels.to_csv(out / "labels.csv", index=False, lineterminator="\n")


def subjects_for_coverage(world, ratings_per_content):
    """Population size giving about ``ratings_per_content`` ratings on each test video."""
    return int(math.ceil(ratings_per_content * world.n_videos / world.n_unique_test))


def _clamp_score(x):
    return float(min(100, max(0, int(np.rint(x)))))


def _delay(rng, stall_prob):
    if rng.random() < stall_prob:
        return round(float(rng.uniform(*STALL_DELAY)), 3)
    if rng.random() < 0.86:
        return 0.0
    return round(float(min(rng.exponential(0.2), 1.5)), 3)


class _Scorer:
    def __init__(self, model, rng):
        self.model = model
        self.rng = rng
        self.bias = float(rng.normal(0.0, model.bias_std)) if model.kind == "sincere" else 0.0
        self.constant = float(rng.integers(0, 101))

    def __call__(self, quality):
        """(score, slider_travel) for one rating."""
        rng, kind = self.rng, self.model.kind
        start = float(rng.integers(0, 101))
        if kind == "sincere":
            score = _clamp_score(quality + self.bias + rng.normal(0.0, self.model.noise_std))
        elif kind == "spammer_uniform":
            score = float(rng.integers(0, 101))
        elif kind == "spammer_constant":
            score = self.constant
        else:
            score = _clamp_score(start + rng.integers(-4, 5))
        return score, abs(score - start)


def _far(score):
    return score + 50.0 if score < 50 else score - 50.0


def _simulate_subject(sid, model, world, quality, test_ids, golden_ids, golden, rng):
    scorer = _Scorer(model, rng)
    events = []
    events.append(EnvReport(1366, 768, 90 if model.fault == "env_fail" else 100, "chrome", "desktop"))
    for k in range(world.n_training):
        events.append(VideoLoad(f"train{k}", round(float(rng.uniform(0.5, 2.0)), 3)))
    if model.fault == "env_fail":
        return events, []
    events.append(QuizResult(3 if model.fault == "quiz_fail" else int(rng.integers(5, 7))))
    if model.fault == "quiz_fail":
        return events, []

    for k in range(world.n_training):
        delay = _delay(rng, model.training_stall_prob)
        if model.fault == "negative_delay" and k == 1:
            delay = -0.5
        events.append(Playback(f"train{k}", delay))
        score, travel = scorer(float(rng.uniform(world.q_lo, world.q_hi)))
        events.append(Rating(f"train{k}", "training", score, travel))

    items = [(v, "test") for v in test_ids] + [(g, "golden") for g in golden_ids]
    order = [items[i] for i in rng.permutation(len(items))]
    test_pos = [i for i, (_, role) in enumerate(order) if role == "test"]
    for pos in sorted(rng.choice(test_pos, size=world.n_repeat, replace=False), reverse=True):
        vid = order[pos][0]
        at = int(rng.integers(pos + 1, len(order) + 1))
        order.insert(at, (vid, "repeat"))

    first_score = {}
    table_rows = []
    stop = world.n_test // 3 if model.fault == "dropout" else len(order)
    for vid, role in order[:stop]:
        events.append(Playback(vid, _delay(rng, model.stall_prob)))
        q = golden[vid] if role == "golden" else quality[vid]
        score, travel = scorer(q)
        if role == "repeat" and model.fault == "repeat_flip":
            score = _far(first_score[vid])
        if role == "golden" and model.fault == "golden_flip":
            score = _far(golden[vid])
        events.append(Rating(vid, role, score, travel))
        if role == "test":
            first_score[vid] = score
        if role != "repeat":
            table_rows.append((sid, vid, "video", score))
    if model.fault != "dropout":
        wore = model.fault != "no_lenses"
        events.append(Survey(wore, "20-30", "na", "15-30in"))
    return events, table_rows


def simulate_study(world=None, population=None, seed=0):
    """Simulate a full study.

    ``population`` is a PopulationSpec or an explicit list of SubjectModel.
    Returns a StudyResult with per-subject session logs, the rating table
    (first showings only; repeats stay in the logs), golden references and
    ground-truth labels.
    """
    world = world or WorldModel()
    population = population if population is not None else PopulationSpec()
    if isinstance(population, PopulationSpec):
        models = population.models(seed)
    else:
        models = list(population)
        if not models:
            raise BadSpec("population must have at least one subject")
    world_rng = np.random.default_rng([int(seed), 0xC0DE])
    video_ids = [f"v{i:04d}" for i in range(world.n_videos)]
    quality = dict(zip(video_ids, world_rng.uniform(world.q_lo, world.q_hi, world.n_videos)))
    golden_ids_all = [f"g{i:03d}" for i in range(world.n_golden_pool)]
    golden = dict(zip(golden_ids_all,
                      np.round(np.sort(world_rng.uniform(world.q_lo, world.q_hi,
                                                         world.n_golden_pool)), 3)))
    strata = np.array_split(np.arange(world.n_golden_pool), world.n_golden)

    counts = np.zeros(world.n_videos)
    sessions, rows, labels, flags = {}, [], [], []
    for idx, model in enumerate(models):
        sid = f"s{idx:05d}"
        rng = np.random.default_rng([int(seed), idx + 1])
        # balanced coverage: least-rated videos first, random tie-break
        keys = counts + rng.random(world.n_videos) * 0.5
        picks = np.sort(np.argsort(keys, kind="stable")[:world.n_unique_test])
        counts[picks] += 1
        test_ids = [video_ids[i] for i in picks]
        golden_ids = [golden_ids_all[int(rng.choice(s))] for s in strata]
        events, table_rows = _simulate_subject(sid, model, world, quality, test_ids,
                                               golden_ids, golden, rng)
        sessions[sid] = events
        rows.extend(table_rows)
        test_plays = [e for e in events if isinstance(e, Playback) and not e.video_id.startswith("train")]
        stalls = sum(e.delay > 2.0 for e in test_plays)
        survey = [e for e in events if isinstance(e, Survey)]
        flags.append((sid, False, stalls / len(test_plays) if test_plays else 0.0,
                      survey[0].wore_prescribed_lenses if survey else True))
        labels.append((sid, model.kind, model.fault, model.kind != "sincere"))
    ratings = pd.DataFrame(rows, columns=["subject_id", "content_id", "content_kind", "score"])
    flag_df = pd.DataFrame(flags, columns=["subject_id", "blocked", "stall_fraction", "wore_lenses"])
    label_df = pd.DataFrame(labels, columns=["subject_id", "kind", "fault", "spammer"])
    return StudyResult(sessions, RatingTable(ratings, flag_df), golden, label_df,
                       {**quality, **golden})


def coverage_population(base=None):
    """Canned subjects, one per screening outcome (accepted first, then each rejection)."""
    base = base or SubjectModel()
    return [
        base,
        SubjectModel(fault="env_fail"),
        SubjectModel(fault="quiz_fail"),
        SubjectModel(training_stall_prob=1.0),
        SubjectModel(fault="negative_delay"),
        SubjectModel(stall_prob=1.0),
        SubjectModel(kind="spammer_constant"),
        SubjectModel(kind="spammer_nudge"),
        SubjectModel(fault="repeat_flip", bias_std=0.0, noise_std=2.0),
        SubjectModel(fault="golden_flip", bias_std=0.0, noise_std=2.0),
        SubjectModel(fault="dropout"),
    ]
