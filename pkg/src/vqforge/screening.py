"""Offline replay of a subject's rating session through the study's gates.

A session is an ordered list of events. :func:`apply_event` folds one event
into an immutable :class:`SessionState`; once a state is rejected it absorbs
every later event. :func:`finalize_session` applies the post-task repeat and
golden-video checks and produces the :class:`SessionVerdict`.

Phase order: instructions (environment reports, video loads) -> quiz ->
training (playback/rating pairs) -> test (a mid-task check fires after half
the test ratings) -> survey -> done.
"""
from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field, fields, replace
from enum import Enum
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator

from .errors import FormatError, MissingGolden, PhaseOrderError


class Reason(str, Enum):
    NONE = "None"
    ENV_FAIL = "EnvFail"
    QUIZ_FAIL = "QuizFail"
    TRAINING_DELAY = "TrainingDelay"
    NEGATIVE_DELAY = "NegativeDelay"
    MID_STALL = "MidStall"
    FLAT_SCORES = "FlatScores"
    SLIDER_NUDGE = "SliderNudge"
    REPEAT_INCONSISTENT = "RepeatInconsistent"
    GOLDEN_INCONSISTENT = "GoldenInconsistent"
    INCOMPLETE = "Incomplete"


REJECTION_REASONS = tuple(r for r in Reason if r is not Reason.NONE)


class Phase(str, Enum):
    INSTRUCTIONS = "instructions"
    TRAINING = "training"
    TEST = "test"
    SURVEY = "survey"
    DONE = "done"


@dataclass(frozen=True)
class ScreeningConfig:
    min_short_side_mobile: int = 480
    min_short_side_other: int = 720
    required_zoom: float = 100.0
    browser_allowlist: tuple = ("chrome", "firefox", "edge", "safari")
    max_total_load: float = 20.0
    quiz_pass: int = 5
    per_video_delay_max: float = 2.0
    training_delay_total_max: float = 5.0
    mid_stall_fraction: float = 0.5
    flat_score_min_std: float = 5.0
    min_slider_travel: float = 5.0
    repeat_mad_max: float = 20.0
    golden_mad_max: float = 25.0
    n_training: int = 5
    n_test: int = 90
    n_repeat: int = 4
    n_golden: int = 4

    def __post_init__(self):
        if isinstance(self.browser_allowlist, str):
            names = [b.strip() for b in self.browser_allowlist.split(",")]
            object.__setattr__(self, "browser_allowlist", tuple(b for b in names if b))
        object.__setattr__(self, "browser_allowlist",
                           tuple(b.lower() for b in self.browser_allowlist))
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name != "browser_allowlist" and not v > 0:
                raise ValueError(f"screening threshold {f.name} must be positive, got {v}")
        if self.n_repeat + self.n_golden >= self.n_test:
            raise ValueError("n_repeat + n_golden must be smaller than n_test")


# -- events ------------------------------------------------------------------

@dataclass(frozen=True)
class EnvReport:
    window_w: int
    window_h: int
    zoom: float
    browser: str
    device: str = "desktop"


@dataclass(frozen=True)
class VideoLoad:
    video_id: str
    load_time: float


@dataclass(frozen=True)
class Playback:
    video_id: str
    delay: float


@dataclass(frozen=True)
class Rating:
    video_id: str
    role: str
    score: float
    slider_travel: float

    def __post_init__(self):
        if self.role not in ("training", "test", "repeat", "golden"):
            raise FormatError(f"unknown rating role {self.role!r}")
        if not 0 <= self.score <= 100:
            raise FormatError(f"score {self.score} outside [0, 100]")
        if not 0 <= self.slider_travel <= 100:
            raise FormatError(f"slider travel {self.slider_travel} outside [0, 100]")


@dataclass(frozen=True)
class QuizResult:
    correct: int

    def __post_init__(self):
        if not 0 <= self.correct <= 6:
            raise FormatError(f"quiz score {self.correct} outside [0, 6]")


@dataclass(frozen=True)
class Survey:
    wore_prescribed_lenses: bool = True
    age_group: str = ""
    gender: str = ""
    viewing_distance: str = ""


EVENT_TYPES = {cls.__name__: cls for cls in
               (EnvReport, VideoLoad, Playback, Rating, QuizResult, Survey)}


def event_to_dict(event, subject_id=None):
    out = {"type": type(event).__name__}
    if subject_id is not None:
        out["subject_id"] = subject_id
    out.update(asdict(event))
    return out


def event_from_dict(record):
    record = dict(record)
    kind = record.pop("type", None)
    record.pop("subject_id", None)
    cls = EVENT_TYPES.get(kind)
    if cls is None:
        raise FormatError(f"unknown event type {kind!r}")
    try:
        return cls(**record)
    except TypeError as exc:
        raise FormatError(f"bad {kind} event: {exc}") from exc


# -- state machine -----------------------------------------------------------

@dataclass(frozen=True)
class SessionState:
    subject_id: str = ""
    phase: Phase = Phase.INSTRUCTIONS
    reason: Reason | None = None
    env_reported: bool = False
    total_load: float = 0.0
    training_playbacks: int = 0
    training_ratings: int = 0
    training_delay_total: float = 0.0
    test_playbacks: int = 0
    test_stalls: int = 0
    ratings: tuple = ()
    survey: Survey | None = None

    @property
    def rejected(self):
        return self.reason is not None

    @property
    def stall_fraction(self):
        return self.test_stalls / self.test_playbacks if self.test_playbacks else 0.0


def _reject(state, reason):
    return replace(state, reason=reason)


def _env_ok(ev, cfg):
    short = min(ev.window_w, ev.window_h)
    need = cfg.min_short_side_mobile if ev.device == "mobile" else cfg.min_short_side_other
    return (short >= need and float(ev.zoom) == float(cfg.required_zoom)
            and ev.browser.lower() in cfg.browser_allowlist)


def _mid_check(state, cfg):
    if state.stall_fraction > cfg.mid_stall_fraction:
        return _reject(state, Reason.MID_STALL)
    scores = np.array([r.score for r in state.ratings], dtype=np.float64)
    if scores.std() < cfg.flat_score_min_std:
        return _reject(state, Reason.FLAT_SCORES)
    if max(r.slider_travel for r in state.ratings) < cfg.min_slider_travel:
        return _reject(state, Reason.SLIDER_NUDGE)
    return state


def apply_event(state, event, cfg=None):
    """Fold one event into the session state (returns a new state)."""
    cfg = cfg or ScreeningConfig()
    if state.rejected:
        return state
    phase = state.phase

    if isinstance(event, EnvReport):
        if phase is not Phase.INSTRUCTIONS:
            raise PhaseOrderError(f"EnvReport during {phase.value}")
        state = replace(state, env_reported=True)
        return state if _env_ok(event, cfg) else _reject(state, Reason.ENV_FAIL)

    if isinstance(event, VideoLoad):
        if phase not in (Phase.INSTRUCTIONS, Phase.TRAINING):
            raise PhaseOrderError(f"VideoLoad during {phase.value}")
        state = replace(state, total_load=state.total_load + event.load_time)
        if state.total_load >= cfg.max_total_load:
            return _reject(state, Reason.ENV_FAIL)
        return state

    if isinstance(event, QuizResult):
        if phase is not Phase.INSTRUCTIONS:
            raise PhaseOrderError(f"QuizResult during {phase.value}")
        if not state.env_reported:
            return _reject(state, Reason.ENV_FAIL)
        if event.correct < cfg.quiz_pass:
            return _reject(state, Reason.QUIZ_FAIL)
        return replace(state, phase=Phase.TRAINING)

    if isinstance(event, Playback):
        if event.delay < 0 and phase in (Phase.TRAINING, Phase.TEST):
            return _reject(state, Reason.NEGATIVE_DELAY)
        if phase is Phase.TRAINING:
            total = state.training_delay_total + event.delay
            state = replace(state, training_playbacks=state.training_playbacks + 1,
                            training_delay_total=total)
            if event.delay > cfg.per_video_delay_max or total > cfg.training_delay_total_max:
                return _reject(state, Reason.TRAINING_DELAY)
            return state
        if phase is Phase.TEST:
            stalled = event.delay > cfg.per_video_delay_max
            return replace(state, test_playbacks=state.test_playbacks + 1,
                           test_stalls=state.test_stalls + int(stalled))
        raise PhaseOrderError(f"Playback during {phase.value}")

    if isinstance(event, Rating):
        if phase is Phase.TRAINING:
            if event.role != "training":
                raise PhaseOrderError(f"{event.role} rating during training")
            n = state.training_ratings + 1
            return replace(state, training_ratings=n,
                           phase=Phase.TEST if n >= cfg.n_training else phase)
        if phase is Phase.TEST:
            if event.role == "training":
                raise PhaseOrderError("training rating during the test phase")
            state = replace(state, ratings=state.ratings + (event,))
            n = len(state.ratings)
            if n == cfg.n_test // 2:
                state = _mid_check(state, cfg)
            if n >= cfg.n_test and not state.rejected:
                state = replace(state, phase=Phase.SURVEY)
            return state
        raise PhaseOrderError(f"Rating during {phase.value}")

    if isinstance(event, Survey):
        if phase is not Phase.SURVEY:
            raise PhaseOrderError(f"Survey during {phase.value}")
        return replace(state, survey=event, phase=Phase.DONE)

    raise TypeError(f"not a session event: {event!r}")


def replay(events, cfg=None, subject_id=""):
    cfg = cfg or ScreeningConfig()
    state = SessionState(subject_id=subject_id)
    for ev in events:
        state = apply_event(state, ev, cfg)
    return state


@dataclass(frozen=True)
class SessionVerdict:
    subject_id: str
    state: str
    reason: Reason
    ratings: tuple = field(default=(), repr=False)
    stall_fraction: float = 0.0
    wore_lenses: bool = True

    @property
    def accepted(self):
        return self.state == "Accepted"


def _repeat_pairs(ratings):
    first = {}
    pairs = []
    for r in ratings:
        if r.role == "test":
            first.setdefault(r.video_id, r.score)
        elif r.role == "repeat" and r.video_id in first:
            pairs.append((first[r.video_id], r.score))
    return pairs


def finalize_session(state, cfg=None, golden_scores=None):
    """Post-task checks. Sessions that never reached the survey are ``Incomplete``."""
    cfg = cfg or ScreeningConfig()
    golden_scores = golden_scores or {}

    def verdict(reason):
        wore = state.survey.wore_prescribed_lenses if state.survey else True
        return SessionVerdict(state.subject_id,
                              "Accepted" if reason is Reason.NONE else "Rejected",
                              reason, state.ratings, state.stall_fraction, wore)

    if state.rejected:
        return verdict(state.reason)
    if len(state.ratings) < cfg.n_test or state.phase not in (Phase.SURVEY, Phase.DONE):
        return verdict(Reason.INCOMPLETE)
    pairs = _repeat_pairs(state.ratings)
    golden = [r for r in state.ratings if r.role == "golden"]
    if len(pairs) < cfg.n_repeat or len(golden) < cfg.n_golden:
        return verdict(Reason.INCOMPLETE)
    if np.mean([abs(a - b) for a, b in pairs]) > cfg.repeat_mad_max:
        return verdict(Reason.REPEAT_INCONSISTENT)
    diffs = []
    for r in golden:
        if r.video_id not in golden_scores:
            raise MissingGolden(f"no reference score for golden video {r.video_id!r}")
        diffs.append(abs(r.score - golden_scores[r.video_id]))
    if np.mean(diffs) > cfg.golden_mad_max:
        return verdict(Reason.GOLDEN_INCONSISTENT)
    return verdict(Reason.NONE)


def screen_session(events, cfg=None, golden_scores=None, subject_id=""):
    cfg = cfg or ScreeningConfig()
    return finalize_session(replay(events, cfg, subject_id), cfg, golden_scores)


def screen_sessions(sessions, cfg=None, golden_scores=None, n_jobs=None):
    """Verdicts for a ``{subject_id: events}`` mapping, in sorted subject order."""
    ids = sorted(sessions)
    if n_jobs in (None, 1) or len(ids) < 2:
        return [screen_session(sessions[s], cfg, golden_scores, s) for s in ids]
    from joblib import Parallel, delayed

    return Parallel(n_jobs=n_jobs)(
        delayed(screen_session)(sessions[s], cfg, golden_scores, s) for s in ids
    )


class SessionScreener(BaseEstimator):
    """``fit`` stores the golden reference scores; ``predict`` maps sessions to verdicts."""

    def __init__(self, config=None, n_jobs=None):
        self.config = config
        self.n_jobs = n_jobs

    def fit(self, golden_scores, y=None):
        self.golden_scores_ = dict(golden_scores)
        return self

    def predict(self, sessions):
        golden = getattr(self, "golden_scores_", {})
        return screen_sessions(sessions, self.config or ScreeningConfig(), golden, self.n_jobs)


# -- file formats ------------------------------------------------------------

def write_session_log(events, fh, subject_id):
    for ev in events:
        fh.write(json.dumps(event_to_dict(ev, subject_id), sort_keys=True))
        fh.write("\n")


def _read_jsonl(path, default_subject):
    sessions = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(f"{path}:{lineno}: {exc.msg}") from exc
            sid = str(record.get("subject_id", default_subject))
            sessions.setdefault(sid, []).append(event_from_dict(record))
    return sessions


def read_session_logs(path):
    """Load ``{subject_id: events}`` from one JSONL file or a directory of them."""
    path = Path(path)
    if path.is_dir():
        sessions = {}
        for p in sorted(path.glob("*.jsonl")):
            for sid, evs in _read_jsonl(p, p.stem).items():
                sessions.setdefault(sid, []).extend(evs)
        return sessions
    return _read_jsonl(path, path.stem)


def read_golden_csv(path):
    with open(path, newline="") as fh:
        return {row["video_id"]: float(row["mos"]) for row in csv.DictReader(fh)}


def write_golden_csv(golden, fh):
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(["video_id", "mos"])
    for vid in sorted(golden):
        writer.writerow([vid, repr(float(golden[vid]))])


def write_verdicts_csv(verdicts, fh):
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(["subject_id", "state", "reason"])
    for v in verdicts:
        writer.writerow([v.subject_id, v.state, v.reason.value])


def read_verdicts_csv(path):
    with open(path, newline="") as fh:
        return {row["subject_id"]: SessionVerdict(row["subject_id"], row["state"],
                                                  Reason(row["reason"]))
                for row in csv.DictReader(fh)}
