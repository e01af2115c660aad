"""Post-screening data cleaning of a subjective rating table.

``clean`` runs four stages in order:

1. drop subjects who were blocked (or rejected by screening) or whose session
   stalled on more than half the videos;
2. drop subjects who did not wear their prescribed lenses;
3. ITU-R BT.500 Annex 1 subject rejection, run separately per content kind;
4. per-stimulus outlier score removal, using the modified Z-score when the
   score distribution looks Gaussian (kurtosis in [2, 4]) and Tukey fences
   otherwise.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from sklearn.base import BaseEstimator

from .errors import EmptyTable, FormatError, TooFew
from .stats import kurtosis, moment_kurtosis

CONTENT_KINDS = ("video", "sv", "tv", "stv")
RATING_COLUMNS = ["subject_id", "content_id", "content_kind", "score"]
FLAG_COLUMNS = ["subject_id", "blocked", "stall_fraction", "wore_lenses"]


@dataclass(frozen=True)
class CleaningConfig:
    stall_fraction_max: float = 0.5
    bt500_outlier_fraction: float = 0.05
    bt500_symmetry: float = 0.3
    bt500_normal_kurtosis: tuple = (2.0, 4.0)
    gaussian_kurtosis: tuple = (2.0, 4.0)
    modz_threshold: float = 3.5
    tukey_k: float = 1.5
    min_scores_outlier: int = 5


class RatingTable:
    """Sparse subjects x contents score table plus per-subject flags.

    ``ratings`` has columns subject_id, content_id, content_kind, score;
    ``flags`` is indexed by subject_id with columns blocked, stall_fraction,
    wore_lenses. Subjects without a flags row get the benign defaults.
    """

    def __init__(self, ratings, flags=None):
        df = pd.DataFrame(ratings, columns=RATING_COLUMNS) if not isinstance(ratings, pd.DataFrame) \
            else ratings[RATING_COLUMNS].copy()
        df["subject_id"] = df["subject_id"].astype(str)
        df["content_id"] = df["content_id"].astype(str)
        df["content_kind"] = df["content_kind"].astype(str)
        df["score"] = df["score"].astype(np.float64)
        bad_kind = ~df["content_kind"].isin(CONTENT_KINDS)
        if bad_kind.any():
            raise FormatError(f"unknown content kind {df.loc[bad_kind, 'content_kind'].iloc[0]!r}")
        if ((df["score"] < 0) | (df["score"] > 100) | df["score"].isna()).any():
            raise FormatError("scores must lie in [0, 100]")
        if df.duplicated(["subject_id", "content_kind", "content_id"]).any():
            raise FormatError("more than one score for a (subject, content) pair")
        self.ratings = df.reset_index(drop=True)

        subjects = sorted(set(df["subject_id"]))
        fl = pd.DataFrame({"blocked": False, "stall_fraction": 0.0, "wore_lenses": True},
                          index=pd.Index(subjects, name="subject_id"))
        if flags is not None:
            given = flags if isinstance(flags, pd.DataFrame) else pd.DataFrame(flags, columns=FLAG_COLUMNS)
            if "subject_id" in given.columns:
                given = given.set_index("subject_id")
            given.index = given.index.astype(str)
            given = given[["blocked", "stall_fraction", "wore_lenses"]]
            fl = given.combine_first(fl)
            fl.index.name = "subject_id"
        fl["blocked"] = fl["blocked"].astype(bool)
        fl["wore_lenses"] = fl["wore_lenses"].astype(bool)
        fl["stall_fraction"] = fl["stall_fraction"].astype(np.float64)
        self.flags = fl.sort_index()

    def __len__(self):
        return len(self.ratings)

    @property
    def subjects(self):
        return sorted(set(self.ratings["subject_id"]))

    def kind(self, kind):
        sub = self.ratings[self.ratings["content_kind"] == kind]
        return RatingTable(sub, self.flags.reset_index())

    def drop_subjects(self, ids, kind=None):
        mask = self.ratings["subject_id"].isin(set(ids))
        if kind is not None:
            mask &= self.ratings["content_kind"] == kind
        return RatingTable(self.ratings[~mask], self.flags.reset_index())

    def to_csv(self, path_or_fh):
        self.ratings.to_csv(path_or_fh, index=False, lineterminator="\n", float_format=_fmt)

    def flags_to_csv(self, path_or_fh):
        self.flags.reset_index().to_csv(path_or_fh, index=False, lineterminator="\n")


_fmt = "%.10g"


def read_ratings_csv(path, flags_path=None):
    ratings = pd.read_csv(path, dtype={"subject_id": str, "content_id": str, "content_kind": str})
    flags = None
    if flags_path is not None:
        flags = pd.read_csv(flags_path, dtype={"subject_id": str})
        for col in ("blocked", "wore_lenses"):
            flags[col] = flags[col].map(_parse_bool)
    return RatingTable(ratings, flags)


def _parse_bool(v):
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    s = str(v).strip().lower()
    if s in ("true", "1", "yes"):
        return True
    if s in ("false", "0", "no"):
        return False
    raise FormatError(f"not a boolean: {v!r}")


# -- BT.500 ------------------------------------------------------------------

def stimulus_stats(ratings):
    """Per (kind, content): n, mean, sample std, beta2 (population moments)."""
    g = ratings.groupby(["content_kind", "content_id"], sort=True)["score"]
    stats = g.agg(n="size", mean="mean", std=lambda s: s.std(ddof=1) if len(s) > 1 else 0.0)
    stats["beta2"] = g.agg(moment_kurtosis)
    return stats


def bt500_screen(table, config=None):
    """Subject ids rejected by one pass of the BT.500 Annex 1 procedure."""
    cfg = config or CleaningConfig()
    df = table.ratings if isinstance(table, RatingTable) else table
    if len(df) == 0:
        raise EmptyTable("no ratings to screen")
    stats = stimulus_stats(df)
    lo_k, hi_k = cfg.bt500_normal_kurtosis
    normal = (stats["beta2"] >= lo_k) & (stats["beta2"] <= hi_k)
    width = np.where(normal, 2.0, math.sqrt(20.0)) * stats["std"]
    stats["upper"] = stats["mean"] + width
    stats["lower"] = stats["mean"] - width
    stats["usable"] = (stats["n"] >= 2) & (stats["std"] > 0)
    merged = df.join(stats[["upper", "lower", "usable"]], on=["content_kind", "content_id"])
    use = merged["usable"].to_numpy()
    high = (merged["score"] > merged["upper"]).to_numpy() & use
    low = (merged["score"] < merged["lower"]).to_numpy() & use
    per = pd.DataFrame({"subject_id": merged["subject_id"], "P": high, "Q": low}) \
        .groupby("subject_id").agg(P=("P", "sum"), Q=("Q", "sum"), J=("P", "size"))
    pq = per["P"] + per["Q"]
    frac = pq / per["J"]
    with np.errstate(invalid="ignore", divide="ignore"):
        skew = (per["P"] - per["Q"]).abs() / pq
    reject = (frac > cfg.bt500_outlier_fraction) & (pq > 0) & (skew < cfg.bt500_symmetry)
    return sorted(per.index[reject.to_numpy()])


class BT500Screener(BaseEstimator):
    """Estimator form of :func:`bt500_screen`; ``rejected_`` holds the ids after ``fit``."""

    def __init__(self, outlier_fraction=0.05, symmetry=0.3, normal_kurtosis=(2.0, 4.0)):
        self.outlier_fraction = outlier_fraction
        self.symmetry = symmetry
        self.normal_kurtosis = normal_kurtosis

    def fit(self, table, y=None):
        cfg = CleaningConfig(bt500_outlier_fraction=self.outlier_fraction,
                             bt500_symmetry=self.symmetry,
                             bt500_normal_kurtosis=tuple(self.normal_kurtosis))
        self.rejected_ = bt500_screen(table, cfg)
        return self

    def transform(self, table):
        return table.drop_subjects(self.rejected_)


# -- per-stimulus outlier scores -------------------------------------------------

@dataclass(frozen=True)
class OutlierResult:
    kept: np.ndarray
    dropped: np.ndarray
    method: str


def modified_z_scores(x):
    """Modified Z-scores about the median; ``None`` when every dispersion measure is zero."""
    x = np.asarray(x, dtype=np.float64)
    med = np.median(x)
    dev = x - med
    mad = np.median(np.abs(dev))
    if mad > 0:
        return 0.6745 * dev / mad
    mean_ad = np.mean(np.abs(dev))
    if mean_ad > 0:
        return dev / (1.253314 * mean_ad)
    return None


def tukey_fences(x, k=1.5):
    q1, q3 = np.quantile(np.asarray(x, dtype=np.float64), [0.25, 0.75], method="linear")
    iqr = q3 - q1
    return q1 - k * iqr, q3 + k * iqr


def outlier_filter(scores, method="auto", config=None):
    """Drop outlying scores of one stimulus.

    ``method`` is ``auto`` (kurtosis gate), ``modified_z`` or ``tukey``.
    Returns the kept scores, the dropped indices and the method applied.
    """
    cfg = config or CleaningConfig()
    x = np.asarray(scores, dtype=np.float64).ravel()
    if x.size < cfg.min_scores_outlier:
        raise TooFew(f"outlier filtering needs at least {cfg.min_scores_outlier} scores, got {x.size}")
    if method == "auto":
        if np.all(x == x[0]):
            return OutlierResult(x.copy(), np.empty(0, dtype=np.int64), "none")
        lo, hi = cfg.gaussian_kurtosis
        method = "modified_z" if lo <= kurtosis(x) <= hi else "tukey"
    if method == "modified_z":
        m = modified_z_scores(x)
        drop = np.zeros(x.size, dtype=bool) if m is None else np.abs(m) > cfg.modz_threshold
    elif method == "tukey":
        lower, upper = tukey_fences(x, cfg.tukey_k)
        drop = (x < lower) | (x > upper)
    else:
        raise ValueError(f"unknown outlier method {method!r}")
    return OutlierResult(x[~drop], np.flatnonzero(drop), method)


class ScoreOutlierFilter(BaseEstimator):
    """sklearn-style outlier detector over a 1-D score sample (``1`` inlier, ``-1`` outlier)."""

    def __init__(self, method="auto", modz_threshold=3.5, tukey_k=1.5, gaussian_kurtosis=(2.0, 4.0)):
        self.method = method
        self.modz_threshold = modz_threshold
        self.tukey_k = tukey_k
        self.gaussian_kurtosis = gaussian_kurtosis

    def fit_predict(self, X, y=None):
        x = np.asarray(X, dtype=np.float64).ravel()
        cfg = CleaningConfig(modz_threshold=self.modz_threshold, tukey_k=self.tukey_k,
                             gaussian_kurtosis=tuple(self.gaussian_kurtosis))
        res = outlier_filter(x, self.method, cfg)
        self.method_ = res.method
        labels = np.ones(x.size, dtype=np.int64)
        labels[res.dropped] = -1
        self.labels_ = labels
        return labels


# -- full pipeline -------------------------------------------------------------

@dataclass
class CleaningReport:
    subjects_dropped_stage1: list = field(default_factory=list)
    subjects_dropped_stage2: list = field(default_factory=list)
    subjects_dropped_stage3: dict = field(default_factory=dict)
    scores_dropped_stage4: list = field(default_factory=list)
    stimuli: pd.DataFrame | None = None

    def to_dict(self):
        stim = []
        if self.stimuli is not None:
            for (kind, cid), row in self.stimuli.iterrows():
                stim.append({"content_kind": kind, "content_id": cid, "n": int(row["n"]),
                             "mean": float(row["mean"]), "std": float(row["std"])})
        return {
            "subjects_dropped_stage1": list(self.subjects_dropped_stage1),
            "subjects_dropped_stage2": list(self.subjects_dropped_stage2),
            "subjects_dropped_stage3": {k: list(v) for k, v in sorted(self.subjects_dropped_stage3.items())},
            "scores_dropped_stage4": [list(t) for t in self.scores_dropped_stage4],
            "stimuli": stim,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @property
    def rejected_subjects(self):
        """Subjects removed wholesale or in some kind by stages 1-3."""
        out = set(self.subjects_dropped_stage1) | set(self.subjects_dropped_stage2)
        for ids in self.subjects_dropped_stage3.values():
            out |= set(ids)
        return out


def clean(table, verdicts=None, config=None):
    """Run the four cleaning stages; returns ``(cleaned_table, report)``.

    ``verdicts`` (subject_id -> SessionVerdict) mark rejected subjects as
    blocked and supply lens-wearing answers; when given they must cover every
    subject in the table.
    """
    cfg = config or CleaningConfig()
    if len(table) == 0:
        raise EmptyTable("no ratings to clean")
    flags = table.flags
    subjects = table.subjects
    if verdicts is not None:
        missing = [s for s in subjects if s not in verdicts]
        if missing:
            raise FormatError(f"no screening verdict for subjects {missing[:5]}")
    report = CleaningReport()

    def flag(s, col):
        return flags.at[s, col] if s in flags.index else {"blocked": False, "stall_fraction": 0.0,
                                                          "wore_lenses": True}[col]

    stage1 = []
    for s in subjects:
        rejected = verdicts is not None and not verdicts[s].accepted
        if flag(s, "blocked") or rejected or flag(s, "stall_fraction") > cfg.stall_fraction_max:
            stage1.append(s)
    report.subjects_dropped_stage1 = stage1
    table = table.drop_subjects(stage1)

    stage2 = []
    for s in table.subjects:
        wore = flag(s, "wore_lenses")
        if verdicts is not None and verdicts[s].wore_lenses is False:
            wore = False
        if not wore:
            stage2.append(s)
    report.subjects_dropped_stage2 = stage2
    table = table.drop_subjects(stage2)

    for kind in CONTENT_KINDS:
        sub = table.ratings[table.ratings["content_kind"] == kind]
        if len(sub) == 0:
            continue
        ids = bt500_screen(sub, cfg)
        if ids:
            report.subjects_dropped_stage3[kind] = ids
            table = table.drop_subjects(ids, kind=kind)

    df = table.ratings
    drop_rows = []
    for (kind, cid), grp in df.groupby(["content_kind", "content_id"], sort=True):
        if len(grp) < cfg.min_scores_outlier:
            continue
        res = outlier_filter(grp["score"].to_numpy(), "auto", cfg)
        for i in res.dropped:
            row = grp.index[i]
            drop_rows.append(row)
            report.scores_dropped_stage4.append((grp.at[row, "subject_id"], kind, cid))
    report.scores_dropped_stage4.sort()
    cleaned = RatingTable(df.drop(index=drop_rows), table.flags.reset_index())
    if len(cleaned):
        report.stimuli = stimulus_stats(cleaned.ratings)[["n", "mean", "std"]]
    return cleaned, report
