"""MOS and consistency statistics on a cleaned rating table."""
from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass

import numpy as np
import pandas as pd

from .errors import Degenerate, EmptyTable, NoGoldenData, NoPairs, TooFew, TooFewSubjects
from .stats import kurtosis, lcc, srcc  # noqa: F401  (re-exported)

MOS_COLUMNS = ["content_kind", "content_id", "mos", "std", "n_ratings"]


def compute_mos(table, kind=None):
    """Per-content mean and sample std of the scores, optionally for one content kind.

    Rows are keyed by (content_kind, content_id); a content rated once has std 0.
    """
    df = table.ratings if hasattr(table, "ratings") else table
    if kind is not None:
        df = df[df["content_kind"] == kind]
    if len(df) == 0:
        raise EmptyTable(f"no ratings{'' if kind is None else f' of kind {kind!r}'}")
    g = df.groupby(["content_kind", "content_id"], sort=True)["score"]
    out = g.agg(mos="mean", std=lambda s: s.std(ddof=1) if len(s) > 1 else 0.0, n_ratings="size")
    return out.reset_index()[MOS_COLUMNS]


@dataclass(frozen=True)
class ConsistencyResult:
    mean_srcc: float
    std_srcc: float
    n_splits: int
    seed: int
    n_subjects: int
    contents_per_split: tuple

    def to_json(self):
        d = asdict(self)
        d["contents_per_split"] = list(self.contents_per_split)
        return json.dumps(d, indent=2, sort_keys=True)


def _split_mos(scores, mask):
    """Column means over the subjects in ``mask`` of a subjects x contents array (NaN = unrated)."""
    part = scores[mask]
    count = np.sum(~np.isnan(part), axis=0)
    total = np.nansum(part, axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        return total / count, count


def inter_subject_consistency(table, kind="video", n_splits=50, seed=0):
    """Mean and std of the split-half SRCC between the MOS of two random subject halves.

    Subjects are ordered by id before shuffling; split ``i`` uses seed
    ``seed + i``. With an odd count the first half gets the extra subject.
    Each split correlates only contents rated in both halves.
    """
    df = table.ratings if hasattr(table, "ratings") else table
    if kind is not None:
        df = df[df["content_kind"] == kind]
    wide = df.pivot(index="subject_id", columns="content_id", values="score").sort_index()
    subjects = wide.index.to_numpy()
    n = len(subjects)
    if n < 4:
        raise TooFewSubjects(f"split-half consistency needs at least 4 subjects, got {n}")
    scores = wide.to_numpy(dtype=np.float64)
    first = (n + 1) // 2
    values, used = [], []
    for i in range(n_splits):
        perm = np.random.default_rng(seed + i).permutation(n)
        mask = np.zeros(n, dtype=bool)
        mask[perm[:first]] = True
        a, ca = _split_mos(scores, mask)
        b, cb = _split_mos(scores, ~mask)
        both = (ca > 0) & (cb > 0)
        values.append(srcc(a[both], b[both]))
        used.append(int(both.sum()))
    v = np.asarray(values)
    return ConsistencyResult(float(v.mean()), float(v.std()), n_splits, int(seed), n, tuple(used))


def intra_subject_golden(table, golden, kind="video", min_ratings=3, return_all=False):
    """Median over subjects of the LCC between their golden-video scores and the references.

    Subjects with fewer than ``min_ratings`` golden ratings, or whose scores or
    references are constant, are skipped.
    """
    df = table.ratings if hasattr(table, "ratings") else table
    if kind is not None:
        df = df[df["content_kind"] == kind]
    df = df[df["content_id"].isin(set(golden))]
    per_subject = {}
    for sid, grp in df.groupby("subject_id", sort=True):
        if len(grp) < min_ratings:
            continue
        ref = np.array([golden[c] for c in grp["content_id"]], dtype=np.float64)
        try:
            per_subject[sid] = lcc(grp["score"].to_numpy(), ref)
        except (Degenerate, TooFew):
            continue
    if not per_subject:
        raise NoGoldenData(f"no subject has {min_ratings}+ usable golden ratings")
    med = float(np.median(list(per_subject.values())))
    return (med, per_subject) if return_all else med


def patch_video_correlation(video_mos, patch_mos, kind, source=None):
    """SRCC between each patch's MOS and its source video's MOS.

    ``source`` maps patch content id to video content id; by default a patch
    shares its source video's id.
    """
    vids = video_mos[video_mos["content_kind"] == "video"].set_index("content_id")["mos"]
    patches = patch_mos[patch_mos["content_kind"] == kind]
    xs, ys = [], []
    for cid, mos in zip(patches["content_id"], patches["mos"]):
        src = source.get(cid, cid) if source is not None else cid
        if src in vids.index:
            xs.append(vids[src])
            ys.append(mos)
    if len(xs) < 3:
        raise NoPairs(f"only {len(xs)} {kind} patches pair with a video MOS")
    return srcc(xs, ys)


def export_histogram(mos, bins=20, low=0.0, high=100.0):
    """Equal-width MOS histogram rows ``(bin_low, bin_high, count)`` over [low, high]."""
    values = mos["mos"].to_numpy() if isinstance(mos, pd.DataFrame) else np.asarray(mos)
    counts, edges = np.histogram(values, bins=bins, range=(low, high))
    return [(float(edges[i]), float(edges[i + 1]), int(counts[i])) for i in range(bins)]


def write_histogram_csv(rows, fh):
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(["bin_low", "bin_high", "count"])
    writer.writerows(rows)


def write_mos_csv(mos, fh):
    mos.to_csv(fh, index=False, lineterminator="\n", float_format="%.10g")
