import io
import json

import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import reference_bt500
from vqforge.cleaning import (
    BT500Screener, CleaningConfig, RatingTable, ScoreOutlierFilter, bt500_screen, clean,
    modified_z_scores, outlier_filter, read_ratings_csv, tukey_fences,
)
from vqforge.errors import EmptyTable, FormatError, TooFew, ZeroVariance
from vqforge.screening import Reason, SessionVerdict
from vqforge.simulate import PopulationSpec, WorldModel, simulate_study
from vqforge.stats import kurtosis


def table_from(rows, flags=None):
    df = pd.DataFrame(rows, columns=["subject_id", "content_id", "content_kind", "score"])
    return RatingTable(df, flags)


def dense(n_subj, n_stim, seed, spammers=(), noise=10.0, kind="video"):
    rng = np.random.default_rng(seed)
    q = rng.uniform(20, 80, n_stim)
    rows = []
    for s in range(n_subj):
        bias = rng.normal(0, 5)
        for c in range(n_stim):
            if s in spammers:
                x = int(rng.integers(0, 101))
            else:
                x = int(np.clip(np.rint(q[c] + bias + rng.normal(0, noise)), 0, 100))
            rows.append((f"s{s:02d}", f"c{c:02d}", kind, x))
    return rows


class TestKurtosis:
    def test_two_point(self):
        assert kurtosis([-1, 1] * 7) == pytest.approx(1.0, abs=1e-12)

    def test_hand_moments(self):
        assert kurtosis([0, 0, 0, 1]) == pytest.approx(0.08203125 / 0.1875 ** 2, abs=1e-12)

    def test_normal_monte_carlo(self):
        x = np.random.default_rng(3).standard_normal(10_000)
        assert abs(kurtosis(x) - 3.0) <= 0.15

    def test_errors(self):
        with pytest.raises(TooFew):
            kurtosis([1, 2, 3])
        with pytest.raises(ZeroVariance):
            kurtosis([2, 2, 2, 2])


class TestBT500:
    def test_identical_scores_reject_nobody(self):
        rows = [(f"s{s}", f"c{c}", "video", 40 + c) for s in range(10) for c in range(8)]
        assert bt500_screen(table_from(rows)) == []

    def test_single_spammer(self):
        rows = dense(31, 40, seed=11, spammers={30})
        got = bt500_screen(table_from(rows))
        assert got == ["s30"]
        assert got == reference_bt500([(s, c, x) for s, c, _, x in rows])

    def test_empty(self):
        with pytest.raises(EmptyTable):
            bt500_screen(table_from([]))

    def test_estimator(self):
        t = table_from(dense(31, 40, seed=11, spammers={30}))
        est = BT500Screener().fit(t)
        assert est.rejected_ == ["s30"]
        assert "s30" not in est.transform(t).subjects

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 10_000), st.randoms(use_true_random=False))
    def test_relabel_and_silent_subject_invariance(self, seed, rnd):
        rows = dense(12, 10, seed, spammers={0, 1}, noise=15)
        names = [f"s{i:02d}" for i in range(12)]
        new = names[:]
        rnd.shuffle(new)
        mapping = dict(zip(names, (f"x{n}" for n in new)))
        base = bt500_screen(table_from(rows))
        relabeled = bt500_screen(table_from([(mapping[s], c, k, x) for s, c, k, x in rows]))
        assert sorted(mapping[s] for s in base) == relabeled
        flags = pd.DataFrame([("ghost", False, 0.0, True)],
                             columns=["subject_id", "blocked", "stall_fraction", "wore_lenses"])
        assert bt500_screen(table_from(rows, flags)) == base


class TestOutliers:
    def test_modified_z_case(self):
        x = [50, 52, 51, 49, 48, 95]
        m = modified_z_scores(x)
        assert m[5] == pytest.approx(0.6745 * 44.5 / 1.5, abs=1e-12)
        r = outlier_filter(x, method="modified_z")
        assert r.dropped.tolist() == [5] and r.kept.tolist() == [50, 52, 51, 49, 48]

    def test_tukey_case(self):
        assert tukey_fences([1, 2, 3, 4, 100]) == (-1.0, 7.0)
        assert outlier_filter([1, 2, 3, 4, 100], method="tukey").dropped.tolist() == [4]

    def test_auto_gate_picks_tukey_on_heavy_tails(self):
        x = [10, 10, 10, 10, 10, 10, 10, 11, 9, 90]
        assert kurtosis(x) > 4
        assert outlier_filter(x).method == "tukey"

    def test_all_equal(self):
        for method in ("auto", "modified_z", "tukey"):
            assert outlier_filter([7.0] * 9, method=method).dropped.size == 0

    def test_mad_zero_uses_mean_abs_dev(self):
        x = [50, 50, 50, 50, 50, 60, 100]
        dev = np.array(x, float) - 50
        want = dev / (1.253314 * np.mean(np.abs(dev)))
        assert np.allclose(modified_z_scores(x), want, atol=1e-12)
        assert outlier_filter(x, method="modified_z").dropped.tolist() == [6]

    def test_too_few(self):
        with pytest.raises(TooFew):
            outlier_filter([1, 2, 3, 4])

    def test_estimator_labels(self):
        f = ScoreOutlierFilter(method="modified_z")
        assert f.fit_predict([50, 52, 51, 49, 48, 95]).tolist() == [1, 1, 1, 1, 1, -1]


def test_gaussian_samples_rarely_lose_much():
    rng = np.random.default_rng(2024)
    for _ in range(1000):
        n = int(rng.integers(5, 60))
        x = rng.normal(50, 10, n)
        assert outlier_filter(x).dropped.size <= 0.4 * n


@settings(max_examples=200, deadline=None)
@given(st.integers(5, 40), st.integers(0, 2**32 - 1))
def test_gaussian_property(n, seed):
    x = np.random.default_rng(seed).normal(0, 1, n)
    assert outlier_filter(x).dropped.size <= 0.4 * n


class TestRatingTable:
    def test_validation(self):
        with pytest.raises(FormatError):
            table_from([("a", "c", "video", 101)])
        with pytest.raises(FormatError):
            table_from([("a", "c", "frame", 50)])
        with pytest.raises(FormatError):
            table_from([("a", "c", "video", 50), ("a", "c", "video", 60)])
        # the same id under two kinds is two contents
        assert len(table_from([("a", "c", "video", 50), ("a", "c", "sv", 60)])) == 2

    def test_csv_round_trip(self, tmp_path):
        t = table_from(dense(4, 3, 0), pd.DataFrame(
            [("s01", True, 0.1, False)],
            columns=["subject_id", "blocked", "stall_fraction", "wore_lenses"]))
        t.to_csv(tmp_path / "r.csv")
        t.flags_to_csv(tmp_path / "f.csv")
        back = read_ratings_csv(tmp_path / "r.csv", tmp_path / "f.csv")
        pd.testing.assert_frame_equal(back.ratings, t.ratings)
        pd.testing.assert_frame_equal(back.flags, t.flags)


class TestClean:
    def test_one_blocked_subject_on_noiseless_data(self):
        rows = [(f"s{s}", f"c{c}", "video", 30 + 5 * c) for s in range(8) for c in range(6)]
        flags = pd.DataFrame([("s3", True, 0.0, True)],
                             columns=["subject_id", "blocked", "stall_fraction", "wore_lenses"])
        out, rep = clean(table_from(rows, flags))
        assert rep.subjects_dropped_stage1 == ["s3"]
        assert rep.subjects_dropped_stage2 == []
        assert all(not v for v in rep.subjects_dropped_stage3.values())
        assert rep.scores_dropped_stage4 == []
        assert "s3" not in out.subjects and len(out) == 7 * 6

    def test_stage_rules(self):
        rows = dense(30, 20, 5, spammers={29})
        flags = pd.DataFrame([("s00", False, 0.6, True), ("s01", False, 0.5, True),
                              ("s02", False, 0.0, False)],
                             columns=["subject_id", "blocked", "stall_fraction", "wore_lenses"])
        out, rep = clean(table_from(rows, flags))
        assert rep.subjects_dropped_stage1 == ["s00"]
        assert rep.subjects_dropped_stage2 == ["s02"]
        rest = [(s, c, x) for s, c, _, x in rows if s not in {"s00", "s02"}]
        assert rep.subjects_dropped_stage3.get("video", []) == reference_bt500(rest)
        json.loads(rep.to_json())

    def test_verdicts(self):
        rows = dense(6, 5, 1)
        verdicts = {s: SessionVerdict(s, "Accepted", Reason.NONE) for s in {r[0] for r in rows}}
        verdicts["s01"] = SessionVerdict("s01", "Rejected", Reason.FLAT_SCORES)
        verdicts["s02"] = SessionVerdict("s02", "Accepted", Reason.NONE, wore_lenses=False)
        _, rep = clean(table_from(rows), verdicts)
        assert rep.subjects_dropped_stage1 == ["s01"] and rep.subjects_dropped_stage2 == ["s02"]
        del verdicts["s03"]
        with pytest.raises(FormatError):
            clean(table_from(rows), verdicts)

    def test_kinds_cleaned_independently(self):
        rows = dense(31, 40, 11, spammers={30}) + dense(31, 40, 12, kind="sv")
        out, rep = clean(table_from(rows))
        for kind in ("video", "sv"):
            want = reference_bt500([(s, c, x) for s, c, k, x in rows if k == kind])
            assert rep.subjects_dropped_stage3.get(kind, []) == want
        assert rep.subjects_dropped_stage3["video"] == ["s30"]
        assert "s30" not in rep.subjects_dropped_stage3.get("sv", [])
        assert "s30" in out.kind("sv").subjects

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 10_000))
    def test_stage_contracts(self, seed):
        rng = np.random.default_rng(seed)
        rows = dense(20, 12, seed, spammers=set(rng.choice(20, 3, replace=False).tolist()))
        flags = pd.DataFrame(
            [(f"s{i:02d}", bool(rng.random() < 0.1), float(rng.random()), bool(rng.random() > 0.1))
             for i in range(20)],
            columns=["subject_id", "blocked", "stall_fraction", "wore_lenses"])
        table = table_from(rows, flags)
        out, rep = clean(table)
        s1, s2 = set(rep.subjects_dropped_stage1), set(rep.subjects_dropped_stage2)
        s3 = set().union(*rep.subjects_dropped_stage3.values())
        assert not (s1 & s2) and not (s1 & s3) and not (s2 & s3)
        assert not (set(out.subjects) & (s1 | s2 | s3))
        # each stage-4 drop is a score of a surviving subject that is absent from the output
        kept = set(map(tuple, out.ratings[["subject_id", "content_kind", "content_id"]].values))
        for key in rep.scores_dropped_stage4:
            assert key not in kept and key[0] not in (s1 | s2 | s3)
        assert len(out) + len(rep.scores_dropped_stage4) == \
            int((~table.ratings["subject_id"].isin(s1 | s2 | s3)).sum())
        # stages 1-2 are idempotent
        _, again = clean(out)
        assert again.subjects_dropped_stage1 == [] and again.subjects_dropped_stage2 == []


def test_simulated_spammer_residue():
    study = simulate_study(WorldModel(), PopulationSpec(n_subjects=500, spammer_fraction=0.1), 17)
    from vqforge.screening import screen_sessions

    verdicts = {v.subject_id: v for v in screen_sessions(study.sessions, golden_scores=study.golden)}
    out, _ = clean(study.table, verdicts)
    spam = set(study.labels.loc[study.labels["spammer"], "subject_id"])
    total = study.table.ratings["subject_id"].isin(spam).sum()
    residue = out.ratings["subject_id"].isin(spam).sum()
    assert residue < 0.01 * total


def test_report_json_shape():
    out, rep = clean(table_from(dense(10, 6, 3)))
    d = json.loads(rep.to_json())
    assert set(d) == {"subjects_dropped_stage1", "subjects_dropped_stage2",
                      "subjects_dropped_stage3", "scores_dropped_stage4", "stimuli"}
    assert len(d["stimuli"]) == 6
    buf = io.StringIO()
    out.to_csv(buf)
    assert buf.getvalue().startswith("subject_id,content_id,content_kind,score\n")
    assert CleaningConfig().stall_fraction_max == 0.5
