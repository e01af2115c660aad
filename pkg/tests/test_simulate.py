import filecmp

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vqforge.analysis import inter_subject_consistency
from vqforge.errors import BadSpec
from vqforge.screening import Reason, read_session_logs, replay, screen_sessions
from vqforge.simulate import (
    PopulationSpec, SubjectModel, WorldModel, coverage_population, simulate_study,
    subjects_for_coverage,
)

SMALL = WorldModel(n_videos=120)


def test_same_seed_writes_identical_files(tmp_path):
    spec = PopulationSpec(n_subjects=12, spammer_fraction=0.25, stall_prob=0.05)
    simulate_study(SMALL, spec, 4).write(tmp_path / "a")
    simulate_study(SMALL, spec, 4).write(tmp_path / "b")
    cmp = filecmp.dircmp(tmp_path / "a", tmp_path / "b")
    assert not cmp.diff_files and not cmp.left_only and not cmp.right_only
    assert not cmp.subdirs["logs"].diff_files
    assert len(list((tmp_path / "a" / "logs").iterdir())) == 12
    other = simulate_study(SMALL, spec, 5)
    assert not other.table.ratings.equals(simulate_study(SMALL, spec, 4).table.ratings)


def test_logs_round_trip_through_disk(tmp_path):
    study = simulate_study(SMALL, PopulationSpec(n_subjects=5), 2)
    study.write(tmp_path)
    assert read_session_logs(tmp_path / "logs") == study.sessions


def test_noiseless_raters_agree_perfectly():
    spec = PopulationSpec(n_subjects=subjects_for_coverage(SMALL, 6), bias_std=0.0, noise_std=0.0)
    study = simulate_study(SMALL, spec, 9)
    assert inter_subject_consistency(study.table, "video", n_splits=10, seed=0).mean_srcc == 1.0


def test_sincere_scores_follow_quality():
    study = simulate_study(SMALL, PopulationSpec(n_subjects=20, bias_std=0.0, noise_std=0.0), 1)
    df = study.table.ratings
    expected = [min(100, max(0, int(np.rint(study.quality[c])))) for c in df["content_id"]]
    assert df["score"].tolist() == expected


def test_coverage_population_hits_every_reason():
    study = simulate_study(SMALL, coverage_population(), 0)
    verdicts = screen_sessions(study.sessions, golden_scores=study.golden)
    got = [v.reason for v in verdicts]
    assert got[0] is Reason.NONE
    assert set(got) == set(Reason)


def test_spammer_kinds_and_fraction():
    spec = PopulationSpec(n_subjects=40, spammer_fraction=0.25)
    labels = simulate_study(SMALL, spec, 3).labels
    assert labels["spammer"].sum() == 10
    assert set(labels.loc[labels["spammer"], "kind"]) == set(spec.spammer_kinds)


def test_subjects_for_coverage():
    w = WorldModel()
    assert subjects_for_coverage(w, 35) == int(np.ceil(35 * 200 / 82))


@pytest.mark.parametrize("build", [
    lambda: PopulationSpec(n_subjects=0),
    lambda: PopulationSpec(spammer_fraction=1.5),
    lambda: PopulationSpec(spammer_kinds=("sincere",)),
    lambda: SubjectModel(kind="robot"),
    lambda: SubjectModel(noise_std=-1),
    lambda: SubjectModel(stall_prob=2),
    lambda: WorldModel(q_lo=-5),
    lambda: WorldModel(n_videos=10),
    lambda: simulate_study(SMALL, [], 0),
])
def test_bad_spec(build):
    with pytest.raises(BadSpec):
        build()


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000), st.floats(0, 0.5), st.floats(0, 1), st.floats(0, 1))
def test_logs_always_satisfy_phase_order(seed, spam, stall, train_stall):
    spec = PopulationSpec(n_subjects=4, spammer_fraction=spam, stall_prob=stall,
                          training_stall_prob=train_stall)
    study = simulate_study(SMALL, spec, seed)
    for events in study.sessions.values():
        replay(events)
    for model_events in simulate_study(SMALL, coverage_population(), seed).sessions.values():
        replay(model_events)
