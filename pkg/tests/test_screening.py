import io

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sessions import GOLDEN_REFS, session
from vqforge.errors import FormatError, MissingGolden, PhaseOrderError
from vqforge.screening import (
    EnvReport, Phase, Playback, QuizResult, Rating, Reason, ScreeningConfig, SessionScreener,
    SessionState, Survey, VideoLoad, apply_event, event_from_dict, event_to_dict,
    finalize_session, read_session_logs, read_verdicts_csv, replay, screen_session,
    screen_sessions, write_session_log, write_verdicts_csv,
)


def reason_of(events, cfg=None):
    return screen_session(events, cfg, GOLDEN_REFS).reason


class TestEnvironment:
    def test_laptop_window_passes(self):
        st_ = apply_event(SessionState(), EnvReport(1366, 768, 100, "chrome", "desktop"))
        assert st_.phase is Phase.INSTRUCTIONS and not st_.rejected

    @pytest.mark.parametrize("env", [
        EnvReport(1280, 719, 100, "chrome", "desktop"),
        EnvReport(800, 479, 100, "safari", "mobile"),
        EnvReport(1920, 1080, 90, "chrome", "desktop"),
        EnvReport(1920, 1080, 100, "netscape", "desktop"),
    ])
    def test_failures(self, env):
        assert reason_of(session(env=env)) is Reason.ENV_FAIL

    def test_mobile_480_passes_either_orientation(self):
        assert reason_of(session(env=EnvReport(480, 854, 100, "Chrome", "mobile"))) is Reason.NONE
        assert reason_of(session(env=EnvReport(854, 480, 100, "chrome", "mobile"))) is Reason.NONE

    def test_total_load_must_stay_below_20s(self):
        assert reason_of(session(loads=(4.0,) * 5)) is Reason.ENV_FAIL
        assert reason_of(session(loads=(3.9,) * 5)) is Reason.NONE

    def test_quiz_without_env_report(self):
        assert reason_of(session(env=None)) is Reason.ENV_FAIL


class TestGates:
    def test_quiz(self):
        assert reason_of(session(quiz=4)) is Reason.QUIZ_FAIL
        assert reason_of(session(quiz=5)) is Reason.NONE

    def test_training_delay_single(self):
        assert reason_of(session(training_delays=(0, 2.5, 0, 0, 0))) is Reason.TRAINING_DELAY
        assert reason_of(session(training_delays=(0, 2.0, 0, 0, 0))) is Reason.NONE

    def test_training_delay_total(self):
        assert reason_of(session(training_delays=(1.5, 1.5, 1.5, 1.5, 0))) is Reason.TRAINING_DELAY
        assert reason_of(session(training_delays=(1.0, 1.0, 1.0, 1.0, 1.0))) is Reason.NONE

    def test_negative_delay(self):
        assert reason_of(session(training_delays=(0, -0.3, 0, 0, 0))) is Reason.NEGATIVE_DELAY
        delays = [0.0] * 90
        delays[70] = -0.3
        assert reason_of(session(test_delays=delays)) is Reason.NEGATIVE_DELAY

    def test_mid_stall_threshold(self):
        assert reason_of(session(test_delays=[3.0] * 23 + [0.0] * 67)) is Reason.MID_STALL
        # exactly half stalled is not more than half
        assert reason_of(session(test_delays=[3.0] * 22 + [0.0] * 68)) is Reason.NONE

    def test_test_phase_delays_only_feed_stall_fraction(self):
        delays = [0.0] * 90
        delays[60:90] = [5.0] * 30
        v = screen_session(session(test_delays=delays), None, GOLDEN_REFS)
        assert v.accepted and v.stall_fraction == pytest.approx(30 / 90)

    def test_flat_and_nudge(self):
        assert reason_of(session(flat=True)) is Reason.FLAT_SCORES
        assert reason_of(session(travel=4.9)) is Reason.SLIDER_NUDGE
        assert reason_of(session(travel=5.0)) is Reason.NONE


class TestFinalize:
    def test_accepted_example(self):
        v = screen_session(session(), None, GOLDEN_REFS, "s1")
        assert v.accepted and v.reason is Reason.NONE and len(v.ratings) == 90
        assert v.subject_id == "s1"

    def test_repeat_inconsistent(self):
        assert reason_of(session(repeat_diffs=(40, 50, 45, 60))) is Reason.REPEAT_INCONSISTENT

    def test_golden_inconsistent(self):
        assert reason_of(session(golden_diffs=(30, 40, 20, 35))) is Reason.GOLDEN_INCONSISTENT

    def test_three_repeat_pairs_is_incomplete(self):
        ev = session()
        # turn the last repeat into a fresh test video
        idx = max(i for i, e in enumerate(ev) if isinstance(e, Rating) and e.role == "repeat")
        ev[idx] = Rating("t99", "test", 50.0, 30.0)
        assert reason_of(ev) is Reason.INCOMPLETE

    def test_short_session_is_incomplete(self):
        assert reason_of(session(n_test=60)) is Reason.INCOMPLETE
        # 90 ratings reach the survey phase; the survey answers themselves are optional
        assert reason_of(session(survey=False)) is Reason.NONE

    def test_missing_golden_reference(self):
        with pytest.raises(MissingGolden):
            screen_session(session(), None, {"g0": 30.0})

    def test_lenses_carried(self):
        assert screen_session(session(lenses=False), None, GOLDEN_REFS).wore_lenses is False


class TestPhaseOrder:
    def test_survey_too_early(self):
        with pytest.raises(PhaseOrderError):
            replay([EnvReport(1366, 768, 100, "chrome"), Survey()])

    def test_rating_before_quiz(self):
        with pytest.raises(PhaseOrderError):
            replay([EnvReport(1366, 768, 100, "chrome"), Rating("x", "test", 5, 10)])

    def test_env_report_after_quiz(self):
        with pytest.raises(PhaseOrderError):
            replay([EnvReport(1366, 768, 100, "chrome"), QuizResult(6),
                    EnvReport(1366, 768, 100, "chrome")])

    def test_test_role_in_training(self):
        with pytest.raises(PhaseOrderError):
            replay([EnvReport(1366, 768, 100, "chrome"), QuizResult(6), Rating("x", "test", 5, 10)])

    def test_event_validation(self):
        with pytest.raises(FormatError):
            Rating("x", "test", 101, 10)
        with pytest.raises(FormatError):
            QuizResult(7)
        with pytest.raises(FormatError):
            event_from_dict({"type": "Nope"})


# -- properties ----------------------------------------------------------------

events_strategy = st.one_of(
    st.builds(Playback, st.just("v"), st.floats(-1, 10)),
    st.builds(Rating, st.just("v"), st.sampled_from(["training", "test", "repeat", "golden"]),
              st.floats(0, 100), st.floats(0, 100)),
    st.builds(VideoLoad, st.just("v"), st.floats(0, 5)),
    st.builds(QuizResult, st.integers(0, 6)),
    st.builds(Survey, st.booleans()),
)


@settings(max_examples=100, deadline=None)
@given(st.lists(events_strategy, max_size=30))
def test_rejected_is_absorbing(suffix):
    rejected = replay(session(quiz=2)[:8])
    assert rejected.reason is Reason.QUIZ_FAIL
    state = rejected
    for ev in suffix:
        state = apply_event(state, ev)
    assert state == rejected


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(0, 60), min_size=4, max_size=4),
       st.floats(1, 60), st.floats(0, 40))
def test_raising_repeat_threshold_is_monotone(diffs, low, extra):
    ev = session(repeat_diffs=tuple(diffs))
    a = screen_session(ev, ScreeningConfig(repeat_mad_max=low), GOLDEN_REFS)
    b = screen_session(ev, ScreeningConfig(repeat_mad_max=low + extra), GOLDEN_REFS)
    if a.accepted:
        assert b.reason is not Reason.REPEAT_INCONSISTENT


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0, 4), min_size=5, max_size=5), st.integers(0, 6),
       st.lists(st.floats(-0.5, 4), min_size=90, max_size=90))
def test_replay_deterministic_and_serializable(train, quiz, test_delays):
    ev = session(training_delays=tuple(train), quiz=quiz, test_delays=test_delays)
    first = screen_session(ev, None, GOLDEN_REFS)
    back = [event_from_dict(event_to_dict(e, "s")) for e in ev]
    assert screen_session(back, None, GOLDEN_REFS) == first
    assert screen_session(ev, None, GOLDEN_REFS) == first


def test_log_files_round_trip(tmp_path):
    logs = {"s2": session(quiz=3), "s1": session()}
    for sid, ev in logs.items():
        with open(tmp_path / f"{sid}.jsonl", "w") as fh:
            write_session_log(ev, fh, sid)
    back = read_session_logs(tmp_path)
    assert back == logs
    verdicts = screen_sessions(back, golden_scores=GOLDEN_REFS)
    assert [v.subject_id for v in verdicts] == ["s1", "s2"]
    assert [v.reason for v in verdicts] == [Reason.NONE, Reason.QUIZ_FAIL]
    buf = io.StringIO()
    write_verdicts_csv(verdicts, buf)
    (tmp_path / "v.csv").write_text(buf.getvalue())
    parsed = read_verdicts_csv(tmp_path / "v.csv")
    assert parsed["s2"].reason is Reason.QUIZ_FAIL and parsed["s1"].accepted


def test_parallel_matches_serial_and_estimator():
    logs = {f"s{i}": session(quiz=4 + i % 3) for i in range(6)}
    serial = screen_sessions(logs, golden_scores=GOLDEN_REFS, n_jobs=1)
    assert screen_sessions(logs, golden_scores=GOLDEN_REFS, n_jobs=2) == serial
    est = SessionScreener().fit(GOLDEN_REFS)
    assert est.predict(logs) == serial


def test_finalize_on_rejected_state_keeps_reason():
    state = replay(session(quiz=1))
    assert finalize_session(state).reason is Reason.QUIZ_FAIL


def test_config_validation():
    with pytest.raises(ValueError):
        ScreeningConfig(n_repeat=50, n_golden=40)
    assert ScreeningConfig(browser_allowlist="Chrome, Brave").browser_allowlist == ("chrome", "brave")
