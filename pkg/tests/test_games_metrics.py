from ssdlab.engine import Action
from ssdlab.games import EpisodeLog, beam_use_rate, lone_wolf_rate, wolves_per_capture

BEAM = Action.USE_BEAM
HOLD = Action.STAND_STILL


def build_log(frames):
    log = EpisodeLog()
    for actions, active, events in frames:
        log.append(actions, (0.0, 0.0), active, events)
    return log


def test_beam_rate_basic():
    frames = [((BEAM, HOLD), (True, True), ())] * 10
    frames += [((HOLD, HOLD), (True, True), ())] * 90
    assert beam_use_rate(build_log(frames), 0) == 0.1
    assert beam_use_rate(build_log(frames), 1) == 0.0


def test_beam_rate_zero_when_never_fired():
    frames = [((HOLD, HOLD), (True, True), ())] * 50
    assert beam_use_rate(build_log(frames), 0) == 0.0


def test_beam_rate_excludes_removed_frames():
    frames = [((BEAM, HOLD), (True, True), ())] * 5
    frames += [((BEAM, HOLD), (True, False), ())] * 5    # opponent removed
    frames += [((HOLD, HOLD), (True, True), ())] * 45
    assert beam_use_rate(build_log(frames), 0) == 5 / 50


def test_beam_rate_empty_denominator():
    frames = [((BEAM, HOLD), (True, False), ())] * 10
    assert beam_use_rate(build_log(frames), 0) == 0.0


def test_beam_rate_bounds():
    frames = [((BEAM, BEAM), (True, True), ())] * 7
    log = build_log(frames)
    assert 0.0 <= beam_use_rate(log, 0) <= 1.0
    assert beam_use_rate(log, 0) == 1.0


def test_wolves_per_capture_extremes():
    pairs = build_log([((HOLD, HOLD), (True, True), (("capture", 2),))] * 4)
    assert wolves_per_capture(pairs) == 2.0
    assert lone_wolf_rate(pairs) == 0.0
    lone = build_log([((HOLD, HOLD), (True, True), (("capture", 1),))] * 4)
    assert wolves_per_capture(lone) == 1.0
    assert lone_wolf_rate(lone) == 1.0


def test_wolves_per_capture_mixed():
    frames = [((HOLD, HOLD), (True, True), (("capture", 2),))] * 3
    frames += [((HOLD, HOLD), (True, True), (("capture", 1),))]
    log = build_log(frames)
    assert wolves_per_capture(log) == 1.75
    assert lone_wolf_rate(log) == 0.25


def test_no_captures_marker():
    log = build_log([((HOLD, HOLD), (True, True), ())] * 10)
    assert wolves_per_capture(log) is None
    assert lone_wolf_rate(log) is None


def test_returns():
    log = EpisodeLog()
    log.append((HOLD, HOLD), (1.0, 0.0), (True, True), ())
    log.append((HOLD, HOLD), (0.0, 2.0), (True, True), ())
    log.append((HOLD, HOLD), (1.0, 0.0), (True, True), ())
    assert log.undiscounted_return(0) == 2.0
    assert log.undiscounted_return(1) == 2.0
    assert log.discounted_return(0, 0.5) == 1.0 + 0.25
    assert len(log) == 3
