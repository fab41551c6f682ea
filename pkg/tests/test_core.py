import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ctte.core import (
    HistoryWindows,
    JointSpikeRecord,
    JumpTrajectory,
    SpikeTrain,
    history_window,
    history_window_clipped,
    merge_event_streams,
    read_record,
    read_train,
    validate_joint_record,
    write_record,
    write_train,
)
from ctte.errors import (
    BipartiteViolation,
    DomainError,
    OrderingViolation,
    ValidationError,
)


class TestSpikeTrain:
    def test_valid_construction(self):
        tr = SpikeTrain(0.0, 5.0, [1.0, 2.5, 4.0])
        assert tr.n_events == 3
        assert tr.duration == 5.0

    def test_events_are_readonly(self):
        tr = SpikeTrain(0.0, 5.0, [1.0])
        with pytest.raises(ValueError):
            tr.events[0] = 2.0

    def test_rejects_unsorted(self):
        with pytest.raises(OrderingViolation):
            SpikeTrain(0.0, 5.0, [2.0, 1.0])

    def test_rejects_duplicates(self):
        with pytest.raises(OrderingViolation):
            SpikeTrain(0.0, 5.0, [1.0, 1.0])

    def test_rejects_event_at_end_time(self):
        with pytest.raises(ValidationError):
            SpikeTrain(0.0, 5.0, [5.0])

    def test_rejects_empty_interval(self):
        with pytest.raises(ValidationError):
            SpikeTrain(1.0, 1.0, [])


class TestJumpTrajectory:
    def test_valid(self):
        tr = JumpTrajectory(0.0, 10.0, 0, [1.0, 4.0], [1, 0])
        assert tr.n_transitions == 2
        assert tr.state_at(0.5) == 0
        assert tr.state_at(1.0) == 1
        assert tr.state_at(4.5) == 0

    def test_rejects_self_transition(self):
        with pytest.raises(ValidationError):
            JumpTrajectory(0.0, 10.0, 0, [1.0], [0])
        with pytest.raises(ValidationError):
            JumpTrajectory(0.0, 10.0, 0, [1.0, 2.0], [1, 1])

    def test_state_at_domain(self):
        tr = JumpTrajectory(0.0, 10.0, 0, [1.0], [1])
        with pytest.raises(DomainError):
            tr.state_at(10.0)


class TestHistoryWindow:
    def test_event_at_t_excluded(self):
        tr = SpikeTrain(0.0, 5.0, [1.0, 2.5, 4.0])
        assert history_window(tr, 2.5, 2.0).tolist() == [1.0]

    def test_full_window(self):
        tr = SpikeTrain(0.0, 5.0, [1.0, 2.5, 4.0])
        assert history_window(tr, 5.0, 5.0).tolist() == [1.0, 2.5, 4.0]

    def test_empty_window(self):
        tr = SpikeTrain(0.0, 5.0, [1.0, 2.5, 4.0])
        assert history_window(tr, 1.0, 0.5).tolist() == []

    def test_left_edge_included(self):
        tr = SpikeTrain(0.0, 5.0, [1.0, 2.5, 4.0])
        assert history_window(tr, 2.0, 1.0).tolist() == [1.0]

    def test_t_outside_record_raises(self):
        tr = SpikeTrain(0.0, 5.0, [1.0])
        with pytest.raises(DomainError):
            history_window(tr, 5.5, 1.0)
        with pytest.raises(DomainError):
            history_window(tr, -0.5, 1.0)

    def test_window_before_start_raises_unless_clipped(self):
        tr = SpikeTrain(0.0, 5.0, [1.0])
        with pytest.raises(DomainError):
            history_window(tr, 1.0, 2.0)
        events, clipped = history_window_clipped(tr, 1.0, 2.0)
        assert clipped and events.tolist() == []

    def test_unbounded_depth_always_clips(self):
        tr = SpikeTrain(0.0, 5.0, [1.0, 2.5])
        events, clipped = history_window_clipped(tr, 3.0, math.inf)
        assert clipped and events.tolist() == [1.0, 2.5]

    @given(
        events=st.lists(st.integers(1, 99), min_size=0, max_size=20,
                        unique=True).map(sorted),
        t10=st.integers(0, 100),
        d10=st.integers(1, 100),
        d2_10=st.integers(1, 100),
    )
    @settings(max_examples=150, deadline=None)
    def test_windowing_idempotence(self, events, t10, d10, d2_10):
        # Re-windowing a windowed slice with a smaller depth matches the
        # direct call with that depth.
        tr = SpikeTrain(0.0, 10.0, np.array(events) / 10.0)
        t = t10 / 10.0
        depth = d10 / 10.0
        inner = min(d10, d2_10) / 10.0
        w1, _ = history_window_clipped(tr, t, depth)
        direct, _ = history_window_clipped(tr, t, inner)
        lo = t - inner
        nested = w1[w1 >= lo]
        assert nested.tolist() == direct.tolist()
        # windows are contiguous slices of the train
        assert w1.size <= tr.n_events
        if w1.size:
            i0 = np.searchsorted(tr.events, w1[0])
            assert tr.events[i0:i0 + w1.size].tolist() == w1.tolist()


class TestJointRecord:
    def test_bipartite_violation(self):
        with pytest.raises(BipartiteViolation):
            JointSpikeRecord(
                x=SpikeTrain(0.0, 3.0, [1.0]),
                y=SpikeTrain(0.0, 3.0, [1.0]),
            )

    def test_span_mismatch(self):
        with pytest.raises(ValidationError):
            JointSpikeRecord(
                x=SpikeTrain(0.0, 3.0, [1.0]),
                y=SpikeTrain(0.0, 4.0, [2.0]),
            )

    def test_valid_and_revalidate(self, small_record):
        assert validate_joint_record(small_record) is small_record

    def test_ordering_violation_at_construction(self):
        with pytest.raises(OrderingViolation):
            SpikeTrain(0.0, 3.0, [2.0, 1.0])


class TestMerge:
    def test_basic(self):
        rec = JointSpikeRecord(
            x=SpikeTrain(0.0, 5.0, [1.0, 4.0]),
            y=SpikeTrain(0.0, 5.0, [2.0]),
        )
        assert merge_event_streams(rec) == [(1.0, "x"), (2.0, "y"), (4.0, "x")]

    def test_empty(self):
        rec = JointSpikeRecord(x=SpikeTrain(0, 1, []), y=SpikeTrain(0, 1, []))
        assert merge_event_streams(rec) == []

    def test_single_source(self):
        rec = JointSpikeRecord(x=SpikeTrain(0, 1, []), y=SpikeTrain(0, 1, [0.5]))
        assert merge_event_streams(rec) == [(0.5, "y")]

    @given(
        xs=st.lists(st.integers(0, 499), unique=True, max_size=30),
        ys=st.lists(st.integers(500, 999), unique=True, max_size=30),
    )
    @settings(max_examples=80, deadline=None)
    def test_length_and_order(self, xs, ys):
        rec = JointSpikeRecord(
            x=SpikeTrain(0.0, 1.0, np.sort(np.array(xs)) / 1000.0),
            y=SpikeTrain(0.0, 1.0, np.sort(np.array(ys)) / 1000.0),
        )
        merged = merge_event_streams(rec)
        assert len(merged) == len(xs) + len(ys)
        times = [t for t, _ in merged]
        assert times == sorted(times)


class TestHistoryWindows:
    def test_defaults_unbounded(self):
        w = HistoryWindows()
        assert math.isinf(w.s) and math.isinf(w.r)

    def test_zero_rejected(self):
        with pytest.raises(ValidationError):
            HistoryWindows(s=0.0)
        with pytest.raises(ValidationError):
            HistoryWindows(r=-1.0)


class TestFileFormats:
    def test_record_roundtrip(self, tmp_path, small_record):
        path = tmp_path / "rec.csv"
        write_record(small_record, path)
        back = read_record(path, 0.0, 5.0)
        assert np.allclose(back.x.events, small_record.x.events)
        assert np.allclose(back.y.events, small_record.y.events)

    def test_reader_rejects_unsorted(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("time,channel\n2.0,x\n1.0,y\n")
        with pytest.raises(OrderingViolation):
            read_record(path, 0.0, 5.0)

    def test_reader_rejects_bad_channel(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("time,channel\n1.0,z\n")
        with pytest.raises(ValidationError):
            read_record(path, 0.0, 5.0)

    def test_reader_rejects_missing_header(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("1.0,x\n")
        with pytest.raises(ValidationError):
            read_record(path, 0.0, 5.0)

    def test_train_roundtrip(self, tmp_path):
        tr = SpikeTrain(0.0, 9.0, [0.25, 1.5, 8.0])
        path = tmp_path / "train.txt"
        write_train(tr, path)
        back = read_train(path, 0.0, 9.0)
        assert np.allclose(back.events, tr.events)

    def test_train_reader_rejects_unsorted(self, tmp_path):
        path = tmp_path / "train.txt"
        path.write_text("2.0\n1.0\n")
        with pytest.raises(OrderingViolation):
            read_train(path, 0.0, 9.0)
