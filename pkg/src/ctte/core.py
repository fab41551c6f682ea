"""Domain types for spike trains, jump trajectories and history windows.

Conventions used throughout the package:

* Times are float64 seconds.
* Event containers are immutable after construction and safe to share
  between parallel workers.
* History windows are right-open, ``[t - depth, t)``: an event at exactly
  ``t`` belongs to the future, not to the history.  Rate functions built on
  such windows are left-continuous in time (caglad).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import (
    BipartiteViolation,
    DomainError,
    OrderingViolation,
    ValidationError,
)

__all__ = [
    "SpikeTrain",
    "JumpTrajectory",
    "JointSpikeRecord",
    "HistoryWindows",
    "ConditionalIntensity",
    "history_window",
    "history_window_clipped",
    "validate_joint_record",
    "merge_event_streams",
    "read_record",
    "write_record",
    "read_train",
    "write_train",
]


def _as_readonly_times(values) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1:
        raise ValidationError("events", "expected a one-dimensional sequence of times")
    arr = arr.copy()
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class SpikeTrain:
    """An ordered sequence of event times on the interval [start_time, end_time).

    Parameters
    ----------
    start_time, end_time : float
        Observation interval; ``end_time`` must exceed ``start_time``.
    events : sequence of float
        Strictly increasing event times, each in ``[start_time, end_time)``.
        An event exactly at ``end_time`` is rejected (right-open interval).
    """

    start_time: float
    end_time: float
    events: np.ndarray = field(default_factory=lambda: np.empty(0))

    def __post_init__(self):
        object.__setattr__(self, "events", _as_readonly_times(self.events))
        if not (self.end_time > self.start_time):
            raise ValidationError("end_time", "must exceed start_time")
        ev = self.events
        if ev.size:
            if not np.all(np.isfinite(ev)):
                raise ValidationError("events", "event times must be finite")
            if np.any(np.diff(ev) <= 0):
                raise OrderingViolation("event times must be strictly increasing")
            if ev[0] < self.start_time or ev[-1] >= self.end_time:
                raise ValidationError(
                    "events", "event times must lie in [start_time, end_time)"
                )

    @property
    def n_events(self) -> int:
        return int(self.events.size)

    @property
    def duration(self) -> float:
        return self.end_time - self.start_time


@dataclass(frozen=True)
class JumpTrajectory:
    """A cadlag step-function path of a discrete-state jump process.

    The path starts in ``initial_state`` at ``start_time``; each transition
    ``(times[i], states[i])`` moves the process into ``states[i]`` at time
    ``times[i]``.  Consecutive states must differ (every transition changes
    state).  State labels are opaque integers.
    """

    start_time: float
    end_time: float
    initial_state: int
    times: np.ndarray = field(default_factory=lambda: np.empty(0))
    states: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))

    def __post_init__(self):
        object.__setattr__(self, "times", _as_readonly_times(self.times))
        st = np.asarray(self.states, dtype=np.int64).copy()
        st.setflags(write=False)
        object.__setattr__(self, "states", st)
        if not (self.end_time > self.start_time):
            raise ValidationError("end_time", "must exceed start_time")
        if self.times.size != self.states.size:
            raise ValidationError("states", "times and states must have equal length")
        if self.times.size:
            if np.any(np.diff(self.times) <= 0):
                raise OrderingViolation("transition times must be strictly increasing")
            if self.times[0] < self.start_time or self.times[-1] >= self.end_time:
                raise ValidationError(
                    "times", "transition times must lie in [start_time, end_time)"
                )
            full = np.concatenate(([self.initial_state], self.states))
            if np.any(full[1:] == full[:-1]):
                raise ValidationError("states", "consecutive states must differ")

    @property
    def n_transitions(self) -> int:
        return int(self.times.size)

    def state_at(self, t: float) -> int:
        """State of the path at time ``t`` (cadlag: the value after any jump at t)."""
        if t < self.start_time or t >= self.end_time:
            raise DomainError(f"t={t} outside [{self.start_time}, {self.end_time})")
        i = int(np.searchsorted(self.times, t, side="right"))
        return int(self.initial_state if i == 0 else self.states[i - 1])


@dataclass(frozen=True)
class JointSpikeRecord:
    """A bipartite pair of spike trains (target ``x``, source ``y``) on one interval.

    Bipartite means no event time is shared between the channels; ties are
    rejected rather than perturbed.
    """

    x: SpikeTrain
    y: SpikeTrain

    def __post_init__(self):
        if (self.x.start_time != self.y.start_time) or (
            self.x.end_time != self.y.end_time
        ):
            raise ValidationError("y", "x and y must cover the identical interval")
        _check_bipartite(self.x.events, self.y.events)

    @property
    def start_time(self) -> float:
        return self.x.start_time

    @property
    def end_time(self) -> float:
        return self.x.end_time

    @property
    def duration(self) -> float:
        return self.x.duration


def _check_bipartite(x_events: np.ndarray, y_events: np.ndarray) -> None:
    if x_events.size and y_events.size:
        common = np.intersect1d(x_events, y_events)
        if common.size:
            raise BipartiteViolation(
                f"event time(s) {common[:3].tolist()} appear in both channels"
            )


@dataclass(frozen=True)
class HistoryWindows:
    """History depths (seconds) for target (``s``) and source (``r``).

    ``math.inf`` means unbounded history.  Depths must be strictly positive;
    the memoryless limit is approached as s, r -> 0+ but never equals 0.
    """

    s: float = math.inf
    r: float = math.inf

    def __post_init__(self):
        if not (self.s > 0):
            raise ValidationError("s", "history depth must be > 0")
        if not (self.r > 0):
            raise ValidationError("r", "history depth must be > 0")


class ConditionalIntensity:
    """Contract for history-dependent event rates (conditional intensities).

    Implementations are deterministic pure functions: the same arguments
    always produce the same rate.  Viewed as a function of ``t`` with the
    history arguments frozen, the rate must be continuous between the times
    returned by :meth:`breakpoints` (the rate as a whole is caglad).
    """

    def rate(self, t, target_history, source_history=None):
        """Rate (events/second, >= 0 and finite) at time ``t``.

        ``target_history`` holds the evaluator's own-channel event times in
        ``[t - s, t)``; ``source_history`` the other channel's events in
        ``[t - r, t)``, or None when the evaluator is source-marginal.
        """
        raise NotImplementedError

    def rate_profile(self, ts, target_history, source_history=None):
        """Vectorized :meth:`rate` over an array of times with frozen histories.

        The default falls back to a scalar loop; models override with a
        numpy implementation when speed matters.
        """
        ts = np.asarray(ts, dtype=float)
        return np.array(
            [self.rate(t, target_history, source_history) for t in ts.ravel()]
        ).reshape(ts.shape)

    def rate_upper_bound(self) -> Optional[float]:
        """A finite bound >= sup of the rate over all histories, or None."""
        return None

    def breakpoints(self, t, target_history, source_history, horizon):
        """Times in ``(t, horizon]`` where the frozen-history rate is non-smooth."""
        return ()

    def compensator(self, t0, t1, target_history, source_history=None):
        """Exact value of the rate integral over ``[t0, t1]`` with frozen
        histories, or None when no closed form is available (callers then
        fall back to quadrature)."""
        return None


def history_window(train: SpikeTrain, t: float, depth: float) -> np.ndarray:
    """Events of ``train`` in the right-open window ``[t - depth, t)``.

    Raises ``DomainError`` if ``t`` lies outside ``[start_time, end_time]``
    or if a finite ``depth`` reaches before ``start_time`` (use
    :func:`history_window_clipped` to clip deliberately).
    """
    if t < train.start_time or t > train.end_time:
        raise DomainError(
            f"t={t} outside [{train.start_time}, {train.end_time}]"
        )
    if math.isfinite(depth) and t - depth < train.start_time:
        raise DomainError(
            f"window [t-depth, t) = [{t - depth}, {t}) reaches before "
            f"start_time={train.start_time}; clip explicitly if intended"
        )
    return _window_slice(train.events, t, depth)


def history_window_clipped(train: SpikeTrain, t: float, depth: float):
    """Like :func:`history_window` but clips at ``start_time``.

    Returns ``(events, clipped)`` where ``clipped`` is True when the window
    extended before the record start (so the caller knows the "no events
    before the record" convention is in play).
    """
    if t < train.start_time or t > train.end_time:
        raise DomainError(
            f"t={t} outside [{train.start_time}, {train.end_time}]"
        )
    clipped = (not math.isfinite(depth)) or (t - depth < train.start_time)
    return _window_slice(train.events, t, depth), clipped


def _window_slice(events: np.ndarray, t: float, depth: float) -> np.ndarray:
    lo = -math.inf if not math.isfinite(depth) else t - depth
    i0 = int(np.searchsorted(events, lo, side="left"))
    i1 = int(np.searchsorted(events, t, side="left"))
    return events[i0:i1]


def validate_joint_record(record: JointSpikeRecord) -> JointSpikeRecord:
    """Re-check all invariants of a joint record and return it unchanged.

    Construction already enforces the invariants; this entry point exists so
    ingestion code can re-validate records assembled from raw parts.
    """
    for name, train in (("x", record.x), ("y", record.y)):
        ev = train.events
        if ev.size and np.any(np.diff(ev) <= 0):
            raise OrderingViolation(f"channel {name}: events not strictly increasing")
    if (record.x.start_time != record.y.start_time) or (
        record.x.end_time != record.y.end_time
    ):
        raise ValidationError("y", "x and y must cover the identical interval")
    _check_bipartite(record.x.events, record.y.events)
    return record


def merge_event_streams(record: JointSpikeRecord):
    """Merge both channels into one time-ordered list of ``(time, tag)`` pairs.

    Tags are ``"x"`` / ``"y"``.  The bipartite invariant guarantees a total
    order with no ties.
    """
    xs = record.x.events
    ys = record.y.events
    merged = []
    i = j = 0
    while i < xs.size and j < ys.size:
        if xs[i] < ys[j]:
            merged.append((float(xs[i]), "x"))
            i += 1
        else:
            merged.append((float(ys[j]), "y"))
            j += 1
    merged.extend((float(v), "x") for v in xs[i:])
    merged.extend((float(v), "y") for v in ys[j:])
    return merged


# ---------------------------------------------------------------------------
# File formats
# ---------------------------------------------------------------------------
#
# Joint record: CSV with header ``time,channel``, rows sorted by time,
# channel in {x, y}, times in decimal seconds.  Single train: one time per
# line, no header.  Readers reject unsorted input.


def write_record(record: JointSpikeRecord, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["time", "channel"])
        for t, tag in merge_event_streams(record):
            writer.writerow([f"{t:.12g}", tag])


def read_record(path, start_time: float, end_time: float) -> JointSpikeRecord:
    """Read a ``time,channel`` CSV into a validated joint record.

    The observation interval is not stored in the file and must be supplied.
    """
    xs, ys = [], []
    prev = -math.inf
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [c.strip() for c in header[:2]] != ["time", "channel"]:
            raise ValidationError("file", "expected header 'time,channel'")
        for row in reader:
            if not row:
                continue
            t = float(row[0])
            tag = row[1].strip()
            if t <= prev:
                raise OrderingViolation(f"row time {t} not greater than {prev}")
            prev = t
            if tag == "x":
                xs.append(t)
            elif tag == "y":
                ys.append(t)
            else:
                raise ValidationError("channel", f"unknown channel {tag!r}")
    return JointSpikeRecord(
        x=SpikeTrain(start_time, end_time, np.array(xs)),
        y=SpikeTrain(start_time, end_time, np.array(ys)),
    )


def write_train(train: SpikeTrain, path) -> None:
    with open(path, "w") as fh:
        for t in train.events:
            fh.write(f"{t:.12g}\n")


def read_train(path, start_time: float, end_time: float) -> SpikeTrain:
    times = []
    prev = -math.inf
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            t = float(line)
            if t <= prev:
                raise OrderingViolation(f"time {t} not greater than {prev}")
            prev = t
            times.append(t)
    return SpikeTrain(start_time, end_time, np.array(times))
