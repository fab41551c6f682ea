"""Path log-densities and the pathwise transfer entropy.

For a point process with conditional intensity ``lam`` the log-density of a
path with events ``t_i`` on ``[t0, t1)`` is ``sum_i ln lam(t_i) - int lam``.
The pathwise transfer entropy of a target path given a source path is the
log-ratio of the source-conditioned and source-marginalized path densities:

    sum_i ln[lam_joint(t_i) / lam_coarse(t_i)]  +  int (lam_coarse - lam_joint)

The first sum collects discontinuous "jump" contributions at target events;
the integrand of the second term is the non-spiking rate.  Both pieces use
rolling right-open history windows, so every rate is evaluated with the
event at the evaluation time excluded (left limits).

Integrals are computed per smooth sub-segment: segments split at every event
time, every history-window exit and every model breakpoint, then adaptive
Simpson quadrature certifies each piece to an absolute tolerance per unit
time.  Models that expose an exact compensator bypass quadrature entirely.
"""

from __future__ import annotations

import math
from bisect import bisect_left, bisect_right
from dataclasses import dataclass, field
from typing import Callable, Mapping, NamedTuple, Optional, Sequence

import numpy as np

from .core import HistoryWindows, JointSpikeRecord, JumpTrajectory, SpikeTrain
from .errors import (
    MissingHistoryError,
    QuadratureError,
    SingularRatioError,
    ValidationError,
)

__all__ = [
    "PathwiseTEResult",
    "log_path_density",
    "pathwise_te",
    "jump_contribution",
    "nonspiking_rate",
    "integrate_rate_difference",
    "cumulative_te_curve",
    "escape_rate",
    "pathwise_te_jump",
    "JumpHistory",
    "TransitionRateModel",
]

DEFAULT_TOL = 1e-9  # nats per unit time


# ---------------------------------------------------------------------------
# Quadrature
# ---------------------------------------------------------------------------


def _adaptive_simpson(f, a, b, tol_per_time, max_depth=28):
    """Adaptive Simpson integral of a vectorized callable on [a, b].

    The per-interval error budget is proportional to interval length so the
    total absolute error is bounded by ``tol_per_time * (b - a)``.  Accepted
    contributions are summed in position order with compensated summation,
    making the result independent of the refinement schedule.
    """
    if b <= a:
        return 0.0
    fa, fm, fb = (float(v) for v in f(np.array([a, 0.5 * (a + b), b])))
    pieces = [(a, b, fa, fm, fb, (fa + 4.0 * fm + fb) * (b - a) / 6.0, 0)]
    accepted = []
    while pieces:
        mids = []
        for (pa, pb, *_rest) in pieces:
            pm = 0.5 * (pa + pb)
            mids.append(0.5 * (pa + pm))
            mids.append(0.5 * (pm + pb))
        vals = f(np.asarray(mids))
        nxt = []
        for i, (pa, pb, va, vm, vb, s1, depth) in enumerate(pieces):
            vlm = float(vals[2 * i])
            vrm = float(vals[2 * i + 1])
            pm = 0.5 * (pa + pb)
            h = pb - pa
            s_left = (va + 4.0 * vlm + vm) * h / 12.0
            s_right = (vm + 4.0 * vrm + vb) * h / 12.0
            s2 = s_left + s_right
            err = (s2 - s1) / 15.0
            if abs(err) <= tol_per_time * h or h <= 1e-14 * max(abs(pa), 1.0):
                accepted.append((pa, s2 + err))
            elif depth >= max_depth:
                raise QuadratureError(
                    f"tolerance not met on [{pa}, {pb}] "
                    f"(estimated error {abs(err):.3e} > {tol_per_time * h:.3e})"
                )
            else:
                nxt.append((pa, pm, va, vlm, vm, s_left, depth + 1))
                nxt.append((pm, pb, vm, vrm, vb, s_right, depth + 1))
        pieces = nxt
    accepted.sort(key=lambda kv: kv[0])
    return math.fsum(v for _, v in accepted)


def integrate_rate_difference(coarse_fn, joint_fn, a, b, breakpoints=(),
                              tol=DEFAULT_TOL):
    """Integral of ``coarse_fn(t) - joint_fn(t)`` over ``[a, b]``.

    ``coarse_fn`` / ``joint_fn`` are vectorized callables (array of times to
    array of rates).  ``breakpoints`` are known non-smooth points inside the
    segment; the integral is certified per smooth sub-segment to an absolute
    error of ``tol`` per unit time.
    """
    if b < a:
        raise ValidationError("segment", "end must not precede start")
    cuts = [a]
    for c in sorted(breakpoints):
        if a < c < b:
            if c <= cuts[-1]:
                raise ValidationError("breakpoints", "must be strictly ordered")
            cuts.append(c)
    cuts.append(b)

    def diff(ts):
        return np.asarray(coarse_fn(ts), dtype=float) - np.asarray(
            joint_fn(ts), dtype=float
        )

    return math.fsum(
        _adaptive_simpson(diff, lo, hi, tol) for lo, hi in zip(cuts[:-1], cuts[1:])
    )


# ---------------------------------------------------------------------------
# Piecewise segmentation with rolling histories
# ---------------------------------------------------------------------------


class _Piece(NamedTuple):
    a: float
    b: float
    own: np.ndarray    # own-channel events in the rolling window (frozen)
    other: object      # other-channel window, or None


def _window(events: np.ndarray, t: float, depth: float) -> np.ndarray:
    lo = -math.inf if not math.isfinite(depth) else t - depth
    return events[np.searchsorted(events, lo, side="left"):
                  np.searchsorted(events, t, side="left")]


def _exit_times(events: np.ndarray, depth: float, t0: float, t1: float):
    if not math.isfinite(depth) or events.size == 0:
        return ()
    ex = events + depth
    return ex[(ex > t0) & (ex < t1)]


def _check_prior(record_start, t0, windows: HistoryWindows, prior: str,
                 use_other: bool):
    if prior == "empty":
        return
    if prior != "error":
        raise ValidationError("prior", "must be 'empty' or 'error'")
    needs = (not math.isfinite(windows.s)) or (t0 - windows.s < record_start)
    if use_other:
        needs = needs or (not math.isfinite(windows.r)) or (
            t0 - windows.r < record_start
        )
    if needs:
        raise MissingHistoryError(
            "history windows reach before the record start; declare "
            "prior='empty' to treat pre-record time as event-free"
        )


def _segment_pieces(own_events, other_events, t0, t1, windows,
                    breakpoint_fns, extra_points=()):
    """Split [t0, t1] into pieces on which both rolling windows are frozen
    and every supplied model rate is smooth."""
    bounds = {t0, t1}
    for ev in (own_events, other_events):
        if ev is None:
            continue
        inside = ev[(ev > t0) & (ev < t1)]
        bounds.update(inside.tolist())
    bounds.update(_exit_times(own_events, windows.s, t0, t1))
    if other_events is not None:
        bounds.update(_exit_times(other_events, windows.r, t0, t1))
    for p in extra_points:
        if t0 < p < t1:
            bounds.add(float(p))
    ordered = sorted(bounds)

    pieces = []
    for a, b in zip(ordered[:-1], ordered[1:]):
        mid = 0.5 * (a + b)
        ownw = _window(own_events, mid, windows.s)
        otherw = None if other_events is None else _window(
            other_events, mid, windows.r
        )
        cuts = set()
        for fn in breakpoint_fns:
            cuts.update(fn(a, ownw, otherw, b))
        sub = [a] + sorted(c for c in cuts if a < c < b) + [b]
        for lo, hi in zip(sub[:-1], sub[1:]):
            pieces.append(_Piece(lo, hi, ownw, otherw))
    return pieces


def _piece_integral(evaluator, piece: _Piece, other, tol):
    """Integral of one evaluator's rate over a smooth piece."""
    comp = evaluator.compensator(piece.a, piece.b, piece.own, other)
    if comp is not None:
        return comp

    def f(ts):
        return evaluator.rate_profile(ts, piece.own, other)

    return _adaptive_simpson(f, piece.a, piece.b, tol)


def _is_sweepable(evaluator) -> bool:
    return hasattr(evaluator, "sweep_start")


# ---------------------------------------------------------------------------
# Log path density
# ---------------------------------------------------------------------------


def log_path_density(intensity, record: JointSpikeRecord, channel: str,
                     interval=None, windows: HistoryWindows = HistoryWindows(),
                     *, conditioned_on_source: bool = True,
                     prior: str = "error", tol: float = DEFAULT_TOL) -> float:
    """Log-density ``sum_i ln lam(t_i) - int lam dt`` of one channel's path.

    ``channel`` selects which channel's events form the path ('x' or 'y');
    the other channel enters only through the intensity's source history and
    only when ``conditioned_on_source`` is set.  A zero modeled rate at an
    observed event makes the path impossible; the function then returns
    ``-inf``.
    """
    if channel == "x":
        own_train, other_train = record.x, record.y
    elif channel == "y":
        own_train, other_train = record.y, record.x
    else:
        raise ValidationError("channel", "must be 'x' or 'y'")
    t0, t1 = interval if interval is not None else (record.start_time, record.end_time)
    if t0 == t1:
        return 0.0
    if not (record.start_time <= t0 < t1 <= record.end_time):
        raise ValidationError("interval", "must lie within the record span")
    _check_prior(record.start_time, t0, windows, prior, conditioned_on_source)

    own = own_train.events
    other = other_train.events if conditioned_on_source else None

    log_terms = 0.0
    ev_in = own[(own >= t0) & (own < t1)]
    for t_i in ev_in:
        ownw = _window(own, t_i, windows.s)
        otherw = None if other is None else _window(other, t_i, windows.r)
        lam = intensity.rate(t_i, ownw, otherw)
        if lam <= 0.0:
            return -math.inf
        log_terms += math.log(lam)

    if _is_sweepable(intensity) and other is None:
        intensity.sweep_start(t0)
        integral = 0.0
        for t_i in ev_in:
            integral += intensity.sweep_integral(t_i)
            intensity.sweep_event(t_i)
        integral += intensity.sweep_integral(t1)
    else:
        def bp(a, ownw, otherw, b):
            return intensity.breakpoints(a, ownw, otherw, b)

        pieces = _segment_pieces(own, other, t0, t1, windows, [bp])
        integral = math.fsum(
            _piece_integral(intensity, p, p.other, tol) for p in pieces
        )
    return log_terms - integral


# ---------------------------------------------------------------------------
# Pathwise transfer entropy
# ---------------------------------------------------------------------------


def jump_contribution(lambda_joint_at_event: float,
                      lambda_coarse_at_event: float) -> float:
    """Jump term ``ln(lambda_joint / lambda_coarse)`` at a target event."""
    if lambda_joint_at_event <= 0.0 or lambda_coarse_at_event <= 0.0:
        raise SingularRatioError(
            None,
            "jump contribution requires strictly positive rates "
            f"(got joint={lambda_joint_at_event}, coarse={lambda_coarse_at_event})",
        )
    return math.log(lambda_joint_at_event / lambda_coarse_at_event)


def nonspiking_rate(lambda_coarse: float, lambda_joint: float) -> float:
    """Non-spiking rate ``lambda_coarse - lambda_joint`` (nats/second)."""
    if lambda_coarse < 0.0 or lambda_joint < 0.0:
        raise ValidationError("rate", "rates must be >= 0")
    return lambda_coarse - lambda_joint


@dataclass(frozen=True)
class PathwiseTEResult:
    """Pathwise transfer entropy of one realization with its decomposition.

    ``total = sum(deltas) + nonspiking_integral`` up to the integrator
    tolerance.  ``jump_contributions`` holds one ``(t_i, delta)`` pair per
    target event in the analysis interval; ``nonspiking_samples`` holds
    ``(t, rate)`` pairs of the non-spiking rate on the output grid (left
    limits).  The cumulative curve is reconstructed by
    :func:`cumulative_te_curve`.
    """

    total: float
    jump_contributions: tuple
    nonspiking_integral: float
    nonspiking_samples: tuple
    windows: HistoryWindows
    interval: tuple
    _cum_times: np.ndarray = field(repr=False, default=None)
    _cum_values: np.ndarray = field(repr=False, default=None)


def pathwise_te(joint_intensity, coarse_intensity, record: JointSpikeRecord,
                interval=None, windows: HistoryWindows = HistoryWindows(),
                grid=None, *, prior: str = "error",
                tol: float = DEFAULT_TOL) -> PathwiseTEResult:
    """Pathwise transfer entropy of the record's target channel.

    ``joint_intensity`` evaluates the source-conditioned target rate,
    ``coarse_intensity`` the source-marginalized one (the caller is
    responsible for their consistency).  ``grid`` requests non-spiking
    samples and exact cumulative-curve support at the given times.  Raises
    ``SingularRatioError`` if either rate vanishes at an observed target
    event.
    """
    t0, t1 = interval if interval is not None else (record.start_time, record.end_time)
    if not (record.start_time <= t0 < t1 <= record.end_time):
        raise ValidationError("interval", "must lie within the record span")
    _check_prior(record.start_time, t0, windows, prior, True)

    own = record.x.events
    other = record.y.events
    grid_pts = np.asarray([] if grid is None else grid, dtype=float)
    if grid_pts.size and (grid_pts[0] < t0 or grid_pts[-1] > t1):
        raise ValidationError("grid", "grid must lie within the analysis interval")

    sweep = _is_sweepable(coarse_intensity)

    def bp_joint(a, ownw, otherw, b):
        return joint_intensity.breakpoints(a, ownw, otherw, b)

    bp_fns = [bp_joint]
    if not sweep:
        def bp_coarse(a, ownw, otherw, b):
            return coarse_intensity.breakpoints(a, ownw, None, b)

        bp_fns.append(bp_coarse)

    pieces = _segment_pieces(own, other, t0, t1, windows, bp_fns,
                             extra_points=grid_pts)

    if sweep:
        coarse_intensity.sweep_start(t0)

    def coarse_rate_at(t):
        if sweep:
            return coarse_intensity.sweep_rate()
        return coarse_intensity.rate(t, _window(own, t, windows.s), None)

    events = own[(own >= t0) & (own < t1)]
    ev_idx = 0
    jumps = []
    samples = []
    cum_t = [t0]
    cum_v = [0.0]
    integral = 0.0
    grid_set = set(grid_pts.tolist())

    def handle_boundary(t):
        nonlocal ev_idx
        if t in grid_set:
            ownw = _window(own, t, windows.s)
            otherw = _window(other, t, windows.r)
            lam_j = joint_intensity.rate(t, ownw, otherw)
            samples.append((t, coarse_rate_at(t) - lam_j))
        while ev_idx < events.size and events[ev_idx] == t:
            ownw = _window(own, t, windows.s)
            otherw = _window(other, t, windows.r)
            lam_j = joint_intensity.rate(t, ownw, otherw)
            lam_c = coarse_rate_at(t)
            if lam_j <= 0.0 or lam_c <= 0.0:
                raise SingularRatioError(t)
            jumps.append((float(t), math.log(lam_j / lam_c)))
            if sweep:
                coarse_intensity.sweep_event(t)
            ev_idx += 1

    handle_boundary(t0)
    for p in pieces:
        joint_part = _piece_integral(joint_intensity, p, p.other, tol)
        if sweep:
            coarse_part = coarse_intensity.sweep_integral(p.b)
        else:
            coarse_part = _piece_integral(coarse_intensity, p, None, tol)
        integral += coarse_part - joint_part
        if p.b < t1 or p.b in grid_set or p.b == t1:
            cum_t.append(p.b)
            cum_v.append(integral)
        handle_boundary(p.b)

    total = math.fsum(d for _, d in jumps) + integral
    return PathwiseTEResult(
        total=total,
        jump_contributions=tuple(jumps),
        nonspiking_integral=integral,
        nonspiking_samples=tuple(samples),
        windows=windows,
        interval=(t0, t1),
        _cum_times=np.asarray(cum_t),
        _cum_values=np.asarray(cum_v),
    )


def cumulative_te_curve(result: PathwiseTEResult, grid=None):
    """Cumulative pathwise transfer entropy sampled on ``grid``.

    The curve is left-continuous: the jump at a target event ``t_i`` is
    excluded from the value at ``t_i`` itself, so the right limit minus the
    left limit there equals the event's jump contribution.  Values are exact
    at the times supplied to :func:`pathwise_te` via ``grid`` (and at all
    internal segment boundaries); other times interpolate the non-spiking
    part linearly.  Returns a list of ``(t, cumulative)`` pairs.
    """
    t0, t1 = result.interval
    if grid is None:
        grid = [t for t, _ in result.nonspiking_samples] or [t0, t1]
    grid = np.asarray(grid, dtype=float)
    if grid.size and (grid[0] < t0 or grid[-1] > t1):
        raise ValidationError("grid", "grid must lie within the analysis interval")
    nonspike = np.interp(grid, result._cum_times, result._cum_values)
    jump_times = np.array([t for t, _ in result.jump_contributions])
    jump_vals = np.array([d for _, d in result.jump_contributions])
    csum = np.concatenate(([0.0], np.cumsum(jump_vals)))
    idx = np.searchsorted(jump_times, grid, side="left")
    return list(zip(grid.tolist(), (nonspike + csum[idx]).tolist()))


# ---------------------------------------------------------------------------
# Jump (discrete-state) processes
# ---------------------------------------------------------------------------


class JumpHistory(NamedTuple):
    """Windowed view of a jump path: transitions in ``[t - s, t)`` plus the
    state held at the window end (the state at ``t-``)."""

    times: np.ndarray
    states: np.ndarray
    state: int


class TransitionRateModel:
    """Contract for per-destination transition rates of a jump process."""

    def transition_rates(self, t, history: JumpHistory, source_history=None
                         ) -> Mapping[int, float]:
        """Map destination state -> rate at time ``t`` given the windowed
        own-path history and (optionally) the source history."""
        raise NotImplementedError

    def breakpoints(self, t, history, source_history, horizon):
        return ()


def escape_rate(per_destination_rates: Mapping[int, float],
                current_state: int) -> float:
    """Total rate of leaving ``current_state``: the sum over destinations
    different from it (a self-rate entry is ignored)."""
    total = 0.0
    for dest, rate in per_destination_rates.items():
        if rate < 0.0:
            raise ValidationError("rate", "transition rates must be >= 0")
        if dest != current_state:
            total += rate
    return total


def _jump_window(traj: JumpTrajectory, t: float, depth: float) -> JumpHistory:
    lo = -math.inf if not math.isfinite(depth) else t - depth
    i0 = int(np.searchsorted(traj.times, lo, side="left"))
    i1 = int(np.searchsorted(traj.times, t, side="left"))
    state = traj.initial_state if i1 == 0 else int(traj.states[i1 - 1])
    return JumpHistory(traj.times[i0:i1], traj.states[i0:i1], state)


def pathwise_te_jump(joint_model: TransitionRateModel,
                     coarse_model: TransitionRateModel,
                     trajectory: JumpTrajectory,
                     source_path=None,
                     windows: HistoryWindows = HistoryWindows(),
                     interval=None, *, tol: float = DEFAULT_TOL
                     ) -> PathwiseTEResult:
    """Pathwise transfer entropy for a discrete-state jump trajectory.

    At each transition the jump term compares the per-destination rates of
    the source-conditioned and source-marginalized models; between
    transitions the escape-rate difference is integrated.  ``source_path``
    may be a :class:`SpikeTrain` (event times) or None.
    """
    t0, t1 = interval if interval is not None else (
        trajectory.start_time, trajectory.end_time
    )
    src_events = source_path.events if isinstance(source_path, SpikeTrain) else None

    bounds = {t0, t1}
    bounds.update(trajectory.times[(trajectory.times > t0) & (trajectory.times < t1)].tolist())
    if src_events is not None:
        bounds.update(src_events[(src_events > t0) & (src_events < t1)].tolist())
    ordered = sorted(bounds)

    def src_window(t):
        if src_events is None:
            return None
        return _window(src_events, t, windows.r)

    jumps = []
    sel = (trajectory.times >= t0) & (trajectory.times < t1)
    for t_i, x_i in zip(trajectory.times[sel], trajectory.states[sel]):
        hist = _jump_window(trajectory, t_i, windows.s)
        wj = joint_model.transition_rates(t_i, hist, src_window(t_i)).get(int(x_i), 0.0)
        wc = coarse_model.transition_rates(t_i, hist, None).get(int(x_i), 0.0)
        if wj <= 0.0 or wc <= 0.0:
            raise SingularRatioError(float(t_i))
        jumps.append((float(t_i), math.log(wj / wc)))

    integral = 0.0
    cum_t = [t0]
    cum_v = [0.0]
    for a, b in zip(ordered[:-1], ordered[1:]):
        mid = 0.5 * (a + b)
        hist = _jump_window(trajectory, mid, windows.s)
        srcw = src_window(mid)
        cuts = set(joint_model.breakpoints(a, hist, srcw, b))
        cuts.update(coarse_model.breakpoints(a, hist, None, b))
        sub = [a] + sorted(c for c in cuts if a < c < b) + [b]

        def diff_scalar(t):
            ej = escape_rate(joint_model.transition_rates(t, hist, srcw), hist.state)
            ec = escape_rate(coarse_model.transition_rates(t, hist, None), hist.state)
            return ec - ej

        def diff(ts):
            return np.array([diff_scalar(float(t)) for t in np.atleast_1d(ts)])

        for lo, hi in zip(sub[:-1], sub[1:]):
            integral += _adaptive_simpson(diff, lo, hi, tol)
        cum_t.append(b)
        cum_v.append(integral)

    total = math.fsum(d for _, d in jumps) + integral
    return PathwiseTEResult(
        total=total,
        jump_contributions=tuple(jumps),
        nonspiking_integral=integral,
        nonspiking_samples=(),
        windows=windows,
        interval=(t0, t1),
        _cum_times=np.asarray(cum_t),
        _cum_values=np.asarray(cum_v),
    )
