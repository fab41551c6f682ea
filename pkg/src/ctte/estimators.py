"""Transfer entropy rate estimators.

Two families live here:

* The event-sum estimator: for stationary self-averaging processes the rate
  equals the long-run average of ``ln(lambda_joint / lambda_coarse)`` summed
  over target events and divided by duration.  No time discretization is
  involved; accuracy improves with record length alone.

* A discrete-time laboratory: plug-in transfer entropy on binarized bins of
  width ``dt`` with ``k`` target and ``l`` source history bins.  Its per-bin
  value scales with ``dt`` (the rate is the ``dt -> 0`` limit of value/dt),
  which :func:`discrete_rate_convergence` tabulates.  The conditioning table
  grows as ``2^(k+l+1)``; configurations beyond ``k + l = 20`` are refused.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .core import HistoryWindows, JointSpikeRecord
from .errors import SingularRatioError, ValidationError
from .pathmeasure import _is_sweepable, _window
from .simulate import SimulationConfig, simulate_coupled

__all__ = [
    "RateEstimate",
    "DiscreteTEConfig",
    "empirical_te_rate",
    "ensemble_te_rate",
    "DiscreteTEResult",
    "discrete_time_te",
    "discrete_time_te_binary",
    "binarize_record",
    "shuffle_surrogate_te",
    "discrete_rate_convergence",
]

_KL_CAP = 20


@dataclass(frozen=True)
class RateEstimate:
    """A transfer entropy rate estimate in nats per second."""

    value: float
    stderr: float
    n_events: int
    duration: float

    def __post_init__(self):
        if not (self.duration > 0):
            raise ValidationError("duration", "must be > 0")
        if self.stderr < 0:
            raise ValidationError("stderr", "must be >= 0")


@dataclass(frozen=True)
class DiscreteTEConfig:
    """Binning configuration: bin width ``dt``, ``k`` target and ``l`` source
    history bins (covering depths of roughly ``k*dt`` and ``l*dt``)."""

    dt: float
    k: int = 1
    l: int = 1

    def __post_init__(self):
        if not (self.dt > 0):
            raise ValidationError("dt", "must be > 0")
        if self.k < 1 or self.l < 1:
            raise ValidationError("k", "history lengths must be >= 1")
        if self.k + self.l > _KL_CAP:
            raise ValidationError(
                "k", f"k + l = {self.k + self.l} exceeds {_KL_CAP}: the "
                     f"conditioning table would hold 2^{self.k + self.l + 1} "
                     f"contexts"
            )

    @classmethod
    def from_windows(cls, windows: HistoryWindows, dt: float) -> "DiscreteTEConfig":
        """Derive ``k = floor(s/dt) + 1`` and ``l = floor(r/dt) + 1``."""
        if not (math.isfinite(windows.s) and math.isfinite(windows.r)):
            raise ValidationError("windows", "binning requires finite depths")
        return cls(dt=dt, k=int(windows.s // dt) + 1, l=int(windows.r // dt) + 1)


def empirical_te_rate(record: JointSpikeRecord, joint_intensity,
                      coarse_intensity, windows: HistoryWindows,
                      interval=None, n_batches: int = 20) -> RateEstimate:
    """Event-sum transfer entropy rate of one record.

    ``value = (1/T) * sum_i ln[lambda_joint(t_i) / lambda_coarse(t_i)]`` over
    target events, with rates on rolling right-open windows (clipped at the
    record start).  The standard error comes from batch means over
    ``n_batches`` equal sub-intervals; stationarity and self-averaging of
    the process are assumed, not checked.
    """
    t0, t1 = interval if interval is not None else (record.start_time,
                                                    record.end_time)
    if not (record.start_time <= t0 < t1 <= record.end_time):
        raise ValidationError("interval", "must lie within the record span")
    duration = t1 - t0
    xs = record.x.events
    ys = record.y.events
    events = xs[(xs >= t0) & (xs < t1)]

    sweep = _is_sweepable(coarse_intensity)
    if sweep:
        coarse_intensity.sweep_start(t0)

    logs = np.empty(events.size)
    for i, t_i in enumerate(events):
        xw = _window(xs, t_i, windows.s)
        yw = _window(ys, t_i, windows.r)
        lam_j = joint_intensity.rate(t_i, xw, yw)
        if sweep:
            coarse_intensity.sweep_integral(t_i)
            lam_c = coarse_intensity.sweep_rate()
            coarse_intensity.sweep_event(t_i)
        else:
            lam_c = coarse_intensity.rate(t_i, xw, None)
        if lam_j <= 0.0 or lam_c <= 0.0:
            raise SingularRatioError(float(t_i))
        logs[i] = math.log(lam_j / lam_c)

    if events.size == 0:
        warnings.warn("no target events in the analysis interval; "
                      "returning a zero rate", stacklevel=2)
        return RateEstimate(0.0, 0.0, 0, duration)

    value = float(logs.sum()) / duration
    edges = np.linspace(t0, t1, n_batches + 1)
    idx = np.clip(np.searchsorted(edges, events, side="right") - 1, 0,
                  n_batches - 1)
    batch_len = duration / n_batches
    sums = np.bincount(idx, weights=logs, minlength=n_batches)
    batch_vals = sums / batch_len
    stderr = float(np.std(batch_vals, ddof=1) / math.sqrt(n_batches)) \
        if n_batches > 1 else 0.0
    return RateEstimate(value, stderr, int(events.size), duration)


def _child_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence(seed, spawn_key=(index,)).generate_state(1)[0])


def _one_path_rate(args):
    (x_model, y_model, coarse_provider, duration, windows, scheme, dt,
     seed) = args
    cfg = SimulationConfig(duration=duration, seed=seed, scheme=scheme, dt=dt)
    record = simulate_coupled(x_model, y_model, cfg)
    coarse = coarse_provider(record)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        est = empirical_te_rate(record, x_model, coarse, windows)
    return est.value, est.n_events


def ensemble_te_rate(x_model, y_model, coarse_provider: Callable,
                     n_paths: int, duration: float, windows: HistoryWindows,
                     seed: int = 0, scheme: str = "thinning",
                     dt: Optional[float] = None, workers: int = 1
                     ) -> RateEstimate:
    """Transfer entropy rate averaged over independent simulated paths.

    ``coarse_provider(record)`` builds the source-marginalized evaluator for
    each path (a closure over the model, or a per-record filter).  Per-path
    seeds derive deterministically from ``seed``; results are identical for
    any worker count.
    """
    if n_paths < 2:
        raise ValidationError("n_paths", "must be >= 2")
    jobs = [
        (x_model, y_model, coarse_provider, duration, windows, scheme, dt,
         _child_seed(seed, i))
        for i in range(n_paths)
    ]
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_one_path_rate, jobs))
    else:
        results = [_one_path_rate(j) for j in jobs]
    values = np.array([v for v, _ in results])
    n_events = int(sum(n for _, n in results))
    return RateEstimate(
        value=float(values.mean()),
        stderr=float(values.std(ddof=1) / math.sqrt(n_paths)),
        n_events=n_events,
        duration=n_paths * duration,
    )


# ---------------------------------------------------------------------------
# Discrete-time laboratory
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DiscreteTEResult:
    """Plug-in binned transfer entropy: average nats per bin."""

    value: float
    dt: float
    k: int
    l: int
    n_bins: int
    unseen_contexts: int


def binarize_record(record: JointSpikeRecord, dt: float, interval=None):
    """Binary occupancy sequences (>=1 event per bin) for both channels."""
    t0, t1 = interval if interval is not None else (record.start_time,
                                                    record.end_time)
    n = int((t1 - t0) / dt)
    if n < 2:
        raise ValidationError("dt", "interval shorter than two bins")

    def bits(events):
        ev = events[(events >= t0) & (events < t0 + n * dt)]
        idx = ((ev - t0) / dt).astype(np.int64)
        idx = np.minimum(idx, n - 1)
        b = np.zeros(n, dtype=np.uint8)
        b[idx] = 1
        return b

    return bits(record.x.events), bits(record.y.events)


def _x_code(x_bits, k, l):
    """Packed next-bin plus x-context codes for every predicted bin."""
    n = x_bits.size
    start = max(k, l)
    if n - start < 1:
        raise ValidationError("dt", "record too short for the history length")
    x32 = x_bits.astype(np.int32)
    code = x32[start:].copy()
    for j in range(k):
        code += x32[start - 1 - j:n - 1 - j] << (1 + j)
    return code, start


def _add_y_code(code_x, y_bits, k, l, start):
    n = y_bits.size
    y32 = y_bits.astype(np.int32)
    code = code_x.copy()
    for j in range(l):
        code += y32[start - 1 - j:n - 1 - j] << (1 + k + j)
    return code


def _context_counts(x_bits, y_bits, k, l):
    """Counts over (y-context, x-context, next-x) cells.

    Contexts are the ``k`` (resp. ``l``) bins preceding each predicted bin,
    most recent bin in the lowest bit.
    """
    code_x, start = _x_code(x_bits, k, l)
    code = _add_y_code(code_x, y_bits, k, l, start)
    counts = np.bincount(code, minlength=1 << (k + l + 1)).astype(np.int64)
    return counts, code.size


def discrete_time_te_binary(x_bits, y_bits, k: int, l: int) -> DiscreteTEResult:
    """Plug-in binned transfer entropy from binary sequences (nats per bin)."""
    if k + l > _KL_CAP:
        raise ValidationError("k", f"k + l exceeds {_KL_CAP}")
    counts, n_pred = _context_counts(np.asarray(x_bits, np.uint8),
                                     np.asarray(y_bits, np.uint8), k, l)
    return _te_from_counts(counts, n_pred, k, l)


def _te_from_counts(counts, n_pred, k, l) -> DiscreteTEResult:
    table = counts.reshape(1 << l, 1 << k, 2).astype(float)
    ctx_tot = table.sum(axis=2)                  # (y-ctx, x-ctx)
    marg = table.sum(axis=0)                     # (x-ctx, next-x)
    marg_tot = marg.sum(axis=1)                  # (x-ctx,)

    with np.errstate(divide="ignore", invalid="ignore"):
        p_joint = table / np.where(ctx_tot[..., None] > 0, ctx_tot[..., None], 1)
        p_marg = marg / np.where(marg_tot[:, None] > 0, marg_tot[:, None], 1)
        ratio = np.where(table > 0, p_joint / p_marg[None, :, :], 1.0)
        te = float(np.sum(np.where(table > 0,
                                   table * np.log(ratio), 0.0)) / n_pred)
    unseen = int(np.sum(ctx_tot == 0))
    return DiscreteTEResult(value=te, dt=math.nan, k=k, l=l,
                            n_bins=n_pred, unseen_contexts=unseen)


def discrete_time_te(record: JointSpikeRecord, cfg: DiscreteTEConfig,
                     interval=None) -> DiscreteTEResult:
    """Plug-in binned transfer entropy of a record (average nats per bin).

    Bins carry value 1 iff they contain at least one event.  The estimate
    conditions on the preceding ``k`` target and ``l`` source bins, assuming
    stationarity across the record.  ``unseen_contexts`` reports conditioning
    contexts never observed (their cells contribute nothing).
    """
    xb, yb = binarize_record(record, cfg.dt, interval)
    res = discrete_time_te_binary(xb, yb, cfg.k, cfg.l)
    return DiscreteTEResult(value=res.value, dt=cfg.dt, k=cfg.k, l=cfg.l,
                            n_bins=res.n_bins,
                            unseen_contexts=res.unseen_contexts)


def shuffle_surrogate_te(record: JointSpikeRecord, cfg: DiscreteTEConfig,
                         n_surrogates: int, seed: int = 0,
                         min_shift: Optional[float] = None, interval=None):
    """Binned transfer entropy under circular shifts of the source channel.

    Each surrogate circularly shifts the source bit sequence by at least
    ``min_shift`` seconds (default: 5% of the record), destroying any
    source-target alignment while preserving both marginals.  Returns an
    array of surrogate values in nats per bin.
    """
    xb, yb = binarize_record(record, cfg.dt, interval)
    n = yb.size
    lo = int((min_shift if min_shift is not None
              else 0.05 * record.duration) / cfg.dt)
    lo = max(lo, cfg.l + 1)
    if lo >= n - lo:
        raise ValidationError("min_shift", "record too short for shifts")
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    code_x, start = _x_code(xb, cfg.k, cfg.l)
    n_cells = 1 << (cfg.k + cfg.l + 1)
    out = np.empty(n_surrogates)
    for i in range(n_surrogates):
        shift = int(rng.integers(lo, n - lo))
        code = _add_y_code(code_x, np.roll(yb, shift), cfg.k, cfg.l, start)
        counts = np.bincount(code, minlength=n_cells).astype(np.int64)
        out[i] = _te_from_counts(counts, code.size, cfg.k, cfg.l).value
    return out


def discrete_rate_convergence(record: JointSpikeRecord, dt_list,
                              k_of_dt: Callable[[float], int],
                              l_of_dt: Callable[[float], int],
                              interval=None):
    """Tabulate binned transfer entropy against bin width.

    For each ``dt`` (decreasing) the row holds ``(dt, value in nats per bin,
    value / dt in nats per second)``.  Convergence of the third column toward
    the continuous-time estimate is reported, not enforced.
    """
    dts = list(dt_list)
    if any(b >= a for a, b in zip(dts[:-1], dts[1:])) and len(dts) > 1:
        if not all(b < a for a, b in zip(dts[:-1], dts[1:])):
            raise ValidationError("dt_list", "must be strictly decreasing")
    rows = []
    for dt in dts:
        cfg = DiscreteTEConfig(dt=dt, k=int(k_of_dt(dt)), l=int(l_of_dt(dt)))
        res = discrete_time_te(record, cfg, interval)
        rows.append((dt, res.value, res.value / dt))
    return rows
