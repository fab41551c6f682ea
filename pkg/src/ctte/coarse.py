"""Source-marginalized (coarse-grained) target rates.

Given a joint model in which the source is an autonomous Poisson process and
the target rate depends on the source only within a finite horizon, the
source-marginalized rate at time ``t`` given the target's recent history is
a ratio of two path expectations over unseen source paths.  This module
estimates that ratio two independent ways:

* :func:`mc_coarse_rate` implements a truncated-series Monte Carlo scheme:
  for each source spike count ``n`` it places ``n`` sorted uniform spikes on
  a doubled window before ``t``, weights each sample by the phase-space
  volume ``(t - t0)^n / n!`` of ordered configurations, and averages the
  source path density times the target path density given that source path;
  the ratio of the rate-weighted and unweighted sums estimates the marginal
  rate.  The spike-count series is truncated adaptively.

* :class:`FilterCoarseRate` runs a discretized posterior filter over the
  time since the last source spike (a one-dimensional hidden state for such
  models), which conditions on the target's entire history.  It serves as
  an independent oracle for the Monte Carlo scheme and as a fast exact
  coarse evaluator for long path computations.

An interpolation cache (:func:`interpolation_table`,
:func:`coarse_rate_along_train`) reuses Monte Carlo evaluations across a
spike train by gridding histories, exploiting the fact that between window
entry/exit times the in-window spike pattern moves rigidly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .core import ConditionalIntensity, HistoryWindows, JointSpikeRecord, SpikeTrain
from .errors import InsufficientSamplesError, ValidationError
from .models import GaussianModelParams, GaussianTargetIntensity
from . import pathmeasure

__all__ = [
    "MonteCarloConfig",
    "CoarseRateEstimate",
    "phase_space_volume",
    "MarginalizableModel",
    "GaussianCoarseModel",
    "mc_coarse_rate",
    "CoarseRateTable",
    "interpolation_table",
    "coarse_rate_along_train",
    "FilterCoarseRate",
    "filter_oracle_rate",
]


@dataclass(frozen=True)
class MonteCarloConfig:
    """Numerical parameters of the Monte Carlo marginalization scheme.

    ``k_max``: hard cap on the source spike count per window.
    ``tol_k``: relative tail tolerance for adaptive series truncation.
    ``n_samples``: Monte Carlo samples per spike count.
    ``dt_int``: reporting grid for rates along a train (inner integrals use
    breakpoint-aware quadrature or exact compensators, not Riemann sums).
    ``dtau_interp``: spacing of the interpolation grids.
    ``n_x_precompute``: largest in-window spike count covered by the global
    precomputed table (at most 2; denser histories use per-interval tables).
    """

    k_max: int = 12
    tol_k: float = 1e-4
    n_samples: int = 1000
    dt_int: float = 1e-3
    dtau_interp: float = 0.05
    n_x_precompute: int = 2
    seed: int = 0

    def __post_init__(self):
        if self.k_max < 0:
            raise ValidationError("k_max", "must be >= 0")
        if self.n_samples < 1:
            raise ValidationError("n_samples", "must be >= 1")
        if not (self.dt_int > 0):
            raise ValidationError("dt_int", "must be > 0")
        if self.dtau_interp < self.dt_int:
            raise ValidationError("dtau_interp", "must be >= dt_int")
        if not (0 <= self.n_x_precompute <= 2):
            raise ValidationError("n_x_precompute", "supported range is 0..2")
        if not (self.tol_k > 0):
            raise ValidationError("tol_k", "must be > 0")


@dataclass(frozen=True)
class CoarseRateEstimate:
    """Monte Carlo estimate of a marginal rate with truncation diagnostics.

    ``terms_used`` counts the spike-count terms included; ``tail_bound`` is
    the relative magnitude of the last included term (>= ``tol_k`` signals
    that the hard cap was reached before the tail tolerance).
    """

    value: float
    stderr: float
    terms_used: int
    tail_bound: float

    def __post_init__(self):
        if self.value < 0 or self.stderr < 0:
            raise ValidationError("value", "estimate and stderr must be >= 0")


def phase_space_volume(n: int, t0: float, t: float) -> float:
    """Volume ``(t - t0)^n / n!`` of ordered n-event configurations on [t0, t)."""
    if n < 0:
        raise ValidationError("n", "must be >= 0")
    if t < t0:
        raise ValidationError("t", "must be >= t0")
    return (t - t0) ** n / math.factorial(n)


class MarginalizableModel:
    """A joint model whose source can be marginalized by the scheme above.

    Requirements: the source is homogeneous Poisson with rate
    ``source_rate`` and independent of the target; the target rate is
    time-homogeneous, has no own-history dependence beyond the supplied
    window, and depends on the source only within ``dependence_horizon``.
    """

    def __init__(self, joint_intensity: ConditionalIntensity,
                 source_rate: float, dependence_horizon: float):
        if source_rate < 0:
            raise ValidationError("source_rate", "must be >= 0")
        if not (dependence_horizon > 0):
            raise ValidationError("dependence_horizon", "must be > 0")
        self.joint_intensity = joint_intensity
        self.source_rate = float(source_rate)
        self.dependence_horizon = float(dependence_horizon)

    @property
    def source_window(self) -> float:
        """Length of the sampled source window: doubled so that every rate
        evaluation inside the target window sees a full source horizon."""
        return 2.0 * self.dependence_horizon

    def log_source_density(self, n: int) -> float:
        """Log density of an n-event source path on the sampled window."""
        lam = self.source_rate
        if lam == 0.0:
            return 0.0 if n == 0 else -math.inf
        return n * math.log(lam) - lam * self.source_window

    def target_logdensity_and_rate(self, x_local: np.ndarray,
                                   y_rows: np.ndarray):
        """Per-sample target path log-density and end-time rate.

        ``x_local`` holds target events positioned in ``[h, 2h)`` of the
        local window (h = dependence horizon, "now" = 2h); ``y_rows`` is an
        ``(n_samples, n_y)`` matrix of sorted source times in ``[0, 2h)``.
        The generic implementation loops over samples through the shared
        path-density machinery; models override with vectorized math.
        """
        W = self.source_window
        h = self.dependence_horizon
        n = y_rows.shape[0]
        logp = np.empty(n)
        lam_end = np.empty(n)
        windows = HistoryWindows(h, h)
        for i in range(n):
            record = JointSpikeRecord(
                x=SpikeTrain(0.0, W, x_local),
                y=SpikeTrain(0.0, W, y_rows[i]),
            )
            logp[i] = pathmeasure.log_path_density(
                self.joint_intensity, record, "x", interval=(W - h, W),
                windows=windows, conditioned_on_source=True, prior="empty",
            )
            yw = y_rows[i][y_rows[i] >= W - h]
            lam_end[i] = self.joint_intensity.rate(W, x_local, yw)
        return logp, lam_end


class GaussianCoarseModel(MarginalizableModel):
    """Marginalizable wrapper of the Gaussian-elevation model (vectorized)."""

    def __init__(self, params: GaussianModelParams):
        self.params = params
        super().__init__(GaussianTargetIntensity(params), params.lambda_y,
                         params.t_cut)

    def _rates_at(self, ts: np.ndarray, y_rows: np.ndarray) -> np.ndarray:
        """Rate at each time in ``ts`` for each sample row (shape (N, len(ts)))."""
        p = self.params
        N, ny = y_rows.shape
        out = np.full((N, ts.size), p.lambda_base)
        if ny == 0 or p.m == 0.0:
            return out
        c = 0.5 * p.t_cut
        intensity = self.joint_intensity
        for j, t in enumerate(ts):
            idx = np.sum(y_rows < t, axis=1)
            has = idx > 0
            u = np.where(has, t - y_rows[np.arange(N), np.maximum(idx - 1, 0)], np.inf)
            bump = p.m * np.exp(-((u - c) ** 2) / (2.0 * p.sigma**2)) - p.edge_offset
            out[:, j] = np.where((u > 0) & (u <= p.t_cut),
                                 p.lambda_base + bump, p.lambda_base)
        del intensity
        return out

    def target_logdensity_and_rate(self, x_local, y_rows):
        p = self.params
        W = self.source_window
        h = self.dependence_horizon
        N, ny = y_rows.shape
        intensity: GaussianTargetIntensity = self.joint_intensity

        # Integral of the rate over the target window [W - h, W) per sample:
        # base contribution plus the bump overlap of each source spike's
        # elevation span, truncated by the next source spike.
        integral = np.full(N, p.lambda_base * h)
        if ny and p.m != 0.0:
            G = intensity.bump_antiderivative
            for i in range(ny):
                yi = y_rows[:, i]
                nxt = y_rows[:, i + 1] if i + 1 < ny else np.full(N, W)
                lo = np.maximum(yi, W - h)
                hi = np.minimum(np.minimum(nxt, yi + h), W)
                u1 = np.clip(lo - yi, 0.0, h)
                u2 = np.clip(hi - yi, 0.0, h)
                add = np.where(u2 > u1, G(u2) - G(u1), 0.0)
                integral += add

        if x_local.size:
            rates = self._rates_at(np.asarray(x_local, dtype=float), y_rows)
            log_terms = np.sum(np.log(rates), axis=1)
        else:
            log_terms = np.zeros(N)

        lam_end = self._rates_at(np.array([W]), y_rows)[:, 0]
        return log_terms - integral, lam_end


def mc_coarse_rate(model: MarginalizableModel, target_history, t: float,
                   cfg: MonteCarloConfig) -> CoarseRateEstimate:
    """Monte Carlo estimate of the source-marginalized rate at time ``t``.

    ``target_history`` holds the target's event times before ``t``; only
    events within the dependence horizon enter (the scheme conditions on the
    windowed history, both its spikes and the absence of spikes elsewhere in
    the window).  The estimate is translation invariant and deterministic
    per ``cfg.seed``.
    """
    h = model.dependence_horizon
    W = model.source_window
    hist = np.asarray(target_history, dtype=float)
    ages = t - hist[(hist < t) & (hist >= t - h)]
    x_local = np.sort(W - ages)  # local window [0, W), "now" at W

    lam_rows = []
    logw_rows = []
    strata_sizes = []
    tail = math.inf
    terms = 0
    for n_y in range(cfg.k_max + 1):
        log_const = model.log_source_density(n_y)
        if math.isinf(log_const):
            rows = np.empty((0, n_y))
        elif n_y == 0:
            rows = np.zeros((1, 0))
        else:
            rng = np.random.Generator(
                np.random.Philox(np.random.SeedSequence(cfg.seed, spawn_key=(n_y,)))
            )
            rows = np.sort(rng.random((cfg.n_samples, n_y)) * W, axis=1)
        if rows.shape[0]:
            logp, lam = model.target_logdensity_and_rate(x_local, rows)
            n_eff = rows.shape[0]
            log_weight = (
                logp + log_const
                + n_y * math.log(W) - math.lgamma(n_y + 1)  # phase-space volume
                - math.log(n_eff)
            )
        else:
            log_weight = np.empty(0)
            lam = np.empty(0)
            n_eff = 0
        lam_rows.append(lam)
        logw_rows.append(log_weight)
        strata_sizes.append(max(n_eff, 1))
        terms = n_y + 1

        # Relative contribution of this term to numerator and denominator.
        all_logw = np.concatenate(logw_rows)
        if all_logw.size == 0 or np.all(np.isneginf(all_logw)):
            tail = 0.0 if n_y > 0 else math.inf
            if n_y > 0:
                break
            continue
        shift = np.max(all_logw)
        d_tot = u_tot = d_term = u_term = 0.0
        for lam_k, lw_k in zip(lam_rows, logw_rows):
            wk = np.exp(lw_k - shift)
            d_tot += wk.sum()
            u_tot += (lam_k * wk).sum()
        wk = np.exp(log_weight - shift) if log_weight.size else np.zeros(0)
        d_term = wk.sum()
        u_term = (lam * wk).sum() if lam.size else 0.0
        tail = max(d_term / d_tot if d_tot > 0 else math.inf,
                   u_term / u_tot if u_tot > 0 else 0.0)
        if n_y >= 1 and tail < cfg.tol_k:
            break

    all_logw = np.concatenate(logw_rows)
    if all_logw.size == 0 or np.all(np.isneginf(all_logw)):
        raise InsufficientSamplesError("all sampled source paths have zero weight")
    shift = float(np.max(all_logw))
    denom = numer = 0.0
    per_stratum = []
    for lam_k, lw_k, n_k in zip(lam_rows, logw_rows, strata_sizes):
        wk = np.exp(lw_k - shift)
        ak = lam_k * wk
        denom += wk.sum()
        numer += ak.sum()
        per_stratum.append((ak, wk, n_k))
    if denom <= 0.0 or not math.isfinite(denom):
        raise InsufficientSamplesError("denominator indistinguishable from zero")
    value = numer / denom

    # Stratified delta-method standard error of the ratio estimator.
    var = 0.0
    for ak, wk, n_k in per_stratum:
        if n_k < 2 or ak.size < 2:
            continue
        e = ak - value * wk
        var += n_k * np.var(e, ddof=1)
    stderr = math.sqrt(max(var, 0.0)) / denom
    return CoarseRateEstimate(value=float(value), stderr=float(stderr),
                              terms_used=terms, tail_bound=float(tail))


# ---------------------------------------------------------------------------
# Interpolation cache
# ---------------------------------------------------------------------------


class CoarseRateTable:
    """Precomputed marginal rates on gridded in-window spike histories.

    Histories are keyed by the ages ``t - t_i`` of in-window spikes; the
    model's time homogeneity makes entries position independent.  Queries
    interpolate multilinearly and are exact at grid nodes.
    """

    def __init__(self, model, cfg: MonteCarloConfig):
        self.model = model
        self.cfg = cfg
        h = model.dependence_horizon
        ages = [cfg.dt_int]
        a = h
        while a > cfg.dt_int * (1 + 1e-9):
            ages.append(a)
            a -= cfg.dtau_interp
        self.ages = np.unique(np.asarray(ages))
        self.empty = mc_coarse_rate(model, np.empty(0), 0.0, cfg).value
        self.single = None
        self.pair = None
        if cfg.n_x_precompute >= 1:
            self.single = np.array([
                mc_coarse_rate(model, np.array([-age]), 0.0, cfg).value
                for age in self.ages
            ])
        if cfg.n_x_precompute >= 2:
            n = self.ages.size
            pair = np.empty((n, n))
            for i in range(n):
                for j in range(i, n):
                    # ages[i] <= ages[j]: most recent spike first.
                    est = mc_coarse_rate(
                        self.model,
                        np.array(sorted([-self.ages[j], -self.ages[i]])),
                        0.0, self.cfg,
                    )
                    pair[i, j] = pair[j, i] = est.value
            self.pair = pair

    def covers(self, n_spikes: int) -> bool:
        return n_spikes <= self.cfg.n_x_precompute

    def query(self, ages: Sequence[float]) -> float:
        ages = np.sort(np.asarray(ages, dtype=float))
        if ages.size == 0:
            return self.empty
        if ages.size == 1:
            return float(np.interp(ages[0], self.ages, self.single))
        if ages.size == 2 and self.pair is not None:
            return self._bilinear(ages[0], ages[1])
        raise ValidationError("ages", f"table covers at most "
                                      f"{self.cfg.n_x_precompute} spikes")

    def _bilinear(self, a1, a2) -> float:
        g = self.ages
        i = np.clip(np.searchsorted(g, a1) - 1, 0, g.size - 2)
        j = np.clip(np.searchsorted(g, a2) - 1, 0, g.size - 2)
        x = np.clip((a1 - g[i]) / (g[i + 1] - g[i]), 0.0, 1.0)
        y = np.clip((a2 - g[j]) / (g[j + 1] - g[j]), 0.0, 1.0)
        v = self.pair
        return float(
            v[i, j] * (1 - x) * (1 - y) + v[i + 1, j] * x * (1 - y)
            + v[i, j + 1] * (1 - x) * y + v[i + 1, j + 1] * x * y
        )


def interpolation_table(model, cfg: MonteCarloConfig) -> CoarseRateTable:
    """Precompute the global coarse-rate table for histories of up to
    ``cfg.n_x_precompute`` in-window spikes."""
    return CoarseRateTable(model, cfg)


def coarse_rate_along_train(model, train: SpikeTrain, cfg: MonteCarloConfig,
                            table: Optional[CoarseRateTable] = None):
    """Marginal rate along a whole target train at ``cfg.dt_int`` resolution.

    Time is partitioned at spike times and spike-time + horizon (where the
    in-window spike pattern changes); sparse histories use the global table,
    denser ones a per-interval one-dimensional grid in the age of the most
    recent spike (the in-window pattern moves rigidly inside an interval).
    Returns ``(times, rates)`` arrays covering ``[start_time, end_time)``.
    """
    h = model.dependence_horizon
    if table is None:
        table = interpolation_table(model, cfg)
    ev = train.events
    bounds = {train.start_time, train.end_time}
    for e in ev:
        bounds.add(float(e))
        if e + h < train.end_time:
            bounds.add(float(e + h))
    ordered = sorted(bounds)

    ts = np.arange(train.start_time, train.end_time, cfg.dt_int)
    rates = np.empty_like(ts)
    for a, b in zip(ordered[:-1], ordered[1:]):
        sel = (ts >= a) & (ts < b)
        if not np.any(sel):
            continue
        t_mid = 0.5 * (a + b)
        i0 = int(np.searchsorted(ev, t_mid - h, side="left"))
        i1 = int(np.searchsorted(ev, t_mid, side="left"))
        in_win = ev[i0:i1]
        tt = ts[sel]
        if table.covers(in_win.size):
            if in_win.size == 0:
                rates[sel] = table.empty
            elif in_win.size == 1:
                rates[sel] = np.interp(tt - in_win[0], table.ages, table.single)
            else:
                rates[sel] = [table.query(t_q - in_win) for t_q in tt]
        else:
            # Rigid pattern: one-dimensional in the most recent spike's age.
            last = in_win[-1]
            z_lo = a - last
            z_hi = b - last
            n_nodes = max(2, int(math.ceil((z_hi - z_lo) / cfg.dtau_interp)) + 1)
            zs = np.linspace(z_lo, z_hi, n_nodes)
            vals = np.array([
                mc_coarse_rate(model, in_win, last + z, cfg).value for z in zs
            ])
            rates[sel] = np.interp(tt - last, zs, vals)
    return ts, rates


class SampledCoarseRate(ConditionalIntensity):
    """Piecewise-linear rate evaluator over precomputed ``(t, rate)`` samples.

    Used to carry a marginal-rate curve (for example the output of
    :func:`coarse_rate_along_train`) into the path-measure machinery: rates
    interpolate linearly and the compensator integrates the interpolant
    exactly.  History arguments are ignored; the curve already encodes the
    conditioning along its record.
    """

    def __init__(self, ts, values, end_time: Optional[float] = None):
        ts = np.asarray(ts, dtype=float)
        values = np.asarray(values, dtype=float)
        if ts.size < 1 or ts.size != values.size:
            raise ValidationError("ts", "need equally many sample times and values")
        if np.any(np.diff(ts) <= 0):
            raise ValidationError("ts", "sample times must be strictly increasing")
        if end_time is not None and end_time > ts[-1]:
            ts = np.append(ts, end_time)
            values = np.append(values, values[-1])
        self.ts = ts
        self.values = values
        mids = 0.5 * (values[1:] + values[:-1])
        self._cum = np.concatenate(([0.0], np.cumsum(mids * np.diff(ts))))

    def rate(self, t, target_history=None, source_history=None):
        return float(np.interp(t, self.ts, self.values))

    def rate_profile(self, ts, target_history=None, source_history=None):
        return np.interp(np.asarray(ts, dtype=float), self.ts, self.values)

    def _cum_at(self, t: float) -> float:
        if t <= self.ts[0]:
            return self.values[0] * (t - self.ts[0])
        if t >= self.ts[-1]:
            return self._cum[-1] + self.values[-1] * (t - self.ts[-1])
        i = int(np.searchsorted(self.ts, t, side="right") - 1)
        v_t = np.interp(t, self.ts, self.values)
        return float(self._cum[i]
                     + 0.5 * (self.values[i] + v_t) * (t - self.ts[i]))

    def compensator(self, t0, t1, target_history=None, source_history=None):
        return self._cum_at(t1) - self._cum_at(t0)


# ---------------------------------------------------------------------------
# Posterior filter (independent oracle, and exact coarse evaluator)
# ---------------------------------------------------------------------------


class _FilterEngine:
    """Lattice transition operator for the time-since-source-spike posterior.

    The hidden state is the age ``u`` of the last source spike, discretized
    into ``K`` bins of width ``du`` on ``[0, horizon]`` plus one lumped
    "quiet" state (``u > horizon``, where the target rate is the base rate).
    One lattice step of length ``du`` applies half-step survival weighting
    ``exp(-lam(u) du / 2)``, deterministic aging by one bin, a reset to age
    zero at the source rate, and the second survival half-step.
    """

    def __init__(self, params: GaussianModelParams, grid_du: float):
        if grid_du > params.sigma / 5.0 + 1e-12:
            raise ValidationError("grid_du", "must be <= sigma / 5")
        intensity = GaussianTargetIntensity(params)
        K = int(math.ceil(params.t_cut / grid_du - 1e-9))
        self.du = params.t_cut / K
        self.K = K
        self.M = K + 1  # + quiet state
        edges = np.linspace(0.0, params.t_cut, K + 1)
        G = intensity.bump_antiderivative
        lam = params.lambda_base + (G(edges[1:]) - G(edges[:-1])) / self.du
        self.lam = np.append(lam, params.lambda_base)  # bin-averaged rates
        self.lambda_y = params.lambda_y

        self._half = np.exp(-self.lam * self.du / 2.0)
        self._reset_p = -math.expm1(-self.lambda_y * self.du)
        self.T = self._build_step_matrix()
        self._powers = [self.T]
        self._power_logs = [0.0]

    def _apply_step(self, w: np.ndarray) -> np.ndarray:
        w = w * self._half
        shifted = np.empty_like(w)
        shifted[0] = 0.0
        shifted[1:self.K] = w[:self.K - 1]
        shifted[self.K] = w[self.K] + w[self.K - 1]
        total = shifted.sum()
        shifted *= (1.0 - self._reset_p)
        shifted[0] += self._reset_p * total
        return shifted * self._half

    def _build_step_matrix(self) -> np.ndarray:
        cols = [self._apply_step(col) for col in np.eye(self.M)]
        return np.array(cols).T

    def partial(self, w: np.ndarray, h: float) -> np.ndarray:
        """Survival and reset over a fraction ``h < du`` of a step (no aging;
        sub-bin aging is below the lattice resolution)."""
        w = w * np.exp(-self.lam * h)
        p = -math.expm1(-self.lambda_y * h)
        total = w.sum()
        w = w * (1.0 - p)
        w[0] += p * total
        return w

    def power(self, j: int):
        while j >= len(self._powers):
            prev = self._powers[-1]
            nxt = prev @ prev
            scale = float(nxt.max())
            self._powers.append(nxt / scale)
            self._power_logs.append(2.0 * self._power_logs[-1] + math.log(scale))
        return self._powers[j], self._power_logs[j]


class FilterCoarseRate(ConditionalIntensity):
    """Exact-in-scheme marginal rate along one fixed target event sequence.

    Built for a specific record, the filter conditions on all target events
    from the record start (quiet prior: no spikes assumed before it).  The
    in-scheme rate is a step function changing at lattice times and at
    target events; its integral is served exactly, making results
    independent of how callers partition their queries.

    The object offers two interfaces: the sweep protocol used by the
    path-measure machinery (``sweep_start`` / ``sweep_integral`` /
    ``sweep_rate`` / ``sweep_event``) and the generic stateless
    :meth:`rate`, which replays the sweep internally on every call (slow;
    intended for probes).  The ``target_history`` argument of :meth:`rate`
    is ignored: the conditioning events are the ones baked in.
    """

    def __init__(self, params: GaussianModelParams, x_events, start_time: float,
                 end_time: float, grid_du: float = 0.005):
        self.params = params
        self.engine = _FilterEngine(params, grid_du)
        self.x_events = np.asarray(x_events, dtype=float)
        self.start_time = float(start_time)
        self.end_time = float(end_time)
        self._w = None

    # -- sweep protocol ----------------------------------------------------

    def sweep_start(self, t0: float) -> None:
        eng = self.engine
        w = np.zeros(eng.M)
        w[eng.K] = 1.0  # quiet prior: no source spike within the horizon
        self._w = w
        self._n = 0          # completed lattice steps since start_time
        self._pos = self.start_time
        self._cum = 0.0
        self._ev_idx = 0
        self._step_cost = None
        self._advance(t0)   # applies conditioning events strictly before t0
        self._cum = 0.0

    def sweep_rate(self) -> float:
        eng = self.engine
        total = self._w.sum()
        return float(np.dot(eng.lam, self._w) / total)

    def sweep_integral(self, t1: float) -> float:
        before = self._cum
        self._advance(t1)
        return self._cum - before

    def sweep_event(self, t: float) -> None:
        """Apply the conditioning update for the target event at ``t``.

        The cursor must sit at ``t`` (so rate queries just before this call
        see the left limit).  An event the caller never announces is applied
        automatically as soon as the cursor moves past it.
        """
        if abs(t - self._pos) > 1e-9 + 1e-12 * abs(t):
            raise ValidationError("t", "sweep_event requires the cursor at t")
        if self._ev_idx < self.x_events.size and \
                self.x_events[self._ev_idx] <= self._pos:
            self._apply_event()
            self._ev_idx += 1

    # -- internals ----------------------------------------------------------

    def _lattice_time(self, n: int) -> float:
        return self.start_time + n * self.engine.du

    def _current_step_cost(self) -> float:
        if self._step_cost is None:
            w2 = self.engine.T @ self._w
            self._step_cost = -math.log(w2.sum() / self._w.sum())
            self._next_w = w2
        return self._step_cost

    def _apply_event(self) -> None:
        self._w = self._w * self.engine.lam
        s = self._w.sum()
        if s <= 0.0:
            raise InsufficientSamplesError("posterior mass vanished")
        self._w /= s
        self._step_cost = None

    def _advance(self, t_target: float) -> None:
        """Move the cursor to ``t_target``, applying conditioning events that
        lie strictly before it; an event exactly at the target stays pending
        (for the left-limit rate query and the sweep_event call)."""
        events = self.x_events
        while (self._ev_idx < events.size
               and events[self._ev_idx] < t_target):
            ev = float(events[self._ev_idx])
            self._advance_no_events(ev)
            self._apply_event()
            self._ev_idx += 1
        self._advance_no_events(t_target)

    def _advance_no_events(self, t_stop: float) -> None:
        eng = self.engine
        du = eng.du
        if t_stop <= self._pos:
            return
        # Finish the current partial bin, if the stop lies beyond it.
        bin_end = self._lattice_time(self._n + 1)
        if self._pos > self._lattice_time(self._n):
            cost = self._current_step_cost()
            if t_stop < bin_end:
                self._cum += cost * (t_stop - self._pos) / du
                self._pos = t_stop
                return
            self._cum += cost * (bin_end - self._pos) / du
            w2 = self._next_w
            self._w = w2 / w2.sum()
            self._n += 1
            self._pos = bin_end
            self._step_cost = None
        # Whole lattice steps via binary powers.
        n_stop = int(math.floor((t_stop - self.start_time) / du))
        m = max(0, n_stop - self._n)
        j = 0
        while m > 0:
            if m & 1:
                P, logscale = eng.power(j)
                w2 = P @ self._w
                s = w2.sum()
                self._cum += -(math.log(s) + logscale)
                self._w = w2 / s
                self._n += 1 << j
            m >>= 1
            j += 1
        self._pos = self._lattice_time(self._n)
        self._step_cost = None
        # Partial entry into the final bin.
        if t_stop > self._pos:
            cost = self._current_step_cost()
            self._cum += cost * (t_stop - self._pos) / du
            self._pos = t_stop

    # -- stateless interface -------------------------------------------------

    def rate(self, t, target_history=None, source_history=None):
        self.sweep_start(float(t))
        return self.sweep_rate()

    def compensator(self, t0, t1, target_history, source_history=None):
        # pathwise machinery uses the sweep protocol instead; the stateless
        # compensator replays the sweep for standalone use.
        self.sweep_start(float(t0))
        return self.sweep_integral(float(t1))


def filter_oracle_rate(params: GaussianModelParams, target_history, t: float,
                       grid_du: float = 0.005, *,
                       history_start: float = 0.0) -> float:
    """Marginal target rate at ``t`` by posterior filtering.

    Conditions on the full supplied target event history from
    ``history_start`` (with a quiet prior there: no spikes in either channel
    before it) and returns the posterior mean of the source-conditioned
    rate.  Serves as the independent oracle for :func:`mc_coarse_rate`.
    """
    events = np.asarray(target_history, dtype=float)
    events = events[(events >= history_start) & (events < t)]
    flt = FilterCoarseRate(params, events, history_start, t, grid_du)
    return flt.rate(t)
