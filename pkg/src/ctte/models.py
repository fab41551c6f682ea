"""Concrete conditional-intensity models and their closed-form results.

Two model families are provided:

* A refractory pulse-response neuron pair: the source spikes at a constant
  rate outside its own refractory period; the target may spike (once, with
  total probability ``a``) inside an elevated-rate window of length ``tau``
  that follows each source spike.  Its source-marginalized rate and leading
  order transfer entropy rate have closed forms.

* A Gaussian-elevation hybrid: the target runs at a base rate, elevated by
  a truncated Gaussian bump of the time since the last source spike; the
  source is homogeneous Poisson.  The source-marginalized rate for this
  model has no closed form and is estimated by the :mod:`ctte.coarse`
  machinery.

All evaluators implement the :class:`ctte.core.ConditionalIntensity`
contract, are immutable and safe for unrestricted parallel evaluation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np
from scipy.special import erf as _erf

from .core import ConditionalIntensity
from .errors import ValidationError

__all__ = [
    "RefractoryModelParams",
    "GaussianModelParams",
    "refractory_joint_rates",
    "refractory_coarse_rate",
    "coarse_rate_history_valid",
    "refractory_te_rate_closed_form",
    "ClosedFormRate",
    "gaussian_target_rate",
    "rate_breakpoints",
    "rate_upper_bound",
    "ConstantIntensity",
    "RefractoryTargetIntensity",
    "RefractorySourceIntensity",
    "RefractoryCoarseIntensity",
    "GaussianTargetIntensity",
]

_SQRT2 = math.sqrt(2.0)
_SQRT_HALF_PI = math.sqrt(math.pi / 2.0)


@dataclass(frozen=True)
class RefractoryModelParams:
    """Parameters of the refractory pulse-response model.

    ``lambda_y``: source base rate (events/s).
    ``a``: probability in (0, 1) that the target spikes within the window.
    ``tau``: elevated-rate window length (s).
    ``tau_r``: refractory period (s), required >= ``tau`` so the target can
    spike at most once per window.
    """

    lambda_y: float
    a: float
    tau: float
    tau_r: float

    def __post_init__(self):
        if not (0.0 < self.a < 1.0):
            raise ValidationError("a", "must lie strictly in (0, 1)")
        if not (self.tau > 0.0):
            raise ValidationError("tau", "must be > 0")
        if not (self.tau_r >= self.tau):
            raise ValidationError("tau_r", "refractory period must be >= tau")
        if not (self.lambda_y >= 0.0) or not math.isfinite(self.lambda_y):
            raise ValidationError("lambda_y", "must be finite and >= 0")

    @property
    def elevated_rate(self) -> float:
        # -ln(1-a)/tau via log1p for accuracy as a -> 0.
        return -math.log1p(-self.a) / self.tau


@dataclass(frozen=True)
class GaussianModelParams:
    """Parameters of the Gaussian-elevation model.

    The target rate is ``lambda_base`` except within ``t_cut`` seconds of the
    last source spike, where a Gaussian bump of peak scale ``m`` and width
    ``sigma`` (centered at ``t_cut/2`` and shifted so the rate is continuous
    at the window edges) is added.  The source is Poisson with rate
    ``lambda_y``.  ``m = 0`` and ``lambda_y = 0`` are admitted as degenerate
    null cases used for testing.
    """

    lambda_base: float = 0.5
    m: float = 5.0
    sigma: float = 0.1
    t_cut: float = 1.0
    lambda_y: float = 1.0

    def __post_init__(self):
        for name in ("lambda_base", "sigma", "t_cut"):
            if not (getattr(self, name) > 0.0):
                raise ValidationError(name, "must be > 0")
        for name in ("m", "lambda_y"):
            if not (getattr(self, name) >= 0.0):
                raise ValidationError(name, "must be >= 0")

    @property
    def edge_offset(self) -> float:
        """The constant subtracted so the bump vanishes at the window edges."""
        c = 0.5 * self.t_cut
        return self.m * math.exp(-c * c / (2.0 * self.sigma**2))


class ClosedFormRate(NamedTuple):
    """Leading-order transfer entropy rate of the refractory model.

    ``normalized`` is the rate divided by the limiting mean target spike rate
    ``a*lambda_y``; ``regime_ok`` is False when the parameters leave the
    asymptotic regime (the log turns negative there, which the formula still
    reports faithfully).
    """

    rate: float
    normalized: float
    regime_ok: bool


def refractory_joint_rates(
    params: RefractoryModelParams,
    t: float,
    last_x: Optional[float] = None,
    last_y: Optional[float] = None,
):
    """Joint conditional rates ``(lambda_x_given_y, lambda_y_given_x)``.

    ``last_x`` / ``last_y`` are the most recent spike times before ``t``;
    None means no spike in the relevant past.  The target may spike only in
    the window ``(last_y, last_y + tau]``, at most once per window
    (``last_x <= last_y``), and outside its own refractory period
    (``t > last_x + tau_r``).  The source is blocked only by its own
    refractory period.
    """
    lam_y_given_x = params.lambda_y
    if last_y is not None and t <= last_y + params.tau_r:
        lam_y_given_x = 0.0

    lam_x_given_y = 0.0
    if last_y is not None and last_y < t <= last_y + params.tau:
        if last_x is None or (last_x <= last_y and t > last_x + params.tau_r):
            lam_x_given_y = params.elevated_rate
    return lam_x_given_y, lam_y_given_x


def refractory_coarse_rate(params: RefractoryModelParams, dt_since_last_x=None) -> float:
    """Source-marginalized target rate as a function of the last own spike.

    Three branches: zero during the refractory period, a saturating rise on
    ``[tau_r, tau_r + tau)``, and the plateau ``a*lambda_y`` beyond.  With no
    prior spike the plateau value applies (continuity of the marginal rate).
    The expression is the leading order in ``lambda_y``; it assumes the gap
    between the two most recent spikes exceeds ``tau_r + tau`` (see
    :func:`coarse_rate_history_valid`).
    """
    if dt_since_last_x is None:
        return params.a * params.lambda_y
    dt = float(dt_since_last_x)
    if dt < 0:
        raise ValidationError("dt_since_last_x", "must be >= 0")
    if dt < params.tau_r:
        return 0.0
    if dt < params.tau_r + params.tau:
        frac = (dt - params.tau_r) / params.tau
        return -math.expm1(frac * math.log1p(-params.a)) * params.lambda_y
    return params.a * params.lambda_y


def coarse_rate_history_valid(params: RefractoryModelParams, target_history) -> bool:
    """True when the most-recent-spike approximation is trustworthy.

    The closed-form marginal rate treats only the latest own spike; it is
    accurate when the gap between the two most recent spikes in the supplied
    history exceeds ``tau_r + tau``.
    """
    hist = np.asarray(target_history, dtype=float)
    if hist.size < 2:
        return True
    return bool(hist[-1] - hist[-2] >= params.tau_r + params.tau)


def refractory_te_rate_closed_form(params: RefractoryModelParams) -> ClosedFormRate:
    """Leading-order transfer entropy rate ``a*lambda_y * ln[lam_e/(a lambda_y tau)]``.

    Also returns the value normalized by the limiting mean target spike rate
    ``a*lambda_y``, which depends on ``(a, lambda_y*tau)`` only.
    """
    lam_e = params.elevated_rate
    mean_rate = params.a * params.lambda_y
    if mean_rate == 0.0:
        return ClosedFormRate(0.0, math.inf, True)
    # -ln(1-a) / (a lambda_y tau)  ==  lam_e / (a lambda_y)
    normalized = math.log(lam_e / mean_rate)
    return ClosedFormRate(mean_rate * normalized, normalized, normalized >= 0.0)


def gaussian_target_rate(params: GaussianModelParams, t_y1=None) -> float:
    """Target rate of the Gaussian-elevation model given the time since the
    last source spike (None: no source spike within the dependence horizon)."""
    if t_y1 is None:
        return params.lambda_base
    u = float(t_y1)
    if u < 0:
        raise ValidationError("t_y1", "must be >= 0")
    if not (0.0 < u <= params.t_cut):
        return params.lambda_base
    c = 0.5 * params.t_cut
    bump = params.m * math.exp(-((u - c) ** 2) / (2.0 * params.sigma**2))
    return params.lambda_base + bump - params.edge_offset


def rate_breakpoints(model: ConditionalIntensity, t, target_history,
                     source_history, horizon):
    """Non-smooth times of ``model``'s frozen-history rate on ``(t, horizon]``."""
    return model.breakpoints(t, target_history, source_history, horizon)


def rate_upper_bound(model: ConditionalIntensity):
    """Finite bound on the model rate over all histories, or None."""
    return model.rate_upper_bound()


def _last(events) -> Optional[float]:
    if events is None:
        return None
    if isinstance(events, np.ndarray):
        return float(events[-1]) if events.size else None
    return float(events[-1]) if len(events) else None


class ConstantIntensity(ConditionalIntensity):
    """History-independent rate; also the homogeneous Poisson intensity."""

    def __init__(self, rate: float):
        if not (rate >= 0.0) or not math.isfinite(rate):
            raise ValidationError("rate", "must be finite and >= 0")
        self._rate = float(rate)

    def rate(self, t, target_history, source_history=None):
        return self._rate

    def rate_profile(self, ts, target_history, source_history=None):
        return np.full(np.shape(ts), self._rate)

    def rate_upper_bound(self):
        return self._rate

    def compensator(self, t0, t1, target_history, source_history=None):
        return self._rate * (t1 - t0)


class RefractoryTargetIntensity(ConditionalIntensity):
    """Target-channel joint rate of the refractory model (needs both histories)."""

    def __init__(self, params: RefractoryModelParams):
        self.params = params

    def rate(self, t, target_history, source_history=None):
        lam_x, _ = refractory_joint_rates(
            self.params, t, _last(target_history), _last(source_history)
        )
        return lam_x

    def rate_profile(self, ts, target_history, source_history=None):
        ts = np.asarray(ts, dtype=float)
        lx = _last(target_history)
        ly = _last(source_history)
        p = self.params
        if ly is None:
            return np.zeros(ts.shape)
        ok = (ts > ly) & (ts <= ly + p.tau)
        if lx is not None:
            ok &= (lx <= ly) & (ts > lx + p.tau_r)
        return np.where(ok, p.elevated_rate, 0.0)

    def rate_upper_bound(self):
        return self.params.elevated_rate

    def breakpoints(self, t, target_history, source_history, horizon):
        p = self.params
        cands = []
        ly = _last(source_history)
        lx = _last(target_history)
        if ly is not None:
            cands.append(ly + p.tau)
        if lx is not None:
            cands.append(lx + p.tau_r)
        return tuple(sorted(c for c in set(cands) if t < c <= horizon))


class RefractorySourceIntensity(ConditionalIntensity):
    """Source-channel rate: constant outside the source's own refractory period."""

    def __init__(self, params: RefractoryModelParams):
        self.params = params

    def rate(self, t, target_history, source_history=None):
        last_own = _last(target_history)
        if last_own is not None and t <= last_own + self.params.tau_r:
            return 0.0
        return self.params.lambda_y

    def rate_profile(self, ts, target_history, source_history=None):
        ts = np.asarray(ts, dtype=float)
        last_own = _last(target_history)
        if last_own is None:
            return np.full(ts.shape, self.params.lambda_y)
        return np.where(ts > last_own + self.params.tau_r, self.params.lambda_y, 0.0)

    def rate_upper_bound(self):
        return self.params.lambda_y

    def breakpoints(self, t, target_history, source_history, horizon):
        last_own = _last(target_history)
        if last_own is None:
            return ()
        c = last_own + self.params.tau_r
        return (c,) if t < c <= horizon else ()


class RefractoryCoarseIntensity(ConditionalIntensity):
    """Source-marginalized target rate of the refractory model (closed form)."""

    def __init__(self, params: RefractoryModelParams):
        self.params = params

    def rate(self, t, target_history, source_history=None):
        last_own = _last(target_history)
        if last_own is None:
            return refractory_coarse_rate(self.params)
        return refractory_coarse_rate(self.params, t - last_own)

    def rate_profile(self, ts, target_history, source_history=None):
        ts = np.asarray(ts, dtype=float)
        p = self.params
        last_own = _last(target_history)
        plateau = p.a * p.lambda_y
        if last_own is None:
            return np.full(ts.shape, plateau)
        dt = ts - last_own
        frac = np.clip((dt - p.tau_r) / p.tau, 0.0, None)
        rising = -np.expm1(frac * math.log1p(-p.a)) * p.lambda_y
        out = np.where(dt < p.tau_r, 0.0, np.where(dt < p.tau_r + p.tau, rising, plateau))
        return out

    def rate_upper_bound(self):
        return self.params.a * self.params.lambda_y

    def breakpoints(self, t, target_history, source_history, horizon):
        last_own = _last(target_history)
        if last_own is None:
            return ()
        p = self.params
        cands = (last_own + p.tau_r, last_own + p.tau_r + p.tau)
        return tuple(c for c in cands if t < c <= horizon)


class GaussianTargetIntensity(ConditionalIntensity):
    """Target-channel joint rate of the Gaussian-elevation model.

    Depends only on the time since the last source spike; the target's own
    history is irrelevant.  The exact compensator (erf antiderivative of the
    bump) is provided so path integrals need no quadrature.
    """

    def __init__(self, params: GaussianModelParams):
        self.params = params

    def rate(self, t, target_history, source_history=None):
        ly = _last(source_history)
        return gaussian_target_rate(self.params, None if ly is None else t - ly)

    def rate_profile(self, ts, target_history, source_history=None):
        ts = np.asarray(ts, dtype=float)
        ly = _last(source_history)
        p = self.params
        if ly is None:
            return np.full(ts.shape, p.lambda_base)
        u = ts - ly
        c = 0.5 * p.t_cut
        bump = p.m * np.exp(-((u - c) ** 2) / (2.0 * p.sigma**2)) - p.edge_offset
        return np.where((u > 0) & (u <= p.t_cut), p.lambda_base + bump, p.lambda_base)

    def rate_upper_bound(self):
        return self.params.lambda_base + self.params.m

    def breakpoints(self, t, target_history, source_history, horizon):
        ly = _last(source_history)
        if ly is None:
            return ()
        c = ly + self.params.t_cut
        return (c,) if t < c <= horizon else ()

    def bump_antiderivative(self, u):
        """Antiderivative of the (edge-shifted) bump as a function of the
        time-since-source-spike coordinate ``u``; valid for u in [0, t_cut]."""
        p = self.params
        c = 0.5 * p.t_cut
        return (
            p.m * p.sigma * _SQRT_HALF_PI * _erf((u - c) / (p.sigma * _SQRT2))
            - p.edge_offset * u
        )

    def compensator(self, t0, t1, target_history, source_history=None):
        if t1 <= t0:
            return 0.0
        p = self.params
        ly = _last(source_history)
        total = p.lambda_base * (t1 - t0)
        if ly is None:
            return total
        lo = max(t0, ly)
        hi = min(t1, ly + p.t_cut)
        if hi > lo:
            total += float(
                self.bump_antiderivative(hi - ly) - self.bump_antiderivative(lo - ly)
            )
        return total
