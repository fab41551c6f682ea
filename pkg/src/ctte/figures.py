"""Figure data: the normalized rate surface and the annotated path decomposition.

Plotting is out of scope; these functions emit tidy in-memory bundles and
CSV files consumable by any plotting tool.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .coarse import (
    FilterCoarseRate,
    GaussianCoarseModel,
    MonteCarloConfig,
    SampledCoarseRate,
    coarse_rate_along_train,
)
from .core import HistoryWindows, JointSpikeRecord
from .errors import ValidationError
from .estimators import empirical_te_rate
from .models import (
    ConstantIntensity,
    GaussianModelParams,
    GaussianTargetIntensity,
    RefractoryCoarseIntensity,
    RefractoryModelParams,
    RefractorySourceIntensity,
    RefractoryTargetIntensity,
)
from .pathmeasure import cumulative_te_curve, pathwise_te
from .simulate import SimulationConfig, simulate_coupled

__all__ = [
    "Fig1Grid",
    "figure1_data",
    "Figure2Bundle",
    "figure2_data",
    "sign_coupling_violations",
    "write_figure1_csv",
    "write_figure2_csvs",
]

_SATURATION_A = 1.0 - 1e-9


@dataclass(frozen=True)
class Fig1Grid:
    """Normalized transfer entropy rate over an (a, lambda_y*tau) grid.

    ``rows`` holds ``(a, lambda_y*tau, normalized_value, saturated)`` where
    the normalized value is ``ln[-ln(1-a) / (a lambda_y tau)]`` (the rate
    divided by the limiting mean target spike rate); ``saturated`` flags
    ``a`` within 1e-9 of 1, where the value diverges.  ``sim_rows`` holds
    optional simulation overlays ``(a, lambda_y*tau, normalized, stderr)``.
    """

    a_values: tuple
    lambda_y_tau_values: tuple
    rows: tuple
    sim_rows: tuple = ()


def _normalized_closed_form(a: float, lam_tau: float) -> float:
    return math.log(-math.log1p(-a) / (a * lam_tau))


def figure1_data(a_values: Sequence[float], lambda_y_tau_values: Sequence[float],
                 *, tau: float = 1.0, tau_r: Optional[float] = None,
                 overlay_points: Optional[Sequence] = None,
                 overlay_duration: float = 2e5, seed: int = 0) -> Fig1Grid:
    """Closed-form normalized rate grid, optionally with simulation overlays.

    ``overlay_points`` lists ``(a, lambda_y*tau)`` pairs to estimate
    empirically: each simulates the refractory model (with ``tau`` and
    ``tau_r``, default ``tau_r = tau``) for ``overlay_duration`` seconds and
    applies the event-sum estimator with the model's closed-form rates.
    """
    rows = []
    for a in a_values:
        if not (0.0 < a < 1.0):
            raise ValidationError("a", "grid values must lie in (0, 1)")
        for lt in lambda_y_tau_values:
            if not (lt > 0.0):
                raise ValidationError("lambda_y_tau", "grid values must be > 0")
            rows.append((float(a), float(lt), _normalized_closed_form(a, lt),
                         a >= _SATURATION_A))

    sim_rows = []
    if overlay_points:
        t_r = tau if tau_r is None else tau_r
        for i, (a, lt) in enumerate(overlay_points):
            params = RefractoryModelParams(lambda_y=lt / tau, a=a, tau=tau,
                                           tau_r=t_r)
            record = simulate_coupled(
                RefractoryTargetIntensity(params),
                RefractorySourceIntensity(params),
                SimulationConfig(duration=overlay_duration,
                                 seed=seed + i),
            )
            est = empirical_te_rate(
                record,
                RefractoryTargetIntensity(params),
                RefractoryCoarseIntensity(params),
                HistoryWindows(),
            )
            mean_rate = params.a * params.lambda_y
            sim_rows.append((float(a), float(lt), est.value / mean_rate,
                             est.stderr / mean_rate))

    return Fig1Grid(
        a_values=tuple(float(a) for a in a_values),
        lambda_y_tau_values=tuple(float(v) for v in lambda_y_tau_values),
        rows=tuple(rows),
        sim_rows=tuple(sim_rows),
    )


@dataclass(frozen=True)
class Figure2Bundle:
    """One simulated realization with its full pathwise decomposition.

    All series share the grid ``ts`` and are sampled caglad (left limits):
    the joint and marginal rates, the cumulative pathwise transfer entropy
    and the non-spiking rate.  ``jumps`` holds one row
    ``(t_i, delta, nonspiking_rate_at_event)`` per target spike.
    """

    record: JointSpikeRecord
    ts: np.ndarray
    lam_joint: np.ndarray
    lam_coarse: np.ndarray
    te_curve: np.ndarray
    nonspiking: np.ndarray
    jumps: tuple
    total: float
    metadata: dict = field(default_factory=dict)


def figure2_data(seed: int, duration: float, params: GaussianModelParams,
                 mc_cfg: Optional[MonteCarloConfig] = None,
                 *, grid_step: float = 0.02, coarse_method: str = "mc",
                 grid_du: float = 0.005) -> Figure2Bundle:
    """Simulate the Gaussian-elevation model and decompose its pathwise
    transfer entropy.

    ``coarse_method`` selects the source-marginalized rate provider: ``"mc"``
    runs the Monte Carlo marginalization along the target train (the scheme
    the model was designed to exercise), ``"filter"`` the posterior filter.
    An empty prior (no spikes before time zero) is assumed throughout.
    Deterministic per seed.
    """
    joint = GaussianTargetIntensity(params)
    record = simulate_coupled(
        joint, ConstantIntensity(params.lambda_y),
        SimulationConfig(duration=duration, seed=seed),
    )

    if coarse_method == "mc":
        cfg = mc_cfg if mc_cfg is not None else MonteCarloConfig()
        model = GaussianCoarseModel(params)
        ts_c, vals_c = coarse_rate_along_train(model, record.x, cfg)
        coarse = SampledCoarseRate(ts_c, vals_c, end_time=duration)
    elif coarse_method == "filter":
        coarse = FilterCoarseRate(params, record.x.events, 0.0, duration,
                                  grid_du=grid_du)
    else:
        raise ValidationError("coarse_method", "must be 'mc' or 'filter'")

    ts = np.arange(0.0, duration + 0.5 * grid_step, grid_step)
    ts[-1] = min(ts[-1], duration)
    windows = HistoryWindows()
    result = pathwise_te(joint, coarse, record, windows=windows,
                         grid=ts, prior="empty")
    curve = np.array([v for _, v in cumulative_te_curve(result, ts)])
    sample_map = dict(result.nonspiking_samples)
    nonspiking = np.array([sample_map[t] for t in ts])

    lam_joint = np.empty(ts.size)
    lam_coarse = np.empty(ts.size)
    for i, t in enumerate(ts):
        nt = sample_map[t]
        xw = record.x.events[record.x.events < t]
        yw = record.y.events[record.y.events < t]
        lam_joint[i] = joint.rate(t, xw, yw)
        lam_coarse[i] = lam_joint[i] + nt

    jump_rows = []
    for (t_i, delta) in result.jump_contributions:
        xw = record.x.events[record.x.events < t_i]
        yw = record.y.events[record.y.events < t_i]
        lam_j = joint.rate(t_i, xw, yw)
        lam_c = lam_j * math.exp(-delta)
        jump_rows.append((t_i, delta, lam_c - lam_j))

    return Figure2Bundle(
        record=record,
        ts=ts,
        lam_joint=lam_joint,
        lam_coarse=lam_coarse,
        te_curve=curve,
        nonspiking=nonspiking,
        jumps=tuple(jump_rows),
        total=result.total,
        metadata={
            "seed": seed,
            "duration": duration,
            "coarse_method": coarse_method,
            "lambda_base": params.lambda_base,
            "m": params.m,
            "sigma": params.sigma,
            "t_cut": params.t_cut,
            "lambda_y": params.lambda_y,
        },
    )


def sign_coupling_violations(bundle: Figure2Bundle) -> int:
    """Count instants where a jump contribution and the contemporaneous
    non-spiking rate share a strict sign (they never should: a positive
    spike surprise implies the no-spike prediction was worse, and vice
    versa)."""
    bad = 0
    for _, delta, nt in bundle.jumps:
        if (delta > 0 and nt > 0) or (delta < 0 and nt < 0):
            bad += 1
    return bad


def _fmt(v) -> str:
    return f"{v:.9g}"


def write_figure1_csv(grid: Fig1Grid, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["a", "lambda_y_tau", "normalized_te_rate", "saturated",
                    "normalized_sim", "sim_stderr"])
        sim = {(a, lt): (v, s) for a, lt, v, s in grid.sim_rows}
        for a, lt, val, sat in grid.rows:
            extra = sim.get((a, lt))
            w.writerow([_fmt(a), _fmt(lt), _fmt(val), int(sat)]
                       + ([_fmt(extra[0]), _fmt(extra[1])] if extra else ["", ""]))
        for (a, lt), (v, s) in sim.items():
            if not any(abs(a - ra) < 1e-12 and abs(lt - rl) < 1e-12
                       for ra, rl, _, _ in grid.rows):
                w.writerow([_fmt(a), _fmt(lt), "", "", _fmt(v), _fmt(s)])


def write_figure2_csvs(bundle: Figure2Bundle, out_dir) -> None:
    """Write ``fig2_raster.csv``, ``fig2_rates.csv`` and ``fig2_te.csv``.

    The te file holds grid rows ``(t, te_cumulative, nonspiking_rate, "")``
    plus one row per target spike with the jump size in the last column
    (cumulative value there is the left limit).
    """
    raster = os.path.join(out_dir, "fig2_raster.csv")
    with open(raster, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["time", "channel"])
        from .core import merge_event_streams

        for t, tag in merge_event_streams(bundle.record):
            w.writerow([_fmt(t), tag])

    with open(os.path.join(out_dir, "fig2_rates.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "lambda_joint", "lambda_coarse"])
        for t, lj, lc in zip(bundle.ts, bundle.lam_joint, bundle.lam_coarse):
            w.writerow([_fmt(t), _fmt(lj), _fmt(lc)])

    rows = [(t, cum, nt, None)
            for t, cum, nt in zip(bundle.ts, bundle.te_curve, bundle.nonspiking)]
    for t_i, delta, nt in bundle.jumps:
        rows.append((t_i, None, nt, delta))
    rows.sort(key=lambda r: (r[0], r[3] is not None))
    with open(os.path.join(out_dir, "fig2_te.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "te_cumulative", "nonspiking_rate", "jump_delta"])
        for t, cum, nt, delta in rows:
            w.writerow([
                _fmt(t),
                _fmt(cum) if cum is not None else "",
                _fmt(nt) if nt is not None else "",
                _fmt(delta) if delta is not None else "",
            ])
