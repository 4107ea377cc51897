"""Nonlinear Young integration against a tabulated driver.

The integral is the limit of left-endpoint Riemann sums of driver increments
evaluated along the integrand path; cumulative storage makes additivity over
subintervals exact by construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.stats import linregress

from .averaging import AveragedField
from .paths import SampledPath

__all__ = ["YoungIntegralResult", "young_integral", "refinement_study"]


@dataclass
class YoungIntegralResult:
    """Cumulative integral path plus the worst dyadic germ defect.

    germ_residual is max over dyadic node pairs (s, t) of
    |I(s,t) - A_{s,t}(theta_s)| / |t-s|^rate.
    """

    path: SampledPath
    germ_residual: float
    rate: float


def _refinement_factor(A: AveragedField, theta: SampledPath, level: int | None) -> int:
    if abs(theta.grid.horizon - A.time_grid.horizon) > 1e-12 * A.time_grid.horizon:
        raise ValueError("theta and driver must share the time horizon")
    na, ntheta = A.time_grid.n_steps, theta.grid.n_steps
    if ntheta % na:
        raise ValueError(f"theta grid ({ntheta}) must refine the driver grid ({na})")
    factor = ntheta // na
    if level is not None and factor != (1 << level):
        raise ValueError(f"theta refines the driver by {factor}, expected 2^{level}")
    return factor


def young_integral(
    A: AveragedField,
    theta: SampledPath,
    level: int | None = None,
    germ_rate: float = 1.0,
    germ_pairs_per_lag: int = 16,
) -> YoungIntegralResult:
    """Left-endpoint Riemann sum of A(du, theta_u) over theta's grid.

    theta must live on the driver's grid refined by an integer factor (2^level
    when level is given); driver increments at intermediate times come from
    linear interpolation of the cumulative values, i.e. each one-step driver
    increment is split evenly across the substeps it covers.
    """
    if theta.dim != A.dim:
        raise ValueError(f"theta dim {theta.dim} != driver dim {A.dim}")
    factor = _refinement_factor(A, theta, level)
    na = A.time_grid.n_steps
    d = theta.dim
    out = np.zeros((theta.grid.n_steps + 1, d))
    for i in range(na):
        ev = A.increment_interpolator(i)
        pts = theta.values[i * factor:(i + 1) * factor]
        contrib = ev(pts) / factor
        base = out[i * factor]
        out[i * factor + 1:(i + 1) * factor + 1] = base + np.cumsum(contrib, axis=0)
    path = SampledPath(theta.grid, out)

    # Germ defect over a subsampled dyadic pair set on the driver's own nodes.
    coarse_i = out[::factor]
    residual = 0.0
    lag = 1
    ax = A.space_grid.axis() if A.dim == 1 else None
    while lag <= na:
        starts = np.arange(0, na - lag + 1)
        if len(starts) > germ_pairs_per_lag:
            starts = starts[:: max(1, len(starts) // germ_pairs_per_lag)][:germ_pairs_per_lag]
        for i0 in starts:
            i1 = i0 + lag
            inc_i = coarse_i[i1] - coarse_i[i0]
            rows = A.increment_rows(i0, i1)
            pt = theta.values[i0 * factor]
            if A.dim == 1 and A.interpolation == "cubic":
                germ = CubicSpline(ax, rows, axis=0)(np.clip(pt[0], ax[0], ax[-1]))
            else:
                germ = A._interp_rows(rows, pt[None, :])[0]
            gap = (lag * A.time_grid.dt) ** germ_rate
            residual = max(residual, float(np.linalg.norm(inc_i - germ)) / gap)
        lag *= 2
    return YoungIntegralResult(path=path, germ_residual=residual, rate=germ_rate)


def refinement_study(A: AveragedField, theta: SampledPath, levels: int) -> dict:
    """Riemann-sum convergence under dyadic refinement of the integrand grid.

    theta must live on the driver grid refined by 2^levels; it is restricted
    (never resampled) to the coarser levels. Returns per-level sup-norm deltas
    between consecutive approximations and the fitted log2 decay rate.
    """
    if levels < 2:
        raise ValueError("need at least two refinement levels")
    base = A.time_grid.n_steps
    if theta.grid.n_steps != base * (1 << levels):
        raise ValueError("theta must refine the driver grid by 2^levels")
    prev = None
    deltas: list[float] = []
    for lvl in range(levels + 1):
        th = theta.restrict(1 << (levels - lvl))
        cur = young_integral(A, th, level=lvl).path
        if prev is not None:
            deltas.append(float(np.max(np.abs(cur.values[::2] - prev.values))))
        prev = cur
    arr = np.asarray(deltas)
    pos = arr > 0
    if pos.sum() >= 2:
        fit = linregress(np.arange(levels, dtype=float)[pos], np.log2(arr[pos]))
        rate, r2 = float(-fit.slope), float(fit.rvalue**2)
    else:
        rate, r2 = math.inf, 1.0
    return {"deltas": deltas, "rate": rate, "r2": r2}
