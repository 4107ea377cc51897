"""Averaged fields on space-time grids.

Computes the classical time-averaged field (integrating the coefficient along the
shifted perturbation path against dt) and its noise-weighted counterpart
(integrating against increments of the driving path via first-order germ sums),
plus occupation-measure cross-checks, empirical weighted Holder norms, and
Monte-Carlo moment scaling fits.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import IO, Callable, Literal, Sequence

import numpy as np
from scipy.interpolate import CubicSpline, RegularGridInterpolator
from scipy.stats import linregress

from . import fields as flds
from .fields import FieldSpec
from .paths import FbmSpec, SampledPath, TimeGrid, gen_fbm
from .runtime import parallel_map

__all__ = [
    "SpaceGrid",
    "AveragedField",
    "OccupationMeasure",
    "FieldHolderEstimate",
    "MomentExponentFit",
    "compute_T",
    "compute_occupation",
    "compute_T_via_occupation",
    "compute_Gamma",
    "combine_drift_diffusion",
    "field_difference",
    "estimate_field_holder",
    "fit_time_exponent",
    "mc_moment_exponent",
    "check_commutations",
    "gamma_refinement_study",
    "tabulate_driver",
    "write_field_csv",
    "field_sidecar",
]

_CHUNK_FLOATS = 1 << 22


@dataclass(frozen=True)
class SpaceGrid:
    """Uniform nodes over the centered box [-half_width, half_width]^dim, dim in {1, 2}."""

    dim: int
    half_width: float
    n_cells: int

    def __post_init__(self) -> None:
        if self.dim not in (1, 2):
            raise ValueError("SpaceGrid supports dim 1 or 2 (tensor storage)")
        if self.half_width <= 0:
            raise ValueError("half_width must be positive")
        if self.n_cells < 2:
            raise ValueError("n_cells must be >= 2")

    @property
    def dx(self) -> float:
        return 2.0 * self.half_width / self.n_cells

    def axis(self) -> np.ndarray:
        return np.linspace(-self.half_width, self.half_width, self.n_cells + 1)

    def edges(self) -> np.ndarray:
        return self.axis()

    def centers(self) -> np.ndarray:
        e = self.edges()
        return 0.5 * (e[:-1] + e[1:])

    def nodes(self) -> np.ndarray:
        """All nodes, shape (n_nodes, dim); dim-2 grids are flattened row-major."""
        ax = self.axis()
        if self.dim == 1:
            return ax[:, None]
        xx, yy = np.meshgrid(ax, ax, indexing="ij")
        return np.stack([xx.ravel(), yy.ravel()], axis=1)

    @property
    def n_nodes(self) -> int:
        return (self.n_cells + 1) ** self.dim


@dataclass
class AveragedField:
    """Cumulative driver values A(t_i, x_j), with A(0, .) = 0.

    values has shape (n_steps+1, n_nodes, dim). Increments are formed on demand
    from the cumulative storage, which makes increment additivity exact. Spatial
    evaluation between nodes uses cubic interpolation by default (linear is
    available); evaluation outside the box clamps to the boundary value and
    raises the left_box flag.
    """

    time_grid: TimeGrid
    space_grid: SpaceGrid
    values: np.ndarray
    interpolation: Literal["linear", "cubic"] = "cubic"
    kind: Literal["classical", "multiplicative", "combined"] = "classical"
    flags: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=float)
        expected = (self.time_grid.n_steps + 1, self.space_grid.n_nodes, self.space_grid.dim)
        if self.values.shape != expected:
            raise ValueError(f"values shape {self.values.shape} != {expected}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("averaged field values must be finite")
        if np.any(self.values[0] != 0.0):
            raise ValueError("cumulative driver must vanish at t=0")
        if self.interpolation == "cubic" and self.space_grid.dim != 1:
            raise ValueError("cubic interpolation is implemented for dim 1 only")
        self._splines: dict[int, object] = {}

    @property
    def dim(self) -> int:
        return self.space_grid.dim

    # -- increments ---------------------------------------------------------

    def increment_rows(self, i0: int, i1: int) -> np.ndarray:
        return self.values[i1] - self.values[i0]

    def rows_at_time(self, t: float) -> np.ndarray:
        """Cumulative rows at an off-node time by linear interpolation."""
        dt = self.time_grid.dt
        s = min(max(t / dt, 0.0), float(self.time_grid.n_steps))
        i = int(math.floor(s))
        if i >= self.time_grid.n_steps:
            return self.values[-1]
        frac = s - i
        if frac == 0.0:
            return self.values[i]
        return (1.0 - frac) * self.values[i] + frac * self.values[i + 1]

    # -- spatial evaluation ---------------------------------------------------

    def _flag_outside(self, pts: np.ndarray) -> np.ndarray:
        r = self.space_grid.half_width
        if np.any(np.abs(pts) > r):
            self.flags["left_box"] = True
            self.flags["left_box_evals"] = self.flags.get("left_box_evals", 0) + int(
                np.count_nonzero(np.any(np.abs(pts) > r, axis=-1) if pts.ndim > 1 else np.abs(pts) > r)
            )
        return np.clip(pts, -r, r)

    def _interp_rows(self, rows: np.ndarray, pts: np.ndarray) -> np.ndarray:
        """Evaluate one set of rows (n_nodes, dim) at points (P, dim) -> (P, dim)."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        pts = self._flag_outside(pts)
        if self.dim == 1:
            x = pts[:, 0]
            ax = self.space_grid.axis()
            if self.interpolation == "cubic":
                return CubicSpline(ax, rows, axis=0)(x)
            return np.stack([np.interp(x, ax, rows[:, c]) for c in range(rows.shape[1])], axis=-1)
        ax = self.space_grid.axis()
        n = self.space_grid.n_cells + 1
        grid_vals = rows.reshape(n, n, self.dim)
        rgi = RegularGridInterpolator((ax, ax), grid_vals, method="linear")
        return rgi(pts)

    def increment_interpolator(self, i: int) -> Callable[[np.ndarray], np.ndarray]:
        """Evaluator for the one-step increment A_{t_i, t_{i+1}}; splines are cached."""
        if self.dim == 1 and self.interpolation == "cubic":
            sp = self._splines.get(i)
            if sp is None:
                sp = CubicSpline(self.space_grid.axis(), self.increment_rows(i, i + 1), axis=0)
                self._splines[i] = sp

            def ev(pts: np.ndarray) -> np.ndarray:
                p = np.atleast_2d(np.asarray(pts, dtype=float))
                p = self._flag_outside(p)
                return sp(p[:, 0])

            return ev
        rows = self.increment_rows(i, i + 1)
        return lambda pts: self._interp_rows(rows, pts)

    def eval_increment(self, i0: int, i1: int, pts: np.ndarray) -> np.ndarray:
        return self._interp_rows(self.increment_rows(i0, i1), pts)

    def eval_increment_times(self, t0: float, t1: float, pts: np.ndarray) -> np.ndarray:
        rows = self.rows_at_time(t1) - self.rows_at_time(t0)
        return self._interp_rows(rows, pts)

    # -- algebra --------------------------------------------------------------

    def restrict_time(self, stride: int) -> "AveragedField":
        stride = int(stride)
        return AveragedField(
            self.time_grid.coarsen(stride), self.space_grid, self.values[::stride].copy(),
            self.interpolation, self.kind, dict(self.flags), dict(self.meta),
        )

    def _binary(self, other: "AveragedField", sign: float, kind: str) -> "AveragedField":
        if self.time_grid != other.time_grid or self.space_grid != other.space_grid:
            raise ValueError("grid mismatch between averaged fields")
        return AveragedField(
            self.time_grid, self.space_grid, self.values + sign * other.values,
            self.interpolation, kind, {}, {"combined_from": [self.kind, other.kind]},
        )


def combine_drift_diffusion(tb1: AveragedField, gb2: AveragedField) -> AveragedField:
    """Entrywise sum of a drift average and a noise-weighted average."""
    return tb1._binary(gb2, +1.0, "combined")


def field_difference(a: AveragedField, b: AveragedField) -> AveragedField:
    return a._binary(b, -1.0, a.kind)


# ---------------------------------------------------------------------------
# Classical averaged field
# ---------------------------------------------------------------------------

def _require_evaluable(b: FieldSpec) -> None:
    if not flds.is_pointwise_evaluable(b):
        raise flds.DistributionalFieldError(
            "field is a distributional surrogate; pass a Mollified wrapper"
        )


def compute_T(b: FieldSpec, w: SampledPath, space_grid: SpaceGrid,
              interpolation: Literal["linear", "cubic"] = "cubic") -> AveragedField:
    """Time average of the shifted coefficient by composite trapezoid on w's grid."""
    _require_evaluable(b)
    if w.dim != space_grid.dim:
        raise ValueError(f"path dim {w.dim} != grid dim {space_grid.dim}")
    nodes = space_grid.nodes()
    nt = w.grid.n_steps
    nn, d = nodes.shape
    dt = w.grid.dt
    vals = np.zeros((nt + 1, nn, d))
    chunk = max(1, _CHUNK_FLOATS // (nn * d))
    prev = flds.profile_values(b, nodes[None, :, :] + w.values[0][None, None, :])[0]
    acc = np.zeros((nn, d))
    for lo in range(0, nt, chunk):
        hi = min(lo + chunk, nt)
        pts = nodes[None, :, :] + w.values[lo + 1:hi + 1, None, :]
        f = flds.profile_values(b, pts)
        f_prev = np.concatenate([prev[None], f[:-1]], axis=0)
        vals[lo + 1:hi + 1] = acc + np.cumsum(0.5 * dt * (f_prev + f), axis=0)
        acc = vals[hi]
        prev = f[-1]
    return AveragedField(w.grid, space_grid, vals, interpolation, "classical",
                         meta={"op": "compute_T"})


# ---------------------------------------------------------------------------
# Occupation measure (dim 1)
# ---------------------------------------------------------------------------

@dataclass
class OccupationMeasure:
    """Cumulative time spent per spatial bin; mass outside the box goes to overflow."""

    time_grid: TimeGrid
    space_grid: SpaceGrid
    mass: np.ndarray       # (n_steps+1, n_cells), cumulative in time
    overflow: np.ndarray   # (n_steps+1, 2): below / above the box

    def total_mass(self, i: int) -> float:
        return float(self.mass[i].sum() + self.overflow[i].sum())

    def overflow_fraction(self) -> float:
        tot = self.total_mass(self.time_grid.n_steps)
        return float(self.overflow[-1].sum() / tot) if tot > 0 else 0.0


def compute_occupation(w: SampledPath, space_grid: SpaceGrid) -> OccupationMeasure:
    """Histogram of time spent per bin, linearly interpolating w between nodes."""
    if w.dim != 1 or space_grid.dim != 1:
        raise ValueError("occupation measure is implemented for dim 1")
    edges = space_grid.edges()
    n_cells = space_grid.n_cells
    nt = w.grid.n_steps
    dt = w.grid.dt
    a = w.values[:-1, 0]
    b = w.values[1:, 0]
    lo = np.minimum(a, b)
    hi = np.maximum(a, b)
    span = hi - lo
    flat = span == 0.0
    mass_steps = np.zeros((nt, n_cells))
    over_steps = np.zeros((nt, 2))

    moving = ~flat
    if np.any(moving):
        lom = lo[moving, None]
        him = hi[moving, None]
        left = np.clip(edges[:-1][None, :], lom, him)
        right = np.clip(edges[1:][None, :], lom, him)
        mass_steps[moving] = dt * (right - left) / (him - lom)
        below = np.clip(np.minimum(him, edges[0]) - lom, 0.0, None)
        above = np.clip(him - np.maximum(lom, edges[-1]), 0.0, None)
        over_steps[moving, 0] = dt * below[:, 0] / span[moving]
        over_steps[moving, 1] = dt * above[:, 0] / span[moving]
    if np.any(flat):
        pos = a[flat]
        idx = np.searchsorted(edges, pos, side="right") - 1
        for row, (p, j) in zip(np.flatnonzero(flat), zip(pos, idx)):
            if p < edges[0]:
                over_steps[row, 0] = dt
            elif p > edges[-1]:
                over_steps[row, 1] = dt
            else:
                mass_steps[row, min(max(j, 0), n_cells - 1)] = dt

    mass = np.zeros((nt + 1, n_cells))
    over = np.zeros((nt + 1, 2))
    np.cumsum(mass_steps, axis=0, out=mass[1:])
    np.cumsum(over_steps, axis=0, out=over[1:])
    return OccupationMeasure(w.grid, space_grid, mass, over)


def compute_T_via_occupation(b: FieldSpec, occ: OccupationMeasure,
                             overflow_tol: float = 1e-9) -> AveragedField:
    """Classical average as a discrete convolution of b with the reflected bin masses."""
    _require_evaluable(b)
    nodes = occ.space_grid.nodes()[:, 0]
    centers = occ.space_grid.centers()
    # b sampled on node+center combinations: T(t, x_j) = sum_l b(x_j + c_l) mass_l(t)
    pts = nodes[:, None] + centers[None, :]
    bvals = flds.profile_values(b, pts[:, :, None])[:, :, 0]  # (n_nodes, n_cells)
    vals = occ.mass @ bvals.T  # (nt+1, n_nodes)
    out = AveragedField(occ.time_grid, occ.space_grid, vals[:, :, None],
                        "cubic", "classical", meta={"op": "compute_T_via_occupation"})
    frac = occ.overflow_fraction()
    if frac > overflow_tol:
        out.flags["overflow_mass_fraction"] = frac
    return out


# ---------------------------------------------------------------------------
# Noise-weighted averaged field (first-order germ sums)
# ---------------------------------------------------------------------------

def _accumulate_germ(profile: Callable[[np.ndarray], np.ndarray], w: SampledPath,
                     beta: SampledPath, space_grid: SpaceGrid) -> np.ndarray:
    nodes = space_grid.nodes()
    nt = w.grid.n_steps
    nn, d = nodes.shape
    binc = beta.increments()
    vals = np.zeros((nt + 1, nn, d))
    chunk = max(1, _CHUNK_FLOATS // (nn * d))
    acc = np.zeros((nn, d))
    for lo in range(0, nt, chunk):
        hi = min(lo + chunk, nt)
        pts = nodes[None, :, :] + w.values[lo:hi, None, :]
        f = profile(pts)
        vals[lo + 1:hi + 1] = acc + np.cumsum(f * binc[lo:hi, None, :], axis=0)
        acc = vals[hi]
    return vals


def compute_Gamma(b: FieldSpec, w: SampledPath, beta: SampledPath, space_grid: SpaceGrid,
                  interpolation: Literal["linear", "cubic"] = "cubic") -> AveragedField:
    """Noise-weighted average: left-endpoint germ sums of b(x + w) against beta increments.

    The first-order germ is used without higher-order sewing corrections;
    convergence rates are verified empirically by gamma_refinement_study.
    """
    _require_evaluable(b)
    if w.grid != beta.grid:
        raise ValueError("w and beta must share a time grid")
    if w.dim != beta.dim:
        raise ValueError(f"dimension mismatch: w dim {w.dim} vs beta dim {beta.dim}")
    if w.dim != space_grid.dim:
        raise ValueError(f"path dim {w.dim} != grid dim {space_grid.dim}")
    vals = _accumulate_germ(lambda p: flds.profile_values(b, p), w, beta, space_grid)
    return AveragedField(w.grid, space_grid, vals, interpolation, "multiplicative",
                         meta={"op": "compute_Gamma"})


def _compute_gamma_gradient(b: FieldSpec, w: SampledPath, beta: SampledPath,
                            space_grid: SpaceGrid) -> AveragedField:
    vals = _accumulate_germ(lambda p: flds.gradient_profile_values(b, p), w, beta, space_grid)
    return AveragedField(w.grid, space_grid, vals, "cubic", "multiplicative",
                         meta={"op": "compute_Gamma_gradient"})


# ---------------------------------------------------------------------------
# Empirical weighted Holder norms
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FieldHolderEstimate:
    """Empirical space-time Holder data for a driver; all entries are lower bounds."""

    gamma: float
    eta: float
    lam: float
    per_radius_seminorm: dict
    per_radius_norm: dict
    weighted_norm: float
    base_norm: float


def _dyadic_time_pairs(nt: int, dt: float, gamma: float, budget: int) -> list[tuple[np.ndarray, np.ndarray, float]]:
    out = []
    lag = 1
    n_lags = max(1, int(math.log2(nt)) + 1)
    per_lag = max(8, budget // n_lags)
    while lag <= nt:
        i0 = np.arange(0, nt - lag + 1)
        if len(i0) > per_lag:
            i0 = i0[:: max(1, len(i0) // per_lag)][:per_lag]
        out.append((i0, i0 + lag, (lag * dt) ** gamma))
        lag *= 2
    return out


def _space_pair_set(space_grid: SpaceGrid, radius: float, eta: float,
                    budget: int) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """(j0, j1, |x_j0-x_j1|^eta, indices inside the ball) with dyadic index lags."""
    nodes = space_grid.nodes()
    rad = np.linalg.norm(nodes, axis=1)
    inside = np.flatnonzero(rad <= radius + 1e-12)
    j0_all, j1_all = [], []
    if space_grid.dim == 1:
        lag = 1
        n_lags = max(1, int(math.log2(max(2, len(inside)))))
        per_lag = max(8, budget // n_lags)
        while lag < len(inside):
            a = inside[:-lag]
            if len(a) > per_lag:
                a = a[:: max(1, len(a) // per_lag)][:per_lag]
            j0_all.append(a)
            j1_all.append(a + lag)
            lag *= 2
    else:
        gen = np.random.Generator(np.random.Philox(key=np.uint64(0)))
        m = min(budget, len(inside) * (len(inside) - 1) // 2)
        j0_all.append(gen.choice(inside, size=m))
        j1_all.append(gen.choice(inside, size=m))
    j0 = np.concatenate(j0_all) if j0_all else np.empty(0, dtype=int)
    j1 = np.concatenate(j1_all) if j1_all else np.empty(0, dtype=int)
    keep = j0 != j1
    j0, j1 = j0[keep], j1[keep]
    dist = np.linalg.norm(nodes[j0] - nodes[j1], axis=1)
    return j0, j1, dist**eta, inside


def estimate_field_holder(
    A: AveragedField,
    gamma: float,
    eta: float,
    lam: float,
    radii: Sequence[float] | None = None,
    time_pair_budget: int = 2048,
    space_pair_budget: int = 4096,
) -> FieldHolderEstimate:
    """Empirical per-radius and weighted space-time Holder norms over dyadic pair sets.

    The weighted norm follows the ball-growth convention: base term from the
    driver at the origin plus sup over tested radii of R^-lam times the spatial
    seminorm on the ball of radius R, all divided by the time gap to the gamma.
    """
    if radii is None:
        radii = [r for r in (1.0, 2.0, 4.0, 8.0) if r <= A.space_grid.half_width + 1e-12]
        if not radii:
            radii = [A.space_grid.half_width]
    nt = A.time_grid.n_steps
    dt = A.time_grid.dt
    tpairs = _dyadic_time_pairs(nt, dt, gamma, time_pair_budget)
    spairs = {r: _space_pair_set(A.space_grid, r, eta, space_pair_budget) for r in radii}
    origin_idx = int(np.argmin(np.linalg.norm(A.space_grid.nodes(), axis=1)))

    semi = {r: 0.0 for r in radii}
    norm = {r: 0.0 for r in radii}
    weighted = 0.0
    base = 0.0
    for i0, i1, denom in tpairs:
        diff = A.values[i1] - A.values[i0]          # (B, nn, d)
        base_b = np.linalg.norm(diff[:, origin_idx, :], axis=1)
        base = max(base, float(base_b.max()) / denom)
        weighted_b = base_b.copy()
        for r in radii:
            j0, j1, dist_eta, inside = spairs[r]
            if len(j0) == 0:
                continue
            ratio = np.linalg.norm(diff[:, j0, :] - diff[:, j1, :], axis=2) / dist_eta
            s_b = ratio.max(axis=1)                  # (B,)
            semi[r] = max(semi[r], float(s_b.max()) / denom)
            sup_b = np.linalg.norm(diff[:, inside, :], axis=2).max(axis=1)
            norm[r] = max(norm[r], float((s_b + sup_b).max()) / denom)
            weighted_b = np.maximum(weighted_b, base_b + r ** (-lam) * s_b)
        weighted = max(weighted, float(weighted_b.max()) / denom)
    return FieldHolderEstimate(
        gamma=gamma, eta=eta, lam=lam,
        per_radius_seminorm=semi, per_radius_norm=norm,
        weighted_norm=weighted, base_norm=base,
    )


def fit_time_exponent(A: AveragedField, eta: float = 1.0, radius: float | None = None,
                      use: Literal["seminorm", "sup"] = "seminorm",
                      space_pair_budget: int = 2048, anchors_per_lag: int = 64,
                      min_lag: int = 4, max_lag_fraction: float = 8.0) -> dict:
    """Log-log fit of the spatial (semi)norm of driver increments against the time gap.

    The per-anchor spatial seminorm is averaged over a fixed number of anchors per
    lag; averaging (rather than a sup in time) keeps the scaling free of the
    extreme-value log factor that a growing-max estimator picks up. The smallest
    and largest lags are excluded: single-germ effects below min_lag, overlapping
    anchor windows above n_steps / max_lag_fraction.
    """
    nt = A.time_grid.n_steps
    dt = A.time_grid.dt
    if radius is None:
        radius = A.space_grid.half_width
    j0, j1, dist_eta, inside = _space_pair_set(A.space_grid, radius, eta, space_pair_budget)
    lags, mags = [], []
    lag = max(1, min_lag)
    while lag <= nt / max_lag_fraction:
        i0 = np.unique(np.linspace(0, nt - lag, min(anchors_per_lag, nt - lag + 1)).astype(int))
        diff = A.values[i0 + lag] - A.values[i0]
        if use == "seminorm" and len(j0):
            per_anchor = (np.linalg.norm(diff[:, j0, :] - diff[:, j1, :], axis=2) / dist_eta).max(axis=1)
        else:
            per_anchor = np.linalg.norm(diff[:, inside, :], axis=2).max(axis=1)
        m = float(per_anchor.mean())
        if m > 0:
            lags.append(lag * dt)
            mags.append(m)
        lag *= 2
    if len(lags) < 3:
        return {"slope": float("nan"), "r2": 0.0, "lags": lags, "mags": mags}
    fit = linregress(np.log(lags), np.log(mags))
    return {"slope": float(fit.slope), "r2": float(fit.rvalue**2), "lags": lags, "mags": mags}


# ---------------------------------------------------------------------------
# Monte-Carlo moment scaling
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MomentExponentFit:
    slope: float
    intercept: float
    stderr: float
    ci_low: float
    ci_high: float
    r_squared: float
    lags: tuple
    norms: tuple


def mc_moment_exponent(
    b: FieldSpec,
    w: SampledPath,
    fbm_spec: FbmSpec,
    x: np.ndarray | float,
    p: float,
    n_samples: int,
    lags: Sequence[int] | None = None,
    threads: int = 1,
) -> MomentExponentFit:
    """Fit the time-gap exponent of Monte-Carlo L^p norms of germ sums at a fixed point.

    For each sample, the driving path is drawn fresh (sample index seeds the
    stream) and the germ sum from 0 to each dyadic lag is accumulated at the
    single spatial point x; the log-log slope against the lag is returned with a
    95 percent band.
    """
    if n_samples < 100:
        raise ValueError("refusing a moment fit with fewer than 100 samples")
    if p < 2:
        raise ValueError("p must be >= 2")
    _require_evaluable(b)
    if fbm_spec.dim != w.dim:
        raise ValueError("fbm_spec dim must match the perturbation path dim")
    grid = w.grid
    n = grid.n_steps
    xv = np.atleast_1d(np.asarray(x, dtype=float))
    fv = flds.profile_values(b, xv[None, :] + w.values)  # (n+1, d)
    if lags is None:
        lags = [2**j for j in range(2, int(math.log2(n)))]
    idx = np.asarray(lags, dtype=int)

    def one(j: int) -> np.ndarray:
        beta = gen_fbm(fbm_spec, grid, sample=j)
        acc = np.concatenate(
            [np.zeros((1, len(xv))), np.cumsum(fv[:-1] * beta.increments(), axis=0)], axis=0
        )
        return np.linalg.norm(acc[idx], axis=1)

    mags = np.asarray(parallel_map(one, range(n_samples), threads))  # (ns, nlags)
    norms = np.mean(mags**p, axis=0) ** (1.0 / p)
    taus = idx * grid.dt
    fit = linregress(np.log(taus), np.log(norms))
    half = 1.96 * fit.stderr
    return MomentExponentFit(
        slope=float(fit.slope), intercept=float(fit.intercept), stderr=float(fit.stderr),
        ci_low=float(fit.slope - half), ci_high=float(fit.slope + half),
        r_squared=float(fit.rvalue**2), lags=tuple(float(t) for t in taus),
        norms=tuple(float(v) for v in norms),
    )


# ---------------------------------------------------------------------------
# Structural identity checks
# ---------------------------------------------------------------------------

def check_commutations(
    b: FieldSpec,
    w: SampledPath,
    beta: SampledPath,
    space_grid: SpaceGrid,
    kernel_epsilon: float = 0.25,
    holder_params: tuple[float, float, float] = (0.5, 0.5, 0.5),
    mollify_ladder: Sequence[float] = (0.5, 0.25, 0.125),
) -> dict:
    """Discrepancy report for differentiation and convolution passing through the average.

    Dim-1 only. Compares the spatial derivative of the noise-weighted average
    against the average of the derivative field, and kernel-convolved averages
    against averages of the mollified field; also checks that mollified-field
    norms do not exceed the unmollified norm beyond estimator noise.
    """
    if isinstance(b, flds.PowerLaw):
        raise ValueError("commutation checks need a differentiable field variant")
    _require_evaluable(b)
    if space_grid.dim != 1:
        raise ValueError("commutation checks are implemented for dim 1")
    ax = space_grid.axis()
    G = compute_Gamma(b, w, beta, space_grid)
    Gd = _compute_gamma_gradient(b, w, beta, space_grid)
    dG = np.gradient(G.values[:, :, 0], ax, axis=1)
    interior = slice(2, -2)
    disc_grad = float(np.max(np.abs(dG[:, interior] - Gd.values[:, interior, 0])))

    eps = kernel_epsilon
    Gm = compute_Gamma(flds.mollify(b, eps), w, beta, space_grid)
    u, wq, rho, zn = flds._kernel_rule()
    spline = CubicSpline(ax, G.values, axis=1)
    keep = np.abs(ax) <= space_grid.half_width - eps
    xin = ax[keep]
    conv = np.zeros((G.values.shape[0], len(xin), 1))
    for uq_, wq_, rq_ in zip(u, wq, rho):
        conv += (wq_ * rq_) * spline(xin - eps * uq_)
    conv /= zn
    disc_conv = float(np.max(np.abs(conv - Gm.values[:, keep, :])))

    gamma0, eta0, lam0 = holder_params
    base = estimate_field_holder(G, gamma0, eta0, lam0).weighted_norm
    ratios = []
    for e in mollify_ladder:
        ne = estimate_field_holder(
            compute_Gamma(flds.mollify(b, e), w, beta, space_grid), gamma0, eta0, lam0
        ).weighted_norm
        ratios.append(ne / base if base > 0 else 0.0)
    flags = []
    if max(ratios) > 1.1:
        flags.append("mollified_norm_ratio_above_1.1")
    return {
        "discrepancies": {
            "gradient_commutation": disc_grad,
            "convolution_commutation": disc_conv,
            "mollified_norm_ratio_max": max(ratios),
        },
        "slopes": {},
        "r2": {},
        "flags": flags,
    }


def gamma_refinement_study(
    b: FieldSpec,
    w_fine: SampledPath,
    beta_fine: SampledPath,
    space_grid: SpaceGrid,
    levels: int,
) -> dict:
    """Sup-norm change of the germ-sum field under dyadic time refinement, with log2 rate.

    The fine paths are restricted (not resampled) to coarser grids, so every level
    sees the same realization.
    """
    if levels < 2:
        raise ValueError("need at least two refinement levels")
    n_fine = w_fine.grid.n_steps
    if n_fine % (1 << levels):
        raise ValueError("fine grid must refine the base grid by 2^levels")
    fields_per_level = []
    for lvl in range(levels + 1):
        stride = 1 << (levels - lvl)
        fields_per_level.append(
            compute_Gamma(b, w_fine.restrict(stride), beta_fine.restrict(stride), space_grid)
        )
    deltas = []
    for lvl in range(levels):
        coarse = fields_per_level[lvl].values
        fine = fields_per_level[lvl + 1].values[::2]
        deltas.append(float(np.max(np.abs(fine - coarse))))
    lvl_idx = np.arange(levels, dtype=float)
    pos = np.asarray(deltas) > 0
    if pos.sum() >= 2:
        fit = linregress(lvl_idx[pos], np.log2(np.asarray(deltas)[pos]))
        rate, r2 = float(-fit.slope), float(fit.rvalue**2)
    else:
        rate, r2 = float("inf"), 1.0
    return {"deltas": deltas, "rate": rate, "r2": r2}


# ---------------------------------------------------------------------------
# Driver tabulation and persistence
# ---------------------------------------------------------------------------

def tabulate_driver(
    fn: Callable[[float, np.ndarray], np.ndarray],
    time_grid: TimeGrid,
    space_grid: SpaceGrid,
    kind: Literal["classical", "multiplicative", "combined"] = "classical",
    interpolation: Literal["linear", "cubic"] = "cubic",
) -> AveragedField:
    """Tabulate an explicit driver fn(t, nodes) -> (n_nodes, dim); fn(0, .) is subtracted."""
    nodes = space_grid.nodes()
    nt = time_grid.n_steps
    vals = np.empty((nt + 1, space_grid.n_nodes, space_grid.dim))
    for i, t in enumerate(time_grid.times()):
        vals[i] = np.asarray(fn(float(t), nodes), dtype=float).reshape(space_grid.n_nodes,
                                                                       space_grid.dim)
    vals -= vals[0]
    return AveragedField(time_grid, space_grid, vals, interpolation, kind,
                         meta={"op": "tabulate_driver"})


def write_field_csv(A: AveragedField, fh: IO[str]) -> None:
    d = A.dim
    times = A.time_grid.times()
    nodes = A.space_grid.nodes()
    if d == 1:
        fh.write("t,x," + ",".join(f"a_{c + 1}" for c in range(d)) + "\n")
    else:
        fh.write("t," + ",".join(f"x_{c + 1}" for c in range(d)) + ","
                 + ",".join(f"a_{c + 1}" for c in range(d)) + "\n")
    for i in range(len(times)):
        for j in range(nodes.shape[0]):
            cols = [f"{times[i]:.17g}"]
            cols += [f"{nodes[j, c]:.17g}" for c in range(d)]
            cols += [f"{A.values[i, j, c]:.17g}" for c in range(d)]
            fh.write(",".join(cols) + "\n")


def field_sidecar(A: AveragedField, provenance: dict | None = None) -> dict:
    return {
        "kind": A.kind,
        "interpolation": A.interpolation,
        "time_grid": {"horizon": A.time_grid.horizon, "n_steps": A.time_grid.n_steps},
        "space_grid": {
            "dim": A.space_grid.dim,
            "half_width": A.space_grid.half_width,
            "n_cells": A.space_grid.n_cells,
        },
        "flags": {k: v for k, v in A.flags.items()},
        "provenance": provenance or {},
    }
