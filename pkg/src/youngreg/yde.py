"""Nonlinear Young differential equations driven by tabulated averaged fields.

Euler and Picard solvers, flow maps over initial-condition grids, uniqueness
probes across solution strategies, integral-equation residuals, and shape checks
for the a-priori and comparison estimates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import IO, Callable, Sequence

import numpy as np

from . import fields as flds
from .averaging import (
    AveragedField,
    SpaceGrid,
    combine_drift_diffusion,
    compute_Gamma,
    compute_T,
    estimate_field_holder,
    field_difference,
)
from .fields import FieldSpec
from .paths import FbmSpec, SampledPath, TimeGrid, add_paths, gen_fbm, holder_seminorm, sub_paths
from .runtime import parallel_map
from .young import young_integral

__all__ = [
    "SolveConfig",
    "FlowMap",
    "UniquenessProbe",
    "Strategy",
    "PicardError",
    "solve_yde",
    "solve_sde",
    "solve_classical_young_sde",
    "solve_flow",
    "compare_solutions",
    "probe_uniqueness",
    "euler_self_refinement_error",
    "residual",
    "apriori_check",
    "random_initial_ensemble",
    "auto_space_grid",
]


@dataclass(frozen=True)
class SolveConfig:
    scheme: str = "euler"          # "euler" or "picard"
    picard_max_iter: int = 60
    picard_tol: float = 1e-10
    substeps: int = 1

    def __post_init__(self) -> None:
        if self.scheme not in ("euler", "picard"):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.picard_tol <= 0:
            raise ValueError("picard_tol must be positive")
        if self.substeps < 1:
            raise ValueError("substeps must be >= 1")


class PicardError(RuntimeError):
    """Fixed-point iteration did not converge; carries the last iterate."""

    def __init__(self, message: str, iterate: SampledPath, residual: float):
        super().__init__(message)
        self.iterate = iterate
        self.residual = residual


def _box_snapshot(A: AveragedField) -> int:
    return int(A.flags.get("left_box_evals", 0))


def _euler(A: AveragedField, theta0: np.ndarray, substeps: int) -> np.ndarray:
    na = A.time_grid.n_steps
    d = theta0.shape[0]
    th = np.empty((na * substeps + 1, d))
    th[0] = theta0
    for i in range(na):
        ev = A.increment_interpolator(i)
        for r in range(substeps):
            k = i * substeps + r
            th[k + 1] = th[k] + ev(th[k][None, :])[0] / substeps
    return th


def _picard(A: AveragedField, theta0: np.ndarray, cfg: SolveConfig,
            initial: SampledPath | None) -> tuple[np.ndarray, int, float]:
    grid = A.time_grid.refine(cfg.substeps) if cfg.substeps > 1 else A.time_grid
    n = grid.n_steps
    if initial is not None:
        if initial.grid != grid:
            raise ValueError("picard initial iterate must live on the solve grid")
        cur = initial.values.copy()
    else:
        cur = np.tile(theta0, (n + 1, 1))
    change = math.inf
    for it in range(cfg.picard_max_iter):
        integ = young_integral(A, SampledPath(grid, cur)).path.values
        new = theta0[None, :] + integ
        change = float(np.max(np.linalg.norm(new - cur, axis=1)))
        cur = new
        if change < cfg.picard_tol:
            return cur, it + 1, change
    raise PicardError(
        f"picard did not reach tol {cfg.picard_tol} in {cfg.picard_max_iter} iterations "
        f"(last change {change:.3e})",
        SampledPath(grid, cur),
        change,
    )


def solve_yde(A: AveragedField, theta0: np.ndarray | float,
              cfg: SolveConfig | None = None,
              picard_initial: SampledPath | None = None) -> SampledPath:
    """Solve d theta = A(dt, theta) from theta0 on the driver grid (times substeps).

    Euler steps through one-step driver increments; Picard iterates the Young
    integral map to a fixed point and raises PicardError (carrying the last
    iterate and its residual) on non-convergence. meta reports the
    integral-equation residual on the driver grid and whether the solution ever
    left the spatial box.
    """
    cfg = cfg or SolveConfig()
    theta0 = np.atleast_1d(np.asarray(theta0, dtype=float))
    if theta0.shape[0] != A.dim:
        raise ValueError(f"theta0 dim {theta0.shape[0]} != driver dim {A.dim}")
    before = _box_snapshot(A)
    if cfg.scheme == "euler":
        vals = _euler(A, theta0, cfg.substeps)
        iters = None
    else:
        vals, iters, _ = _picard(A, theta0, cfg, picard_initial)
    grid = A.time_grid.refine(cfg.substeps) if cfg.substeps > 1 else A.time_grid
    path = SampledPath(grid, vals)
    coarse = path.restrict(cfg.substeps)
    integ = young_integral(A, coarse).path.values
    resid = float(np.max(np.linalg.norm(coarse.values - theta0[None, :] - integ, axis=1)))
    path.meta.update({
        "residual": resid,
        "left_box": _box_snapshot(A) > before,
        "scheme": cfg.scheme,
        "substeps": cfg.substeps,
    })
    if iters is not None:
        path.meta["picard_iterations"] = iters
    return path


def auto_space_grid(b: FieldSpec, w: SampledPath, beta: SampledPath,
                    x0: np.ndarray | float, n_cells: int = 512,
                    margin: float = 1.5) -> SpaceGrid:
    """Size the driver box from a cheap classical presolve of the same data."""
    x_pre = solve_classical_young_sde(b, w, beta, x0)
    theta_pre = sub_paths(x_pre, w)
    reach = max(1.0, float(np.max(np.abs(theta_pre.values))))
    return SpaceGrid(dim=w.dim, half_width=margin * reach + 0.5, n_cells=n_cells)


def solve_sde(b: FieldSpec, w: SampledPath, beta: SampledPath, x0: np.ndarray | float,
              cfg: SolveConfig | None = None, space_grid: SpaceGrid | None = None,
              drift: FieldSpec | None = None,
              interpolation: str = "cubic") -> SampledPath:
    """Solve x = x0 + int b(x) dbeta (+ int drift(x) dt) + w via the averaged formulation.

    Builds the noise-weighted averaged field of b (plus the classical average of
    the drift when given), solves the nonlinear equation for theta = x - w with
    theta_0 = x0 - w_0, and returns x = theta + w.
    """
    if w.grid != beta.grid:
        raise ValueError("w and beta must share a time grid")
    cfg = cfg or SolveConfig()
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    theta0 = x0 - w.values[0]
    if space_grid is None:
        space_grid = auto_space_grid(b, w, beta, x0)
    A = compute_Gamma(b, w, beta, space_grid, interpolation=interpolation)
    if drift is not None:
        A = combine_drift_diffusion(compute_T(drift, w, space_grid, interpolation=interpolation), A)
    theta = solve_yde(A, theta0, cfg)
    theta_on_w = theta.restrict(cfg.substeps)
    x = add_paths(theta_on_w, w)
    x.meta.update(theta.meta)
    x.meta["space_grid"] = {"half_width": space_grid.half_width, "n_cells": space_grid.n_cells}
    return x


def solve_classical_young_sde(b: FieldSpec, w: SampledPath, beta: SampledPath,
                              x0: np.ndarray | float) -> SampledPath:
    """Direct Euler scheme on the original equation; consistency oracle for solve_sde."""
    if w.grid != beta.grid:
        raise ValueError("w and beta must share a time grid")
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    n = w.grid.n_steps
    d = w.dim
    binc = beta.increments()
    winc = w.increments()
    x = np.empty((n + 1, d))
    x[0] = x0
    for k in range(n):
        bx = flds.profile_values(b, x[k])
        x[k + 1] = x[k] + bx * binc[k] + winc[k]
    return SampledPath(w.grid, x, {"scheme": "classical-euler"})


# ---------------------------------------------------------------------------
# Flow maps
# ---------------------------------------------------------------------------

@dataclass
class FlowMap:
    """Solutions from a grid of initial conditions under one driver."""

    theta0: np.ndarray           # (n_ic, d)
    grid: TimeGrid
    values: np.ndarray           # (n_ic, n_steps+1, d)
    d_dtheta0: np.ndarray        # finite-difference derivative, same shape
    meta: dict = field(default_factory=dict)

    def paths(self) -> list[SampledPath]:
        return [SampledPath(self.grid, self.values[i]) for i in range(self.values.shape[0])]

    def lipschitz_constant(self) -> float:
        """Max over adjacent initial conditions and times of |delta theta(t)| / |delta theta0|."""
        dth0 = np.linalg.norm(np.diff(self.theta0, axis=0), axis=1)
        dval = np.linalg.norm(np.diff(self.values, axis=0), axis=2)
        return float(np.max(dval / dth0[:, None]))


def solve_flow(A: AveragedField, ic_grid: np.ndarray, cfg: SolveConfig | None = None) -> FlowMap:
    """One Euler solve per initial condition, vectorized across the whole grid.

    The finite-difference spatial derivative of the flow is computed across the
    initial-condition grid and returned alongside.
    """
    cfg = cfg or SolveConfig()
    ics = np.asarray(ic_grid, dtype=float)
    if ics.ndim == 1:
        ics = ics[:, None]
    if ics.shape[1] != A.dim:
        raise ValueError("initial-condition grid dimension mismatch")
    n_ic = ics.shape[0]
    na = A.time_grid.n_steps
    sub = cfg.substeps
    if cfg.scheme != "euler":
        vals = np.stack([
            solve_yde(A, ics[i], cfg).values for i in range(n_ic)
        ])
    else:
        vals = np.empty((n_ic, na * sub + 1, A.dim))
        vals[:, 0] = ics
        for i in range(na):
            ev = A.increment_interpolator(i)
            for r in range(sub):
                k = i * sub + r
                vals[:, k + 1] = vals[:, k] + ev(vals[:, k]) / sub
    grid = A.time_grid.refine(sub) if sub > 1 else A.time_grid
    if n_ic >= 2 and A.dim == 1:
        deriv = np.gradient(vals, ics[:, 0], axis=0)
    else:
        deriv = np.full_like(vals, np.nan)
    return FlowMap(theta0=ics, grid=grid, values=vals, d_dtheta0=deriv,
                   meta={"scheme": cfg.scheme, "substeps": sub, "driver_kind": A.kind})


def write_flow_csv(flow: FlowMap, fh: IO[str]) -> None:
    d = flow.values.shape[2]
    head = [f"theta0_{c + 1}" for c in range(d)] + ["t"] + [f"x_{c + 1}" for c in range(d)]
    fh.write(",".join(head) + "\n")
    times = flow.grid.times()
    for i in range(flow.theta0.shape[0]):
        for k in range(len(times)):
            cols = [f"{flow.theta0[i, c]:.17g}" for c in range(d)]
            cols.append(f"{times[k]:.17g}")
            cols += [f"{flow.values[i, k, c]:.17g}" for c in range(d)]
            fh.write(",".join(cols) + "\n")


# ---------------------------------------------------------------------------
# Comparison, uniqueness, residuals
# ---------------------------------------------------------------------------

def compare_solutions(A1: AveragedField, A2: AveragedField,
                      theta0_1: np.ndarray | float, theta0_2: np.ndarray | float,
                      cfg: SolveConfig | None = None,
                      gamma: float = 0.6, eta: float = 0.5, lam: float = 0.4) -> dict:
    """Solve both problems and report the distance against the stability inputs.

    The driver gap estimate adds the weighted norm of the difference field and of
    its finite-difference spatial gradient (the comparison estimate is stated for
    one extra order of spatial regularity).
    """
    if A1.time_grid != A2.time_grid or A1.space_grid != A2.space_grid:
        raise ValueError("drivers must share grids")
    cfg = cfg or SolveConfig()
    th1 = solve_yde(A1, theta0_1, cfg)
    th2 = solve_yde(A2, theta0_2, cfg)
    diff = sub_paths(th1, th2)
    sup_dist = diff.sup_norm()
    hold = holder_seminorm(diff, min(gamma, 1.0)).seminorm
    theta_gap = float(np.linalg.norm(np.atleast_1d(theta0_1) - np.atleast_1d(theta0_2)))
    dA = field_difference(A1, A2)
    norm_dA = estimate_field_holder(dA, gamma, eta, lam).weighted_norm
    if A1.dim == 1:
        ax = A1.space_grid.axis()
        grad_vals = np.gradient(dA.values[:, :, 0], ax, axis=1)[:, :, None]
        grad_field = AveragedField(dA.time_grid, dA.space_grid, grad_vals, dA.interpolation, dA.kind)
        norm_dA_grad = estimate_field_holder(grad_field, gamma, eta, lam).weighted_norm
    else:
        norm_dA_grad = float("nan")
    rhs = theta_gap + norm_dA + (0.0 if math.isnan(norm_dA_grad) else norm_dA_grad)
    return {
        "sup_distance": sup_dist,
        "holder_distance": float(np.linalg.norm(diff.values[0])) + hold,
        "theta0_gap": theta_gap,
        "driver_gap": norm_dA + (0.0 if math.isnan(norm_dA_grad) else norm_dA_grad),
        "ratio": sup_dist / rhs if rhs > 0 else 0.0,
    }


@dataclass(frozen=True)
class Strategy:
    """One route to a candidate solution for the uniqueness probe.

    scheme "euler" or "picard" solves with substeps 2^level; "given" takes
    seed_path itself as the candidate. perturb offsets the initial condition and
    the candidate is shifted back so that every candidate starts exactly at the
    probed theta0 (a perturbed restart re-projected to the common start).
    """

    scheme: str = "euler"
    level: int = 0
    perturb: float = 0.0
    seed_path: SampledPath | None = None
    label: str = ""

    def name(self) -> str:
        if self.label:
            return self.label
        bits = [self.scheme, f"lvl{self.level}"]
        if self.perturb:
            bits.append(f"h{self.perturb:g}")
        if self.seed_path is not None:
            bits.append("seeded")
        return "-".join(bits)


@dataclass
class UniquenessProbe:
    """Pairwise distances between candidate solutions and the resulting verdict.

    coincide iff every pairwise sup distance is below tol; separate iff some
    distance exceeds 10 tol; otherwise inconclusive.
    """

    candidates: dict
    pairwise: dict
    verdict: str
    tol: float
    flags: list


def euler_self_refinement_error(A: AveragedField, theta0: np.ndarray | float,
                                base_cfg: SolveConfig | None = None) -> float:
    """Sup distance between the Euler solve and its substep-doubled refinement."""
    base_cfg = base_cfg or SolveConfig()
    coarse = solve_yde(A, theta0, replace(base_cfg, scheme="euler"))
    fine = solve_yde(A, theta0, replace(base_cfg, scheme="euler",
                                        substeps=2 * base_cfg.substeps))
    return coarse.sup_distance(fine.restrict(2))


def probe_uniqueness(A: AveragedField, theta0: np.ndarray | float,
                     strategies: Sequence[Strategy], tol: float) -> UniquenessProbe:
    """Compare candidate solutions produced by distinct strategies.

    Candidates are compared pairwise on the driver grid; an inconclusive verdict
    (distances between tol and 10 tol) is a valid outcome. Picard failures do not
    abort the probe: the last iterate is used and flagged.
    """
    if len(strategies) < 2:
        raise ValueError("need at least two strategies")
    theta0 = np.atleast_1d(np.asarray(theta0, dtype=float))
    flags: list[str] = []
    candidates: dict[str, SampledPath] = {}
    for st in strategies:
        sub = 1 << st.level
        start = theta0 + st.perturb
        if st.scheme == "given":
            if st.seed_path is None:
                raise ValueError("'given' strategy requires seed_path")
            cand = st.seed_path
        else:
            cfg = SolveConfig(scheme=st.scheme, substeps=sub)
            seed = None
            if st.scheme == "picard" and st.seed_path is not None:
                seed = st.seed_path
                if seed.grid.n_steps != A.time_grid.n_steps * sub:
                    raise ValueError("picard seed path must live on the solve grid")
            try:
                cand = solve_yde(A, start, cfg, picard_initial=seed)
            except PicardError as err:
                cand = err.iterate
                flags.append(f"{st.name()}:picard_nonconverged({err.residual:.2e})")
        if cand.grid.n_steps != A.time_grid.n_steps:
            cand = cand.restrict(cand.grid.n_steps // A.time_grid.n_steps)
        if st.perturb:
            cand = SampledPath(cand.grid, cand.values - (cand.values[0] - theta0))
        candidates[st.name()] = cand
    names = list(candidates)
    pairwise: dict[str, float] = {}
    worst = 0.0
    for i in range(len(names)):
        for j in range(i + 1, len(names)):
            dist = candidates[names[i]].sup_distance(candidates[names[j]])
            pairwise[f"{names[i]}|{names[j]}"] = dist
            worst = max(worst, dist)
    if worst < tol:
        verdict = "coincide"
    elif worst > 10.0 * tol:
        verdict = "separate"
    else:
        verdict = "inconclusive"
    return UniquenessProbe(candidates=candidates, pairwise=pairwise,
                           verdict=verdict, tol=tol, flags=flags)


def residual(driver, candidate: SampledPath, w: SampledPath | None = None,
             beta: SampledPath | None = None) -> float:
    """Sup-norm defect of the integral equation for a candidate solution.

    With an AveragedField driver the averaged form is checked; with a field spec
    the classical form x_t = x_0 + sum b(x_k) beta-increment + w-increment is
    checked on the candidate's own grid.
    """
    if isinstance(driver, AveragedField):
        cand = candidate
        if cand.grid.n_steps != driver.time_grid.n_steps:
            cand = cand.restrict(cand.grid.n_steps // driver.time_grid.n_steps)
        integ = young_integral(driver, cand).path.values
        defect = cand.values - cand.values[0] - integ
        return float(np.max(np.linalg.norm(defect, axis=1)))
    if w is None or beta is None:
        raise ValueError("classical residual needs both w and beta")
    if candidate.grid != beta.grid or candidate.grid != w.grid:
        raise ValueError("candidate, w, beta must share a grid")
    fv = flds.profile_values(driver, candidate.values[:-1])
    acc = np.concatenate([
        np.zeros((1, candidate.dim)),
        np.cumsum(fv * beta.increments(), axis=0),
    ])
    defect = candidate.values - candidate.values[0] - acc - (w.values - w.values[0])
    return float(np.max(np.linalg.norm(defect, axis=1)))


def _field_norm_on_box(b: FieldSpec, alpha: float, half_width: float, n: int = 4096) -> float:
    zs = np.linspace(-half_width, half_width, n + 1)[:, None]
    vals = flds.profile_values(b, zs)[:, 0]
    sup = float(np.max(np.abs(vals)))
    semi = 0.0
    lag = 1
    dx = 2 * half_width / n
    while lag <= n:
        semi = max(semi, float(np.max(np.abs(vals[lag:] - vals[:-lag]))) / (lag * dx) ** alpha)
        lag *= 2
    return sup + semi


def apriori_check(theta: SampledPath, driver, params: dict) -> dict:
    """Shape check of the growth estimate for solutions; constants are unknown.

    For an AveragedField driver: left side is the Holder norm of theta at
    params['gamma'], right side exp(norm(A)^2) (1 + |theta0|) with the empirical
    weighted norm. For a (b, w, beta) triple: left side is the theta seminorm at
    params['hurst'], right side (1 + norm(b)^2 seminorm(beta)^2)(1 + seminorm(w))
    at params['alpha'], params['delta']. A violation is flagged only beyond a
    factor of 1e3, since estimator constants are not identifiable.
    """
    theta0 = theta.values[0]
    if isinstance(driver, AveragedField):
        gamma = params["gamma"]
        eta = params.get("eta", 0.5)
        lam = params.get("lam", 0.5)
        lhs = float(np.linalg.norm(theta0)) + holder_seminorm(theta, gamma).seminorm
        a_norm = estimate_field_holder(driver, gamma, eta, lam).weighted_norm
        rhs = math.exp(min(a_norm**2, 700.0)) * (1.0 + float(np.linalg.norm(theta0)))
        comps = {"theta_norm": lhs, "driver_weighted_norm": a_norm}
    else:
        b, w, beta = driver
        hurst = params["hurst"]
        alpha = params["alpha"]
        delta = params["delta"]
        box = params.get("box", 1.0 + float(np.max(np.abs(theta.values))))
        lhs = holder_seminorm(theta, min(hurst, 1.0)).seminorm
        bnorm = _field_norm_on_box(b, alpha, box)
        beta_semi = holder_seminorm(beta, min(hurst, 1.0)).seminorm
        w_semi = holder_seminorm(w, min(delta, 1.0)).seminorm
        rhs = (1.0 + bnorm**2 * beta_semi**2) * (1.0 + w_semi)
        comps = {"theta_seminorm": lhs, "field_norm": bnorm,
                 "beta_seminorm": beta_semi, "w_seminorm": w_semi}
    ratio = lhs / rhs if rhs > 0 else math.inf
    return {
        "lhs": lhs,
        "rhs": rhs,
        "ratio": ratio,
        "violated": bool(ratio > 1e3),
        "components": comps,
    }


def random_initial_ensemble(
    b: FieldSpec,
    w: SampledPath,
    fbm_spec: FbmSpec,
    ic_sampler: Callable[[np.random.Generator], np.ndarray],
    n: int,
    cfg: SolveConfig | None = None,
    space_grid: SpaceGrid | None = None,
    threads: int = 1,
    keep_paths: bool = False,
) -> dict:
    """Solve the perturbed equation for n independent (initial condition, noise) draws.

    The initial conditions come from a dedicated stream lane of the same seed, so
    they are independent of every noise path yet fully reproducible; w is shared
    across the ensemble.
    """
    from .paths import _coord_generator  # same keyed stream family, lane 1

    cfg = cfg or SolveConfig()
    if space_grid is None:
        gen0 = _coord_generator(fbm_spec.seed, 0, 0, lane=1)
        xi0 = np.atleast_1d(np.asarray(ic_sampler(gen0), dtype=float))
        beta0 = gen_fbm(fbm_spec, w.grid, sample=0)
        space_grid = auto_space_grid(b, w, beta0, xi0)
        reach = max(space_grid.half_width, 3.0 * float(np.linalg.norm(xi0)) + 2.0)
        space_grid = SpaceGrid(space_grid.dim, reach, space_grid.n_cells)

    def one(j: int):
        gen = _coord_generator(fbm_spec.seed, j, 0, lane=1)
        xi = np.atleast_1d(np.asarray(ic_sampler(gen), dtype=float))
        beta = gen_fbm(fbm_spec, w.grid, sample=j)
        x = solve_sde(b, w, beta, xi, cfg, space_grid=space_grid)
        return xi, x

    results = parallel_map(one, range(n), threads)
    endpoints = np.stack([x.values[-1] for _, x in results])
    initials = np.stack([xi for xi, _ in results])
    out = {
        "endpoints": endpoints,
        "initials": initials,
        "mean": endpoints.mean(axis=0),
        "std": endpoints.std(axis=0),
        "left_box_count": sum(1 for _, x in results if x.meta.get("left_box")),
    }
    if keep_paths:
        out["paths"] = [x for _, x in results]
    return out
