"""Coefficient fields: closed-form, power-law, random Fourier surrogates, mollification.

Every field acts componentwise through a scalar profile g, one profile per output
component. The matrix view b(x) = diag(g_1(x_1), ..., g_d(x_d)) multiplies noise
increments; the vector view (g_1(x_1), ..., g_d(x_d)) is used for drift averaging.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import IO, Union

import numpy as np
from scipy.special import roots_legendre, spherical_jn

__all__ = [
    "PowerLaw",
    "FourierSeries",
    "Smooth",
    "Mollified",
    "FieldSpec",
    "DistributionalFieldError",
    "NonDifferentiableError",
    "eval_field",
    "eval_vector",
    "eval_gradient",
    "profile_values",
    "gradient_profile_values",
    "mollify",
    "is_pointwise_evaluable",
    "spec_to_json",
    "spec_from_json",
    "dump_spec",
    "load_spec",
]

_QUAD_ORDER = 33
_EVAL_CHUNK = 1 << 20


class DistributionalFieldError(ValueError):
    """Raised when a field below regularity zero is evaluated pointwise unmollified."""


class NonDifferentiableError(ValueError):
    """Raised when a gradient is requested where none exists."""


@dataclass(frozen=True)
class PowerLaw:
    """g(z) = |z|^alpha / (1 - alpha), alpha in (0,1).

    The even extension to negative arguments is the one for which
    y(t) = sgn(t) |t|^{1/(1-alpha)} solves y' = g(y) on the whole line.
    """

    alpha: float

    def __post_init__(self) -> None:
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0,1), got {self.alpha}")


@dataclass(frozen=True)
class FourierSeries:
    """Random cosine/sine series with spectral decay k^-(regularity_alpha + 1/2).

    For regularity_alpha <= 0 the infinite series diverges pointwise; such specs
    are treated as distributional surrogates and may only be evaluated after
    mollification (or consumed through averaging of a mollified version).
    """

    n_modes: int
    regularity_alpha: float
    box_half_width: float
    seed: int

    def __post_init__(self) -> None:
        if self.n_modes < 1:
            raise ValueError("n_modes must be >= 1")
        if self.box_half_width <= 0:
            raise ValueError("box_half_width must be positive")


@dataclass(frozen=True)
class Smooth:
    """Closed-form profile: tag in {'constant', 'identity', 'gaussian_bump'}."""

    tag: str
    value: float = 1.0
    center: float = 0.0
    width: float = 1.0

    def __post_init__(self) -> None:
        if self.tag not in ("constant", "identity", "gaussian_bump"):
            raise ValueError(f"unknown Smooth tag {self.tag!r}")
        if self.tag == "gaussian_bump" and self.width <= 0:
            raise ValueError("gaussian_bump width must be positive")


@dataclass(frozen=True)
class Mollified:
    """inner convolved with a normalized bump of width epsilon, per input axis."""

    inner: "FieldSpec"
    epsilon: float

    def __post_init__(self) -> None:
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")


FieldSpec = Union[PowerLaw, FourierSeries, Smooth, Mollified]


def mollify(spec: FieldSpec, epsilon: float) -> Mollified:
    return Mollified(inner=spec, epsilon=float(epsilon))


def is_pointwise_evaluable(spec: FieldSpec) -> bool:
    if isinstance(spec, FourierSeries):
        return spec.regularity_alpha > 0
    return True


# ---------------------------------------------------------------------------
# Mollification kernel: rho(u) ∝ (1 - u^2)^4 on [-1, 1], 33-point Gauss rule
# ---------------------------------------------------------------------------

@lru_cache(maxsize=1)
def _kernel_rule() -> tuple[np.ndarray, np.ndarray, np.ndarray, float]:
    """Nodes u_q, raw Gauss weights w_q, kernel values rho(u_q), normalizer Z.

    Z = sum w_q rho(u_q), so the discrete kernel weights w_q rho(u_q) / Z sum to
    one exactly; mollifying a constant is then exact to round-off.
    """
    u, w = roots_legendre(_QUAD_ORDER)
    rho = (1.0 - u**2) ** 4
    z = float(np.sum(w * rho))
    for arr in (u, w, rho):
        arr.setflags(write=False)
    return u, w, rho, z


def _kernel_deriv(u: np.ndarray) -> np.ndarray:
    return -8.0 * u * (1.0 - u**2) ** 3


def _kernel_transform(a: np.ndarray) -> np.ndarray:
    """m(a) = integral of the normalized kernel times cos(a u) over [-1, 1].

    Closed form 945 j_4(a) / a^4 with a short series below a = 1e-2; m(0) = 1.
    """
    a = np.asarray(a, dtype=float)
    out = np.empty_like(a)
    small = np.abs(a) < 1e-2
    asm = a[small]
    out[small] = 1.0 - asm**2 / 22.0 + asm**4 / 1144.0
    big = ~small
    ab = a[big]
    out[big] = 945.0 * spherical_jn(4, ab) / ab**4
    return out


# ---------------------------------------------------------------------------
# Fourier coefficients
# ---------------------------------------------------------------------------

@lru_cache(maxsize=128)
def _fourier_coeffs(spec: FourierSeries, dim: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(frequencies (K,), cosine coeffs (dim,K), sine coeffs (dim,K)) for one spec."""
    k = np.arange(1, spec.n_modes + 1, dtype=float)
    decay = k ** (-(spec.regularity_alpha + 0.5))
    gen = np.random.Generator(np.random.Philox(key=np.uint64(spec.seed)))
    xi = gen.standard_normal((dim, spec.n_modes)) * decay
    zeta = gen.standard_normal((dim, spec.n_modes)) * decay
    freq = math.pi * k / spec.box_half_width
    for arr in (freq, xi, zeta):
        arr.setflags(write=False)
    return freq, xi, zeta


def _fourier_sum(z: np.ndarray, freq: np.ndarray, cos_c: np.ndarray, sin_c: np.ndarray,
                 derivative: bool = False) -> np.ndarray:
    """Componentwise series evaluation; z has shape (..., dim), chunked over points."""
    dim = z.shape[-1]
    flat = z.reshape(-1, dim)
    out = np.empty_like(flat)
    for lo in range(0, flat.shape[0], max(1, _EVAL_CHUNK // max(1, len(freq)))):
        hi = min(lo + max(1, _EVAL_CHUNK // max(1, len(freq))), flat.shape[0])
        phase = flat[lo:hi, :, None] * freq  # (chunk, dim, K)
        if derivative:
            vals = (-np.sin(phase) * cos_c + np.cos(phase) * sin_c) * freq
        else:
            vals = np.cos(phase) * cos_c + np.sin(phase) * sin_c
        out[lo:hi] = vals.sum(axis=-1)
    return out.reshape(z.shape)


# ---------------------------------------------------------------------------
# Profile evaluation
# ---------------------------------------------------------------------------

def _as_points(z: np.ndarray | float, dim_hint: int | None = None) -> np.ndarray:
    arr = np.asarray(z, dtype=float)
    if arr.ndim == 0:
        arr = arr[None]
    return arr


def profile_values(spec: FieldSpec, z: np.ndarray | float) -> np.ndarray:
    """Componentwise profile g_c(z_c); z has shape (..., dim), output matches."""
    z = _as_points(z)
    if isinstance(spec, PowerLaw):
        return np.abs(z) ** spec.alpha / (1.0 - spec.alpha)
    if isinstance(spec, Smooth):
        if spec.tag == "constant":
            return np.full_like(z, spec.value)
        if spec.tag == "identity":
            return z.copy()
        return np.exp(-((z - spec.center) ** 2) / (2.0 * spec.width**2))
    if isinstance(spec, FourierSeries):
        if not is_pointwise_evaluable(spec):
            raise DistributionalFieldError(
                "FourierSeries with regularity_alpha <= 0 is a distributional "
                "surrogate; mollify it before pointwise evaluation"
            )
        freq, xi, zeta = _fourier_coeffs(spec, z.shape[-1])
        return _fourier_sum(z, freq, xi, zeta)
    if isinstance(spec, Mollified):
        inner = spec.inner
        if isinstance(inner, FourierSeries):
            # Exact convolution: the kernel transform damps each mode.
            freq, xi, zeta = _fourier_coeffs(inner, z.shape[-1])
            damp = _kernel_transform(freq * spec.epsilon)
            return _fourier_sum(z, freq, xi * damp, zeta * damp)
        u, w, rho, zn = _kernel_rule()
        acc = np.zeros_like(z)
        for uq, wq, rq in zip(u, w, rho):
            acc += (wq * rq) * _raw_profile(inner, z - spec.epsilon * uq)
        return acc / zn
    raise TypeError(f"unknown field spec {type(spec)!r}")


def _raw_profile(spec: FieldSpec, z: np.ndarray) -> np.ndarray:
    """Inner evaluation that bypasses the distributional guard (quadrature use only)."""
    if isinstance(spec, FourierSeries):
        freq, xi, zeta = _fourier_coeffs(spec, z.shape[-1])
        return _fourier_sum(z, freq, xi, zeta)
    return profile_values(spec, z)


def gradient_profile_values(spec: FieldSpec, z: np.ndarray | float) -> np.ndarray:
    """Componentwise derivative g_c'(z_c), analytic where available.

    Mollified specs with non-Fourier inner use the differentiated kernel, so no
    smoothness of the inner profile is required.
    """
    z = _as_points(z)
    if isinstance(spec, PowerLaw):
        if np.any(z == 0.0):
            raise NonDifferentiableError("PowerLaw profile is not differentiable at 0")
        return spec.alpha / (1.0 - spec.alpha) * np.abs(z) ** (spec.alpha - 1.0) * np.sign(z)
    if isinstance(spec, Smooth):
        if spec.tag == "constant":
            return np.zeros_like(z)
        if spec.tag == "identity":
            return np.ones_like(z)
        g = np.exp(-((z - spec.center) ** 2) / (2.0 * spec.width**2))
        return -(z - spec.center) / spec.width**2 * g
    if isinstance(spec, FourierSeries):
        if not is_pointwise_evaluable(spec):
            raise DistributionalFieldError(
                "mollify a distributional FourierSeries before differentiating"
            )
        freq, xi, zeta = _fourier_coeffs(spec, z.shape[-1])
        return _fourier_sum(z, freq, xi, zeta, derivative=True)
    if isinstance(spec, Mollified):
        inner = spec.inner
        if isinstance(inner, FourierSeries):
            freq, xi, zeta = _fourier_coeffs(inner, z.shape[-1])
            damp = _kernel_transform(freq * spec.epsilon)
            return _fourier_sum(z, freq, xi * damp, zeta * damp, derivative=True)
        u, w, _, zn = _kernel_rule()
        dk = _kernel_deriv(u)
        acc = np.zeros_like(z)
        for uq, wq, dq in zip(u, w, dk):
            acc += (wq * dq) * _raw_profile(inner, z - spec.epsilon * uq)
        return acc / (zn * spec.epsilon)
    raise TypeError(f"unknown field spec {type(spec)!r}")


def eval_field(spec: FieldSpec, x: np.ndarray | float) -> np.ndarray:
    """Matrix value b(x) = diag(g_1(x_1), ..., g_d(x_d)), shape (d, d)."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    return np.diag(profile_values(spec, x))


def eval_vector(spec: FieldSpec, x: np.ndarray | float) -> np.ndarray:
    """Vector view (g_1(x_1), ..., g_d(x_d)) used when the field acts as a drift."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    return profile_values(spec, x)


def eval_gradient(spec: FieldSpec, x: np.ndarray | float) -> np.ndarray:
    """Spatial derivative tensor d b_ij / d x_k, shape (d, d, d).

    Only the diagonal entries [i, i, i] are nonzero for componentwise fields.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    d = x.shape[0]
    g = gradient_profile_values(spec, x)
    out = np.zeros((d, d, d))
    for i in range(d):
        out[i, i, i] = g[i]
    return out


# ---------------------------------------------------------------------------
# JSON serialization (variant discriminator, bit-exact numeric round-trip)
# ---------------------------------------------------------------------------

def spec_to_json(spec: FieldSpec) -> dict:
    if isinstance(spec, PowerLaw):
        return {"variant": "power_law", "alpha": spec.alpha}
    if isinstance(spec, FourierSeries):
        return {
            "variant": "fourier_series",
            "n_modes": spec.n_modes,
            "regularity_alpha": spec.regularity_alpha,
            "box_half_width": spec.box_half_width,
            "seed": spec.seed,
        }
    if isinstance(spec, Smooth):
        return {
            "variant": "smooth",
            "tag": spec.tag,
            "value": spec.value,
            "center": spec.center,
            "width": spec.width,
        }
    if isinstance(spec, Mollified):
        return {"variant": "mollified", "inner": spec_to_json(spec.inner), "epsilon": spec.epsilon}
    raise TypeError(f"unknown field spec {type(spec)!r}")


def spec_from_json(obj: dict) -> FieldSpec:
    variant = obj["variant"]
    if variant == "power_law":
        return PowerLaw(alpha=obj["alpha"])
    if variant == "fourier_series":
        return FourierSeries(
            n_modes=int(obj["n_modes"]),
            regularity_alpha=obj["regularity_alpha"],
            box_half_width=obj["box_half_width"],
            seed=int(obj["seed"]),
        )
    if variant == "smooth":
        return Smooth(tag=obj["tag"], value=obj.get("value", 1.0),
                      center=obj.get("center", 0.0), width=obj.get("width", 1.0))
    if variant == "mollified":
        return Mollified(inner=spec_from_json(obj["inner"]), epsilon=obj["epsilon"])
    raise ValueError(f"unknown field variant {variant!r}")


def dump_spec(spec: FieldSpec, fh: IO[str]) -> None:
    json.dump(spec_to_json(spec), fh, sort_keys=True)


def load_spec(fh: IO[str]) -> FieldSpec:
    return spec_from_json(json.load(fh))
