"""Lorentzian metrics on a single chart box.

A :class:`MetricField` bundles a batched component evaluator with optional
analytic derivatives.  Missing first derivatives are produced by 4th-order
central differences, which is well posed for C^1 metrics.  Second derivatives
are only available on fields tagged ``smooth``; raw C^1 fields refuse them so
that curvature of such fields goes through the distributional pairing.

Signature convention is (-,+,...,+).  Arrays of points have shape ``(..., n)``,
metric values ``(..., n, n)`` and first derivatives ``(..., n, n, n)`` indexed
``[..., k, i, j] = d_k g_ij``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import DomainError, InvalidInputError, InvalidMetricError, RegularityError

__all__ = [
    "REGULARITIES",
    "CausalCharacter",
    "MetricField",
    "TangentVector",
    "BackgroundMetric",
    "eval_metric",
    "causal_character",
    "is_future_directed",
    "cone_compare",
    "null_directions",
    "sphere_directions",
    "cone_section",
]

REGULARITIES = ("smooth", "C11", "C1")

_EPS = np.finfo(float).eps


def _fd_step(x: np.ndarray, step: Optional[float]) -> float:
    if step is not None:
        return float(step)
    scale = max(1.0, float(np.max(np.abs(x)))) if np.size(x) else 1.0
    return max(1e-4, _EPS ** (1.0 / 3.0) * scale)


def _central_diff(func: Callable, x: np.ndarray, h: float) -> np.ndarray:
    """4th-order central differences of ``func`` along every chart axis.

    Returns an array with a new axis inserted right after the batch axes.
    """
    n = x.shape[-1]
    out = []
    for k in range(n):
        e = np.zeros(n)
        e[k] = h
        f2m = func(x - 2 * e)
        f1m = func(x - e)
        f1p = func(x + e)
        f2p = func(x + 2 * e)
        out.append((f2m - 8.0 * f1m + 8.0 * f1p - f2p) / (12.0 * h))
    batch = x.ndim - 1
    return np.stack(out, axis=batch)


class CausalCharacter(str, enum.Enum):
    TIMELIKE = "timelike"
    NULL = "null"
    SPACELIKE = "spacelike"


@dataclass(eq=False)
class MetricField:
    """A Lorentzian metric on the box ``lower <= x <= upper``.

    ``components`` maps points ``(..., n)`` to matrices ``(..., n, n)``.
    ``first_derivs``/``second_derivs`` are optional analytic closures; when
    absent they are approximated by central differences of the next lower
    order.  ``excluded`` optionally marks interior points where the field is
    undefined (e.g. a curvature singularity), and ``future`` returns the
    designated future timelike vector field (default ``d/dt``).

    ``dependent_axes`` lists the coordinates the components can depend on; the
    regularizer uses it to reduce convolutions.  ``None`` means all axes.
    """

    name: str
    dim: int
    lower: np.ndarray
    upper: np.ndarray
    components: Callable[[np.ndarray], np.ndarray]
    first_derivs: Optional[Callable[[np.ndarray], np.ndarray]] = None
    second_derivs: Optional[Callable[[np.ndarray], np.ndarray]] = None
    regularity: str = "smooth"
    future: Optional[Callable[[np.ndarray], np.ndarray]] = None
    excluded: Optional[Callable[[np.ndarray], np.ndarray]] = None
    dependent_axes: Optional[tuple] = None
    fd_step: Optional[float] = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        self.lower = np.asarray(self.lower, dtype=float)
        self.upper = np.asarray(self.upper, dtype=float)
        if self.dim < 3:
            raise InvalidInputError(f"dimension must be >= 3, got {self.dim}")
        if self.lower.shape != (self.dim,) or self.upper.shape != (self.dim,):
            raise InvalidInputError("box bounds must have shape (dim,)")
        if np.any(self.upper <= self.lower):
            raise InvalidInputError("empty chart box")
        if self.regularity not in REGULARITIES:
            raise InvalidInputError(f"unknown regularity tag {self.regularity!r}")
        if self.dependent_axes is not None:
            self.dependent_axes = tuple(sorted(int(a) for a in self.dependent_axes))

    # -- domain -----------------------------------------------------------

    def contains(self, x, margin: float = 0.0) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        inside = np.all((x >= self.lower + margin) & (x <= self.upper - margin), axis=-1)
        if self.excluded is not None:
            inside = inside & ~np.asarray(self.excluded(x), dtype=bool)
        return inside

    def _check(self, x: np.ndarray, margin: float = 0.0):
        if x.shape[-1] != self.dim:
            raise InvalidInputError(f"points must have last axis {self.dim}, got {x.shape}")
        if not np.all(self.contains(x, margin)):
            raise DomainError(f"point(s) outside the domain of {self.name!r} (margin {margin:g})")

    # -- evaluation -------------------------------------------------------

    def metric(self, x, check: bool = True) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if check:
            self._check(x)
        return np.asarray(self.components(x), dtype=float)

    def d_metric(self, x, check: bool = True) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.first_derivs is not None:
            if check:
                self._check(x)
            return np.asarray(self.first_derivs(x), dtype=float)
        h = _fd_step(x, self.fd_step)
        if check:
            self._check(x)
            self._check_stencil(x, 2 * h)
        return _central_diff(self.components, x, h)

    def dd_metric(self, x, check: bool = True, step: Optional[float] = None) -> np.ndarray:
        """Second derivatives ``[..., l, k, i, j] = d_l d_k g_ij``."""
        if self.regularity != "smooth":
            raise RegularityError(
                f"{self.name!r} is tagged {self.regularity}; mollify it first or use "
                "the distributional pairing"
            )
        x = np.asarray(x, dtype=float)
        if self.second_derivs is not None:
            if check:
                self._check(x)
            return np.asarray(self.second_derivs(x), dtype=float)
        inner_fd = self.first_derivs is None
        h = step if step is not None else (1e-3 if inner_fd else _fd_step(x, self.fd_step) * 10)
        if check:
            self._check(x)
            reach = 2 * h + (2 * _fd_step(x, self.fd_step) if inner_fd else 0.0)
            self._check_stencil(x, reach)
        return _central_diff(lambda y: self.d_metric(y, check=False), x, h)

    def _check_stencil(self, x: np.ndarray, reach: float):
        lo = np.all(x - reach >= self.lower, axis=-1)
        hi = np.all(x + reach <= self.upper, axis=-1)
        if not np.all(lo & hi):
            raise DomainError(f"finite-difference stencil leaves the box of {self.name!r}")

    def inverse(self, x, check: bool = True) -> np.ndarray:
        g = self.metric(x, check=check)
        try:
            return np.linalg.inv(g)
        except np.linalg.LinAlgError as exc:
            raise InvalidMetricError(f"singular metric in {self.name!r}") from exc

    def future_vector(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.future is not None:
            return np.asarray(self.future(x), dtype=float)
        e0 = np.zeros(x.shape)
        e0[..., 0] = 1.0
        return e0

    def inner(self, x, u, v) -> np.ndarray:
        g = self.metric(x)
        return np.einsum("...i,...ij,...j->...", np.asarray(u, float), g, np.asarray(v, float))

    def check_signature(self, x) -> None:
        """Raise unless the metric at every point has signature (-,+,...,+)."""
        g = self.metric(x)
        if not np.allclose(g, np.swapaxes(g, -1, -2), atol=1e-12, rtol=0):
            raise InvalidMetricError(f"{self.name!r} is not symmetric")
        ev = np.linalg.eigvalsh(g)
        neg = np.sum(ev < 0, axis=-1)
        zero = np.any(np.abs(ev) < 1e-14, axis=-1)
        if np.any(neg != 1) or np.any(zero):
            raise InvalidMetricError(f"{self.name!r} is not Lorentzian at some sampled point")

    def with_components(self, name: str, components, first_derivs=None, second_derivs=None,
                        regularity: str = "smooth", lower=None, upper=None, **extra) -> "MetricField":
        """A new field on (a sub-box of) the same chart sharing orientation data."""
        return MetricField(
            name=name,
            dim=self.dim,
            lower=self.lower if lower is None else lower,
            upper=self.upper if upper is None else upper,
            components=components,
            first_derivs=first_derivs,
            second_derivs=second_derivs,
            regularity=regularity,
            future=self.future,
            excluded=self.excluded,
            dependent_axes=extra.pop("dependent_axes", self.dependent_axes),
            fd_step=self.fd_step,
            params=extra.pop("params", dict(self.params)),
        )


@dataclass
class TangentVector:
    base_point: np.ndarray
    components: np.ndarray

    def __post_init__(self):
        self.base_point = np.asarray(self.base_point, dtype=float)
        self.components = np.asarray(self.components, dtype=float)


@dataclass
class BackgroundMetric:
    """Riemannian background metric ``h``; Euclidean chart metric by default."""

    matrix: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def at(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.matrix is None:
            return np.broadcast_to(np.eye(x.shape[-1]), x.shape + (x.shape[-1],))
        return np.asarray(self.matrix(x), dtype=float)

    def norm(self, x, v) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        if self.matrix is None:
            return np.linalg.norm(v, axis=-1)
        return np.sqrt(np.einsum("...i,...ij,...j->...", v, self.at(x), v))

    def distance(self, p, q, nodes: int = 16) -> np.ndarray:
        """Length of the chord from p to q; exact for the Euclidean default."""
        p = np.asarray(p, dtype=float)
        q = np.asarray(q, dtype=float)
        if self.matrix is None:
            return np.linalg.norm(q - p, axis=-1)
        s, w = np.polynomial.legendre.leggauss(nodes)
        s = 0.5 * (s + 1.0)
        d = q - p
        total = 0.0
        for si, wi in zip(s, w):
            total = total + 0.5 * wi * self.norm(p + si * d, d)
        return total


def eval_metric(field: MetricField, x) -> np.ndarray:
    """g_ij(x), checked for domain membership."""
    return field.metric(x)


def causal_character(field: MetricField, v: TangentVector, tol: float = 1e-9,
                     h: Optional[BackgroundMetric] = None) -> CausalCharacter:
    """Classify ``v`` by the sign of g(v, v) / |v|_h^2 with a null band ``[-tol, tol]``.

    Normalising by the background norm makes the verdict invariant under
    positive rescaling of ``v``.
    """
    comp = v.components
    h = h or BackgroundMetric()
    nrm = float(h.norm(v.base_point, comp))
    if nrm == 0.0:
        raise InvalidInputError("zero vector has no causal character")
    q = float(field.inner(v.base_point, comp, comp)) / nrm**2
    if q < -tol:
        return CausalCharacter.TIMELIKE
    if q > tol:
        return CausalCharacter.SPACELIKE
    return CausalCharacter.NULL


def is_future_directed(field: MetricField, v: TangentVector) -> bool:
    """True when a causal ``v`` lies in the cone of the designated future field."""
    u = field.future_vector(v.base_point)
    return float(field.inner(v.base_point, u, v.components)) < 0.0


def sphere_directions(count: int, dim: int = 3) -> np.ndarray:
    """Deterministic, nearly uniform unit vectors in R^dim."""
    if count < 1:
        raise InvalidInputError("need at least one direction")
    if dim == 1:
        return np.array([[1.0], [-1.0]])[: max(count, 1)]
    if dim == 2:
        ang = 2 * np.pi * (np.arange(count) + 0.5) / count
        return np.stack([np.cos(ang), np.sin(ang)], axis=-1)
    if dim == 3:
        i = np.arange(count) + 0.5
        z = 1.0 - 2.0 * i / count
        r = np.sqrt(np.clip(1.0 - z * z, 0.0, None))
        phi = np.pi * (1.0 + 5.0**0.5) * i
        return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=-1)
    # Higher dimensions: normalised Gaussian samples from a fixed stream.
    rng = np.random.default_rng(12345 + dim)
    u = rng.standard_normal((count, dim))
    return u / np.linalg.norm(u, axis=-1, keepdims=True)


def cone_section(g: np.ndarray):
    """Cross-section of the future cone at unit time component.

    For ``X = (1, v)`` the causal condition is ``(v - c)^T A (v - c) <= R^2``
    with ``A`` the spatial block.  Returns ``(c, A, R2)``; ``R2 > 0`` iff the
    chart time function is a time function at that point.
    """
    g00 = g[..., 0, 0]
    b = g[..., 0, 1:]
    A = g[..., 1:, 1:]
    Ainv_b = np.linalg.solve(A, b[..., None])[..., 0]
    c = -Ainv_b
    R2 = np.einsum("...i,...i->...", b, Ainv_b) - g00
    return c, A, R2


def null_directions(g: np.ndarray, samples: int) -> np.ndarray:
    """``samples`` future null vectors of the constant matrix ``g``.

    Parametrises the unit-time section of the cone, so every null ray is
    reachable even when d/dt itself is not timelike.
    """
    c, A, R2 = cone_section(g)
    if not R2 > 0:
        raise InvalidMetricError("chart time is not a time function here; cone section empty")
    L = np.linalg.cholesky(np.linalg.inv(A))
    s = sphere_directions(samples, g.shape[-1] - 1)
    v = c + np.sqrt(R2) * s @ L.T
    X = np.concatenate([np.ones((samples, 1)), v], axis=1)
    return X / np.linalg.norm(X, axis=1, keepdims=True)


def cone_compare(g1: MetricField, g2: MetricField, x, samples: int = 200) -> str:
    """``"narrower"`` iff every sampled g1-null vector is g2-timelike at ``x``."""
    if samples < 100:
        raise InvalidInputError("cone_compare needs at least 100 samples")
    x = np.asarray(x, dtype=float)
    g1.check_signature(x)
    g2.check_signature(x)
    X = null_directions(g1.metric(x), samples)
    q2 = np.einsum("ki,ij,kj->k", X, g2.metric(x), X)
    return "narrower" if np.all(q2 < 0.0) else "not_narrower"
