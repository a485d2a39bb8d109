"""Built-in metrics addressable by name.

Every constructor returns a :class:`~c1lab.chart_metric.MetricField` whose
component closures accept batches of points.  Analytic first derivatives are
supplied where they are short to write down; everything else falls back to
finite differences.
"""

from __future__ import annotations

from typing import Callable, Dict, Optional

import numpy as np

from .chart_metric import MetricField
from .errors import InvalidInputError

__all__ = [
    "minkowski",
    "c1_model",
    "c11_model",
    "schwarzschild",
    "painleve_gullstrand",
    "sphere_block",
    "nec_violating",
    "constant_metric",
    "BUILTIN_METRICS",
    "builtin_metric",
]


def _box(lower, upper, dim):
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    if lower.shape != (dim,) or upper.shape != (dim,):
        raise InvalidInputError(f"box bounds must have length {dim}")
    return lower, upper


def _diag_field(name, lower, upper, diag: Callable, ddiag: Optional[Callable], **kw) -> MetricField:
    """Diagonal metric from ``diag(x) -> (..., n)`` and ``ddiag(x) -> (..., n_k, n)``."""
    n = len(lower)

    def components(x):
        d = diag(x)
        out = np.zeros(d.shape + (n,))
        idx = np.arange(n)
        out[..., idx, idx] = d
        return out

    def first(x):
        dd = ddiag(x)
        out = np.zeros(dd.shape + (n,))
        idx = np.arange(n)
        out[..., idx, idx] = dd
        return out

    return MetricField(name=name, dim=n, lower=lower, upper=upper, components=components,
                       first_derivs=first if ddiag is not None else None, **kw)


def constant_metric(matrix, lower, upper, name: str = "constant") -> MetricField:
    g0 = np.asarray(matrix, dtype=float)
    n = g0.shape[0]
    lower, upper = _box(lower, upper, n)

    def components(x):
        x = np.asarray(x)
        return np.broadcast_to(g0, x.shape[:-1] + (n, n)).copy()

    def first(x):
        x = np.asarray(x)
        return np.zeros(x.shape[:-1] + (n, n, n))

    def second(x):
        x = np.asarray(x)
        return np.zeros(x.shape[:-1] + (n, n, n, n))

    return MetricField(name=name, dim=n, lower=lower, upper=upper, components=components,
                       first_derivs=first, second_derivs=second, regularity="smooth",
                       dependent_axes=(), params={"constant": True})


def minkowski(dim: int = 4, lower=None, upper=None) -> MetricField:
    lower = [-10.0] * dim if lower is None else lower
    upper = [10.0] * dim if upper is None else upper
    eta = np.diag([-1.0] + [1.0] * (dim - 1))
    return constant_metric(eta, lower, upper, name="minkowski")


def c1_model(lower=(-2, -2, -2, -2), upper=(2, 2, 2, 2), power: float = 1.5) -> MetricField:
    """``-dt^2 + (1 + |x1|^p) dx1^2 + dx2^2 + dx3^2``; C^1 but not C^{1,1} at x1 = 0 for 1 < p < 2."""
    lower, upper = _box(lower, upper, 4)

    def diag(x):
        a = 1.0 + np.abs(x[..., 1]) ** power
        one = np.ones_like(a)
        return np.stack([-one, a, one, one], axis=-1)

    def ddiag(x):
        s = x[..., 1]
        da = power * np.sign(s) * np.abs(s) ** (power - 1.0)
        z = np.zeros_like(s)
        row1 = np.stack([z, da, z, z], axis=-1)
        zero_row = np.zeros_like(row1)
        return np.stack([zero_row, row1, zero_row, zero_row], axis=-2)

    regularity = "smooth" if power == 2 else "C1"
    return _diag_field("c1-model", lower, upper, diag, ddiag, regularity=regularity,
                       dependent_axes=(1,), params={"power": power})


def c11_model(lower=(-2, -1, -2, -2), upper=(2, 1, 2, 2), k: float = 0.5) -> MetricField:
    """``g11 = 1 + k x1|x1|``: first derivatives Lipschitz but not differentiable."""
    lower, upper = _box(lower, upper, 4)

    def diag(x):
        s = x[..., 1]
        a = 1.0 + k * s * np.abs(s)
        one = np.ones_like(a)
        return np.stack([-one, a, one, one], axis=-1)

    def ddiag(x):
        s = x[..., 1]
        z = np.zeros_like(s)
        row1 = np.stack([z, 2.0 * k * np.abs(s), z, z], axis=-1)
        zero_row = np.zeros_like(row1)
        return np.stack([zero_row, row1, zero_row, zero_row], axis=-2)

    return _diag_field("c11-model", lower, upper, diag, ddiag, regularity="C11",
                       dependent_axes=(1,), params={"k": k})


def schwarzschild(m: float = 1.0, lower=None, upper=None) -> MetricField:
    """Schwarzschild coordinates ``(t, r, theta, phi)`` on the exterior ``r > 2m``."""
    lower = (-1e5 * m, 2.0 * m * 1.05, 0.05, -np.pi) if lower is None else lower
    upper = (1e5 * m, 1e4 * m, np.pi - 0.05, np.pi) if upper is None else upper
    lower, upper = _box(lower, upper, 4)
    if lower[1] <= 2 * m:
        raise InvalidInputError("Schwarzschild chart must stay outside r = 2m")

    def diag(x):
        r = x[..., 1]
        th = x[..., 2]
        f = 1.0 - 2.0 * m / r
        return np.stack([-f, 1.0 / f, r * r, (r * np.sin(th)) ** 2], axis=-1)

    def ddiag(x):
        r = x[..., 1]
        th = x[..., 2]
        f = 1.0 - 2.0 * m / r
        fp = 2.0 * m / (r * r)
        z = np.zeros_like(r)
        d_r = np.stack([-fp, -fp / f**2, 2.0 * r, 2.0 * r * np.sin(th) ** 2], axis=-1)
        d_th = np.stack([z, z, z, 2.0 * r * r * np.sin(th) * np.cos(th)], axis=-1)
        zero_row = np.zeros_like(d_r)
        return np.stack([zero_row, d_r, d_th, zero_row], axis=-2)

    return _diag_field("schwarzschild", lower, upper, diag, ddiag, regularity="smooth",
                       dependent_axes=(1, 2), params={"m": m})


def painleve_gullstrand(m: float = 1.0, lower=(-0.5, -2, -2, -2), upper=(1.5, 2, 2, 2),
                        r_excise: float = 0.05) -> MetricField:
    """Cartesian Painleve-Gullstrand chart ``-dt^2 + |dx + sqrt(2m/r) xhat dt|^2``.

    Constant-t slices are flat and spacelike everywhere, including inside the
    horizon.  Points with ``r < r_excise`` are excluded from the domain.
    """
    lower, upper = _box(lower, upper, 4)
    s2m = np.sqrt(2.0 * m)

    def shift(x):
        xs = x[..., 1:]
        r = np.linalg.norm(xs, axis=-1)
        return s2m * xs / r[..., None] ** 1.5, r

    def components(x):
        x = np.asarray(x, dtype=float)
        beta, r = shift(x)
        g = np.zeros(x.shape[:-1] + (4, 4))
        g[..., 0, 0] = -1.0 + 2.0 * m / r
        g[..., 0, 1:] = beta
        g[..., 1:, 0] = beta
        g[..., 1, 1] = g[..., 2, 2] = g[..., 3, 3] = 1.0
        return g

    def first(x):
        x = np.asarray(x, dtype=float)
        xs = x[..., 1:]
        r = np.linalg.norm(xs, axis=-1)
        out = np.zeros(x.shape[:-1] + (4, 4, 4))
        for k in range(3):
            out[..., k + 1, 0, 0] = -2.0 * m * xs[..., k] / r**3
            for i in range(3):
                d = s2m * ((1.0 if i == k else 0.0) * r**-1.5
                           - 1.5 * xs[..., i] * xs[..., k] * r**-3.5)
                out[..., k + 1, 0, i + 1] = d
                out[..., k + 1, i + 1, 0] = d
        return out

    def future(x):
        x = np.asarray(x, dtype=float)
        beta, _ = shift(x)
        u = np.empty(x.shape)
        u[..., 0] = 1.0
        u[..., 1:] = -beta
        return u

    def excluded(x):
        return np.linalg.norm(np.asarray(x)[..., 1:], axis=-1) < r_excise

    return MetricField(name="painleve-gullstrand", dim=4, lower=lower, upper=upper,
                       components=components, first_derivs=first, regularity="smooth",
                       future=future, excluded=excluded, dependent_axes=(1, 2, 3),
                       params={"m": m, "r_excise": r_excise})


def sphere_block(lower=(-1, 0.2, -np.pi, -1), upper=(1, np.pi - 0.2, np.pi, 1)) -> MetricField:
    """``-dt^2 + dtheta^2 + sin^2(theta) dphi^2 + dz^2``: a unit 2-sphere inside the spatial part."""
    lower, upper = _box(lower, upper, 4)

    def diag(x):
        th = x[..., 1]
        one = np.ones_like(th)
        return np.stack([-one, one, np.sin(th) ** 2, one], axis=-1)

    def ddiag(x):
        th = x[..., 1]
        z = np.zeros_like(th)
        row = np.stack([z, z, 2.0 * np.sin(th) * np.cos(th), z], axis=-1)
        zero_row = np.zeros_like(row)
        return np.stack([zero_row, row, zero_row, zero_row], axis=-2)

    return _diag_field("sphere-block", lower, upper, diag, ddiag, regularity="smooth",
                       dependent_axes=(1,))


def nec_violating(lower=(-1.5, -2, -2, -2), upper=(1.5, 2, 2, 2)) -> MetricField:
    """``-dt^2 + exp(t^2) dx1^2 + dx2^2 + dx3^2``; Ric(d_t + d_2, d_t + d_2) = -(1 + t^2)."""
    lower, upper = _box(lower, upper, 4)

    def diag(x):
        t = x[..., 0]
        one = np.ones_like(t)
        return np.stack([-one, np.exp(t * t), one, one], axis=-1)

    def ddiag(x):
        t = x[..., 0]
        z = np.zeros_like(t)
        row = np.stack([z, 2.0 * t * np.exp(t * t), z, z], axis=-1)
        zero_row = np.zeros_like(row)
        return np.stack([row, zero_row, zero_row, zero_row], axis=-2)

    return _diag_field("nec-violating", lower, upper, diag, ddiag, regularity="smooth",
                       dependent_axes=(0,))


BUILTIN_METRICS: Dict[str, Callable[..., MetricField]] = {
    "minkowski": minkowski,
    "c1-model": c1_model,
    "c11-model": c11_model,
    "schwarzschild": schwarzschild,
    "painleve-gullstrand": painleve_gullstrand,
    "sphere-block": sphere_block,
    "nec-violating": nec_violating,
}


def builtin_metric(name: str, **params) -> MetricField:
    try:
        ctor = BUILTIN_METRICS[name]
    except KeyError:
        raise InvalidInputError(f"unknown metric {name!r}; known: {sorted(BUILTIN_METRICS)}") from None
    return ctor(**params)
