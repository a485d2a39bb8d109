"""Spacelike slices, enclosing codimension-2 surfaces and their null normals.

The slice is a graph ``t = tau(y)`` over the spatial chart coordinates ``y``
and the surface is the level set ``sigma(y) = 0`` inside it, with
``sigma < 0`` on the inner side.  For a normal field ``nu`` of S,

    g(H, nu) = -div_S nu = -sum_a g(e_a, nabla_{e_a} nu)

over a g-orthonormal frame ``e_a`` of TS.  With this convention an ordinary
round sphere in flat space has ``k_- = g(H, K_-) = 2/r > 0``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple

import numpy as np

from .chart_metric import MetricField, sphere_directions
from .curvature import christoffel_symbols
from .errors import DomainError, InvalidInputError, SingularSurfaceError

__all__ = [
    "HypersurfaceData",
    "EnclosingSurfaceData",
    "Normals",
    "flat_slice",
    "round_sphere",
    "coordinate_level",
    "plane",
    "build_normals",
    "tangent_frame",
    "mean_curvature",
    "convergence_pair",
    "sample_surface",
    "TrappedReport",
    "inner_trapped_test",
    "area_variation",
]


def _grad_fd(func: Callable, y: np.ndarray, h: float = 1e-5) -> np.ndarray:
    m = y.shape[-1]
    out = np.empty(y.shape)
    for a in range(m):
        e = np.zeros(m)
        e[a] = h
        out[..., a] = (func(y - 2 * e) - 8 * func(y - e) + 8 * func(y + e) - func(y + 2 * e)) / (12 * h)
    return out


@dataclass(eq=False)
class HypersurfaceData:
    """Spacelike slice ``t = tau(y)``; ``dtau`` defaults to finite differences."""

    tau: Callable[[np.ndarray], np.ndarray]
    dtau: Optional[Callable[[np.ndarray], np.ndarray]] = None
    name: str = "slice"

    def time(self, y) -> np.ndarray:
        return np.asarray(self.tau(np.asarray(y, dtype=float)), dtype=float)

    def grad(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        if self.dtau is not None:
            return np.asarray(self.dtau(y), dtype=float)
        return _grad_fd(self.time, y)

    def lift(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        return np.concatenate([self.time(y)[..., None], y], axis=-1)

    def tangents(self, y) -> np.ndarray:
        """Coordinate tangent vectors ``E_a = (d_a tau, e_a)``, shape ``(..., n-1, n)``."""
        y = np.asarray(y, dtype=float)
        m = y.shape[-1]
        E = np.zeros(y.shape[:-1] + (m, m + 1))
        E[..., :, 0] = self.grad(y)
        E[..., :, 1:] = np.eye(m)
        return E

    def unit_normal(self, field_: MetricField, y) -> np.ndarray:
        """Future unit normal ``U``; ``g(U, U) = -1``."""
        y = np.asarray(y, dtype=float)
        x = self.lift(y)
        ncov = np.concatenate([np.ones(y.shape[:-1] + (1,)), -self.grad(y)], axis=-1)
        ginv = field_.inverse(x, check=False)
        up = np.einsum("...ab,...b->...a", ginv, ncov)
        norm2 = np.einsum("...a,...a->...", up, ncov)
        if np.any(norm2 >= 0):
            raise SingularSurfaceError("slice is not spacelike here")
        U = -up / np.sqrt(-norm2)[..., None]
        fut = field_.future_vector(x)
        sign = np.sign(-np.einsum("...i,...ij,...j->...", U, field_.metric(x, check=False), fut))
        return U * sign[..., None]


@dataclass(eq=False)
class EnclosingSurfaceData:
    """Level set ``sigma(y) = 0`` in the slice; ``sigma < 0`` inside.

    ``center`` and ``scale`` seed the sampler: points ``center + scale * u`` for
    unit directions ``u`` are projected onto the level set by Newton steps.
    """

    sigma: Callable[[np.ndarray], np.ndarray]
    dsigma: Optional[Callable[[np.ndarray], np.ndarray]] = None
    center: Optional[np.ndarray] = None
    scale: float = 1.0
    name: str = "surface"
    seeds: Optional[Callable[[int], np.ndarray]] = None

    def value(self, y) -> np.ndarray:
        return np.asarray(self.sigma(np.asarray(y, dtype=float)), dtype=float)

    def grad(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        if self.dsigma is not None:
            return np.asarray(self.dsigma(y), dtype=float)
        return _grad_fd(self.value, y)


def flat_slice(dim_spatial: int = 3, t0: float = 0.0) -> HypersurfaceData:
    return HypersurfaceData(tau=lambda y: np.full(np.shape(y)[:-1], t0),
                            dtau=lambda y: np.zeros(np.shape(y)), name=f"t={t0:g}")


def round_sphere(radius: float, center=(0.0, 0.0, 0.0)) -> EnclosingSurfaceData:
    """Coordinate sphere ``|y - center| = radius`` in Cartesian spatial coordinates."""
    c = np.asarray(center, dtype=float)

    def sigma(y):
        return np.linalg.norm(y - c, axis=-1) - radius

    def dsigma(y):
        d = y - c
        return d / np.linalg.norm(d, axis=-1, keepdims=True)

    def seeds(count):
        return c + radius * sphere_directions(count, c.size)

    return EnclosingSurfaceData(sigma=sigma, dsigma=dsigma, center=c, scale=radius,
                                name=f"sphere(r={radius:g})", seeds=seeds)


def coordinate_level(axis: int, value: float, dim_spatial: int = 3, seeds=None,
                     name: Optional[str] = None) -> EnclosingSurfaceData:
    """``y[axis] = value``, e.g. ``r = 4`` in spherical coordinates."""

    def sigma(y):
        return y[..., axis] - value

    def dsigma(y):
        out = np.zeros(np.shape(y))
        out[..., axis] = 1.0
        return out

    return EnclosingSurfaceData(sigma=sigma, dsigma=dsigma, name=name or f"y{axis}={value:g}",
                                seeds=seeds)


def plane(normal, offset: float = 0.0, center=None, scale: float = 1.0) -> EnclosingSurfaceData:
    nrm = np.asarray(normal, dtype=float)
    nrm = nrm / np.linalg.norm(nrm)
    c = np.zeros_like(nrm) if center is None else np.asarray(center, dtype=float)

    def sigma(y):
        return y @ nrm - offset

    def dsigma(y):
        return np.broadcast_to(nrm, np.shape(y)).copy()

    def seeds(count):
        # a patch of the plane around the projection of center
        base = c - (c @ nrm - offset) * nrm
        q, _ = np.linalg.qr(np.column_stack([nrm, np.eye(nrm.size)]))
        t = q[:, 1:nrm.size].T
        side = int(np.ceil(np.sqrt(count)))
        u = np.linspace(-scale, scale, side)
        grid = np.stack(np.meshgrid(u, u, indexing="ij"), -1).reshape(-1, 2)[:count]
        return base + grid @ t[:2]

    return EnclosingSurfaceData(sigma=sigma, dsigma=dsigma, center=c, scale=scale,
                                name="plane", seeds=seeds)


# -- normals -----------------------------------------------------------------


@dataclass
class Normals:
    point: np.ndarray
    U: np.ndarray
    N_plus: np.ndarray
    N_minus: np.ndarray
    K_plus: np.ndarray
    K_minus: np.ndarray


def _spatial(x, sigma_surface: HypersurfaceData, dim: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[-1] == dim:
        return x[..., 1:]
    if x.shape[-1] == dim - 1:
        return x
    raise InvalidInputError(f"point must have {dim} or {dim - 1} components")


def _plus_normal(field_: MetricField, Sigma: HypersurfaceData, S: EnclosingSurfaceData, y):
    """Unit normal of S inside the slice pointing towards increasing sigma."""
    x = Sigma.lift(y)
    E = Sigma.tangents(y)
    g = field_.metric(x, check=False)
    q = np.einsum("...ai,...ij,...bj->...ab", E, g, E)
    ds = S.grad(y)
    if np.any(np.linalg.norm(ds, axis=-1) < 1e-12):
        raise SingularSurfaceError("level-set gradient vanishes")
    coef = np.linalg.solve(q, ds[..., None])[..., 0]
    N = np.einsum("...a,...ai->...i", coef, E)
    nn = np.einsum("...i,...ij,...j->...", N, g, N)
    return N / np.sqrt(nn)[..., None]


def build_normals(field_: MetricField, Sigma: HypersurfaceData, S: EnclosingSurfaceData, x,
                  tol: float = 1e-8) -> Normals:
    """``U``, ``N_+``, ``N_-`` and the null normals ``K_+- = U + N_+-`` at a point of S."""
    n = field_.dim
    y = _spatial(x, Sigma, n)
    res = float(np.max(np.abs(S.value(y))))
    if res > tol:
        raise InvalidInputError(f"point is not on S (level-set residual {res:.2e})")
    p = Sigma.lift(y)
    if not np.all(field_.contains(p)):
        raise DomainError("surface point outside the chart domain")
    U = Sigma.unit_normal(field_, y)
    Np = _plus_normal(field_, Sigma, S, y)
    return Normals(point=p, U=U, N_plus=Np, N_minus=-Np, K_plus=U + Np, K_minus=U - Np)


def tangent_frame(field_: MetricField, Sigma: HypersurfaceData, S: EnclosingSurfaceData, y,
                  tol: float = 1e-10) -> np.ndarray:
    """g-orthonormal frame of TS at one point: rows, shape ``(n-2, n)``.

    Coordinate tangents of the slice are projected off the level-set gradient
    and orthonormalised by modified Gram-Schmidt, taking at each step the
    remaining candidate of largest norm.
    """
    y = np.asarray(y, dtype=float)
    x = Sigma.lift(y)
    g = field_.metric(x, check=False)
    ds = S.grad(y)
    ds = ds / np.linalg.norm(ds)
    m = y.size
    cand_spatial = np.eye(m) - np.outer(ds, ds)
    grad_tau = Sigma.grad(y)
    cands = [np.concatenate([[grad_tau @ w], w]) for w in cand_spatial]
    frame: List[np.ndarray] = []
    while len(frame) < m - 1:
        best, best_norm = None, -1.0
        for c in cands:
            v = c.copy()
            for e in frame:
                v = v - (e @ g @ v) * e
            nv = v @ g @ v
            if nv > best_norm:
                best, best_norm = v, nv
        if best_norm <= tol:
            raise SingularSurfaceError("degenerate induced metric on S")
        frame.append(best / np.sqrt(best_norm))
    return np.array(frame)


def _divergence(field_: MetricField, Sigma: HypersurfaceData, normal: Callable, y,
                frame: np.ndarray, h: float = 1e-4) -> float:
    """``sum_a g(e_a, nabla_{e_a} nu)`` for a normal field given on the slice."""
    x = Sigma.lift(y)
    g = field_.metric(x, check=False)
    gamma = christoffel_symbols(g, field_.d_metric(x, check=False))
    nu = normal(y)
    total = 0.0
    for e in frame:
        w = e[1:]
        dnu = (normal(y - 2 * h * w) - 8 * normal(y - h * w) + 8 * normal(y + h * w)
               - normal(y + 2 * h * w)) / (12 * h)
        cov = dnu + np.einsum("kij,i,j->k", gamma, e, nu)
        total += float(e @ g @ cov)
    return total


def mean_curvature(field_: MetricField, Sigma: HypersurfaceData, S: EnclosingSurfaceData, x,
                   h: float = 1e-4) -> np.ndarray:
    """Mean curvature vector ``H = div_S(U) U - div_S(N_+) N_+`` of S at ``x``."""
    n = field_.dim
    y = _spatial(x, Sigma, n)
    nm = build_normals(field_, Sigma, S, y)
    frame = tangent_frame(field_, Sigma, S, y)
    divU = _divergence(field_, Sigma, lambda z: Sigma.unit_normal(field_, z), y, frame, h)
    divN = _divergence(field_, Sigma, lambda z: _plus_normal(field_, Sigma, S, z), y, frame, h)
    return divU * nm.U - divN * nm.N_plus


def convergence_pair(field_: MetricField, Sigma: HypersurfaceData, S: EnclosingSurfaceData,
                     x, h: float = 1e-4) -> Tuple[float, float]:
    """``(k_+, k_-)`` with ``k_+- = g(H, K_+-)``."""
    n = field_.dim
    y = _spatial(x, Sigma, n)
    nm = build_normals(field_, Sigma, S, y)
    H = mean_curvature(field_, Sigma, S, y, h)
    g = field_.metric(nm.point)
    return float(H @ g @ nm.K_plus), float(H @ g @ nm.K_minus)


def sample_surface(Sigma: HypersurfaceData, S: EnclosingSurfaceData, count: int,
                   tol: float = 1e-12, max_iter: int = 50) -> np.ndarray:
    """Spatial points on S from Newton projection of the seed points along grad sigma."""
    if S.seeds is not None:
        y = np.asarray(S.seeds(count), dtype=float)
    elif S.center is not None:
        c = np.asarray(S.center, dtype=float)
        y = c + S.scale * sphere_directions(count, c.size)
    else:
        raise InvalidInputError("surface has neither seeds nor a center to sample from")
    for _ in range(max_iter):
        val = S.value(y)
        if np.max(np.abs(val)) < tol:
            break
        gr = S.grad(y)
        y = y - (val / np.sum(gr * gr, axis=-1))[..., None] * gr
    if np.max(np.abs(S.value(y))) > 1e-9:
        raise SingularSurfaceError("Newton projection onto S did not converge")
    return y


@dataclass
class TrappedReport:
    verdict: str
    min_k_minus: float
    witness: np.ndarray
    n_samples: int
    k_minus: np.ndarray = field(repr=False, default=None)

    def to_json(self, extra: Optional[dict] = None) -> str:
        out = dict(extra or {})
        out.update({"verdict": self.verdict, "min_k_minus": float(self.min_k_minus),
                    "witness": [float(v) for v in self.witness], "n_samples": self.n_samples})
        return json.dumps(out, indent=2, sort_keys=True)


def inner_trapped_test(field_: MetricField, Sigma: HypersurfaceData, S: EnclosingSurfaceData,
                       n_samples: int = 64, tol: float = 1e-8) -> TrappedReport:
    """``trapped`` iff ``k_-`` exceeds ``tol`` at every sampled point of S."""
    if n_samples < 1:
        raise InvalidInputError("need at least one sample")
    ys = sample_surface(Sigma, S, n_samples)
    km = np.array([convergence_pair(field_, Sigma, S, y)[1] for y in ys])
    k = int(np.argmin(km))
    verdict = "trapped" if km[k] > tol else "not_trapped"
    return TrappedReport(verdict=verdict, min_k_minus=float(km[k]), witness=Sigma.lift(ys[k]),
                         n_samples=n_samples, k_minus=km)


def area_variation(field_: MetricField, points: Callable, normal_field: Callable, params_grid,
                   s: float = 1e-4) -> float:
    """``-(d/ds) log Area`` of a parametrised surface pushed along a normal field.

    ``points(u)`` maps parameters ``(..., 2)`` to chart points and
    ``normal_field(u)`` gives the push direction.  The area of
    ``X_s(u) = points(u) + s * normal_field(u)`` is integrated with the
    rule given by ``params_grid = (nodes, weights)``.
    """
    nodes, weights = params_grid
    h = 1e-5

    def area(sv):
        def X(u):
            return points(u) + sv * normal_field(u)

        x = X(nodes)
        du = []
        for a in range(nodes.shape[-1]):
            e = np.zeros(nodes.shape[-1])
            e[a] = h
            du.append((X(nodes + e) - X(nodes - e)) / (2 * h))
        du = np.stack(du, axis=-2)
        g = field_.metric(x, check=False)
        q = np.einsum("...ai,...ij,...bj->...ab", du, g, du)
        return float(np.sum(weights * np.sqrt(np.linalg.det(q))))

    return -(np.log(area(s)) - np.log(area(-s))) / (2 * s)
