"""Geodesics, parallel transport, Lorentzian length and maximizers.

Geodesics solve ``x'' = -Gamma(x)(x', x')`` with an embedded Runge-Kutta pair
(scipy's ``solve_ivp``).  Only first derivatives of the metric are used, so
C^1 fields are integrable; uniqueness is not guaranteed there, which is what
:func:`branching_probe` looks at.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import least_squares, minimize

from .chart_metric import MetricField
from .curvature import christoffel_symbols
from .errors import DomainError, InvalidInputError, NotFoundError, StiffnessError

__all__ = [
    "CurveTrajectory",
    "BrokenGeodesic",
    "MaximizerResult",
    "BranchingReport",
    "geodesic_acceleration",
    "integrate_geodesic",
    "parallel_transport",
    "lorentzian_length",
    "polygon_curve",
    "function_curve",
    "broken_geodesic",
    "break_variation",
    "length_derivative",
    "maximizer_search",
    "integral_residual",
    "hausdorff",
    "shoot_connect",
    "branching_probe",
    "trajectory_csv",
    "funnel_csv",
]

DRIFT_LIMIT = 1e-7


@dataclass(eq=False)
class CurveTrajectory:
    """A sampled curve.  ``dense(t)`` returns ``(x, v)`` at arbitrary parameters.

    ``exit`` is ``"none"``, ``"boundary"`` (left the chart box) or
    ``"excluded"`` (ran into an excised region such as a singularity).
    """

    params: np.ndarray
    points: np.ndarray
    velocities: np.ndarray
    kind: str = "curve"
    character: List[str] = field(default_factory=list)
    length: float = float("nan")
    exit: str = "none"
    drift: float = 0.0
    dense: Optional[Callable] = field(default=None, repr=False)
    meta: dict = field(default_factory=dict)

    @property
    def start(self) -> np.ndarray:
        return self.points[0]

    @property
    def end(self) -> np.ndarray:
        return self.points[-1]

    def at(self, t) -> Tuple[np.ndarray, np.ndarray]:
        if self.dense is None:
            raise InvalidInputError("curve has no dense representation")
        return self.dense(t)


def geodesic_acceleration(field_: MetricField, x: np.ndarray, v: np.ndarray) -> np.ndarray:
    gamma = christoffel_symbols(field_.metric(x, check=False), field_.d_metric(x, check=False))
    return -np.einsum("...kij,...i,...j->...k", gamma, v, v)


def _characters(field_: MetricField, x: np.ndarray, v: np.ndarray, tol: float = 1e-9) -> List[str]:
    q = np.einsum("...i,...ij,...j->...", v, field_.metric(x, check=False), v)
    q = q / np.maximum(np.sum(v * v, axis=-1), 1e-300)
    out = []
    for a, b in zip(q[:-1], q[1:]):
        m = 0.5 * (a + b)
        out.append("timelike" if m < -tol else ("spacelike" if m > tol else "null"))
    return out


def _events(field_: MetricField, n: int):
    lo, hi = field_.lower, field_.upper

    def box(t, y):
        x = y[:n]
        return float(min(np.min(x - lo), np.min(hi - x)))

    box.terminal = True
    box.direction = -1
    events = [box]
    if field_.excluded is not None:
        def hole(t, y):
            return -1.0 if bool(field_.excluded(y[:n])) else 1.0

        hole.terminal = True
        hole.direction = -1
        events.append(hole)
    return events


def integrate_geodesic(field_: MetricField, x0, v0, t_range=(0.0, 1.0), tol: float = 1e-9,
                       method: str = "DOP853", samples: int = 201,
                       max_refine: int = 2) -> CurveTrajectory:
    """Integrate a geodesic from ``(x0, v0)`` over ``t_range``.

    Stops early when the chart box or an excised region is reached and records
    the reason in ``exit``.  If ``g(v, v)`` drifts by more than 1e-7 (relative
    to ``max(1, |v0|^2)``) the run is repeated with the tolerance divided by
    100, at most ``max_refine`` times.
    """
    x0 = np.asarray(x0, dtype=float)
    v0 = np.asarray(v0, dtype=float)
    n = field_.dim
    if not np.any(v0):
        raise InvalidInputError("initial velocity must be nonzero")
    if not field_.contains(x0):
        raise DomainError("initial point outside the chart domain")
    t0, t1 = map(float, t_range)

    def rhs(t, y):
        x, v = y[:n], y[n:]
        return np.concatenate([v, geodesic_acceleration(field_, x, v)])

    for attempt in range(max_refine + 1):
        sol = solve_ivp(rhs, (t0, t1), np.concatenate([x0, v0]), method=method, rtol=tol,
                        atol=tol, dense_output=True, events=_events(field_, n))
        if sol.status == -1:
            raise StiffnessError(sol.message)
        t_end = float(sol.t[-1])
        if t_end == t0:
            raise DomainError("geodesic leaves the domain immediately")
        ts = np.linspace(t0, t_end, samples)
        ys = sol.sol(ts).T
        x, v = ys[:, :n], ys[:, n:]
        q = np.einsum("ki,kij,kj->k", v, field_.metric(x, check=False), v)
        drift = float(np.max(np.abs(q - q[0]))) / max(1.0, float(v0 @ v0))
        if drift <= DRIFT_LIMIT or attempt == max_refine or tol <= 1e-13:
            break
        tol = max(tol / 100.0, 1e-13)

    exit_ = "none"
    if sol.status == 1:
        hit = [len(te) > 0 for te in sol.t_events]
        exit_ = "excluded" if len(hit) > 1 and hit[1] else "boundary"
        # keep samples strictly inside the domain
        inside = field_.contains(x)
        if not inside[-1]:
            last = int(np.nonzero(inside)[0][-1])
            ts, x, v = ts[: last + 1], x[: last + 1], v[: last + 1]

    def dense(t, _sol=sol):
        t = np.asarray(t, dtype=float)
        y = _sol.sol(t.reshape(-1)).T.reshape(t.shape + (2 * n,))
        return y[..., :n], y[..., n:]

    curve = CurveTrajectory(params=ts, points=x, velocities=v, kind="geodesic",
                            character=_characters(field_, x, v), exit=exit_, drift=drift,
                            dense=dense, meta={"tol": tol, "method": method, "norm": float(q[0])})
    if all(c != "spacelike" for c in curve.character):
        curve.length = lorentzian_length(field_, curve)
    return curve


def parallel_transport(field_: MetricField, curve: CurveTrajectory, w0, tol: float = 1e-12,
                       at: Optional[np.ndarray] = None, start: Optional[float] = None):
    """Transport ``w0`` along ``curve`` by ``W' = -Gamma(gamma', W)``.

    Returns ``(params, W)`` with ``W`` sampled at ``at`` (default: the curve's
    params) and, as third item, a dense callable.  ``start`` picks the
    parameter where ``W = w0`` (default: first param); transport runs in both
    directions from there.
    """
    w0 = np.asarray(w0, dtype=float)
    ts = curve.params if at is None else np.asarray(at, dtype=float)
    s0 = float(curve.params[0]) if start is None else float(start)
    n = field_.dim
    if curve.dense is None:
        raise InvalidInputError("parallel transport needs a curve with a dense representation")

    def rhs(t, w):
        x, v = curve.dense(t)
        gamma = christoffel_symbols(field_.metric(x, check=False), field_.d_metric(x, check=False))
        return -np.einsum("kij,i,j->k", gamma, v, w)

    pieces = []
    lo, hi = float(curve.params[0]), float(curve.params[-1])
    for end in (lo, hi):
        if end == s0:
            pieces.append(None)
            continue
        pieces.append(solve_ivp(rhs, (s0, end), w0, method="DOP853", rtol=tol, atol=tol,
                                dense_output=True))

    def dense(t):
        t = np.asarray(t, dtype=float)
        out = np.empty(t.shape + (n,))
        flat_t = t.reshape(-1)
        flat = out.reshape(-1, n)
        for k, tk in enumerate(flat_t):
            sol = pieces[0] if tk < s0 else pieces[1]
            flat[k] = w0 if sol is None or tk == s0 else sol.sol(tk)
        return out

    return ts, dense(ts), dense


# -- length -------------------------------------------------------------------


def _segment_lengths(field_: MetricField, a: np.ndarray, b: np.ndarray, order: int = 8,
                     tol: float = 1e-9) -> np.ndarray:
    """Lorentzian length of the coordinate-straight segments a_k -> b_k."""
    s, w = np.polynomial.legendre.leggauss(order)
    s = 0.5 * (s + 1.0)
    w = 0.5 * w
    d = b - a
    x = a[:, None, :] + s[None, :, None] * d[:, None, :]
    q = np.einsum("ki,kqij,kj->kq", d, field_.metric(x, check=False), d)
    scale = np.sum(d * d, axis=-1)[:, None]
    if np.any(q > tol * np.maximum(scale, 1e-300)):
        raise InvalidInputError("spacelike segment in length computation")
    return np.sum(w * np.sqrt(np.clip(-q, 0.0, None)), axis=-1)


def lorentzian_length(field_: MetricField, curve: CurveTrajectory, order: int = 8,
                      tol: float = 1e-9) -> float:
    """Composite Gauss-Legendre quadrature of sqrt(-g(c', c')).

    Radicands in ``[-tol |c'|^2, 0)`` count as zero; anything more spacelike is
    an error.
    """
    if curve.kind == "polygon":
        pts = curve.points
        return float(np.sum(_segment_lengths(field_, pts[:-1], pts[1:], order, tol)))
    if curve.dense is None:
        raise InvalidInputError("curve has no dense representation")
    s, w = np.polynomial.legendre.leggauss(order)
    t = curve.params
    half = 0.5 * np.diff(t)
    mid = 0.5 * (t[1:] + t[:-1])
    nodes = mid[:, None] + half[:, None] * s[None, :]
    x, v = curve.dense(nodes)
    q = np.einsum("...i,...ij,...j->...", v, field_.metric(x, check=False), v)
    scale = np.sum(v * v, axis=-1)
    if np.any(q > tol * np.maximum(scale, 1e-300)):
        raise InvalidInputError("curve has a spacelike piece")
    return float(np.sum(half[:, None] * w[None, :] * np.sqrt(np.clip(-q, 0.0, None))))


def polygon_curve(field_: Optional[MetricField], vertices) -> CurveTrajectory:
    """Piecewise-linear curve through ``vertices`` with parameter = segment index."""
    pts = np.asarray(vertices, dtype=float)
    params = np.arange(len(pts), dtype=float)
    d = np.diff(pts, axis=0)
    vel = np.concatenate([d, d[-1:]], axis=0)

    def dense(t):
        t = np.asarray(t, dtype=float)
        k = np.clip(np.floor(t).astype(int), 0, len(d) - 1)
        frac = (t - k)[..., None]
        return pts[k] + frac * d[k], d[k]

    curve = CurveTrajectory(params=params, points=pts, velocities=vel, kind="polygon",
                            dense=dense)
    if field_ is not None:
        mids = 0.5 * (pts[1:] + pts[:-1])
        q = np.einsum("ki,kij,kj->k", d, field_.metric(mids, check=False), d)
        q = q / np.sum(d * d, axis=-1)
        curve.character = ["timelike" if a < -1e-9 else ("spacelike" if a > 1e-9 else "null")
                           for a in q]
        if all(c != "spacelike" for c in curve.character):
            curve.length = lorentzian_length(field_, curve)
    return curve


def function_curve(f: Callable, df: Callable, params) -> CurveTrajectory:
    """Curve from closures ``f(t) -> x`` and ``df(t) -> x'`` (vectorised in t)."""
    params = np.asarray(params, dtype=float)

    def dense(t):
        t = np.asarray(t, dtype=float)
        return np.asarray(f(t), dtype=float), np.asarray(df(t), dtype=float)

    x, v = dense(params)
    return CurveTrajectory(params=params, points=x, velocities=v, kind="curve", dense=dense)


# -- broken geodesics ------------------------------------------------------


@dataclass(eq=False)
class BrokenGeodesic:
    """Two geodesic segments on [0, 1] and [1, 2] meeting at the break point."""

    first: CurveTrajectory
    second: CurveTrajectory
    v: np.ndarray
    w: np.ndarray

    @property
    def break_point(self) -> np.ndarray:
        return self.first.end

    def length(self, field_: MetricField) -> float:
        return lorentzian_length(field_, self.first) + lorentzian_length(field_, self.second)


def _shift_params(curve: CurveTrajectory, offset: float) -> CurveTrajectory:
    dense = curve.dense

    def shifted(t):
        return dense(np.asarray(t, dtype=float) - offset)

    return CurveTrajectory(params=curve.params + offset, points=curve.points,
                           velocities=curve.velocities, kind=curve.kind,
                           character=curve.character, length=curve.length, exit=curve.exit,
                           drift=curve.drift, dense=shifted, meta=dict(curve.meta))


def broken_geodesic(field_: MetricField, p, v, w, tol: float = 1e-11) -> BrokenGeodesic:
    """Geodesic from ``p`` with velocity ``v`` on [0,1], then velocity ``w`` on [1,2]."""
    v = np.asarray(v, dtype=float)
    w = np.asarray(w, dtype=float)
    first = integrate_geodesic(field_, p, v, (0.0, 1.0), tol=tol)
    if first.exit != "none":
        raise DomainError("first segment leaves the domain")
    x1, v1 = first.at(1.0)
    second = integrate_geodesic(field_, x1, w, (0.0, 1.0), tol=tol)
    if second.exit != "none":
        raise DomainError("second segment leaves the domain")
    return BrokenGeodesic(first=first, second=_shift_params(second, 1.0), v=v1, w=w)


def _check_broken(field_: MetricField, broken: BrokenGeodesic):
    x = broken.break_point
    v, w = broken.v, broken.w
    if np.linalg.matrix_rank(np.stack([v, w]), tol=1e-10 * max(np.linalg.norm(v), 1.0)) < 2:
        raise InvalidInputError("v and w are proportional: the curve is not broken")
    g = field_.metric(x)
    vv, vw, ww = v @ g @ v, v @ g @ w, w @ g @ w
    if not (vv - vw > 0 and vw - ww < 0):
        raise InvalidInputError("normalization <v,v>-<v,w> > 0 > <v,w>-<w,w> does not hold")
    return g


def _variation_pieces(field_: MetricField, broken: BrokenGeodesic, order: int, panels: int):
    """Quadrature nodes on both segments with c, c', Y, Y' and the hat profile."""
    y = broken.w - broken.v
    s, wq = np.polynomial.legendre.leggauss(order)
    out = []
    for seg, (a, b), slope in ((broken.first, (0.0, 1.0), 1.0), (broken.second, (1.0, 2.0), -1.0)):
        edges = np.linspace(a, b, panels + 1)
        half = 0.5 * np.diff(edges)
        mid = 0.5 * (edges[1:] + edges[:-1])
        t = (mid[:, None] + half[:, None] * s[None, :]).ravel()
        wt = (half[:, None] * wq[None, :]).ravel()
        _, Y, _ = parallel_transport(field_, seg, y, at=t, start=1.0)
        x, c1 = seg.at(t)
        gamma = christoffel_symbols(field_.metric(x, check=False), field_.d_metric(x, check=False))
        dY = -np.einsum("nkij,ni,nj->nk", gamma, c1, Y)
        f = t if slope > 0 else 2.0 - t
        out.append((wt, x, c1, Y, dY, f, slope))
    return out


def _varied_length(field_: MetricField, pieces, s: float) -> Tuple[float, bool]:
    total = 0.0
    causal = True
    for wt, x, c1, Y, dY, f, slope in pieces:
        xs = x + s * f[:, None] * Y
        vs = c1 + s * (slope * Y + f[:, None] * dY)
        q = np.einsum("ni,nij,nj->n", vs, field_.metric(xs, check=False), vs)
        causal &= bool(np.all(q <= 1e-12))
        total += float(np.sum(wt * np.sqrt(np.clip(-q, 0.0, None))))
    return total, causal


def break_variation(field_: MetricField, broken: BrokenGeodesic, s_list: Sequence[float],
                    order: int = 16, panels: int = 8) -> List[dict]:
    """Lengths of the varied curves ``c_s(t) = c(t) + s f(t) Y(t)``.

    ``Y`` is the parallel transport of ``y = w - v`` from the break point along
    both segments and ``f`` is the hat profile with ``f(0) = f(2) = 0`` and
    ``f(1) = 1``.  The variation field is extended off the curve by constant
    chart components, so its flow is a straight chart displacement.
    """
    _check_broken(field_, broken)
    pieces = _variation_pieces(field_, broken, order, panels)
    base, _ = _varied_length(field_, pieces, 0.0)
    rows = []
    for s in s_list:
        L, causal = _varied_length(field_, pieces, float(s))
        rows.append({"s": float(s), "length": L, "causal": causal, "lengthens": L > base})
    return rows


def length_derivative(field_: MetricField, broken: BrokenGeodesic, h: float = 1e-5,
                      order: int = 16, panels: int = 8) -> float:
    """Forward-difference estimate of dL(c_s)/ds at s = 0."""
    _check_broken(field_, broken)
    pieces = _variation_pieces(field_, broken, order, panels)
    L0, _ = _varied_length(field_, pieces, 0.0)
    L1, _ = _varied_length(field_, pieces, h)
    return (L1 - L0) / h


# -- maximizers -----------------------------------------------------------


@dataclass(eq=False)
class MaximizerResult:
    curve: Optional[CurveTrajectory]
    length: float
    feasible: bool
    violation: float
    residual: float = float("nan")
    n_segments: int = 0
    penalty: float = 0.0


def _polygon_length_and_grad(field_: MetricField, V: np.ndarray, order: int = 4):
    """Length of the polygon V, its gradient and causal violation data."""
    s, w = np.polynomial.legendre.leggauss(order)
    s = 0.5 * (s + 1.0)
    w = 0.5 * w
    a, b = V[:-1], V[1:]
    d = b - a
    x = a[:, None, :] + s[None, :, None] * d[:, None, :]
    g = field_.metric(x, check=False)
    dg = field_.d_metric(x, check=False)
    gd = np.einsum("kqij,kj->kqi", g, d)
    Q = np.einsum("ki,kqi->kq", d, gd)
    dQ_dd = 2.0 * gd
    dQ_dx = np.einsum("ki,kqmij,kj->kqm", d, dg, d)
    return s, w, d, Q, dQ_dd, dQ_dx


def _accumulate(gV, s, coef, dQ_dd, dQ_dx):
    """Add the gradient of sum_kq coef[k,q] * Q[k,q] w.r.t. polygon vertices to gV."""
    gd = np.einsum("kq,kqi->ki", coef, dQ_dd)
    gx = np.einsum("kq,kqm->kqm", coef, dQ_dx)
    gV[:-1] += -gd + np.einsum("kqm,q->km", gx, 1.0 - s)
    gV[1:] += gd + np.einsum("kqm,q->km", gx, s)


def _maximize_polygon(field_: MetricField, V0: np.ndarray, iterations: int, penalty0: float,
                      order: int = 4, gtol: float = 1e-12):
    n = field_.dim
    p, q = V0[0], V0[-1]
    nint = len(V0) - 2
    gu = field_.metric(p) @ field_.future_vector(p)

    def unpack(z):
        return np.concatenate([p[None], z.reshape(nint, n), q[None]])

    def objective(z, penalty):
        V = unpack(z)
        s, w, d, Q, dQ_dd, dQ_dx = _polygon_length_and_grad(field_, V, order)
        timelike = Q < 0
        root = np.sqrt(np.where(timelike, -Q, 1.0))
        L = float(np.sum(w * np.where(timelike, root, 0.0)))
        viol = np.clip(Q, 0.0, None)
        back = np.clip(d @ gu, 0.0, None)
        val = -L + penalty * (float(np.sum(w * viol**2)) + float(np.sum(back**2)))
        gV = np.zeros_like(V)
        # d(-L)/dQ = +w / (2 root) on timelike nodes
        _accumulate(gV, s, np.where(timelike, 0.5 * w / root, 0.0), dQ_dd, dQ_dx)
        _accumulate(gV, s, penalty * 2.0 * w * viol, dQ_dd, dQ_dx)
        gb = penalty * 2.0 * back[:, None] * gu[None, :]
        gV[:-1] -= gb
        gV[1:] += gb
        return val, gV[1:-1].ravel()

    z = V0[1:-1].ravel().copy()
    penalty = penalty0
    for _ in range(iterations):
        res = minimize(objective, z, args=(penalty,), jac=True, method="L-BFGS-B",
                       options={"maxiter": 5000, "gtol": gtol, "ftol": 1e-15})
        z = res.x
        penalty *= 2.0
    V = unpack(z)
    _, _, d, Q, _, _ = _polygon_length_and_grad(field_, V, order)
    scale = np.sum(d * d, axis=-1)[:, None]
    violation = float(np.max(np.clip(Q / scale, 0.0, None)))
    back = float(np.max(np.clip(d @ gu, 0.0, None)))
    return V, max(violation, back), penalty / 2.0


def maximizer_search(field_: MetricField, p, q, n_segments: int = 16, iterations: int = 8,
                     penalty0: float = 10.0, initial=None, tol: float = 1e-8) -> MaximizerResult:
    """Maximize Lorentzian length over causal polygons from ``p`` to ``q``.

    The interior vertices are optimised with L-BFGS-B; causality and future
    orientation of every segment are enforced by a quadratic penalty whose
    weight doubles on each of ``iterations`` outer passes.  If the best path
    still violates causality the result is flagged infeasible (``q`` is then
    taken to be outside the causal future of ``p``).
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if n_segments < 1:
        raise InvalidInputError("need at least one segment")
    if np.allclose(p, q):
        raise InvalidInputError("endpoints coincide")
    if initial is None:
        lam = np.linspace(0.0, 1.0, n_segments + 1)[:, None]
        V0 = p + lam * (q - p)
    else:
        V0 = _resample_polygon(np.asarray(initial, dtype=float), n_segments)
        V0[0], V0[-1] = p, q
    if n_segments == 1:
        V, viol, pen = V0, 0.0, penalty0
        _, _, d, Q, _, _ = _polygon_length_and_grad(field_, V)
        viol = float(np.max(np.clip(Q / np.sum(d * d, -1)[:, None], 0, None)))
    else:
        V, viol, pen = _maximize_polygon(field_, V0, iterations, penalty0)
    feasible = viol <= tol
    if not feasible:
        return MaximizerResult(curve=None, length=float("nan"), feasible=False, violation=viol,
                               n_segments=n_segments, penalty=pen)
    curve = polygon_curve(field_, V)
    return MaximizerResult(curve=curve, length=curve.length, feasible=True, violation=viol,
                           residual=integral_residual(field_, V), n_segments=n_segments,
                           penalty=pen)


def _resample_polygon(V: np.ndarray, n_segments: int) -> np.ndarray:
    seg = np.linalg.norm(np.diff(V, axis=0), axis=1)
    arc = np.concatenate([[0.0], np.cumsum(seg)])
    target = np.linspace(0.0, arc[-1], n_segments + 1)
    return np.stack([np.interp(target, arc, V[:, k]) for k in range(V.shape[1])], axis=1)


def integral_residual(field_: MetricField, V: np.ndarray, order: int = 8) -> float:
    """Sup norm of ``u(t) - u(0) + int_0^t Gamma(u, u)`` along a causal polygon.

    The polygon is parametrised proportionally to Lorentzian length on [0, 1]
    with piecewise-constant velocity ``u``.  This is the integral form of the
    geodesic equation, which only needs continuous Christoffel symbols; it
    vanishes identically on an exact geodesic and is first order in the
    segment length on a polygonal approximation.  Both one-sided limits at
    every vertex are included.
    """
    V = np.asarray(V, dtype=float)
    lengths = _segment_lengths(field_, V[:-1], V[1:], order)
    total = float(lengths.sum())
    if total <= 0:
        raise InvalidInputError("polygon has zero Lorentzian length")
    dt = lengths / total
    u = np.diff(V, axis=0) / dt[:, None]
    s, w = np.polynomial.legendre.leggauss(order)
    s = 0.5 * (s + 1.0)
    w = 0.5 * w
    x = V[:-1, None, :] + s[None, :, None] * np.diff(V, axis=0)[:, None, :]
    gamma = christoffel_symbols(field_.metric(x, check=False), field_.d_metric(x, check=False))
    acc = np.einsum("kqmij,ki,kj->kqm", gamma, u, u)
    seg_int = np.einsum("q,kqm->km", w, acc) * dt[:, None]
    cum = np.concatenate([np.zeros((1, V.shape[1])), np.cumsum(seg_int, axis=0)])
    left = u - u[0] + cum[:-1]      # at the start of each segment
    right = u - u[0] + cum[1:]      # at its end
    return float(max(np.max(np.abs(left)), np.max(np.abs(right))))


def _point_polyline_distance(P: np.ndarray, V: np.ndarray) -> np.ndarray:
    a, d = V[:-1], np.diff(V, axis=0)
    dd = np.maximum(np.sum(d * d, axis=-1), 1e-300)
    rel = P[:, None, :] - a[None]
    s = np.clip(np.einsum("pki,ki->pk", rel, d) / dd, 0.0, 1.0)
    return np.min(np.linalg.norm(rel - s[..., None] * d[None], axis=-1), axis=1)


def hausdorff(A: np.ndarray, B: np.ndarray) -> float:
    """Symmetric Hausdorff distance between two polylines (chart norm).

    Each array lists the vertices of a piecewise-linear curve; distances are
    measured to the segments, not only to the vertices.
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if len(A) < 2 or len(B) < 2:
        d = np.linalg.norm(A[:, None, :] - B[None, :, :], axis=-1)
        return float(max(d.min(axis=1).max(), d.min(axis=0).max()))
    return float(max(_point_polyline_distance(A, B).max(), _point_polyline_distance(B, A).max()))


# -- shooting -------------------------------------------------------------


def _future_null(g: np.ndarray, spatial: np.ndarray) -> np.ndarray:
    """Future null vector with the given spatial part (time component solved)."""
    a = g[0, 0]
    b = 2.0 * g[0, 1:] @ spatial
    c = spatial @ g[1:, 1:] @ spatial
    if abs(a) < 1e-14:
        if abs(b) < 1e-300:
            raise InvalidInputError("no null vector with this spatial part")
        return np.concatenate([[-c / b], spatial])
    disc = b * b - 4 * a * c
    if disc < 0:
        raise InvalidInputError("no null vector with this spatial part")
    roots = [(-b + np.sqrt(disc)) / (2 * a), (-b - np.sqrt(disc)) / (2 * a)]
    roots = [r for r in roots if r > 0]
    if not roots:
        raise InvalidInputError("no future null vector with this spatial part")
    return np.concatenate([[min(roots)], spatial])


def shoot_connect(field_: MetricField, p, q, tol: float = 1e-8, null: bool = False,
                  starts: int = 6, seed: int = 0, int_tol: float = 1e-11,
                  initial=None) -> CurveTrajectory:
    """Geodesic from ``p`` to ``q`` on the parameter interval [0, 1].

    Multiple-start shooting on the initial velocity with a Levenberg-Marquardt
    style solver.  With ``null=True`` the geodesic is null and only the
    spatial coordinates of ``q`` are matched; the arrival time is free.
    ``initial`` overrides the first guess (the coordinate chord): a full
    velocity, or only its spatial part when ``null`` is set.
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    n = field_.dim
    if np.allclose(p, q) or (null and np.allclose(p[1:], q[1:])):
        raise InvalidInputError("degenerate endpoint pair")
    rng = np.random.default_rng(seed)
    gp = field_.metric(p)

    def end_of(v0, T=1.0):
        curve = integrate_geodesic(field_, p, v0, (0.0, T), tol=int_tol)
        if curve.exit != "none":
            return None, curve
        return curve.end, curve

    if not null:
        def resid(v0):
            end, _ = end_of(v0)
            return np.full(n, 1e3) if end is None else end - q

        z0 = q - p if initial is None else np.asarray(initial, dtype=float)
        guesses = [z0] + [z0 * (1 + 0.05 * rng.standard_normal(n)) for _ in range(starts - 1)]
    else:
        def make_v(z):
            return _future_null(gp, z)

        def resid(z):
            try:
                v0 = make_v(z)
            except InvalidInputError:
                return np.full(n - 1, 1e3)
            end, _ = end_of(v0)
            return np.full(n - 1, 1e3) if end is None else end[1:] - q[1:]

        z0 = q[1:] - p[1:] if initial is None else np.asarray(initial, dtype=float)
        guesses = [z0] + [z0 * (1 + 0.05 * rng.standard_normal(n - 1)) for _ in range(starts - 1)]

    best = None
    for z0 in guesses:
        try:
            sol = least_squares(resid, z0, method="lm", xtol=1e-15, ftol=1e-15, gtol=1e-15,
                                max_nfev=400 * len(z0))
        except (DomainError, InvalidInputError, StiffnessError):
            continue
        miss = float(np.linalg.norm(sol.fun))
        if best is None or miss < best[0]:
            best = (miss, sol.x)
        if miss < tol:
            break
    if best is None or best[0] >= tol:
        raise NotFoundError(f"shooting did not converge (best miss {None if best is None else best[0]:.3g})")
    v0 = make_v(best[1]) if null else best[1]
    curve = integrate_geodesic(field_, p, v0, (0.0, 1.0), tol=int_tol)
    curve.meta["miss"] = best[0]
    curve.meta["v0"] = v0
    return curve


# -- branching -------------------------------------------------------------


@dataclass
class BranchingReport:
    rows: List[dict]
    flagged: bool
    growth: float
    message: str


def _perturbed_null(g: np.ndarray, v0: np.ndarray, e: np.ndarray, sigma: float) -> np.ndarray:
    spatial = v0[1:] + sigma * e
    return _future_null(g, spatial)


def branching_probe(field_: MetricField, x0, v0, perturbation_scales=(1e-2, 1e-3, 1e-4),
                    integrator_variants=(("RK45", 1e-10), ("DOP853", 1e-12)),
                    t_end: float = 1.0, directions: int = 4) -> BranchingReport:
    """Divergence of perturbed null geodesics relative to the perturbation size.

    For each scale ``sigma`` the spatial part of ``v0`` is perturbed by
    ``sigma`` along unit directions orthogonal to it (time component
    re-solved to stay null) and integrated with every integrator variant.  The divergence is
    the largest endpoint distance from the unperturbed reference of the same
    variant.  A growth of ``divergence / sigma`` by 10x or more across two
    decades of ``sigma`` is flagged as a possible funnel.  The flag is a
    heuristic: an ODE solver cannot certify non-uniqueness.
    """
    x0 = np.asarray(x0, dtype=float)
    v0 = np.asarray(v0, dtype=float)
    g = field_.metric(x0)
    n = field_.dim
    # directions transverse to the spatial velocity, so sigma is not absorbed
    # into a rescaling of the same ray
    sp = v0[1:] / np.linalg.norm(v0[1:])
    qmat, _ = np.linalg.qr(np.column_stack([sp, np.eye(n - 1)]))
    basis = qmat[:, 1:n - 1].T
    dirs = np.concatenate([basis, -basis])[:directions]
    rows = []
    refs = {}
    for method, tol in integrator_variants:
        refs[(method, tol)] = integrate_geodesic(field_, x0, v0, (0.0, t_end), tol=tol,
                                                 method=method).end
    ref_spread = max(np.linalg.norm(a - b) for a in refs.values() for b in refs.values())
    for sigma in perturbation_scales:
        div = 0.0
        for method, tol in integrator_variants:
            ref = refs[(method, tol)]
            for e in dirs:
                v = _perturbed_null(g, v0, e, sigma)
                end = integrate_geodesic(field_, x0, v, (0.0, t_end), tol=tol, method=method).end
                div = max(div, float(np.linalg.norm(end - ref)))
        rows.append({"sigma": float(sigma), "divergence": div, "ratio": div / sigma,
                     "integrator_spread": float(ref_spread)})
    rows.sort(key=lambda r: -r["sigma"])
    ratios = [r["ratio"] for r in rows]
    span = rows[0]["sigma"] / rows[-1]["sigma"]
    flagged = bool(span >= 100 and ratios[-1] >= 10 * ratios[0])
    message = ("possible branching: divergence/sigma grew >= 10x over two decades (heuristic)"
               if flagged else "no branching detected at resolution")
    return BranchingReport(rows=rows, flagged=flagged, growth=ratios[-1] / ratios[0], message=message)


# -- export ------------------------------------------------------------------


def trajectory_csv(curve: CurveTrajectory, extra: Optional[dict] = None) -> str:
    n = curve.points.shape[1]
    buf = io.StringIO()
    cols = list((extra or {}).keys()) + ["param"] + [f"x{k}" for k in range(n)] + [f"v{k}" for k in range(n)]
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(cols)
    for t, x, v in zip(curve.params, curve.points, curve.velocities):
        wr.writerow(list((extra or {}).values()) + [repr(float(t))] + [repr(float(a)) for a in x]
                    + [repr(float(a)) for a in v])
    return buf.getvalue()


def funnel_csv(report: BranchingReport, extra: Optional[dict] = None) -> str:
    buf = io.StringIO()
    cols = list((extra or {}).keys()) + ["sigma", "divergence", "ratio", "integrator_spread"]
    wr = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
    wr.writeheader()
    for r in report.rows:
        row = dict(extra or {})
        row.update({k: repr(float(v)) for k, v in r.items()})
        wr.writerow(row)
    return buf.getvalue()
