"""Discrete causal futures on a uniform chart grid.

The grid is swept slice by slice in the chart time.  On each slice a signed
distance-like field ``phi`` (negative inside) describes the causal future
J+ of the source set.  One time step of size ``dt`` replaces ``phi(y)`` by
the minimum of ``phi(y - dt v)`` over sampled velocities ``v`` of the
unit-time section of the local future cone (the ellipse ``c + R L s``,
``|s| <= 1``).  The samples are

* lattice offsets whose velocity lies in the closed cone (exact grid values),
* the support point of the ellipse in the direction of ``grad phi``,
* the cone axis ``c``.

The chronological future I+ uses a second field ``chi`` seeded by a strictly
timelike step (along the cone axis) out of J+ and then propagated like
``phi``; the push-up property holds by construction.  Cubic interpolation
is not order preserving, so ``chi >= phi`` (I+ inside J+) is restored after
every step.  ``E+ = J+ \\ I+`` is a band about one time step thick along the
null boundary.

The metric is evaluated once per step at the half-step time on the spatial
cell centres.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np
from scipy.ndimage import distance_transform_edt, map_coordinates, spline_filter
from scipy.spatial import cKDTree

from .chart_metric import BackgroundMetric, MetricField
from .errors import InvalidInputError, InvalidMetricError
from .geodesics import CurveTrajectory, integrate_geodesic
from .surfaces import (EnclosingSurfaceData, HypersurfaceData, build_normals,
                       sample_surface)

__all__ = [
    "GridSpec",
    "CausalGrid",
    "future_sets",
    "points_to_mask",
    "boundary_generators",
    "EpsCompareReport",
    "eps_maximizer_compare",
    "ProbeReport",
    "compactness_probe",
    "export_masks",
]

_BIG = 1e6


@dataclass(frozen=True)
class GridSpec:
    """Cell-centred grid: centres at ``lower + (i + 1/2) * spacing``."""

    lower: tuple
    upper: tuple
    shape: tuple

    @property
    def spacing(self) -> np.ndarray:
        return (np.asarray(self.upper, float) - np.asarray(self.lower, float)) / np.asarray(self.shape)

    def axis(self, k: int) -> np.ndarray:
        return self.lower[k] + (np.arange(self.shape[k]) + 0.5) * self.spacing[k]

    def index_coords(self, x) -> np.ndarray:
        """Fractional array indices of chart points."""
        return (np.asarray(x, float) - np.asarray(self.lower, float)) / self.spacing - 0.5

    def cell_of(self, x) -> np.ndarray:
        return np.floor((np.asarray(x, float) - np.asarray(self.lower, float)) / self.spacing).astype(int)

    @staticmethod
    def aligned(lower, upper, shape, t0: float = 0.0) -> "GridSpec":
        """Grid whose time axis has a slice centre exactly at ``t0``."""
        lower = list(map(float, lower))
        upper = list(map(float, upper))
        ht = (upper[0] - lower[0]) / shape[0]
        k = np.floor((t0 - lower[0]) / ht)
        shift = t0 - (lower[0] + (k + 0.5) * ht)
        lower[0] += shift
        upper[0] += shift
        return GridSpec(tuple(lower), tuple(upper), tuple(int(s) for s in shape))


@dataclass(eq=False)
class CausalGrid:
    spec: GridSpec
    phi: np.ndarray = field(repr=False)
    chi: np.ndarray = field(repr=False)
    blocked: np.ndarray = field(repr=False)
    source: np.ndarray = field(repr=False)

    @property
    def J_plus(self) -> np.ndarray:
        return (self.phi <= 0.0) & ~self.blocked

    @property
    def I_plus(self) -> np.ndarray:
        return (self.chi <= 0.0) & ~self.blocked

    @property
    def E_plus(self) -> np.ndarray:
        return self.J_plus & ~self.I_plus

    def sample(self, which: str, x) -> np.ndarray:
        arr = self.phi if which == "phi" else self.chi
        idx = self.spec.index_coords(np.atleast_2d(x)).T
        return map_coordinates(arr, idx, order=1, mode="constant", cval=_BIG)

    def cell_size(self) -> float:
        return float(np.max(self.spec.spacing[1:]))


def points_to_mask(spec: GridSpec, points) -> np.ndarray:
    mask = np.zeros(spec.shape, dtype=bool)
    idx = spec.cell_of(points)
    ok = np.all((idx >= 0) & (idx < np.asarray(spec.shape)), axis=-1)
    idx = idx[ok]
    mask[tuple(idx.T)] = True
    return mask


def _signed_distance(mask: np.ndarray, spacing: np.ndarray) -> np.ndarray:
    if not mask.any():
        return np.full(mask.shape, _BIG)
    outside = distance_transform_edt(~mask, sampling=spacing)
    inside = distance_transform_edt(mask, sampling=spacing) if (~mask).any() else np.full(mask.shape, _BIG)
    half = 0.5 * float(np.min(spacing))
    return np.where(mask, half - inside, outside - half)


def _shift(arr: np.ndarray, offset: Sequence[int]) -> np.ndarray:
    """``out[y] = arr[y - offset]`` with ``_BIG`` where ``y - offset`` is off the grid."""
    out = np.full_like(arr, _BIG)
    src, dst = [], []
    for o, n in zip(offset, arr.shape):
        if o >= 0:
            dst.append(slice(o, n))
            src.append(slice(0, n - o))
        else:
            dst.append(slice(0, n + o))
            src.append(slice(-o, n))
    out[tuple(dst)] = arr[tuple(src)]
    return out


def _small_inv(a: np.ndarray) -> np.ndarray:
    """Batched inverse with closed forms for 1x1, 2x2 and 3x3 blocks."""
    m = a.shape[-1]
    if m == 1:
        return 1.0 / a
    if m == 2:
        det = a[..., 0, 0] * a[..., 1, 1] - a[..., 0, 1] * a[..., 1, 0]
        out = np.stack([np.stack([a[..., 1, 1], -a[..., 0, 1]], -1),
                        np.stack([-a[..., 1, 0], a[..., 0, 0]], -1)], -2)
        return out / det[..., None, None]
    if m == 3:
        cof = np.cross(a[..., [1, 2, 0], :], a[..., [2, 0, 1], :])
        det = np.sum(a[..., 0, :] * cof[..., 0, :], axis=-1)
        return np.swapaxes(cof, -1, -2) / det[..., None, None]
    return np.linalg.inv(a)


def _prefilter(arr: np.ndarray, cap: float, blocked: Optional[np.ndarray] = None) -> np.ndarray:
    """Cubic spline coefficients of ``arr``.

    Blocked cells take the value of the nearest open cell and large values
    are capped, so the spline does not ring at excision boundaries.
    """
    if blocked is not None and blocked.any() and not blocked.all():
        idx = distance_transform_edt(blocked, return_distances=False, return_indices=True)
        arr = arr[tuple(idx)]
    return spline_filter(np.minimum(arr, cap), order=3, mode="nearest")


def _cone_data(g, ok, offsets, hs, dt, cells, axis_samples):
    """Per-cell cone axis, inverse spatial metric, radius, lattice moves and sample moves."""
    m = len(cells)
    Amat = g[:, 1:, 1:]
    bvec = g[:, 0, 1:]
    Ainv = _small_inv(Amat)
    Ab = np.einsum("kij,kj->ki", Ainv, bvec)
    c = -Ab
    R2 = np.einsum("ki,ki->k", bvec, Ab) - g[:, 0, 0]
    if np.any(R2[ok] <= 0):
        raise InvalidMetricError("chart time is not a time function at some cell")
    R = np.sqrt(np.clip(R2, 0, None))
    c = c.reshape(cells + (m,))
    Ainv = Ainv.reshape(cells + (m, m))
    R = R.reshape(cells)
    Amat = Amat.reshape(cells + (m, m))
    vmax = float(np.max(np.linalg.norm(c, axis=-1)
                        + R * np.sqrt(np.trace(Ainv, axis1=-2, axis2=-1))))
    tol = R * R * (1 + 1e-9) + 1e-12
    masks = []
    for o in offsets:
        if np.linalg.norm(o * hs / dt) > vmax * (1 + 1e-9):
            continue
        dv = o * hs / dt - c
        q = np.sum(dv * (Amat @ dv[..., None])[..., 0], axis=-1)
        inside = q <= tol
        if inside.any():
            masks.append((o, inside))
    moves = [c * dt / hs]
    if axis_samples:
        Lc = np.linalg.cholesky(Ainv)
        for i in range(m):
            for sgn in (1.0, -1.0):
                moves.append((c + sgn * R[..., None] * Lc[..., :, i]) * dt / hs)

    return c, Ainv, R, masks, moves


def future_sets(field_: MetricField, A, spec: GridSpec, support: bool = True,
                axis_samples: bool = False) -> CausalGrid:
    """J+, I+ and E+ of a source set ``A``.

    ``A`` is a boolean cell mask or an array of chart points.  A mask is
    seeded with the signed distance to its cells; a point cloud (for example
    a dense sample of a surface) is seeded on each slice with the distance to
    its points minus half a cell diagonal, so thin sources keep their true
    geometry and the cell holding each point is inside.
    """
    shape = tuple(spec.shape)
    if len(shape) != field_.dim:
        raise InvalidInputError("grid dimension does not match the metric")
    src = np.asarray(A)
    cloud = None
    if src.dtype != bool:
        cloud = np.atleast_2d(np.asarray(src, float))
        src = points_to_mask(spec, cloud)
        slot = spec.cell_of(cloud)[:, 0]
    if src.shape != shape:
        raise InvalidInputError("source mask shape does not match the grid")
    if not src.any():
        raise InvalidInputError("empty source set")
    h = spec.spacing
    dt, hs = float(h[0]), h[1:]
    m = field_.dim - 1
    mesh = np.meshgrid(*[spec.axis(k) for k in range(1, field_.dim)], indexing="ij")
    ys = np.stack(mesh, axis=-1)
    flat = ys.reshape(-1, m)
    offsets = [np.array(o) for o in np.ndindex(*([3] * m))]
    offsets = [o - 1 for o in offsets]

    phi = np.empty(shape, dtype=np.float32)
    chi = np.empty(shape, dtype=np.float32)
    blocked = np.zeros(shape, dtype=bool)
    times = spec.axis(0)
    idx_base = np.stack(np.meshgrid(*[np.arange(s, dtype=float) for s in shape[1:]], indexing="ij"))

    cap = 4.0 * float(np.linalg.norm(np.asarray(spec.upper) - np.asarray(spec.lower)))
    upper_idx = np.asarray(shape[1:], float) - 1.0

    def interp(coef, disp_cells):
        coords = idx_base - np.moveaxis(disp_cells, -1, 0)
        vals = map_coordinates(coef, coords, order=3, mode="nearest", prefilter=False)
        off = np.any((coords < 0) | (coords > upper_idx.reshape((-1,) + (1,) * m)), axis=0)
        return np.where(off | (vals >= 0.5 * cap), _BIG, vals)

    prev_phi = prev_chi = None
    cache = None
    for k, t in enumerate(times):
        pts_now = np.concatenate([np.full((flat.shape[0], 1), t), flat], axis=1)
        block_now = ~field_.contains(pts_now).reshape(shape[1:])
        if field_.excluded is not None:
            block_now |= np.asarray(field_.excluded(pts_now)).reshape(shape[1:])
        blocked[k] = block_now
        if not src[k].any():
            seed = None
        elif cloud is not None:
            tree = cKDTree(cloud[slot == k, 1:])
            seed = (tree.query(flat)[0] - 0.5 * float(np.linalg.norm(hs))).reshape(shape[1:])
        else:
            seed = _signed_distance(src[k], hs)
        if prev_phi is None:
            cur_phi = seed if seed is not None else np.full(shape[1:], _BIG)
            cur_chi = np.full(shape[1:], _BIG)
        else:
            tm = t - 0.5 * dt
            pts = np.concatenate([np.full((flat.shape[0], 1), tm), flat], axis=1)
            ok = field_.contains(pts)
            g = np.empty((flat.shape[0], m + 1, m + 1))
            g[ok] = field_.metric(pts[ok], check=False)
            g[~ok] = np.diag([-1.0] + [1.0] * m)
            if cache is None or not np.array_equal(g, cache[0]):
                cache = (g, _cone_data(g, ok, offsets, hs, dt, shape[1:], axis_samples))
            c, Ainv, R, masks, moves = cache[1]

            def step(arr):
                best = np.full(shape[1:], _BIG, dtype=float)
                for o, inside in masks:
                    best = np.where(inside, np.minimum(best, _shift(arr, o)), best)
                coef = _prefilter(arr, cap, blocked[k - 1])
                along = None
                for i, mv in enumerate(moves):
                    val = arr if not np.any(mv) else interp(coef, mv)
                    along = val if i == 0 else along
                    best = np.minimum(best, val)
                if support:
                    grad = np.stack(np.gradient(np.minimum(arr, cap), *hs), axis=-1)
                    grad[blocked[k - 1]] = 0.0
                    ag = (Ainv @ grad[..., None])[..., 0]
                    nrm = np.sqrt(np.clip(np.sum(ag * grad, axis=-1), 1e-300, None))
                    vstar = c + (R / nrm)[..., None] * ag
                    best = np.minimum(best, interp(coef, vstar * dt / hs))
                return best, along

            cur_phi, along = step(prev_phi)
            cur_chi = np.minimum(step(prev_chi)[0], along)
            if seed is not None:
                cur_phi = np.minimum(cur_phi, seed)
            # I+ lies inside J+; cubic interpolation is not order preserving, so
            # restore chi >= phi explicitly (ringing at capped inflow edges)
            cur_chi = np.maximum(cur_chi, cur_phi)
        cur_phi = np.where(block_now, _BIG, cur_phi)
        cur_chi = np.where(block_now, _BIG, cur_chi)
        phi[k] = cur_phi
        chi[k] = cur_chi
        prev_phi, prev_chi = cur_phi.astype(float), cur_chi.astype(float)
    return CausalGrid(spec=spec, phi=phi, chi=chi, blocked=blocked, source=src)


# -- generators ------------------------------------------------------------


def _deep_inside(grid: CausalGrid, which: str, pts, margin: float) -> np.ndarray:
    """Points whose spatial ``margin`` neighbours along every axis are in the set.

    The level functions are distances only outside their sets, so depth is
    probed by offsets rather than by the value of the function.
    """
    pts = np.atleast_2d(np.asarray(pts, float))
    ok = grid.sample(which, pts) <= 0
    for i in range(1, pts.shape[1]):
        for sgn in (1.0, -1.0):
            q = pts.copy()
            q[:, i] += sgn * margin
            ok &= grid.sample(which, q) <= 0
    return ok


def _truncate(grid: CausalGrid, curve: CurveTrajectory, margin: float):
    """First parameter where the curve is at least ``margin`` inside I+."""
    inside_grid = np.all((curve.points > np.asarray(grid.spec.lower)) &
                         (curve.points < np.asarray(grid.spec.upper)), axis=-1)
    deep = _deep_inside(grid, "chi", curve.points, margin) & inside_grid
    if deep.any():
        k = int(np.argmax(deep))
        return k, "entered_I"
    if not inside_grid.all():
        return int(np.argmax(~inside_grid)), "left_grid"
    return None, curve.exit if curve.exit != "none" else "none"


def _cut(curve: CurveTrajectory, k: int) -> CurveTrajectory:
    k = max(k, 1)
    return CurveTrajectory(params=curve.params[: k + 1], points=curve.points[: k + 1],
                           velocities=curve.velocities[: k + 1], kind=curve.kind,
                           character=curve.character[:k], length=0.0, exit=curve.exit,
                           drift=curve.drift, dense=curve.dense, meta=dict(curve.meta))


def boundary_generators(field_: MetricField, grid: CausalGrid, Sigma: HypersurfaceData,
                        S: EnclosingSurfaceData, direction: str = "K_minus", n_samples: int = 16,
                        t_max: Optional[float] = None, margin_cells: float = 1.0,
                        samples_per_unit: int = 200) -> List[CurveTrajectory]:
    """Null geodesics from S along ``K_-`` or ``K_+``, cut where they enter I+.

    A generator is cut at the first sample lying at least ``margin_cells``
    cells inside the discrete I+, or where it leaves the grid or the chart.
    ``meta`` records the cut parameter and its reason.
    """
    if direction not in ("K_minus", "K_plus"):
        raise InvalidInputError("direction must be K_minus or K_plus")
    ys = sample_surface(Sigma, S, n_samples)
    if t_max is None:
        t_max = float(grid.spec.upper[0] - Sigma.time(ys).min())
    margin = margin_cells * grid.cell_size()
    out = []
    for i, y in enumerate(ys):
        nm = build_normals(field_, Sigma, S, y)
        K = nm.K_minus if direction == "K_minus" else nm.K_plus
        curve = integrate_geodesic(field_, nm.point, K, (0.0, t_max),
                                   samples=max(201, int(samples_per_unit * t_max) + 1))
        k, reason = _truncate(grid, curve, margin)
        if k is not None:
            curve = _cut(curve, k)
        curve.meta.update({"generator": i, "direction": direction, "reason": reason,
                           "cut_at": float(curve.params[-1])})
        out.append(curve)
    return out


# -- epsilon comparison -------------------------------------------------------


@dataclass
class EpsCompareReport:
    rows: List[dict]
    window: float
    decreasing: bool
    factor: float
    passed: bool


def eps_maximizer_compare(family, Sigma: HypersurfaceData, S: EnclosingSurfaceData, y,
                          T: float, delta: float = 0.1, direction: str = "K_minus",
                          eps_list: Optional[Sequence[float]] = None,
                          h: Optional[BackgroundMetric] = None,
                          samples: int = 401, grid: Optional[GridSpec] = None,
                          source_samples: int = 4000, margin_cells: float = 1.0) -> EpsCompareReport:
    """Distance between the base generator and the narrowed generators.

    The base generator starts at the S point ``y`` with the base ``K_-`` (or
    ``K_+``) and is followed on ``[0, T]``; each narrowed generator starts at
    the same point with the null normal built from the narrowed metric.  The
    sup of the background distance is taken over ``[0, (1 - delta) T]`` cut
    to the part where every curve of the sweep exists, so all rows share one
    window; rows whose curve stops early are flagged ``truncated``.

    With ``grid`` the E+ masks of S are also built under each narrowed metric
    and the row records the fraction of the narrowed generator (on the common
    window) that stays in its own discrete E+, within ``margin_cells``.
    """
    if not (0 < delta < 1):
        raise InvalidInputError("delta must lie in (0, 1)")
    h = h or BackgroundMetric()
    base = family.base
    eps_list = list(family.eps_list if eps_list is None else eps_list)
    window = (1.0 - delta) * T

    def generator(fld):
        nm = build_normals(fld, Sigma, S, y)
        K = nm.K_minus if direction == "K_minus" else nm.K_plus
        return integrate_geodesic(fld, nm.point, K, (0.0, window), samples=samples)

    g0 = generator(base)
    curves = [generator(family.narrow(e)) for e in eps_list]
    common = min([float(g0.params[-1])] + [float(c.params[-1]) for c in curves])
    ts = np.linspace(0.0, common, samples)
    if grid is not None:
        ys = sample_surface(Sigma, S, source_samples)
        cloud = np.concatenate([Sigma.time(ys)[:, None], ys], axis=1)
    rows = []
    for e, ge in zip(eps_list, curves):
        xe = ge.at(ts)[0]
        d = h.distance(g0.at(ts)[0], xe)
        row = {"eps": float(e), "sup_distance": float(np.max(d)), "window": common,
               "exists_until": float(ge.params[-1]),
               "truncated": bool(ge.params[-1] < window * (1 - 1e-12))}
        if grid is not None:
            cg = future_sets(family.narrow(e), cloud, grid)
            margin = margin_cells * cg.cell_size()
            inside = (cg.sample("phi", xe) <= margin) & ~_deep_inside(cg, "chi", xe, margin)
            row["in_E_fraction"] = float(np.mean(inside))
        rows.append(row)
    dists = [r["sup_distance"] for r in rows]
    decreasing = all(b <= a for a, b in zip(dists, dists[1:]))
    factor = dists[0] / max(dists[-1], 1e-300)
    return EpsCompareReport(rows=rows, window=window, decreasing=decreasing, factor=factor,
                            passed=bool(decreasing and factor >= 4.0))


# -- compactness probe ---------------------------------------------------------


@dataclass
class ProbeReport:
    passed: bool
    conclusive: bool
    bounded: bool
    bounding_box: tuple
    lambda_max: float
    n_bundle: int
    n_horizon: int
    violations: List[dict]
    message: str

    def to_json(self, extra: Optional[dict] = None) -> str:
        out = dict(extra or {})
        out.update({"passed": self.passed, "conclusive": self.conclusive, "bounded": self.bounded,
                    "bounding_box": [list(map(float, b)) for b in self.bounding_box],
                    "lambda_max": self.lambda_max, "n_bundle": self.n_bundle,
                    "n_horizon": self.n_horizon, "violations": self.violations[:20],
                    "n_violations": len(self.violations), "message": self.message})
        return json.dumps(out, indent=2, sort_keys=True)


def compactness_probe(field_: MetricField, Sigma: HypersurfaceData, S: EnclosingSurfaceData,
                      c_min: float, generators: Sequence[CurveTrajectory],
                      lambda_steps: int = 64, b: float = 1.0,
                      lambda_factor: float = 2.0) -> ProbeReport:
    """Check that the K_- bundle ``{lam K_-(p): 0 <= lam <= lambda_factor / c_min}``
    swept to parameter ``b`` covers the discrete horizon samples.

    ``c_min`` is the smallest ingoing convergence trace ``min k_-`` over S;
    for a round sphere of radius r in flat space it is 2/r and the bundle
    reaches the centre at ``lam = 2 / c_min``.
    ``generators`` are the truncated K_- generators from
    :func:`boundary_generators`, started at the same S points.  A generator
    point at parameter ``mu`` is covered when some bundle point lies within
    half a bundle step of it.  Bundle geodesics that end in an excised region
    count as truncated, not as escaping; leaving the chart box makes the probe
    inconclusive.  Each uncovered sample is reported with its would-be
    multiplier ``mu``.
    """
    if c_min <= 0:
        raise InvalidInputError("c_min must be positive (S must be inner trapped)")
    lam_max = lambda_factor / c_min
    F_pts = []
    escaped = False
    violations = []
    n_h = 0
    for gen in generators:
        p = gen.points[0]
        K = gen.velocities[0]
        # exp_p(lam K) at parameter b is the K geodesic at parameter lam * b
        curve = integrate_geodesic(field_, p, K, (0.0, lam_max * b), samples=lambda_steps + 1)
        if curve.exit == "boundary":
            escaped = True
        pts = curve.points
        F_pts.append(pts)
        tol = 0.5 * (lam_max * b / lambda_steps) * float(np.max(np.linalg.norm(curve.velocities, axis=-1))) + 1e-9
        for mu, x in zip(gen.params, gen.points):
            n_h += 1
            d = float(np.min(np.linalg.norm(pts - x, axis=-1)))
            if d > tol:
                violations.append({"generator": int(gen.meta.get("generator", -1)),
                                   "mu": float(mu), "distance": d,
                                   "point": [float(v) for v in x]})
    allF = np.concatenate(F_pts)
    box = (allF.min(axis=0), allF.max(axis=0))
    bounded = bool(np.all(np.isfinite(allF)) and not escaped)
    conclusive = not escaped
    passed = bool(conclusive and bounded and not violations)
    if not conclusive:
        msg = "bundle leaves the chart: inconclusive (chart too small)"
    elif violations:
        msg = (f"{len(violations)} horizon samples outside the swept set; smallest multiplier "
               f"{min(v['mu'] for v in violations):.4g} > lambda_max {lam_max:.4g}")
    else:
        msg = "all horizon samples covered by the bounded swept set"
    return ProbeReport(passed=passed, conclusive=conclusive, bounded=bounded, bounding_box=box,
                       lambda_max=lam_max, n_bundle=int(allF.shape[0]), n_horizon=n_h,
                       violations=violations, message=msg)


# -- export ---------------------------------------------------------------------


def export_masks(grid: CausalGrid, stem) -> dict:
    """Write ``<stem>.masks.bin`` (uint8 bit flags J=1, I=2, E=4) and a JSON header."""
    flags = (grid.J_plus.astype(np.uint8) | (grid.I_plus.astype(np.uint8) << 1)
             | (grid.E_plus.astype(np.uint8) << 2))
    stem = str(stem)
    flags.tofile(stem + ".masks.bin")
    header = {"dims": list(grid.spec.shape), "spacing": [float(s) for s in grid.spec.spacing],
              "origin": [float(v) for v in grid.spec.lower], "dtype": "uint8", "order": "C",
              "flags": {"J_plus": 1, "I_plus": 2, "E_plus": 4}}
    with open(stem + ".masks.json", "w") as fh:
        json.dump(header, fh, indent=2, sort_keys=True)
    return header
