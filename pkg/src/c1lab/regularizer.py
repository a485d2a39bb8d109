"""Mollified metrics with controlled light cones.

``narrow`` and ``widen`` return ``g*rho_eps +/- lambda(eps) dt (x) dt`` where
``lambda(eps) = c_corr * eps``.  Adding a positive multiple of ``dt^2`` makes
every vector with a time component less causal, so the cones shrink; the
subtraction opens them.  ``c_corr`` is calibrated once per family so that the
nesting ``narrow < base < widen`` holds at every verification point for every
``eps`` in the sweep.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
from scipy.interpolate import make_interp_spline

from .chart_metric import MetricField, _central_diff, cone_section, sphere_directions
from .errors import CalibrationError, DomainError, InvalidInputError

__all__ = [
    "mollifier",
    "mollifier_mass",
    "mollify",
    "cone_nesting",
    "RegularizationFamily",
    "regularize",
    "narrow",
    "widen",
    "convergence_report",
    "report_csv",
]


def _ball_integral(m: int) -> float:
    """Integral of (1 - |x|^2)^4 over the unit ball of R^m."""
    return math.pi ** (m / 2) * 24.0 / math.gamma(m / 2 + 5)


def mollifier(u, n: Optional[int] = None) -> np.ndarray:
    """Unit-mass bump ``C_n (1 - |u|^2)^4`` supported in the unit ball of R^n."""
    u = np.asarray(u, dtype=float)
    n = u.shape[-1] if n is None else n
    r2 = np.sum(u * u, axis=-1)
    return np.where(r2 < 1.0, (1.0 - r2) ** 4, 0.0) / _ball_integral(n)


def _marginal(s, n: int) -> np.ndarray:
    """The n-dimensional mollifier integrated over all but ``s.shape[-1]`` axes."""
    s = np.asarray(s, dtype=float)
    k = s.shape[-1]
    r2 = np.sum(s * s, axis=-1)
    p = 4.0 + (n - k) / 2.0
    return np.where(r2 < 1.0, np.clip(1.0 - r2, 0.0, None) ** p, 0.0) * (
        _ball_integral(n - k) / _ball_integral(n))


def _composite_gl(panels: int, order: int):
    s, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(-1.0, 1.0, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    nodes = (mid[:, None] + half[:, None] * s[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights


def mollifier_mass(n: int, panels: int = 8, order: int = 16) -> float:
    """Quadrature of the radial profile; equals 1 for a unit-mass mollifier."""
    r, w = _composite_gl(panels, order)
    r = 0.5 * (r + 1.0)
    w = 0.5 * w
    sphere_area = 2.0 * math.pi ** (n / 2) / math.gamma(n / 2)
    return float(np.sum(w * sphere_area * r ** (n - 1) * (1 - r * r) ** 4) / _ball_integral(n))


def _ball_rule(k: int, n: int, order: int):
    """Tensor Gauss-Legendre nodes on [-1,1]^k weighted by the k-marginal kernel.

    Weights are renormalised to sum to one so constants are reproduced
    exactly; the node set is symmetric so linear functions are as well.
    """
    s, w = np.polynomial.legendre.leggauss(order)
    mesh = np.meshgrid(*([s] * k), indexing="ij")
    nodes = np.stack([m.ravel() for m in mesh], axis=-1)
    wmesh = np.meshgrid(*([w] * k), indexing="ij")
    wts = np.prod(np.stack([m.ravel() for m in wmesh], axis=-1), axis=-1)
    kern = _marginal(nodes, n)
    keep = kern > 0
    nodes, wts, kern = nodes[keep], wts[keep], kern[keep]
    kw = wts * kern
    return nodes, kw / kw.sum()


def mollify(base: MetricField, eps: float, spacing_factor: float = 8.0,
            panels: int = 16, order: int = 16, ball_order: int = 8) -> MetricField:
    """``g * rho_eps`` on the box shrunk by ``eps``; tagged smooth.

    Components independent of every coordinate are copied.  With one
    dependent coordinate the convolution is tabulated on a grid of spacing
    ``eps / spacing_factor`` and interpolated by a quintic spline.  With more
    dependent coordinates it is evaluated pointwise by quadrature over the
    marginal kernel.
    """
    if eps <= 0:
        raise InvalidInputError("eps must be positive")
    lower = base.lower + eps
    upper = base.upper - eps
    if np.any(upper <= lower):
        raise DomainError(f"eps={eps} too large for the chart box of {base.name!r}")
    n = base.dim
    axes = tuple(range(n)) if base.dependent_axes is None else base.dependent_axes
    params = dict(base.params)
    params.update({"eps": eps, "mollified_from": base.name})
    name = f"{base.name}*rho[{eps:g}]"
    excluded = _shrunk_exclusion(base, eps)

    if len(axes) == 0:
        g0 = base.metric(0.5 * (base.lower + base.upper))

        def comp0(x):
            x = np.asarray(x)
            return np.broadcast_to(g0, x.shape[:-1] + (n, n)).copy()

        def zeros(order_):
            return lambda x: np.zeros(np.asarray(x).shape[:-1] + (n,) * (order_ + 2))

        field_ = base.with_components(name, comp0, zeros(1), zeros(2), "smooth", lower, upper,
                                      params=params)
        field_.excluded = excluded
        return field_

    if len(axes) == 1:
        a = axes[0]
        h = eps / spacing_factor
        count = int(np.ceil((upper[a] - lower[a]) / h)) + 1
        grid = np.linspace(lower[a], upper[a], count)
        s, w = _composite_gl(panels, order)
        kw = w * _marginal(s[:, None], n)
        kw /= kw.sum()
        ref = 0.5 * (base.lower + base.upper)
        pts = np.broadcast_to(ref, (count, s.size, n)).copy()
        pts[..., a] = grid[:, None] - eps * s[None, :]
        vals = np.einsum("q,gqij->gij", kw, base.metric(pts))
        spl = make_interp_spline(grid, vals, k=5)
        d1 = spl.derivative(1)
        d2 = spl.derivative(2)

        def comp1(x):
            return spl(np.asarray(x, dtype=float)[..., a])

        def first1(x):
            x = np.asarray(x, dtype=float)
            out = np.zeros(x.shape[:-1] + (n, n, n))
            out[..., a, :, :] = d1(x[..., a])
            return out

        def second1(x):
            x = np.asarray(x, dtype=float)
            out = np.zeros(x.shape[:-1] + (n, n, n, n))
            out[..., a, a, :, :] = d2(x[..., a])
            return out

        field_ = base.with_components(name, comp1, first1, second1, "smooth", lower, upper,
                                      params=params)
        field_.excluded = excluded
        return field_

    axes_idx = np.asarray(axes)
    nodes, kw = _ball_rule(len(axes), n, ball_order)
    offsets = np.zeros((nodes.shape[0], n))
    offsets[:, axes_idx] = -eps * nodes

    def shifted(x):
        x = np.asarray(x, dtype=float)
        return x[..., None, :] + offsets

    def comp_k(x):
        return np.einsum("q,...qij->...ij", kw, base.metric(shifted(x), check=False))

    def first_k(x):
        return np.einsum("q,...qkij->...kij", kw, base.d_metric(shifted(x), check=False))

    def second_k(x):
        # Differences of the quadrature first derivative keep d and dd consistent.
        return _central_diff(first_k, np.asarray(x, dtype=float), eps / 16.0)

    field_ = base.with_components(name, comp_k, first_k, second_k, "smooth", lower, upper,
                                  params=params)
    field_.excluded = excluded
    return field_


def _shrunk_exclusion(base: MetricField, eps: float):
    """Points whose eps-ball meets the base field's excluded region."""
    if base.excluded is None:
        return None
    dirs = np.concatenate([np.zeros((1, base.dim)), np.eye(base.dim), -np.eye(base.dim)])
    if base.dim > 1:
        dirs = np.concatenate([dirs, sphere_directions(64, base.dim)])
    offsets = eps * dirs
    r_ex = base.params.get("r_excise")

    def excluded(x):
        x = np.asarray(x, dtype=float)
        if r_ex is not None and base.name == "painleve-gullstrand":
            return np.linalg.norm(x[..., 1:], axis=-1) < r_ex + eps
        return np.any(base.excluded(x[..., None, :] + offsets), axis=-1)

    return excluded


# -- cone nesting ----------------------------------------------------------


def cone_nesting(g1: np.ndarray, g2: np.ndarray, samples: int = 128) -> np.ndarray:
    """Largest ``g2(X, X)`` over sampled ``g1``-null X of unit chart norm, per point.

    ``g1 < g2`` (narrower) at a point iff the returned value is negative.
    Works on stacks of matrices ``(..., n, n)``.
    """
    c, A, R2 = cone_section(g1)
    if np.any(R2 <= 0):
        raise InvalidInputError("chart time is not a time function for g1 at some point")
    n = g1.shape[-1]
    L = np.linalg.cholesky(np.linalg.inv(A))
    s = sphere_directions(samples, n - 1)
    v = c[..., None, :] + np.sqrt(R2)[..., None, None] * np.einsum("qj,...ij->...qi", s, L)
    X = np.concatenate([np.ones(v.shape[:-1] + (1,)), v], axis=-1)
    X /= np.linalg.norm(X, axis=-1, keepdims=True)
    q = np.einsum("...qi,...ij,...qj->...q", X, g2, X)
    return q.max(axis=-1)


# -- family ----------------------------------------------------------------


def _tau_correction(n: int) -> np.ndarray:
    t = np.zeros((n, n))
    t[0, 0] = 1.0
    return t


@dataclass(eq=False)
class RegularizationFamily:
    """Base field, eps sweep and the calibrated correction coefficient.

    ``verify_points`` are the points at which the cone nesting was certified.
    Mollified fields are cached per eps.
    """

    base: MetricField
    eps_list: List[float]
    c_corr: float
    verify_points: np.ndarray
    K: tuple
    doublings: int = 0
    samples: int = 128
    _cache: Dict[float, MetricField] = field(default_factory=dict, repr=False)

    def mollified(self, eps: float) -> MetricField:
        if eps not in self._cache:
            self._cache[eps] = mollify(self.base, eps)
        return self._cache[eps]

    def lam(self, eps: float) -> float:
        return self.c_corr * eps

    def _corrected(self, eps: float, sign: float) -> MetricField:
        m = self.mollified(eps)
        corr = sign * self.lam(eps) * _tau_correction(m.dim)
        comp = m.components

        def components(x):
            return comp(x) + corr

        tag = "narrow" if sign > 0 else "widen"
        out = m.with_components(f"{self.base.name}:{tag}[{eps:g}]", components, m.first_derivs,
                                m.second_derivs, "smooth", m.lower, m.upper,
                                params=dict(m.params, correction=sign * self.lam(eps)))
        out.excluded = m.excluded
        return out

    def narrow(self, eps: float) -> MetricField:
        return self._corrected(eps, +1.0)

    def widen(self, eps: float) -> MetricField:
        return self._corrected(eps, -1.0)

    def nesting_ok(self, eps: float, points: Optional[np.ndarray] = None) -> bool:
        pts = self.verify_points if points is None else points
        g = self.base.metric(pts)
        gm = self.mollified(eps).metric(pts)
        corr = self.lam(eps) * _tau_correction(self.base.dim)
        inner = cone_nesting(gm + corr, g, self.samples)
        outer = cone_nesting(g, gm - corr, self.samples)
        return bool(np.all(inner < 0) and np.all(outer < 0))


def _verification_points(base: MetricField, K, count: int, seed: int) -> np.ndarray:
    lo, hi = (np.asarray(b, dtype=float) for b in K)
    rng = np.random.default_rng(seed)
    pts = lo + (hi - lo) * rng.random((4 * count, base.dim))
    pts = pts[base.contains(pts)]
    return pts[:count]


def regularize(base: MetricField, eps_list: Sequence[float], K, n_verify: int = 500,
               seed: int = 0, max_doublings: int = 20, samples: int = 128,
               c_floor: float = 0.1) -> RegularizationFamily:
    """Build and calibrate the regularization family on the compact box ``K``."""
    eps_list = [float(e) for e in eps_list]
    if not eps_list or any(e <= 0 for e in eps_list):
        raise InvalidInputError("eps_list must contain positive values")
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise InvalidInputError("eps_list must be strictly decreasing")
    pts = _verification_points(base, K, n_verify, seed)
    fam = RegularizationFamily(base=base, eps_list=eps_list, c_corr=0.0, verify_points=pts,
                               K=tuple(np.asarray(b, float) for b in K), samples=samples)
    for e in eps_list:
        excl = fam.mollified(e).excluded
        if excl is not None:
            pts = pts[~np.asarray(excl(pts), dtype=bool)]
    fam.verify_points = pts
    for e in eps_list:
        if not np.all(fam.mollified(e).contains(pts)):
            raise DomainError(f"K is not inside the domain of the eps={e} mollification")
    g = base.metric(pts)
    modulus = max(float(np.max(np.abs(fam.mollified(e).metric(pts) - g))) / e for e in eps_list)
    fam.c_corr = max(modulus, c_floor)
    for k in range(max_doublings + 1):
        if all(fam.nesting_ok(e) for e in eps_list):
            fam.doublings = k
            return fam
        fam.c_corr *= 2.0
    raise CalibrationError(f"cone nesting still fails after {max_doublings} doublings "
                           f"(c_corr={fam.c_corr:g})")


def narrow(family: RegularizationFamily, eps: float) -> MetricField:
    return family.narrow(eps)


def widen(family: RegularizationFamily, eps: float) -> MetricField:
    return family.widen(eps)


# -- convergence -----------------------------------------------------------


def _report_points(family: RegularizationFamily, per_eps: int = 20) -> np.ndarray:
    """Verification points plus fine lines along each dependent axis.

    Line spacing is at most ``min(eps) / per_eps`` so the sup-norms resolve the
    mollifier scale.
    """
    lo, hi = family.K
    center = 0.5 * (lo + hi)
    lines = max(401, int(per_eps * float(np.max(hi - lo)) / min(family.eps_list)) + 1)
    rows = [family.verify_points]
    axes = range(family.base.dim) if family.base.dependent_axes is None else family.base.dependent_axes
    for a in axes:
        line = np.tile(center, (lines, 1))
        line[:, a] = np.linspace(lo[a], hi[a], lines)
        rows.append(line)
    pts = np.concatenate(rows)
    return pts[family.base.contains(pts)]


def convergence_report(family: RegularizationFamily, K=None) -> List[dict]:
    """Sup-norm differences on ``K`` for every eps of the family."""
    if K is not None:
        family = RegularizationFamily(family.base, family.eps_list, family.c_corr,
                                      family.verify_points, tuple(np.asarray(b, float) for b in K),
                                      family.doublings, family.samples, family._cache)
    pts = _report_points(family)
    g = family.base.metric(pts)
    dg = family.base.d_metric(pts)
    rows = []
    for e in family.eps_list:
        m = family.mollified(e)
        gm = m.metric(pts)
        dgm = m.d_metric(pts)
        gn = family.narrow(e).metric(pts)
        gw = family.widen(e).metric(pts)
        rows.append({
            "eps": e,
            "lambda": family.lam(e),
            "narrow_minus_moll": float(np.max(np.abs(gn - gm))),
            "widen_minus_moll": float(np.max(np.abs(gw - gm))),
            "moll_minus_base": float(np.max(np.abs(gm - g))),
            "narrow_minus_base": float(np.max(np.abs(gn - g))),
            "dmoll_minus_dbase": float(np.max(np.abs(dgm - dg))),
        })
    for r in rows:
        r["ratio_narrow"] = r["narrow_minus_moll"] / r["eps"]
        r["ratio_widen"] = r["widen_minus_moll"] / r["eps"]
        r["ratio_ok"] = r["ratio_narrow"] <= family.c_corr * (1 + 1e-12)
    c0 = [r["moll_minus_base"] for r in rows]
    c1 = [r["dmoll_minus_dbase"] for r in rows]
    mono0 = all(b <= a for a, b in zip(c0, c0[1:]))
    mono1 = all(b <= a for a, b in zip(c1, c1[1:]))
    for r in rows:
        r["c0_monotone"] = mono0
        r["c1_monotone"] = mono1
        r["c0_factor4"] = c0[-1] < c0[0] / 4
        r["c1_factor4"] = c1[-1] < c1[0] / 4
    return rows


def report_csv(rows: Sequence[dict], extra: Optional[dict] = None) -> str:
    buf = io.StringIO()
    if not rows:
        return ""
    cols = list((extra or {}).keys()) + list(rows[0].keys())
    writer = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
    writer.writeheader()
    for r in rows:
        out = dict(extra or {})
        out.update({k: (repr(float(v)) if isinstance(v, float) else v) for k, v in r.items()})
        writer.writerow(out)
    return buf.getvalue()
