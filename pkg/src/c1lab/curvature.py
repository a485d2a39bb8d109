"""Christoffel symbols, Riemann/Ricci curvature and null-energy checks.

Index conventions follow the coordinate formulas

    Riem^m_ijk = d_j G^m_ik - d_k G^m_ij + G^m_js G^s_ik - G^m_ks G^s_ij
    Ric_ij     = d_m G^m_ij - d_j G^m_im + G^m_ij G^k_km - G^m_ik G^k_jm

with arrays ``gamma[..., k, i, j] = G^k_ij`` and
``dgamma[..., m, k, i, j] = d_m G^k_ij``.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence

import numpy as np

from .chart_metric import BackgroundMetric, MetricField, null_directions
from .errors import DomainError, InvalidInputError, InvalidMetricError

__all__ = [
    "ChristoffelAt",
    "RicciAt",
    "TestBump",
    "christoffel_symbols",
    "christoffel_derivatives",
    "riemann_from",
    "ricci_from",
    "christoffel",
    "riemann",
    "ricci",
    "ricci_contract",
    "distributional_ricci_pairing",
    "pointwise_ricci_integral",
    "NECReport",
    "nec_surrogate_check",
    "nec_threshold_sweep",
    "measured_eps0",
]


def christoffel_symbols(g: np.ndarray, dg: np.ndarray) -> np.ndarray:
    """G^k_ij = 1/2 g^kl (d_i g_lj + d_j g_li - d_l g_ij)."""
    try:
        ginv = np.linalg.inv(g)
    except np.linalg.LinAlgError as exc:
        raise InvalidMetricError("singular metric matrix") from exc
    # lower[l, i, j] = d_i g_lj + d_j g_li - d_l g_ij
    lower = (np.einsum("...ilj->...lij", dg) + np.einsum("...jli->...lij", dg) - dg)
    return 0.5 * np.einsum("...kl,...lij->...kij", ginv, lower)


def christoffel_derivatives(g: np.ndarray, dg: np.ndarray, ddg: np.ndarray) -> np.ndarray:
    """d_m G^k_ij from the metric and its first two derivatives."""
    ginv = np.linalg.inv(g)
    lower = (np.einsum("...ilj->...lij", dg) + np.einsum("...jli->...lij", dg) - dg)
    # ddg[..., m, k, i, j] = d_m d_k g_ij
    dlower = (np.einsum("...milj->...mlij", ddg) + np.einsum("...mjli->...mlij", ddg) - ddg)
    dginv = -np.einsum("...ka,...mab,...bl->...mkl", ginv, dg, ginv)
    return 0.5 * (np.einsum("...mkl,...lij->...mkij", dginv, lower)
                  + np.einsum("...kl,...mlij->...mkij", ginv, dlower))


def riemann_from(gamma: np.ndarray, dgamma: np.ndarray) -> np.ndarray:
    """Riem[..., m, i, j, k] = Riem^m_ijk."""
    term1 = np.einsum("...jmik->...mijk", dgamma)
    term2 = np.einsum("...kmij->...mijk", dgamma)
    term3 = np.einsum("...mjs,...sik->...mijk", gamma, gamma)
    term4 = np.einsum("...mks,...sij->...mijk", gamma, gamma)
    return term1 - term2 + term3 - term4


def ricci_from(gamma: np.ndarray, dgamma: np.ndarray) -> np.ndarray:
    t1 = np.einsum("...mmij->...ij", dgamma)
    t2 = np.einsum("...jmim->...ij", dgamma)
    t3 = np.einsum("...mij,...kkm->...ij", gamma, gamma)
    t4 = np.einsum("...mik,...kjm->...ij", gamma, gamma)
    return t1 - t2 + t3 - t4


def ricci_contract(riem: np.ndarray) -> np.ndarray:
    """Ric_ij = Riem^m_imj."""
    return np.einsum("...mimj->...ij", riem)


@dataclass
class ChristoffelAt:
    point: np.ndarray
    gamma: np.ndarray


@dataclass
class RicciAt:
    point: np.ndarray
    ric: np.ndarray

    def quadratic(self, X) -> float:
        X = np.asarray(X, dtype=float)
        return float(X @ self.ric @ X)


def christoffel(field: MetricField, x) -> ChristoffelAt:
    x = np.asarray(x, dtype=float)
    return ChristoffelAt(x, christoffel_symbols(field.metric(x), field.d_metric(x)))


def _gamma_and_derivative(field: MetricField, x, step: Optional[float] = None):
    g = field.metric(x)
    dg = field.d_metric(x)
    ddg = field.dd_metric(x, step=step)
    return christoffel_symbols(g, dg), christoffel_derivatives(g, dg, ddg)


def riemann(field: MetricField, x, step: Optional[float] = None) -> np.ndarray:
    """Riem^m_ijk at ``x`` (batched); raises RegularityError on raw C^1 fields."""
    gamma, dgamma = _gamma_and_derivative(field, x, step)
    return riemann_from(gamma, dgamma)


def ricci(field: MetricField, x, step: Optional[float] = None):
    """Ricci tensor at ``x``; a :class:`RicciAt` for a single point, an array for batches."""
    x = np.asarray(x, dtype=float)
    gamma, dgamma = _gamma_and_derivative(field, x, step)
    ric = ricci_from(gamma, dgamma)
    if x.ndim == 1:
        return RicciAt(x, ric)
    return ric


# -- distributional pairing ------------------------------------------------


@dataclass
class TestBump:
    """Non-negative product bump ``prod_k (1 - ((x_k - c_k)/r)^2)^4`` on a cube.

    The cube ``|x_k - c_k| <= r`` is the support; the profile is C^3 across its
    faces and polynomial inside, so Gauss-Legendre rules on the cube converge
    quickly.
    """

    __test__ = False

    center: np.ndarray
    radius: float

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=float)
        if self.radius <= 0:
            raise InvalidInputError("bump radius must be positive")

    def _factors(self, x):
        s = (np.asarray(x, dtype=float) - self.center) / self.radius
        inside = np.abs(s) < 1.0
        base = np.where(inside, 1.0 - s * s, 0.0)
        phi = base**4
        dphi = np.where(inside, -8.0 * s * base**3 / self.radius, 0.0)
        return phi, dphi

    def __call__(self, x) -> np.ndarray:
        phi, _ = self._factors(x)
        return np.prod(phi, axis=-1)

    def gradient(self, x) -> np.ndarray:
        phi, dphi = self._factors(x)
        n = phi.shape[-1]
        out = np.empty(phi.shape)
        for k in range(n):
            others = np.prod(np.delete(phi, k, axis=-1), axis=-1)
            out[..., k] = dphi[..., k] * others
        return out

    def support_box(self):
        return self.center - self.radius, self.center + self.radius


def _gauss_nodes(lo, hi, order: int, panels: int):
    """Tensor-product composite Gauss-Legendre nodes and weights on a box."""
    s, w = np.polynomial.legendre.leggauss(order)
    axes_x, axes_w = [], []
    for a, b in zip(lo, hi):
        edges = np.linspace(a, b, panels + 1)
        xs, ws = [], []
        for p in range(panels):
            half = 0.5 * (edges[p + 1] - edges[p])
            mid = 0.5 * (edges[p + 1] + edges[p])
            xs.append(mid + half * s)
            ws.append(half * w)
        axes_x.append(np.concatenate(xs))
        axes_w.append(np.concatenate(ws))
    mesh = np.meshgrid(*axes_x, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=-1)
    wmesh = np.meshgrid(*axes_w, indexing="ij")
    wts = np.prod(np.stack([m.ravel() for m in wmesh], axis=-1), axis=-1)
    return pts, wts


def _vector_field_and_jacobian(X: Callable, pts: np.ndarray, h: float = 1e-4):
    vals = np.asarray(X(pts), dtype=float)
    n = pts.shape[-1]
    jac = np.empty(vals.shape[:-1] + (n, vals.shape[-1]))  # [..., m, i] = d_m X^i
    for m in range(n):
        e = np.zeros(n)
        e[m] = h
        jac[..., m, :] = (np.asarray(X(pts - 2 * e)) - 8 * np.asarray(X(pts - e))
                          + 8 * np.asarray(X(pts + e)) - np.asarray(X(pts + 2 * e))) / (12 * h)
    return vals, jac


def distributional_ricci_pairing(field: MetricField, X: Callable, mu: TestBump,
                                 order: int = 8, panels: int = 1) -> float:
    """<Ric(X, X), mu> with the derivative terms moved onto ``mu X^i X^j``.

    Only first derivatives of the metric enter, so the pairing is defined for
    C^1 fields.  ``mu`` acts as a density with respect to coordinate volume.
    """
    lo, hi = mu.support_box()
    if np.any(lo < field.lower) or np.any(hi > field.upper):
        raise DomainError("test bump support escapes the chart domain")
    pts, wts = _gauss_nodes(lo, hi, order, panels)
    if field.excluded is not None and np.any(field.excluded(pts)):
        raise DomainError("test bump support meets an excluded region")
    gamma = christoffel_symbols(field.metric(pts, check=False), field.d_metric(pts, check=False))
    Xv, dX = _vector_field_and_jacobian(X, pts)
    m = mu(pts)
    dm = mu.gradient(pts)
    # d_m (mu X^i X^j)
    d_mXX = (np.einsum("...m,...i,...j->...mij", dm, Xv, Xv)
             + m[:, None, None, None] * (np.einsum("...mi,...j->...mij", dX, Xv)
                                         + np.einsum("...i,...mj->...mij", Xv, dX)))
    by_parts_1 = -np.einsum("...mij,...mij->...", gamma, d_mXX)
    trace_gamma = np.einsum("...mim->...i", gamma)  # G^m_im
    by_parts_2 = np.einsum("...i,...jij->...", trace_gamma, d_mXX)
    quad = (np.einsum("...mij,...kkm->...ij", gamma, gamma)
            - np.einsum("...mik,...kjm->...ij", gamma, gamma))
    direct = m * np.einsum("...i,...ij,...j->...", Xv, quad, Xv)
    return float(np.sum(wts * (by_parts_1 + by_parts_2 + direct)))


def pointwise_ricci_integral(field: MetricField, X: Callable, mu: TestBump,
                             order: int = 8, panels: int = 1) -> float:
    """Direct quadrature of Ric(X, X) * mu; needs second derivatives."""
    lo, hi = mu.support_box()
    pts, wts = _gauss_nodes(lo, hi, order, panels)
    ric = ricci(field, pts)
    Xv = np.asarray(X(pts), dtype=float)
    vals = np.einsum("...i,...ij,...j->...", Xv, ric, Xv) * mu(pts)
    return float(np.sum(wts * vals))


# -- surrogate null energy condition ----------------------------------------


@dataclass
class NECReport:
    eps: Optional[float]
    delta: float
    min_value: float
    passed: bool
    witness_point: np.ndarray
    witness_vector: np.ndarray
    n_points: int
    n_vectors: int

    def row(self) -> dict:
        return {
            "eps": "" if self.eps is None else repr(float(self.eps)),
            "delta": repr(float(self.delta)),
            "min_ric": repr(float(self.min_value)),
            "pass": "pass" if self.passed else "fail",
            "witness_point": " ".join(repr(float(v)) for v in self.witness_point),
            "witness_vector": " ".join(repr(float(v)) for v in self.witness_vector),
        }


def _box_grid(lo, hi, per_axis: int) -> np.ndarray:
    axes = [np.linspace(a, b, per_axis) for a, b in zip(lo, hi)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


def nec_surrogate_check(field_eps: MetricField, K, c1: float, c2: float, delta: float,
                        samples: int = 26, points_per_axis: int = 7, eps: Optional[float] = None,
                        h: Optional[BackgroundMetric] = None) -> NECReport:
    """Minimum of Ric(X, X) over field-null X with ``c1 <= |X|_h <= c2`` on a grid of ``K``.

    Ric(sX, sX) = s^2 Ric(X, X), so for each sampled null direction the
    minimum over the norm range is attained at ``c1`` or ``c2``.
    """
    if not (0 < c1 < c2):
        raise InvalidInputError("need 0 < c1 < c2")
    if delta <= 0:
        raise InvalidInputError("delta must be positive")
    lo, hi = (np.asarray(b, dtype=float) for b in K)
    pts = _box_grid(lo, hi, points_per_axis)
    h = h or BackgroundMetric()
    g = field_eps.metric(pts)
    ric = ricci(field_eps, pts)
    best = (np.inf, None, None)
    for p, gp, rp in zip(pts, g, ric):
        X = null_directions(gp, samples)
        X = X / h.norm(p, X)[:, None]
        q = np.einsum("ki,ij,kj->k", X, rp, X)
        scale = np.where(q >= 0, c1, c2)
        vals = q * scale**2
        k = int(np.argmin(vals))
        if vals[k] < best[0]:
            best = (float(vals[k]), p, X[k] * scale[k])
    return NECReport(eps=eps, delta=delta, min_value=best[0], passed=best[0] > -delta,
                     witness_point=np.asarray(best[1]), witness_vector=np.asarray(best[2]),
                     n_points=len(pts), n_vectors=len(pts) * samples)


def nec_threshold_sweep(narrow: Callable[[float], MetricField], eps_list: Sequence[float],
                        deltas: Sequence[float], K, c1: float, c2: float,
                        **kwargs) -> List[NECReport]:
    """Run the surrogate check for every (eps, delta) pair.

    ``narrow(eps)`` returns the narrowed regularization at scale ``eps``.  The
    minimum is computed once per eps and re-judged for each delta.
    """
    reports = []
    for eps in eps_list:
        base = nec_surrogate_check(narrow(eps), K, c1, c2, min(deltas), eps=eps, **kwargs)
        for d in deltas:
            reports.append(NECReport(eps=eps, delta=d, min_value=base.min_value,
                                     passed=base.min_value > -d,
                                     witness_point=base.witness_point,
                                     witness_vector=base.witness_vector,
                                     n_points=base.n_points, n_vectors=base.n_vectors))
    return reports


def measured_eps0(reports: Sequence[NECReport], delta: float) -> Optional[float]:
    """Largest tested eps such that the check passes for it and every smaller tested eps."""
    rows = sorted((r for r in reports if r.delta == delta), key=lambda r: r.eps)
    eps0 = None
    for r in rows:
        if not r.passed:
            break
        eps0 = r.eps
    return eps0


def nec_csv(reports: Sequence[NECReport], extra: Optional[dict] = None) -> str:
    buf = io.StringIO()
    cols = list((extra or {}).keys()) + ["eps", "delta", "min_ric", "pass",
                                          "witness_point", "witness_vector"]
    writer = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
    writer.writeheader()
    for r in reports:
        row = dict(extra or {})
        row.update(r.row())
        writer.writerow(row)
    return buf.getvalue()
