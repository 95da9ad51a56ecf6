"""p-Wasserstein distances between empirical measures.

Three solvers sit behind :func:`wasserstein`:

* ``Exact1D`` -- monotone (quantile) coupling, exact for any weights in 1-D;
* ``Assignment`` -- exact optimal assignment for equal-weight clouds of
  equal size;
* ``Sinkhorn`` -- log-domain entropic solver whose reported ``gap_bound``
  certifies the distance to the exact value (rounded primal plan vs.
  c-transformed dual potentials).
"""
from __future__ import annotations

import enum
import math
from dataclasses import asdict, dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.sparse.linalg import LinearOperator, cg

from ._backend import kernels
from .measure import EmpiricalMeasure, MeasureCurve

ASSIGNMENT_MAX = 2000
SINKHORN_MAX_ENTRIES = 50_000_000


class Method(str, enum.Enum):
    AUTO = "auto"
    EXACT_1D = "Exact1D"
    ASSIGNMENT = "Assignment"
    SINKHORN = "Sinkhorn"


class TransportError(ValueError):
    pass


class SinkhornConvergenceError(TransportError):
    def __init__(self, message: str, marginal_violation: float):
        super().__init__(message)
        self.marginal_violation = marginal_violation


@dataclass(frozen=True)
class TransportPlanReport:
    cost: float
    method: str
    iterations: int
    gap_bound: float
    p: float = 2.0

    def to_dict(self) -> dict:
        return asdict(self)


def _check_dims(m1: EmpiricalMeasure, m2: EmpiricalMeasure) -> None:
    if m1.dim != m2.dim:
        raise TransportError(f"dimension mismatch: {m1.dim} vs {m2.dim}")


def _sorted_1d(m: EmpiricalMeasure):
    x = m.points[:, 0]
    order = np.argsort(x, kind="stable")
    cw = np.cumsum(m.weights[order])
    cw /= cw[-1]
    return np.ascontiguousarray(x[order]), np.ascontiguousarray(cw)


def sorted_1d_pow(x, cwx, y, cwy, p: float) -> float:
    """W_p^p between clouds already reduced by :func:`_sorted_1d`."""
    return kernels.wasserstein_1d_pow(x, cwx, y, cwy, float(p))


def exact_1d_pow(m1: EmpiricalMeasure, m2: EmpiricalMeasure, p: float) -> float:
    """W_p(m1, m2)^p through the monotone rearrangement."""
    return sorted_1d_pow(*_sorted_1d(m1), *_sorted_1d(m2), p)


def _cost(m1: EmpiricalMeasure, m2: EmpiricalMeasure, p: float) -> np.ndarray:
    return kernels.cost_matrix(
        np.ascontiguousarray(m1.points), np.ascontiguousarray(m2.points), float(p)
    )


def assignment_pow(m1: EmpiricalMeasure, m2: EmpiricalMeasure, p: float) -> float:
    if m1.size != m2.size:
        raise TransportError(f"Assignment needs equal particle counts, got {m1.size} and {m2.size}")
    if not (m1.is_uniform() and m2.is_uniform()):
        raise TransportError("Assignment needs equal-weight clouds; resample first")
    C = _cost(m1, m2, p)
    rows, cols = linear_sum_assignment(C)
    # fsum is exactly rounded, so the value does not depend on the order
    # the solver returns the matched pairs in
    return math.fsum(sorted(C[rows, cols].tolist())) / m1.size


def sinkhorn_pow(
    m1: EmpiricalMeasure,
    m2: EmpiricalMeasure,
    p: float,
    *,
    eps_scale: float = 0.05,
    tol: float = 1e-9,
    max_iter: int = 10_000,
    check_every: int = 10,
    newton_switch: float = 1e-3,
) -> tuple[float, float, int]:
    """Entropic OT in the log domain.

    Plain Sinkhorn sweeps run until the L1 row-marginal violation drops
    below ``newton_switch``; Newton steps on the same entropic dual (solved
    matrix-free by conjugate gradients) then drive it below ``tol``. At
    eps = 0.05 * median cost the sweeps alone contract too slowly to reach
    1e-9 in 10^4 iterations. Every sweep and every Newton step counts
    towards ``max_iter``.

    Returns ``(upper, lower, iterations)`` where ``upper`` is the cost of the
    rounded (exactly feasible) plan and ``lower`` the dual value of the
    c-transformed potentials, so that lower <= W_p^p <= upper.
    """
    if m1.size * m2.size > SINKHORN_MAX_ENTRIES:
        raise TransportError(
            f"{m1.size}x{m2.size} cost matrix is too large; resample both clouds first"
        )
    C = np.ascontiguousarray(_cost(m1, m2, p))
    a, b = m1.weights, m2.weights
    med = float(np.median(C))
    if med <= 0.0:
        med = float(C.max())
    if med <= 0.0:
        return 0.0, 0.0, 0
    eps = eps_scale * med
    with np.errstate(divide="ignore"):
        loga = np.ascontiguousarray(np.log(a))
        logb = np.ascontiguousarray(np.log(b))
    CT = np.ascontiguousarray(C.T)

    def plan(f, g):
        return np.exp((f[:, None] + g[None, :] - C) / eps + loga[:, None] + logb[None, :])

    f = np.zeros(m1.size)
    g = np.zeros(m2.size)
    violation = np.inf
    it = 0
    while it < max_iter:
        if violation < newton_switch:
            f, g, ok = _newton_step(f, g, C, a, b, eps, plan, violation)
            it += 1
            if not ok:
                # fall back to plain sweeps for a while
                violation = np.inf
        f = kernels.softmin_rows(C, g, logb, eps)
        g = kernels.softmin_rows(CT, f, loga, eps)
        it += 1
        if violation < newton_switch or it % check_every == 0 or it >= max_iter:
            violation = float(np.abs(plan(f, g).sum(axis=1) - a).sum())
            if violation < tol:
                break
    if violation >= tol:
        raise SinkhornConvergenceError(
            f"Sinkhorn did not converge in {max_iter} iterations "
            f"(L1 marginal violation {violation:.3e})",
            violation,
        )
    P = plan(f, g)
    upper = float(np.sum(_round_to_polytope(P, a, b) * C))
    g_feasible = np.min(C - f[:, None], axis=0)
    lower = float(a @ f + b @ g_feasible)
    return upper, min(lower, upper), it


def _newton_step(f, g, C, a, b, eps, plan, violation):
    """One damped Newton step on the entropic dual; returns (f, g, improved)."""
    n, m = f.shape[0], g.shape[0]
    P = plan(f, g)
    r, c = P.sum(axis=1), P.sum(axis=0)
    rhs = eps * np.concatenate([a - r, b - c])
    H = LinearOperator((n + m, n + m), matvec=lambda z: np.concatenate([r * z[:n] + P @ z[n:], P.T @ z[:n] + c * z[n:]]))
    d = np.maximum(np.concatenate([r, c]), 1e-300)
    M = LinearOperator((n + m, n + m), matvec=lambda z: z / d)
    z, _ = cg(H, rhs, rtol=1e-10, maxiter=500, M=M)
    total = violation + float(np.abs(c - b).sum())
    step = 1.0
    while step >= 1e-4:
        f2, g2 = f + step * z[:n], g + step * z[n:]
        P2 = plan(f2, g2)
        v2 = float(np.abs(P2.sum(axis=1) - a).sum() + np.abs(P2.sum(axis=0) - b).sum())
        if np.isfinite(v2) and v2 < total:
            return f2, g2, True
        step *= 0.5
    return f, g, False


def _round_to_polytope(P: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Project a near-feasible plan onto the coupling polytope of (a, b)."""
    r = P.sum(axis=1)
    x = np.minimum(1.0, np.divide(a, r, out=np.ones_like(a), where=r > 0))
    P = P * x[:, None]
    c = P.sum(axis=0)
    y = np.minimum(1.0, np.divide(b, c, out=np.ones_like(b), where=c > 0))
    P = P * y[None, :]
    err_r = a - P.sum(axis=1)
    err_c = b - P.sum(axis=0)
    mass = err_r.sum()
    if mass > 0:
        P = P + np.outer(err_r, err_c) / mass
    return P


def wasserstein(
    m1: EmpiricalMeasure,
    m2: EmpiricalMeasure,
    p: float = 2.0,
    method: str | Method = Method.AUTO,
    **sinkhorn_options,
) -> TransportPlanReport:
    """W_p distance between two clouds.

    ``auto`` selects ``Exact1D`` in one dimension, ``Assignment`` for
    equal-weight clouds of equal size up to 2000 particles, and ``Sinkhorn``
    otherwise.
    """
    if p < 1:
        raise TransportError(f"p must be >= 1, got {p}")
    _check_dims(m1, m2)
    method = Method(method)
    if method is Method.AUTO:
        if m1.dim == 1:
            method = Method.EXACT_1D
        elif (
            m1.size == m2.size
            and m1.size <= ASSIGNMENT_MAX
            and m1.is_uniform()
            and m2.is_uniform()
        ):
            method = Method.ASSIGNMENT
        else:
            method = Method.SINKHORN

    if method is Method.EXACT_1D:
        if m1.dim != 1:
            raise TransportError("Exact1D requires dim = 1")
        cost_p = exact_1d_pow(m1, m2, p)
        return TransportPlanReport(cost_p ** (1.0 / p), method.value, 0, 0.0, p)
    if method is Method.ASSIGNMENT:
        cost_p = assignment_pow(m1, m2, p)
        return TransportPlanReport(cost_p ** (1.0 / p), method.value, 0, 0.0, p)
    if (
        m1.size == m2.size
        and np.array_equal(m1.points, m2.points)
        and np.array_equal(m1.weights, m2.weights)
    ):
        # the entropic plan blurs even identical clouds; the identity coupling is exact
        return TransportPlanReport(0.0, method.value, 0, 0.0, p)
    upper, lower, it = sinkhorn_pow(m1, m2, p, **sinkhorn_options)
    hi = upper ** (1.0 / p)
    lo = max(lower, 0.0) ** (1.0 / p)
    return TransportPlanReport(hi, method.value, it, hi - lo, p)


def wasserstein_distance(m1, m2, p: float = 2.0, method="auto") -> float:
    return wasserstein(m1, m2, p, method).cost


def w1_duality_lower_bound(
    m1: EmpiricalMeasure,
    m2: EmpiricalMeasure,
    witnesses: Sequence[Callable[[np.ndarray], np.ndarray]],
) -> float:
    """Kantorovich lower bound max_f |int f dm1 - int f dm2| over 1-Lipschitz witnesses.

    Each witness maps an (N, n) point array to N values. Callers are
    responsible for the Lipschitz certificate; see :func:`lipschitz_witnesses_1d`.
    """
    _check_dims(m1, m2)
    best = 0.0
    for f in witnesses:
        best = max(best, abs(m1.integrate(f) - m2.integrate(f)))
    return best


class PiecewiseLinearWitness:
    """f(x) = int_{b_0}^{x_axis} s, with slope s_i on [b_i, b_{i+1}] and 0 outside.

    The Lipschitz constant is max |s_i|, checked to be <= 1 at construction.
    """

    def __init__(self, breaks, slopes, axis: int = 0):
        self.breaks = np.asarray(breaks, dtype=float)
        self.slopes = np.asarray(slopes, dtype=float)
        if self.breaks.ndim != 1 or self.slopes.shape != (self.breaks.shape[0] - 1,):
            raise ValueError("need len(slopes) == len(breaks) - 1")
        if np.any(np.diff(self.breaks) <= 0):
            raise ValueError("breaks must be strictly increasing")
        self.lipschitz = float(np.max(np.abs(self.slopes))) if self.slopes.size else 0.0
        if self.lipschitz > 1.0:
            raise ValueError(f"witness has Lipschitz constant {self.lipschitz} > 1")
        self.axis = axis
        self._vals = np.concatenate(([0.0], np.cumsum(self.slopes * np.diff(self.breaks))))

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return np.interp(x[:, self.axis], self.breaks, self._vals)


def adapted_witnesses_1d(m1: EmpiricalMeasure, m2: EmpiricalMeasure, count: int = 64):
    """``count`` piecewise-linear 1-Lipschitz witnesses with slopes +-1.

    Witness k splits the joint support into k+1 equal cells and uses the sign
    of the CDF difference at each cell centre as slope. Whatever the data,
    every member is 1-Lipschitz, so the resulting bound stays valid.
    """
    lo = float(min(m1.points.min(), m2.points.min()))
    hi = float(max(m1.points.max(), m2.points.max()))
    if hi <= lo:
        return [PiecewiseLinearWitness([lo, lo + 1.0], [1.0])]
    x1, c1 = _sorted_1d(m1)
    x2, c2 = _sorted_1d(m2)

    def cdf(xs, cw, t):
        i = np.searchsorted(xs, t, side="right")
        return np.where(i > 0, cw[np.maximum(i - 1, 0)], 0.0)

    out = []
    for k in range(count):
        breaks = np.linspace(lo, hi, k + 2)
        mid = 0.5 * (breaks[:-1] + breaks[1:])
        slopes = np.sign(cdf(x1, c1, mid) - cdf(x2, c2, mid))
        out.append(PiecewiseLinearWitness(breaks, slopes))
    return out


def curve_sup_distance(c1: MeasureCurve, c2: MeasureCurve, p: float = 2.0, method="auto") -> float:
    """max over shared nodes of W_p(c1(t), c2(t)); the grids must coincide."""
    if c1.times.shape != c2.times.shape or not np.array_equal(c1.times, c2.times):
        raise TransportError("curves are defined on different time grids")
    return max(wasserstein(a, b, p, method).cost for a, b in zip(c1.states, c2.states))
