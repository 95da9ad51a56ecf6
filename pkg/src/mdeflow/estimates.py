"""Quantitative estimates of the theory as computable constants and empirical checks."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .afas import AfasConfig, e_flow, f_flow
from .fields import Box, w2inf_norm
from .measure import EmpiricalMeasure, MeasureCurve, moment
from .transport import _sorted_1d, sorted_1d_pow, wasserstein
from .vfp import VectorFieldProbability, barycenter, vfp_moment


def gronwall_rate(p: float, L: float, R: float, eps: float = 0.0) -> float:
    """Exponential rate C in W_p(mu(t), nu(t)) <= W_p(mu0, nu0) e^{C t}.

    C = (2^{p-3} p (9(p-1) L^2 + 12 R L + 2 R^2 + 3 L) + eps) / p.
    """
    inner = 9.0 * (p - 1.0) * L * L + 12.0 * R * L + 2.0 * R * R + 3.0 * L
    return (2.0 ** (p - 3.0) * p * inner + eps) / p


def moment_growth_constant(p: float, R: float) -> float:
    """2^{p-4} p ((9p + 5) R^2 + 3), the Lipschitz constant of t -> M_p along AFAS (up to C(M))."""
    return 2.0 ** (p - 4.0) * p * ((9.0 * p + 5.0) * R * R + 3.0)


def holder_constant_bound(B: float) -> float:
    """Acceptance ceiling 4 (B + 1) for the Hölder quotient with exponent 1/p."""
    return 4.0 * (B + 1.0)


def holder_quotients(
    curve: MeasureCurve,
    p: float = 2.0,
    distance: Callable[[EmpiricalMeasure, EmpiricalMeasure], float] | None = None,
) -> np.ndarray:
    """Matrix of W_p(mu(t_i), mu(t_j)) / |t_i - t_j|^{1/p} over node pairs (0 on the diagonal)."""
    t = curve.times
    n = len(t)
    if distance is None and curve.dim == 1:
        # sort every state once instead of once per pair
        reduced = [_sorted_1d(m) for m in curve.states]
        dist_ij = lambda i, j: sorted_1d_pow(*reduced[i], *reduced[j], p) ** (1.0 / p)
    else:
        dist = distance or (lambda a, b: wasserstein(a, b, p).cost)
        dist_ij = lambda i, j: dist(curve.states[i], curve.states[j])
    Q = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            Q[i, j] = Q[j, i] = dist_ij(i, j) / abs(t[j] - t[i]) ** (1.0 / p)
    return Q


def moment_lipschitz(curve: MeasureCurve, p: float = 2.0, x0=None) -> float:
    """Largest |M_p(mu(t_i+1)) - M_p(mu(t_i))| / (t_i+1 - t_i) over consecutive nodes."""
    x0 = np.zeros(curve.dim) if x0 is None else x0
    M = np.array([moment(m, x0, p) for m in curve.states])
    return float(np.max(np.abs(np.diff(M)) / np.diff(curve.times)))


@dataclass
class StepCheck:
    s: float
    t: float
    distance: float
    bound: float

    @property
    def ok(self) -> bool:
        return self.distance <= self.bound * (1.0 + 1e-9) + 1e-12


def e_step_check(
    v: VectorFieldProbability, m: EmpiricalMeasure, s: float, t: float, p: float, box: Box, cfg: AfasConfig,
    distance: Callable[[EmpiricalMeasure, EmpiricalMeasure], float],
) -> StepCheck:
    """W_p(e_s m, e_t m) against |t - s| M_1(V)."""
    d = distance(e_flow(v, m, s, cfg), e_flow(v, m, t, cfg))
    return StepCheck(s, t, d, abs(t - s) * vfp_moment(v, 1.0, box))


def f_step_check(
    v: VectorFieldProbability, m: EmpiricalMeasure, s: float, t: float, p: float, box: Box, cfg: AfasConfig,
    distance: Callable[[EmpiricalMeasure, EmpiricalMeasure], float],
) -> StepCheck:
    """W_p(f_s m, f_t m) against sqrt|t - s| (||Vbar||_inf + M_p(V)^{1/p})."""
    d = distance(f_flow(v, m, s, cfg), f_flow(v, m, t, cfg))
    vbar = w2inf_norm(barycenter(v), box)
    bound = math.sqrt(abs(t - s)) * (vbar + vfp_moment(v, p, box) ** (1.0 / p))
    return StepCheck(s, t, d, bound)
