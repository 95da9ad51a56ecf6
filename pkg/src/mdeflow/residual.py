"""Weak-form residual of the measure differential equation.

For a curve mu on nodes t_0 = 0 < ... < t_m and a test function phi the
residual at a node s is

    | int phi dmu(s) - int phi dmu(0) - Q_s |,

where Q_s is the trapezoidal quadrature over the nodes in [0, s] of
t -> int box^{V}_{mu(t)} phi dmu(t). Integrals against the clouds are exact
weighted sums.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Callable, Sequence, Union

import numpy as np

from .fields import TestFunction
from .measure import EmpiricalMeasure, MeasureCurve
from .vfp import VectorFieldProbability, VfpMap, square_op_from_derivatives

VfpSource = Union[VfpMap, Callable[[float], VectorFieldProbability]]


class ResidualError(ValueError):
    pass


@dataclass
class ResidualReport:
    per_phi: list[tuple[str, float]]
    max_residual: float
    quadrature_error_estimate: float

    def to_dict(self) -> dict:
        d = asdict(self)
        d["per_phi"] = [{"phi": name, "residual": r} for name, r in self.per_phi]
        return d


def _vfps_along(curve: MeasureCurve, V: VfpSource) -> list[VectorFieldProbability]:
    # a VfpMap reads the state, anything else is a time-indexed family
    if isinstance(V, VfpMap):
        return [V(m) for m in curve.states]
    return [V(float(t)) for t in curve.times]


def _node_values(
    curve: MeasureCurve, vfps: Sequence[VectorFieldProbability], phi: TestFunction
) -> tuple[np.ndarray, np.ndarray]:
    """(int phi dmu(t_i), int box phi dmu(t_i)) for every node."""
    F = np.empty(len(curve))
    G = np.empty(len(curve))
    for i, (m, v) in enumerate(zip(curve.states, vfps)):
        x = m.points
        val, grad, hess = phi.all_parts(x)
        F[i] = m.weights @ val
        G[i] = m.weights @ square_op_from_derivatives(v, x, grad, hess)
    return F, G


def _cumtrapz(t: np.ndarray, g: np.ndarray) -> np.ndarray:
    out = np.zeros_like(g)
    out[1:] = np.cumsum(0.5 * np.diff(t) * (g[1:] + g[:-1]))
    return out


def weak_residual(curve: MeasureCurve, V: VfpSource, phi: TestFunction, s: float) -> float:
    """Residual of the weak equation for ``phi`` on [0, s]; ``s`` must be a node."""
    try:
        k = curve.index_of(s, atol=1e-12 * max(1.0, abs(s)))
    except Exception as exc:
        raise ResidualError(str(exc)) from None
    sub = MeasureCurve(curve.times[: k + 1], curve.states[: k + 1])
    F, G = _node_values(sub, _vfps_along(sub, V), phi)
    Q = _cumtrapz(sub.times, G)
    return float(abs(F[k] - F[0] - Q[k]))


def residual_suite(
    curve: MeasureCurve,
    V: VfpSource,
    battery: Sequence[TestFunction],
    sample_times: Sequence[float] | None = None,
) -> ResidualReport:
    """Residuals over a battery of test functions and sample nodes.

    ``per_phi`` holds the maximum over the sample times for each function.
    The quadrature error estimate compares the trapezoid rule on all nodes
    with the one on every other node (Richardson, |Q_h - Q_2h| / 3) at the
    sample times that lie on the coarse grid.
    """
    times = curve.times
    if sample_times is None:
        idx = np.arange(1, len(curve))
    else:
        idx = []
        for s in sample_times:
            try:
                idx.append(curve.index_of(float(s), atol=1e-9 * max(1.0, abs(float(s)))))
            except Exception:
                raise ResidualError(f"sample time {s} is not a curve node") from None
        idx = np.array(idx, dtype=int)
    vfps = _vfps_along(curve, V)
    coarse = np.arange(0, len(curve), 2)
    per_phi = []
    quad = 0.0
    for j, phi in enumerate(battery):
        F, G = _node_values(curve, vfps, phi)
        Q = _cumtrapz(times, G)
        r = np.abs(F - F[0] - Q)
        per_phi.append((f"{j}:{phi.name}", float(r[idx].max()) if len(idx) else 0.0))
        if coarse.size >= 2:
            Qc = _cumtrapz(times[coarse], G[coarse])
            on_coarse = np.intersect1d(idx, coarse)
            if on_coarse.size:
                pos = np.searchsorted(coarse, on_coarse)
                quad = max(quad, float(np.max(np.abs(Q[on_coarse] - Qc[pos])) / 3.0))
    worst = max((r for _, r in per_phi), default=0.0)
    return ResidualReport(per_phi, worst, quad)


def integrate_phi(m: EmpiricalMeasure, phi: TestFunction) -> float:
    return float(m.weights @ phi._v(m.points))
