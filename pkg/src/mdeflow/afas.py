"""Average flow approximation series (AFAS) and its linear variant (LAFAS).

One step over [x_l, x_{l+1}] with tau = x_{l+1} - x_l applies

* the dispersion operator f_tau: mixture over the atoms X_k of the state
  pushed forward by the time-sqrt(tau) flow of X_k - Vbar, then
* the drift operator e_tau: pushforward by the time-tau flow of Vbar,

with V evaluated at the state at x_l. Midpoints, when recorded, are the
post-dispersion states.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .fields import flow
from .measure import EmpiricalMeasure, MeasureCurve, mixture, pushforward, resample
from .transport import wasserstein
from .vfp import VectorFieldProbability, VfpMap, barycenter

log = logging.getLogger(__name__)


class PartitionError(ValueError):
    pass


class Partition:
    """Strictly increasing grid 0 = x_0 < ... < x_N = T."""

    __slots__ = ("nodes",)

    def __init__(self, nodes: Sequence[float]):
        x = np.array(nodes, dtype=float)
        if x.ndim != 1 or x.shape[0] < 2:
            raise PartitionError("a partition needs at least two nodes")
        if x[0] != 0.0:
            raise PartitionError(f"partition must start at 0, got {x[0]}")
        if np.any(np.diff(x) <= 0):
            raise PartitionError("partition nodes must be strictly increasing")
        x.setflags(write=False)
        object.__setattr__(self, "nodes", x)

    def __setattr__(self, name, value):
        raise AttributeError("Partition is immutable")

    @classmethod
    def uniform(cls, T: float, steps: int) -> "Partition":
        if steps < 1:
            raise PartitionError("need at least one step")
        x = np.linspace(0.0, T, steps + 1)
        return cls(x)

    @property
    def horizon(self) -> float:
        return float(self.nodes[-1])

    @property
    def steps(self) -> int:
        return self.nodes.shape[0] - 1

    @property
    def mesh(self) -> float:
        """Maximal step length."""
        return float(np.max(np.diff(self.nodes)))

    def __repr__(self):
        return f"Partition(steps={self.steps}, T={self.horizon}, mesh={self.mesh:.3g})"


@dataclass(frozen=True)
class AfasConfig:
    particle_budget: int = 10_000
    seed: int = 0
    flow_substeps: int = 1
    record_half_steps: bool = False
    reevaluate_after_f: bool = False

    def __post_init__(self):
        if self.particle_budget < 1:
            raise ValueError("particle_budget must be >= 1")
        if self.flow_substeps < 1:
            raise ValueError("flow_substeps must be >= 1")


def step_seed(seed: int, step: int) -> int:
    """Independent, reproducible resampling seed for one scheme step."""
    return int(np.random.SeedSequence([int(seed), int(step)]).generate_state(1, dtype=np.uint64)[0])


def e_flow(v: VectorFieldProbability, m: EmpiricalMeasure, t: float, cfg: AfasConfig) -> EmpiricalMeasure:
    """Drift operator: push m forward by the time-t flow of the barycenter."""
    if t < 0:
        raise ValueError("t must be >= 0")
    vbar = barycenter(v)
    if t == 0.0 or (vbar.kind == "constant" and not np.any(vbar.v)):
        return m
    return pushforward(m, lambda x: flow(vbar, x, t, cfg.flow_substeps))


def f_flow(
    v: VectorFieldProbability,
    m: EmpiricalMeasure,
    t: float,
    cfg: AfasConfig,
    seed: int | None = None,
) -> EmpiricalMeasure:
    """Dispersion operator: mixture of time-sqrt(t) flows of the centered atoms.

    The mixture is resampled to ``cfg.particle_budget`` particles with
    ``seed`` (``cfg.seed`` when omitted).
    """
    if t < 0:
        raise ValueError("t must be >= 0")
    if t == 0.0:
        return m
    s = math.sqrt(t)
    vbar = barycenter(v)
    parts = []
    for w, X in zip(v.weights, v.fields):
        if w == 0.0:
            continue
        centered = X - vbar
        parts.append((w, pushforward(m, lambda x, c=centered: flow(c, x, s, cfg.flow_substeps))))
    total = sum(w for w, _ in parts)
    parts = [(w / total, mm) for w, mm in parts]
    mixed = parts[0][1] if len(parts) == 1 else mixture(parts)
    return resample(mixed, cfg.particle_budget, cfg.seed if seed is None else seed)


def _march(
    vfp_at: Callable[[int, float, EmpiricalMeasure], VectorFieldProbability],
    mu0: EmpiricalMeasure,
    P: Partition,
    cfg: AfasConfig,
    V_after: Callable[[EmpiricalMeasure], VectorFieldProbability] | None,
) -> MeasureCurve:
    times = [0.0]
    states = [mu0]
    state = mu0
    nodes = P.nodes
    for l in range(P.steps):
        x0, x1 = float(nodes[l]), float(nodes[l + 1])
        tau = x1 - x0
        v = vfp_at(l, x0, state)
        if v.dim != mu0.dim:
            raise ValueError(f"VFP dim {v.dim} != measure dim {mu0.dim}")
        half = f_flow(v, state, tau, cfg, seed=step_seed(cfg.seed, l))
        v_e = V_after(half) if V_after is not None else v
        state = e_flow(v_e, half, tau, cfg)
        if cfg.record_half_steps:
            times.append(0.5 * (x0 + x1))
            states.append(half)
        times.append(x1)
        states.append(state)
    return MeasureCurve(times, states)


def build_afas(V: VfpMap, mu0: EmpiricalMeasure, P: Partition, cfg: AfasConfig = AfasConfig()) -> MeasureCurve:
    """AFAS curve on the partition, starting from ``mu0``."""
    if mu0.dim != V.dim:
        raise ValueError(f"initial measure has dim {mu0.dim}, VFP map has dim {V.dim}")
    after = V if cfg.reevaluate_after_f else None
    return _march(lambda l, t, state: V(state), mu0, P, cfg, after)


def build_lafas(
    Vt: Callable[[float], VectorFieldProbability],
    mu0: EmpiricalMeasure,
    P: Partition,
    cfg: AfasConfig = AfasConfig(),
) -> MeasureCurve:
    """Linear AFAS: the VFP in step l is ``Vt(x_l)`` regardless of the state."""
    return _march(lambda l, t, state: Vt(t), mu0, P, cfg, None)


# -- convergence studies ------------------------------------------------------------

@dataclass
class LevelResult:
    level: int
    sup_distance_to_next: float | None
    distance_to_reference: float | None
    sup_distance_to_reference: float | None = None


@dataclass
class ConvergenceReport:
    levels: list[LevelResult]
    noise_floor: float
    non_monotone: list[int] = field(default_factory=list)
    curves: dict[int, MeasureCurve] = field(default_factory=dict, repr=False)

    def to_csv(self) -> str:
        def fmt(x):
            return "" if x is None else repr(float(x))

        rows = ["level,sup_distance_to_next,distance_to_reference"]
        for r in self.levels:
            rows.append(f"{r.level},{fmt(r.sup_distance_to_next)},{fmt(r.distance_to_reference)}")
        return "\n".join(rows) + "\n"


def particle_distance(a: EmpiricalMeasure, b: EmpiricalMeasure, p: float = 2.0, cap: int = 1000) -> float:
    """W_p in 1-D (exact); in higher dimensions both clouds are first
    resampled to at most ``cap`` equal-weight particles and matched exactly."""
    if a.dim == 1:
        return wasserstein(a, b, p, "Exact1D").cost
    k = min(cap, a.size, b.size)
    ra = resample(a, k, 12345) if (a.size != k or not a.is_uniform()) else a
    rb = resample(b, k, 54321) if (b.size != k or not b.is_uniform()) else b
    if ra.size != k or not ra.is_uniform():
        ra = resample(EmpiricalMeasure(np.repeat(ra.points, 2, axis=0)), k, 12345)
    if rb.size != k or not rb.is_uniform():
        rb = resample(EmpiricalMeasure(np.repeat(rb.points, 2, axis=0)), k, 54321)
    return wasserstein(ra, rb, p, "Assignment").cost


def _common_times(a: MeasureCurve, b: MeasureCurve) -> np.ndarray:
    keep = [t for t in a.times if np.min(np.abs(b.times - t)) <= 1e-9]
    return np.array(keep)


def convergence_study(
    V: VfpMap,
    mu0: EmpiricalMeasure,
    T: float,
    levels: Sequence[int],
    cfg: AfasConfig = AfasConfig(),
    p: float = 2.0,
    reference: Callable[[float], EmpiricalMeasure] | None = None,
    noise_seeds: int = 2,
    keep_curves: bool = False,
    distance: Callable[[EmpiricalMeasure, EmpiricalMeasure], float] | None = None,
) -> ConvergenceReport:
    """Run AFAS on uniform partitions with the given step counts.

    Consecutive levels are compared on their shared nodes with the sup
    distance. With a reference, the W_p distance at T is reported per level.
    The particle-noise floor is the W_p distance at T between runs of the
    finest level with ``noise_seeds`` different seeds (0 disables it).
    Decreases in the Cauchy sequence that reverse by more than the floor are
    listed in ``non_monotone``. ``distance`` defaults to
    :func:`particle_distance`.
    """
    dist = distance or (lambda a, b: particle_distance(a, b, p))
    levels = [int(n) for n in levels]
    if any(b <= a for a, b in zip(levels, levels[1:])):
        raise ValueError("levels must be strictly increasing")
    curves = {n: build_afas(V, mu0, Partition.uniform(T, n), cfg) for n in levels}

    noise = 0.0
    if noise_seeds >= 2:
        finest = levels[-1]
        ends = [curves[finest].states[-1]]
        for k in range(1, noise_seeds):
            alt = build_afas(V, mu0, Partition.uniform(T, finest), replace(cfg, seed=cfg.seed + 7919 * k))
            ends.append(alt.states[-1])
        noise = max(dist(ends[0], e) for e in ends[1:])

    results = []
    for i, n in enumerate(levels):
        sup_next = None
        if i + 1 < len(levels):
            a, b = curves[n], curves[levels[i + 1]]
            shared = _common_times(a, b)
            sup_next = max(dist(a.at(t), b.at(t)) for t in shared)
        d_ref = sup_ref = None
        if reference is not None:
            c = curves[n]
            d_ref = dist(c.states[-1], reference(T))
            sup_ref = max(dist(s, reference(float(t))) for t, s in zip(c.times, c.states))
        results.append(LevelResult(n, sup_next, d_ref, sup_ref))
        log.info("level %d: sup_next=%s ref=%s", n, sup_next, d_ref)

    bad = []
    sups = [r.sup_distance_to_next for r in results if r.sup_distance_to_next is not None]
    for i in range(1, len(sups)):
        if sups[i] > sups[i - 1] + noise:
            bad.append(levels[i])
    return ConvergenceReport(results, noise, bad, curves if keep_curves else {})
