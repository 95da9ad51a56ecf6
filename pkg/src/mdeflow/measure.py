"""Weighted particle clouds representing probability measures on R^n."""
from __future__ import annotations

import json
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from ._backend import kernels

WEIGHT_TOL = 1e-12
RENORMALIZE_TOL = 1e-9


class MeasureError(ValueError):
    pass


def _as_point_array(points, dim: int | None = None) -> np.ndarray:
    pts = np.array(points, dtype=float)
    if pts.ndim == 0:
        pts = pts.reshape(1, 1)
    elif pts.ndim == 1:
        # a flat list is a list of scalars unless the caller fixed dim > 1
        pts = pts.reshape(1, -1) if dim not in (None, 1) else pts.reshape(-1, 1)
    if pts.ndim != 2:
        raise MeasureError(f"points must be a 2-D array, got shape {pts.shape}")
    return pts


class EmpiricalMeasure:
    """A probability measure sum_i w_i delta_{x_i} on R^n.

    Parameters
    ----------
    points : array_like, shape (N, n) or (N,)
        Particle positions. A flat sequence is read as N points in R^1.
    weights : array_like, shape (N,), optional
        Nonnegative weights. Uniform when omitted. Sums off by less than
        1e-9 are renormalized; anything further off is rejected.

    Instances are immutable: the underlying arrays are read-only.
    """

    __slots__ = ("points", "weights")

    def __init__(self, points, weights=None):
        pts = _as_point_array(points)
        n = pts.shape[0]
        if n == 0:
            raise MeasureError("a measure needs at least one particle")
        if not np.all(np.isfinite(pts)):
            bad = int(np.argwhere(~np.isfinite(pts))[0, 0])
            raise MeasureError(f"non-finite coordinate at particle {bad}: {pts[bad]}")
        if weights is None:
            w = np.full(n, 1.0 / n)
        else:
            w = np.array(weights, dtype=float).reshape(-1)
            if w.shape[0] != n:
                raise MeasureError(f"{w.shape[0]} weights for {n} points")
            if not np.all(np.isfinite(w)) or np.any(w < 0):
                raise MeasureError("weights must be finite and nonnegative")
            total = w.sum()
            if abs(total - 1.0) > RENORMALIZE_TOL:
                raise MeasureError(f"weights sum to {total!r}, expected 1")
            if abs(total - 1.0) > 0.0:
                w = w / total
        pts.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)

    def __setattr__(self, name, value):
        raise AttributeError("EmpiricalMeasure is immutable")

    @classmethod
    def dirac(cls, x) -> "EmpiricalMeasure":
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return cls(x.reshape(1, -1), [1.0])

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def size(self) -> int:
        return self.points.shape[0]

    def __len__(self) -> int:
        return self.size

    def __repr__(self) -> str:
        return f"EmpiricalMeasure(size={self.size}, dim={self.dim})"

    def mean(self) -> np.ndarray:
        return self.weights @ self.points

    def is_uniform(self) -> bool:
        return bool(np.all(self.weights == self.weights[0]))

    def integrate(self, f: Callable[[np.ndarray], np.ndarray]) -> float:
        """Integral of a vectorized scalar function against the measure."""
        vals = np.asarray(f(self.points), dtype=float).reshape(-1)
        return float(self.weights @ vals)


def moment(m: EmpiricalMeasure, x0, p: float) -> float:
    """Return sum_i w_i |x_i - x0|^p."""
    if p < 1:
        raise MeasureError(f"moment order must be >= 1, got {p}")
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    if x0.shape != (m.dim,):
        raise MeasureError(f"center has shape {x0.shape}, measure dim is {m.dim}")
    r = np.linalg.norm(m.points - x0, axis=1)
    return float(m.weights @ r**p)


def covariance(m: EmpiricalMeasure) -> np.ndarray:
    centered = m.points - m.mean()
    cov = (centered * m.weights[:, None]).T @ centered
    return 0.5 * (cov + cov.T)


def pushforward(m: EmpiricalMeasure, f: Callable[[np.ndarray], np.ndarray]) -> EmpiricalMeasure:
    """Image measure f_* m; ``f`` maps an (N, n) array to an (N, n) array."""
    out = np.asarray(f(m.points), dtype=float)
    if out.shape != m.points.shape:
        raise MeasureError(f"map returned shape {out.shape}, expected {m.points.shape}")
    bad = ~np.all(np.isfinite(out), axis=1)
    if np.any(bad):
        i = int(np.flatnonzero(bad)[0])
        raise MeasureError(f"map is not finite at particle {i} (x = {m.points[i].tolist()})")
    return EmpiricalMeasure(out, m.weights)


def mixture(components: Sequence[tuple[float, EmpiricalMeasure]]) -> EmpiricalMeasure:
    """Convex combination sum_k lambda_k m_k as one concatenated cloud."""
    if not components:
        raise MeasureError("mixture of zero components")
    lam = np.array([c[0] for c in components], dtype=float)
    if np.any(lam < 0) or abs(lam.sum() - 1.0) > WEIGHT_TOL:
        raise MeasureError(f"component weights must be nonnegative and sum to 1, got {lam.sum()!r}")
    dims = {c[1].dim for c in components}
    if len(dims) != 1:
        raise MeasureError(f"components have different dims {sorted(dims)}")
    pts = np.concatenate([c[1].points for c in components])
    w = np.concatenate([l * c[1].weights for l, c in zip(lam, components)])
    return EmpiricalMeasure(pts, w / w.sum())


def resample(m: EmpiricalMeasure, budget: int, seed: int) -> EmpiricalMeasure:
    """Systematic resampling down to ``budget`` equal-weight particles.

    Clouds already within budget are returned unchanged. Particles are swept
    in lexicographic order of their coordinates, so in 1-D the result is a
    randomly offset quantile thinning of the input.
    """
    if budget < 1:
        raise MeasureError("particle budget must be >= 1")
    if m.size <= budget:
        return m
    order = np.lexsort(m.points.T[::-1])
    cw = np.cumsum(m.weights[order])
    cw /= cw[-1]
    u = float(np.random.default_rng(seed).random())
    idx = kernels.systematic_indices(np.ascontiguousarray(cw), int(budget), u)
    return EmpiricalMeasure(m.points[order[idx]])


class MeasureCurve:
    """Time-indexed sequence of measures with times[0] = 0."""

    __slots__ = ("times", "states")

    def __init__(self, times: Iterable[float], states: Iterable[EmpiricalMeasure]):
        t = np.array(list(times), dtype=float)
        s = tuple(states)
        if t.ndim != 1 or t.shape[0] != len(s) or len(s) == 0:
            raise MeasureError("times and states must be nonempty and of equal length")
        if t[0] != 0.0:
            raise MeasureError(f"curve must start at t=0, got {t[0]}")
        if np.any(np.diff(t) <= 0):
            raise MeasureError("curve times must be strictly increasing")
        if len({m.dim for m in s}) != 1:
            raise MeasureError("curve states have different dims")
        t.setflags(write=False)
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "states", s)

    def __setattr__(self, name, value):
        raise AttributeError("MeasureCurve is immutable")

    @property
    def dim(self) -> int:
        return self.states[0].dim

    def __len__(self) -> int:
        return len(self.states)

    def index_of(self, t: float, atol: float = 1e-12) -> int:
        i = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[i] - t) > atol:
            raise MeasureError(f"t={t} is not a node of the curve")
        return i

    def at(self, t: float) -> EmpiricalMeasure:
        return self.states[self.index_of(t)]

    def restrict(self, times: Iterable[float]) -> "MeasureCurve":
        idx = [self.index_of(t, atol=1e-9) for t in times]
        return MeasureCurve(self.times[idx], [self.states[i] for i in idx])


# -- file formats -----------------------------------------------------------

def write_cloud_csv(m: EmpiricalMeasure, path) -> None:
    header = ",".join(["w"] + [f"x{i}" for i in range(m.dim)])
    data = np.column_stack([m.weights, m.points])
    np.savetxt(path, data, delimiter=",", header=header, comments="", fmt="%.17g")


def read_cloud_csv(path) -> EmpiricalMeasure:
    path = Path(path)
    with path.open() as fh:
        header = fh.readline().strip().split(",")
    if not header or header[0] != "w" or header[1:] != [f"x{i}" for i in range(len(header) - 1)]:
        raise MeasureError(f"{path}: bad cloud header {header}")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if data.shape[1] != len(header):
        raise MeasureError(f"{path}: {data.shape[1]} columns for header of {len(header)}")
    return EmpiricalMeasure(data[:, 1:], data[:, 0])


def write_curve(curve: MeasureCurve, directory, prefix: str = "state") -> Path:
    """Write one CSV per node plus ``curve.json``; returns the index path."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    files = []
    for i, state in enumerate(curve.states):
        name = f"{prefix}_{i:05d}.csv"
        write_cloud_csv(state, directory / name)
        files.append(name)
    index = {"times": [float(t) for t in curve.times], "files": files, "dim": curve.dim}
    index_path = directory / "curve.json"
    index_path.write_text(json.dumps(index, indent=1) + "\n")
    return index_path


def read_curve(index_path) -> MeasureCurve:
    index_path = Path(index_path)
    index = json.loads(index_path.read_text())
    states = [read_cloud_csv(index_path.parent / f) for f in index["files"]]
    curve = MeasureCurve(index["times"], states)
    if curve.dim != index["dim"]:
        raise MeasureError(f"{index_path}: index dim {index['dim']} != cloud dim {curve.dim}")
    return curve
