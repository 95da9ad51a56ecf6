"""Canonical scenarios: VFP map, initial measure, reference curve and bounds.

Gaussian reference clouds are deterministic. In 1-D they are the midpoint
quantiles of N(0, 1), rescaled so that the cloud has mean 0 and variance 1
exactly, then mapped affinely; in n-D they are products of such 1-D grids
mapped by a square root of the covariance.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import ndtri

from .fields import Box
from .measure import EmpiricalMeasure, MeasureCurve, covariance
from .vfp import VectorFieldProbability, VfpMap, barycenter, coefficients, vfp_from_config, vfp_moment


class ScenarioError(ValueError):
    pass


@dataclass
class Scenario:
    name: str
    V: VfpMap
    mu0: EmpiricalMeasure
    reference: Callable[[float], EmpiricalMeasure] | None
    dim: int
    horizon: float
    p: float = 2.0
    params: dict = field(default_factory=dict)

    @property
    def declared_bounds(self) -> tuple[float | None, float | None, float | None]:
        return (self.V.lipschitz_bound, self.V.support_radius, self.V.moment_bound)

    def norm_box(self, radius: float = 5.0) -> Box:
        return Box.cube(np.zeros(self.dim), radius, self.dim)


# -- Gaussian clouds ------------------------------------------------------------

def standard_quantiles(n: int) -> np.ndarray:
    """n midpoint quantiles of N(0,1) with sample mean 0 and variance 1 exactly."""
    if n < 2:
        raise ScenarioError("need at least two quantiles")
    q = ndtri((np.arange(n) + 0.5) / n)
    q = q - q.mean()
    return q / math.sqrt(np.mean(q * q))


def gaussian_quantile_cloud(mean, cov, n_per_axis: int) -> EmpiricalMeasure:
    """Deterministic cloud with exactly the given mean and covariance.

    ``cov`` may be a scalar (1-D), a vector (diagonal) or a full matrix.
    A zero covariance gives the Dirac at ``mean``.
    """
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    n = mean.shape[0]
    C = np.asarray(cov, dtype=float)
    if C.ndim == 0:
        C = np.full(n, float(C))
    if C.ndim == 1:
        C = np.diag(C)
    if C.shape != (n, n):
        raise ScenarioError(f"covariance shape {C.shape} does not match mean of dim {n}")
    if not np.any(C):
        return EmpiricalMeasure.dirac(mean)
    q = standard_quantiles(n_per_axis)
    grid = np.stack(np.meshgrid(*([q] * n), indexing="ij"), axis=-1).reshape(-1, n)
    evals, evecs = np.linalg.eigh(0.5 * (C + C.T))
    if evals.min() < -1e-12 * max(1.0, evals.max()):
        raise ScenarioError("covariance is not positive semidefinite")
    root = evecs * np.sqrt(np.clip(evals, 0.0, None))
    return EmpiricalMeasure(mean + grid @ root.T)


def _constant_drift_diffusion(v: VectorFieldProbability) -> tuple[np.ndarray, np.ndarray]:
    """Barycenter vector and centered second-moment matrix of a constant-field VFP."""
    _, _, a_c = coefficients(v, np.zeros(v.dim))
    return barycenter(v).v.copy(), a_c


def _gaussian_reference(v: VectorFieldProbability, mean0, size: int):
    """t -> N(mean0 + t m, t a_c): the exact law of the constant-coefficient equation.

    The generator of a constant-field VFP is 1/2 tr(a_c D^2) + m . grad,
    whose solution from a Dirac has covariance t a_c, not 2 t a_c.
    """
    m, a_c = _constant_drift_diffusion(v)
    mean0 = np.atleast_1d(np.asarray(mean0, dtype=float))
    per_axis = size if v.dim == 1 else max(2, int(round(size ** (1.0 / v.dim))))

    def ref(t: float) -> EmpiricalMeasure:
        return gaussian_quantile_cloud(mean0 + t * m, t * a_c, per_axis)

    return ref


def _constant_map(v: VectorFieldProbability, name: str, p: float) -> VfpMap:
    box = Box.cube(np.zeros(v.dim), 1.0, v.dim)
    R = float(np.max(np.linalg.norm(v.vectors(), axis=1)))
    return VfpMap.constant(
        v, lipschitz_bound=0.0, support_radius=R, moment_bound=vfp_moment(v, p, box), name=name
    )


# -- worked examples --------------------------------------------------------------

def wiener_vfp() -> VectorFieldProbability:
    return VectorFieldProbability.from_vectors([0.5, 0.5], [1.0, -1.0])


def cube_roots_vfp() -> VectorFieldProbability:
    ang = 2 * np.pi * np.arange(3) / 3
    return VectorFieldProbability.from_vectors(np.full(3, 1 / 3), np.stack([np.cos(ang), np.sin(ang)], axis=1))


def wiener(reference_size: int = 20_000) -> Scenario:
    """Standard Wiener process on R: V = (delta_{+1} + delta_{-1}) / 2, mu0 = delta_0."""
    v = wiener_vfp()
    V = _constant_map(v, "wiener", 2.0)
    return Scenario("wiener", V, EmpiricalMeasure.dirac([0.0]), _gaussian_reference(v, [0.0], reference_size), 1, 1.0)


def drifted_wiener(reference_size: int = 20_000) -> Scenario:
    """V = (delta_{-1} + delta_{+2}) / 2 on R.

    The reference N(m t, s^2 t) uses the computed barycenter m = 1/2 and
    centered second moment s^2 = 9/4.
    """
    v = VectorFieldProbability.from_vectors([0.5, 0.5], [-1.0, 2.0])
    V = _constant_map(v, "drifted_wiener", 2.0)
    return Scenario(
        "drifted_wiener", V, EmpiricalMeasure.dirac([0.0]), _gaussian_reference(v, [0.0], reference_size), 1, 1.0
    )


def isotropic2d(reference_size: int = 10_000) -> Scenario:
    """Equal weights on the constant fields at the three cube roots of unity.

    Here a_c = I / 2, so the reference is N(0, t I / 2).
    """
    v = cube_roots_vfp()
    V = _constant_map(v, "cube_roots", 2.0)
    return Scenario(
        "isotropic2d", V, EmpiricalMeasure.dirac([0.0, 0.0]), _gaussian_reference(v, [0.0, 0.0], reference_size), 2, 1.0
    )


def clt(sample_dist: EmpiricalMeasure, horizon: float = 1.0, reference_size: int = 20_000) -> Scenario:
    """Classical CLT: V is the constant-field image of ``sample_dist``.

    The reference is N(t E X, t Cov X); for centered samples this is the
    usual N(0, t Sigma^2).
    """
    v = VectorFieldProbability.from_vectors(sample_dist.weights, sample_dist.points)
    V = _constant_map(v, "clt", 2.0)
    mu0 = EmpiricalMeasure.dirac(np.zeros(sample_dist.dim))
    ref = _gaussian_reference(v, np.zeros(sample_dist.dim), reference_size)
    return Scenario("clt", V, mu0, ref, sample_dist.dim, horizon, params={"atoms": sample_dist.size})


def zero_field(dim: int = 1) -> Scenario:
    v = VectorFieldProbability.from_vectors([1.0], np.zeros((1, dim)))
    V = _constant_map(v, "zero", 2.0)
    mu0 = gaussian_quantile_cloud(np.zeros(dim), np.ones(dim), 200 if dim == 1 else 30)
    return Scenario("zero", V, mu0, lambda t: mu0, dim, 1.0)


# -- the covariance-driven counter-example ----------------------------------------

def delta_rho(rho: float, sigma2: float) -> float:
    """Auxiliary map of the counter-example; Delta_rho(rho) = rho and Delta_{e^t}(t+1) = 1."""
    if rho <= 1e-12:
        raise ScenarioError("largest covariance eigenvalue must be positive")
    gap = _rho_gap(rho)
    if gap <= 0.0:
        # rho = 1 forces sigma2 = 1 on covariance matrices with both eigenvalues in the window
        return sigma2
    # algebraically equal to (rho (s - log rho - 1) + rho - s) / gap, written
    # so that Delta_{e^t}(t + 1) = 1 survives small t without cancellation
    u = rho - 1.0
    return 1.0 + u * ((sigma2 - 1.0) - math.log1p(u)) / gap


def _rho_gap(rho: float) -> float:
    # rho - log(rho) - 1 without cancellation near rho = 1
    u = rho - 1.0
    return u - math.log1p(u)


def _orientation(v: np.ndarray) -> np.ndarray:
    # unit generator in {x > 0} or on the positive y-axis
    if v[0] < 0 or (v[0] == 0 and v[1] < 0):
        return -v
    return v


def ellipse_atoms(a1: np.ndarray, a2: np.ndarray, K: int, convention: str = "angle") -> np.ndarray:
    """K points on the ellipse {cos(s) a1 + sin(s) a2}.

    ``angle`` spaces the parameter s uniformly; ``arclength`` spaces the
    points uniformly along the curve.
    """
    if convention == "angle":
        s = 2 * np.pi * (np.arange(K) + 0.5) / K
    elif convention == "arclength":
        fine = np.linspace(0.0, 2 * np.pi, 64 * K + 1)
        pts = np.cos(fine)[:, None] * a1 + np.sin(fine)[:, None] * a2
        seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
        arc = np.concatenate([[0.0], np.cumsum(seg)])
        target = arc[-1] * (np.arange(K) + 0.5) / K
        s = np.interp(target, arc, fine)
    else:
        raise ScenarioError(f"unknown ellipse convention {convention!r}")
    return np.cos(s)[:, None] * a1 + np.sin(s)[:, None] * a2


def covariance_ellipse_vfp(
    cov: np.ndarray,
    M_cap: float = 2.0,
    m_floor: float = 0.5,
    K_atoms: int = 256,
    convention: str = "angle",
    scale: str = "unit",
    iso_rtol: float = 1e-9,
) -> VectorFieldProbability:
    """K equal-weight constant atoms on the ellipse spanned by P1, P2 of ``cov``.

    With ``scale="unit"`` the semi-axes are sqrt(2 c) v_i, so that the
    second moment of the atoms along v_i is c; ``scale="pi"`` uses the
    factor sqrt(2 c / pi) instead. A (numerically) isotropic covariance
    r I gives the circle of per-axis second moment c(r).
    """
    if K_atoms < 64:
        raise ScenarioError("K_atoms must be >= 64")
    if not (M_cap > 1.0 and 0.0 < m_floor < 1.0):
        raise ScenarioError("need M_cap > 1 and 0 < m_floor < 1")
    factor = {"unit": 2.0, "pi": 2.0 / math.pi}.get(scale)
    if factor is None:
        raise ScenarioError(f"unknown scale {scale!r}")
    cov = 0.5 * (np.asarray(cov, dtype=float) + np.asarray(cov, dtype=float).T)
    if cov.shape != (2, 2):
        raise ScenarioError("the covariance-ellipse VFP lives on R^2")
    evals, evecs = np.linalg.eigh(cov)
    r, rho = float(evals[0]), float(evals[1])
    if rho <= 1e-12:
        raise ScenarioError(f"covariance {cov.tolist()} is numerically singular")
    c = lambda x: min(M_cap, max(m_floor, x))
    if rho - r <= iso_rtol * max(rho, 1.0):
        rad = math.sqrt(factor * c(0.5 * (r + rho)))
        a1, a2 = np.array([rad, 0.0]), np.array([0.0, rad])
    else:
        v1 = _orientation(evecs[:, 1])
        v2 = np.array([-v1[1], v1[0]])
        v2 = _orientation(v2)
        a1 = math.sqrt(factor * c(rho)) * v1
        a2 = math.sqrt(factor * c(delta_rho(rho, r))) * v2
    pts = ellipse_atoms(a1, a2, K_atoms, convention)
    return VectorFieldProbability.from_vectors(np.full(K_atoms, 1.0 / K_atoms), pts)


def covariance_ellipse_map(M_cap: float = 2.0, m_floor: float = 0.5, K_atoms: int = 256, **opts) -> VfpMap:
    def rule(mu: EmpiricalMeasure) -> VectorFieldProbability:
        return covariance_ellipse_vfp(covariance(mu), M_cap, m_floor, K_atoms, **opts)

    R = math.sqrt(2.0 * M_cap)
    return VfpMap(rule, 2, lipschitz_bound=None, support_radius=R, moment_bound=2.0 * M_cap, name="covariance_ellipse")


def nonuniqueness_curves(M_cap: float = 2.0, n_times: int = 33, n_per_axis: int = 64):
    """mu_1(t) = N(0, diag(t+1, e^t)) and mu_2 with the axes swapped on [0, log M_cap]."""
    T = math.log(M_cap)
    times = np.linspace(0.0, T, n_times)
    c1 = [gaussian_quantile_cloud([0.0, 0.0], [t + 1.0, math.exp(t)], n_per_axis) for t in times]
    c2 = [gaussian_quantile_cloud([0.0, 0.0], [math.exp(t), t + 1.0], n_per_axis) for t in times]
    return MeasureCurve(times, c1), MeasureCurve(times, c2)


def nonuniqueness(
    M_cap: float = 2.0,
    m_floor: float = 0.5,
    K_atoms: int = 256,
    n_times: int = 33,
    n_per_axis: int = 64,
    **opts,
) -> tuple[Scenario, MeasureCurve, MeasureCurve]:
    """Covariance-driven VFP with two Gaussian solutions from N(0, I)."""
    V = covariance_ellipse_map(M_cap, m_floor, K_atoms, **opts)
    c1, c2 = nonuniqueness_curves(M_cap, n_times, n_per_axis)

    def ref(t: float) -> EmpiricalMeasure:
        return gaussian_quantile_cloud([0.0, 0.0], [t + 1.0, math.exp(t)], n_per_axis)

    sc = Scenario(
        "nonuniqueness",
        V,
        c1.states[0],
        ref,
        2,
        math.log(M_cap),
        params={"M_cap": M_cap, "m_floor": m_floor, "K_atoms": K_atoms},
    )
    return sc, c1, c2


def linear_gaussian_family(M_cap: float = 2.0) -> Callable[[float], VectorFieldProbability]:
    """Time-indexed constant VFP with a_c(t) = diag(1, e^t).

    mu_1 solves the corresponding linear equation exactly, so its residual
    against this family measures pure discretization error.
    """
    def Vt(t: float) -> VectorFieldProbability:
        s1, s2 = math.sqrt(2.0), math.sqrt(2.0 * math.exp(t))
        vecs = [[s1, 0.0], [-s1, 0.0], [0.0, s2], [0.0, -s2]]
        return VectorFieldProbability.from_vectors(np.full(4, 0.25), vecs)

    return Vt


# -- registry -------------------------------------------------------------------

VFP_GENERATORS = {
    "wiener": lambda **kw: VfpMap.constant(wiener_vfp(), name="wiener", lipschitz_bound=0.0, support_radius=1.0, moment_bound=1.0),
    "cube_roots": lambda **kw: VfpMap.constant(cube_roots_vfp(), name="cube_roots", lipschitz_bound=0.0, support_radius=1.0, moment_bound=1.0),
    "covariance_ellipse": lambda **kw: covariance_ellipse_map(**kw),
}

SCENARIOS = {
    "wiener": wiener,
    "drifted_wiener": drifted_wiener,
    "isotropic2d": isotropic2d,
    "zero": zero_field,
}


def _initial_from_config(spec: dict, dim: int) -> EmpiricalMeasure:
    if "dirac" in spec:
        return EmpiricalMeasure.dirac(spec["dirac"])
    if "gaussian" in spec:
        g = spec["gaussian"]
        return gaussian_quantile_cloud(g.get("mean", [0.0] * dim), g["cov"], int(g.get("n_per_axis", 100)))
    if "points" in spec:
        return EmpiricalMeasure(spec["points"], spec.get("weights"))
    raise ScenarioError(f"cannot build an initial measure from {spec!r}")


def from_config(cfg: dict) -> Scenario:
    """Scenario from a ``[scenario]`` table: ``{name = "...", ...parameters}``.

    ``name = "custom"`` takes ``dim``, ``vfp`` (a generator key or a list of
    ``{weight, field}`` entries) and ``mu0``.
    """
    cfg = dict(cfg)
    name = cfg.pop("name", None)
    horizon = cfg.pop("horizon", None)
    if name is None:
        raise ScenarioError("scenario table needs a 'name'")
    if name in SCENARIOS:
        sc = SCENARIOS[name](**cfg)
    elif name == "clt":
        atoms = cfg.pop("atoms", None)
        if atoms is None:
            raise ScenarioError("clt scenario needs 'atoms' = [[weight, x...], ...]")
        a = np.asarray(atoms, dtype=float)
        sc = clt(EmpiricalMeasure(a[:, 1:], a[:, 0]), **cfg)
    elif name == "nonuniqueness":
        sc = nonuniqueness(**cfg)[0]
    elif name == "custom":
        dim = int(cfg["dim"])
        spec = cfg["vfp"]
        if isinstance(spec, str):
            V = VFP_GENERATORS[spec](**cfg.get("vfp_params", {}))
        else:
            V = VfpMap.constant(vfp_from_config(spec), name="custom")
        mu0 = _initial_from_config(cfg.get("mu0", {"dirac": [0.0] * dim}), dim)
        sc = Scenario("custom", V, mu0, None, dim, 1.0)
    else:
        raise ScenarioError(f"unknown scenario {name!r}; known: {sorted(SCENARIOS) + ['clt', 'nonuniqueness', 'custom']}")
    if horizon is not None:
        sc.horizon = float(horizon)
    sc.params.update({"name": name})
    return sc
