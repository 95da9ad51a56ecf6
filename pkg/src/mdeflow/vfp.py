"""Vector-field probabilities: finite mixtures of vector fields.

A :class:`VectorFieldProbability` is the value V[mu] of a
:class:`VfpMap` at one measure. The second-order operator

    box^V phi = sum_k w_k ( 1/2 L^2_{X_k - Vbar} phi ) + L_{Vbar} phi

is evaluated in this reduced form, where the first-order centered terms have
already been cancelled; ``square_op(..., raw=True)`` evaluates the
definition term by term for cross-checking.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Sequence

import numpy as np

from .fields import (
    Box,
    ConstantField,
    TestFunction,
    VectorField,
    _batch,
    _unbatch,
    lie2_from_parts,
    linear_combination,
    w2inf_norm,
)
from .measure import EmpiricalMeasure
from .transport import wasserstein

WEIGHT_TOL = 1e-12


class VfpError(ValueError):
    pass


class VectorFieldProbability:
    """sum_k w_k delta_{X_k} over vector fields on R^n."""

    __slots__ = ("weights", "fields", "dim")

    def __init__(self, weights: Iterable[float], fields: Iterable[VectorField]):
        w = np.array(list(weights), dtype=float)
        fs = tuple(fields)
        if w.shape[0] != len(fs) or not fs:
            raise VfpError("need one weight per field and at least one atom")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise VfpError("weights must be finite and nonnegative")
        total = w.sum()
        if abs(total - 1.0) > 1e-9:
            raise VfpError(f"weights sum to {total!r}, expected 1")
        w = w / total
        dims = {f.dim for f in fs}
        if len(dims) != 1:
            raise VfpError(f"fields of different dims {sorted(dims)}")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "fields", fs)
        object.__setattr__(self, "dim", dims.pop())

    def __setattr__(self, name, value):
        raise AttributeError("VectorFieldProbability is immutable")

    @classmethod
    def from_vectors(cls, weights, vectors) -> "VectorFieldProbability":
        """Constant-field atoms, one per row of ``vectors``."""
        vecs = np.asarray(vectors, dtype=float)
        if vecs.ndim == 1:
            vecs = vecs[:, None]
        return cls(weights, [ConstantField(v) for v in vecs])

    @property
    def size(self) -> int:
        return len(self.fields)

    def __len__(self) -> int:
        return self.size

    def __repr__(self) -> str:
        return f"VectorFieldProbability(atoms={self.size}, dim={self.dim})"

    @property
    def all_constant(self) -> bool:
        return all(f.kind == "constant" for f in self.fields)

    def vectors(self) -> np.ndarray:
        """(K, n) array of atom values; only for constant-field VFPs."""
        if not self.all_constant:
            raise VfpError("atoms are not all constant fields")
        return np.array([f.v for f in self.fields])

    def atoms(self):
        return list(zip(self.weights.tolist(), self.fields))


def dirac_vfp(X: VectorField) -> VectorFieldProbability:
    return VectorFieldProbability([1.0], [X])


@dataclass(frozen=True)
class VfpMap:
    """A rule mu -> V[mu] with the declared hypotheses of the theory.

    ``lipschitz_bound`` (L), ``support_radius`` (R) and ``moment_bound`` (B)
    are metadata; :func:`check_support` and :func:`check_lipschitz` spot-check
    them.
    """

    rule: Callable[[EmpiricalMeasure], VectorFieldProbability]
    dim: int
    lipschitz_bound: float | None = None
    support_radius: float | None = None
    moment_bound: float | None = None
    name: str = "vfp"
    state_independent: bool = field(default=False, compare=False)

    def __call__(self, mu: EmpiricalMeasure) -> VectorFieldProbability:
        v = self.rule(mu)
        if v.dim != self.dim:
            raise VfpError(f"{self.name}: rule produced dim {v.dim}, expected {self.dim}")
        return v

    @classmethod
    def constant(cls, v: VectorFieldProbability, **meta) -> "VfpMap":
        meta.setdefault("state_independent", True)
        return cls(lambda mu: v, v.dim, **meta)


# -- basic operations -------------------------------------------------------------

def barycenter(v: VectorFieldProbability) -> VectorField:
    """Pointwise expectation x -> sum_k w_k X_k(x)."""
    return linear_combination(v.weights, v.fields)


def centered_atoms(v: VectorFieldProbability) -> VectorFieldProbability:
    vbar = barycenter(v)
    return VectorFieldProbability(v.weights, [X - vbar for X in v.fields])


def symmetrize(v: VectorFieldProbability) -> VectorFieldProbability:
    """Half the original atoms plus half their reflections X -> 2 Vbar - X."""
    vbar = barycenter(v)
    reflected = [linear_combination([2.0, -1.0], [vbar, X]) for X in v.fields]
    w = np.concatenate([0.5 * v.weights, 0.5 * v.weights])
    return VectorFieldProbability(w, list(v.fields) + reflected)


def vfp_moment(v: VectorFieldProbability, p: float, box: Box) -> float:
    """sum_k w_k ||X_k||_{W^{2,inf}(box)}^p."""
    if p < 1:
        raise VfpError(f"p must be >= 1, got {p}")
    norms = np.array([w2inf_norm(X, box) for X in v.fields])
    return float(v.weights @ norms**p)


# -- the second-order operator ------------------------------------------------------

def _field_parts(v: VectorFieldProbability, xb: np.ndarray):
    vals = np.stack([X._value(xb) for X in v.fields])  # (K, N, n)
    jacs = np.stack([X._jac(xb) for X in v.fields])  # (K, N, n, n)
    return vals, jacs


def square_op_from_derivatives(
    v: VectorFieldProbability, xb: np.ndarray, grad: np.ndarray, hess: np.ndarray, raw: bool = False
) -> np.ndarray:
    """box^V phi at the points ``xb`` given grad phi and Hess phi there."""
    w = v.weights
    if v.all_constant and not raw:
        vecs = v.vectors()
        vbar = w @ vecs
        c = vecs - vbar
        a_c = (c * w[:, None]).T @ c
        return 0.5 * np.einsum("ij,nij->n", a_c, hess) + grad @ vbar
    vals, jacs = _field_parts(v, xb)
    vbar_val = np.einsum("k,kni->ni", w, vals)
    vbar_jac = np.einsum("k,knij->nij", w, jacs)
    out = np.zeros(xb.shape[0])
    for k in range(v.size):
        cv = vals[k] - vbar_val
        cj = jacs[k] - vbar_jac
        out += w[k] * 0.5 * lie2_from_parts(cv, cj, grad, hess)
        if raw:
            out += w[k] * np.einsum("ni,ni->n", grad, vals[k])
    if not raw:
        out += np.einsum("ni,ni->n", grad, vbar_val)
    return out


def square_op(v: VectorFieldProbability, phi: TestFunction, x, raw: bool = False) -> np.ndarray:
    """Apply the operator box^V to ``phi`` at ``x``."""
    xb, single = _batch(x, v.dim)
    out = square_op_from_derivatives(v, xb, phi._g(xb), phi._h(xb), raw=raw)
    return _unbatch(out, single)


def first_order_centered(v: VectorFieldProbability, phi: TestFunction, x) -> np.ndarray:
    """sum_k w_k L_{X_k - Vbar} phi, which vanishes identically."""
    xb, single = _batch(x, v.dim)
    vals, _ = _field_parts(v, xb)
    vbar = np.einsum("k,kni->ni", v.weights, vals)
    grad = phi._g(xb)
    out = np.einsum("k,kni,ni->n", v.weights, vals - vbar, grad)
    return _unbatch(out, single)


def coefficients(v: VectorFieldProbability, x):
    """Diffusion and drift coefficients at x.

    Returns ``(a, b, a_centered)`` with a = sum w X X^T, b_j = sum w X_i dX_j/dx_i
    and a_centered the same Gram matrix built from the centered atoms.
    """
    xb, single = _batch(x, v.dim)
    vals, jacs = _field_parts(v, xb)
    w = v.weights
    a = np.einsum("k,kni,knj->nij", w, vals, vals)
    b = np.einsum("k,kni,knji->nj", w, vals, jacs)
    c = vals - np.einsum("k,kni->ni", w, vals)
    a_c = np.einsum("k,kni,knj->nij", w, c, c)
    a = 0.5 * (a + np.swapaxes(a, 1, 2))
    a_c = 0.5 * (a_c + np.swapaxes(a_c, 1, 2))
    return _unbatch(a, single), _unbatch(b, single), _unbatch(a_c, single)


def ellipticity(v: VectorFieldProbability, sample_points) -> float:
    """Smallest eigenvalue of a_centered over the sample points."""
    pts = np.asarray(sample_points, dtype=float)
    if pts.size == 0:
        raise VfpError("need at least one sample point")
    xb, _ = _batch(pts if pts.ndim > 1 else pts.reshape(1, -1), v.dim)
    _, _, a_c = coefficients(v, xb)
    return float(np.min(np.linalg.eigvalsh(a_c)))


def elliptic_regularize(V: VfpMap, eps: float, symmetric: bool = False) -> VfpMap:
    """W[mu] = (1 - eps) V[mu] + (eps / n) sum_j delta_{e_j}.

    With ``symmetric=True`` the added atoms are +-e_j with weight eps/(2n)
    each; they have zero mean, which makes the centered coefficient matrix
    at least (eps/n) I instead of only the uncentered one.
    """
    if not 0.0 < eps < 1.0:
        raise VfpError(f"eps must lie in (0, 1), got {eps}")
    n = V.dim
    eye = np.eye(n)
    if symmetric:
        extra = [ConstantField(s * e) for e in eye for s in (1.0, -1.0)]
        extra_w = np.full(2 * n, eps / (2 * n))
    else:
        extra = [ConstantField(e) for e in eye]
        extra_w = np.full(n, eps / n)

    def rule(mu):
        v = V(mu)
        return VectorFieldProbability(
            np.concatenate([(1.0 - eps) * v.weights, extra_w]), list(v.fields) + extra
        )

    R = None if V.support_radius is None else max(V.support_radius, 1.0)
    L = None if V.lipschitz_bound is None else (1.0 - eps) * V.lipschitz_bound
    return replace(V, rule=rule, lipschitz_bound=L, support_radius=R, name=f"{V.name}+eps{eps:g}")


# -- distances between VFPs and hypothesis checks -----------------------------------

def vfp_distance(v: VectorFieldProbability, w: VectorFieldProbability, p: float, box: Box):
    """W_p between two VFPs in the W^{2,inf} metric.

    Returns ``(value, exact)``. Constant-field VFPs are compared as point
    clouds (exact solver). Otherwise an upper bound from the index-matched
    coupling is returned, which needs identical atom weights.
    """
    if v.dim != w.dim:
        raise VfpError("dimension mismatch")
    if v.all_constant and w.all_constant:
        a = EmpiricalMeasure(v.vectors(), v.weights)
        b = EmpiricalMeasure(w.vectors(), w.weights)
        if np.allclose(a.points, b.points, rtol=0, atol=0) and np.array_equal(a.weights, b.weights):
            return 0.0, True
        rep = wasserstein(a, b, p)
        # for Sinkhorn the reported cost is the rounded primal, an upper bound
        return rep.cost, rep.gap_bound == 0.0
    if v.size != w.size or not np.allclose(v.weights, w.weights, rtol=0, atol=1e-15):
        raise VfpError("matched-index coupling needs identical atom weights")
    d = np.array([w2inf_norm(X - Y, box) for X, Y in zip(v.fields, w.fields)])
    return float(v.weights @ d**p) ** (1.0 / p), False


def check_support(V: VfpMap, measures: Sequence[EmpiricalMeasure], box: Box) -> float:
    """Largest atom W^{2,inf} norm seen; raises if it exceeds the declared R."""
    worst = 0.0
    for mu in measures:
        for X in V(mu).fields:
            worst = max(worst, w2inf_norm(X, box))
    if V.support_radius is not None and worst > V.support_radius * (1 + 1e-9):
        raise VfpError(f"{V.name}: atom norm {worst} exceeds declared R = {V.support_radius}")
    return worst


def check_lipschitz(
    V: VfpMap, pairs: Sequence[tuple[EmpiricalMeasure, EmpiricalMeasure]], p: float, box: Box
) -> float:
    """Largest observed ratio W_p(V[mu], V[nu]) / W_p(mu, nu); raises above the declared L."""
    worst = 0.0
    for mu, nu in pairs:
        dv, _ = vfp_distance(V(mu), V(nu), p, box)
        rep = wasserstein(mu, nu, p)
        dm = rep.cost - rep.gap_bound
        if dm <= 0:
            if dv > 1e-12:
                worst = np.inf
            continue
        worst = max(worst, dv / dm)
    if V.lipschitz_bound is not None and worst > V.lipschitz_bound + 1e-9:
        raise VfpError(f"{V.name}: Lipschitz ratio {worst} exceeds declared L = {V.lipschitz_bound}")
    return worst


def vfp_from_config(entries: Sequence[dict]) -> VectorFieldProbability:
    """Build a VFP from ``[{weight, field: {...}}, ...]``."""
    from .fields import field_from_config

    return VectorFieldProbability(
        [e["weight"] for e in entries], [field_from_config(e["field"]) for e in entries]
    )
