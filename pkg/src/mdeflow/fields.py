"""Vector fields on R^n, their flows, Lie derivatives and test functions.

All evaluation methods are vectorized: they accept a single point of shape
(n,) or a batch of shape (N, n). Derivative layouts are

* ``jacobian(x)[..., j, i] = dX_j / dx_i``
* ``hessian(x)[..., j, i, l] = d^2 X_j / dx_i dx_l``
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

OVERFLOW_GUARD = 1e12


class FlowError(ArithmeticError):
    pass


def _batch(x, dim: int) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    xb = x.reshape(1, -1) if single else x
    if xb.ndim != 2 or xb.shape[1] != dim:
        raise ValueError(f"expected points of dimension {dim}, got shape {x.shape}")
    return xb, single


def _unbatch(y: np.ndarray, single: bool) -> np.ndarray:
    return y[0] if single else y


class VectorField:
    """Base class; subclasses implement the batched ``_value``/``_jac``/``_hess``."""

    kind = "abstract"
    dim: int

    def __call__(self, x) -> np.ndarray:
        xb, single = _batch(x, self.dim)
        return _unbatch(self._value(xb), single)

    def jacobian(self, x) -> np.ndarray:
        xb, single = _batch(x, self.dim)
        return _unbatch(self._jac(xb), single)

    def hessian(self, x) -> np.ndarray:
        xb, single = _batch(x, self.dim)
        return _unbatch(self._hess(xb), single)

    def _hess(self, xb):
        n = self.dim
        return np.zeros((xb.shape[0], n, n, n))

    def __add__(self, other: "VectorField") -> "VectorField":
        return linear_combination([1.0, 1.0], [self, other])

    def __sub__(self, other: "VectorField") -> "VectorField":
        return linear_combination([1.0, -1.0], [self, other])

    def __neg__(self) -> "VectorField":
        return linear_combination([-1.0], [self])

    def __mul__(self, c: float) -> "VectorField":
        return linear_combination([float(c)], [self])

    __rmul__ = __mul__


class ConstantField(VectorField):
    kind = "constant"

    def __init__(self, v):
        self.v = np.atleast_1d(np.asarray(v, dtype=float)).copy()
        self.v.setflags(write=False)
        self.dim = self.v.shape[0]

    def _value(self, xb):
        return np.broadcast_to(self.v, xb.shape).copy()

    def _jac(self, xb):
        return np.zeros((xb.shape[0], self.dim, self.dim))

    def __repr__(self):
        return f"ConstantField({self.v.tolist()})"


class AffineField(VectorField):
    """X(x) = A x + b."""

    kind = "affine"

    def __init__(self, A, b=None):
        self.A = np.atleast_2d(np.asarray(A, dtype=float)).copy()
        n = self.A.shape[0]
        if self.A.shape != (n, n):
            raise ValueError(f"A must be square, got {self.A.shape}")
        self.b = np.zeros(n) if b is None else np.atleast_1d(np.asarray(b, dtype=float)).copy()
        self.A.setflags(write=False)
        self.b.setflags(write=False)
        self.dim = n

    def _value(self, xb):
        return xb @ self.A.T + self.b

    def _jac(self, xb):
        return np.broadcast_to(self.A, (xb.shape[0], self.dim, self.dim)).copy()

    def __repr__(self):
        return f"AffineField(A={self.A.tolist()}, b={self.b.tolist()})"


class AnalyticField(VectorField):
    """Field given by batched closures for the value and both derivatives.

    The closures take an (N, n) array and must be pure.
    """

    kind = "analytic"

    def __init__(self, dim: int, value, jacobian, hessian, name: str = "analytic"):
        self.dim = int(dim)
        self._value_fn, self._jac_fn, self._hess_fn = value, jacobian, hessian
        self.name = name

    def _value(self, xb):
        return np.asarray(self._value_fn(xb), dtype=float)

    def _jac(self, xb):
        return np.asarray(self._jac_fn(xb), dtype=float)

    def _hess(self, xb):
        return np.asarray(self._hess_fn(xb), dtype=float)

    def __repr__(self):
        return f"AnalyticField({self.name!r}, dim={self.dim})"


def linear_combination(coeffs: Sequence[float], fields: Sequence[VectorField]) -> VectorField:
    """sum_k c_k X_k, kept in the simplest closed kind available."""
    if not fields:
        raise ValueError("empty combination")
    dims = {f.dim for f in fields}
    if len(dims) != 1:
        raise ValueError(f"fields of different dims {sorted(dims)}")
    n = dims.pop()
    coeffs = [float(c) for c in coeffs]
    kinds = {f.kind for f in fields}
    if kinds == {"constant"}:
        return ConstantField(sum(c * f.v for c, f in zip(coeffs, fields)))
    if kinds <= {"constant", "affine"}:
        A = np.zeros((n, n))
        b = np.zeros(n)
        for c, f in zip(coeffs, fields):
            if f.kind == "affine":
                A = A + c * f.A
                b = b + c * f.b
            else:
                b = b + c * f.v
        return AffineField(A, b)
    pairs = list(zip(coeffs, fields))
    return AnalyticField(
        n,
        lambda xb: sum(c * f._value(xb) for c, f in pairs),
        lambda xb: sum(c * f._jac(xb) for c, f in pairs),
        lambda xb: sum(c * f._hess(xb) for c, f in pairs),
        name="combination",
    )


def zero_field(dim: int) -> ConstantField:
    return ConstantField(np.zeros(dim))


# -- flows ------------------------------------------------------------------

def default_substeps(X: VectorField, x, t: float) -> int:
    """ceil(64 |t| (1 + max |X|)) evaluated at the starting points."""
    xb, _ = _batch(x, X.dim)
    speed = float(np.max(np.linalg.norm(X._value(xb), axis=1))) if xb.size else 0.0
    return max(1, math.ceil(64.0 * abs(t) * (1.0 + speed)))


def flow(X: VectorField, x, t: float, steps: int | None = None) -> np.ndarray:
    """Time-t flow of X started at x (classical RK4 with ``steps`` substeps).

    Constant fields are translated exactly.
    """
    xb, single = _batch(x, X.dim)
    if t == 0.0:
        return _unbatch(xb.copy(), single)
    if X.kind == "constant":
        return _unbatch(xb + t * X.v, single)
    if steps is None:
        steps = default_substeps(X, xb, t)
    if steps < 1:
        raise ValueError("steps must be >= 1")
    h = t / steps
    y = xb.copy()
    f = X._value
    for _ in range(steps):
        k1 = f(y)
        k2 = f(y + 0.5 * h * k1)
        k3 = f(y + 0.5 * h * k2)
        k4 = f(y + h * k3)
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(y)) or np.max(np.abs(y)) > OVERFLOW_GUARD:
            raise FlowError(f"trajectory left the overflow guard |y| <= {OVERFLOW_GUARD:g}")
    return _unbatch(y, single)


# -- test functions -----------------------------------------------------------

class TestFunction:
    """Compactly supported smooth scalar function with batched derivatives.

    ``value`` maps (N, n) -> (N,), ``gradient`` -> (N, n), ``hessian`` ->
    (N, n, n). ``support_radius`` bounds the support around the origin and
    ``c3_bound`` bounds ||grad|| + ||hess|| + ||third derivative|| uniformly.
    """

    __test__ = False  # not a pytest class

    def __init__(self, dim, value, gradient, hessian, support_radius, c3_bound=None, name="phi", parts=None):
        self.dim = int(dim)
        self._v, self._g, self._h = value, gradient, hessian
        self._parts = parts
        self.support_radius = float(support_radius)
        self.name = name
        self.c3_bound = float(c3_bound) if c3_bound is not None else estimate_c3_bound(self)

    def value(self, x):
        xb, single = _batch(x, self.dim)
        return _unbatch(np.asarray(self._v(xb), dtype=float), single)

    def all_parts(self, xb: np.ndarray):
        """(value, gradient, hessian) on a batch, sharing work when possible."""
        if self._parts is not None:
            return self._parts(xb)
        return self._v(xb), self._g(xb), self._h(xb)

    def gradient(self, x):
        xb, single = _batch(x, self.dim)
        return _unbatch(np.asarray(self._g(xb), dtype=float), single)

    def hessian(self, x):
        xb, single = _batch(x, self.dim)
        return _unbatch(np.asarray(self._h(xb), dtype=float), single)

    def scaled(self, c: float) -> "TestFunction":
        c = float(c)
        return TestFunction(
            self.dim,
            lambda xb: c * self._v(xb),
            lambda xb: c * self._g(xb),
            lambda xb: c * self._h(xb),
            self.support_radius,
            abs(c) * self.c3_bound,
            name=f"{c:g}*{self.name}",
            parts=None if self._parts is None else (lambda xb: tuple(c * q for q in self._parts(xb))),
        )

    def __repr__(self):
        return f"TestFunction({self.name!r}, dim={self.dim})"


def third_derivative_fd(phi: TestFunction, xb: np.ndarray, h: float) -> np.ndarray:
    """Central differences of the Hessian; returns (N, n, n, n)."""
    n = phi.dim
    out = np.empty((xb.shape[0], n, n, n))
    for k in range(n):
        e = np.zeros(n)
        e[k] = h
        out[:, :, :, k] = (phi._h(xb + e) - phi._h(xb - e)) / (2 * h)
    return out


def _derivative_norms(phi: TestFunction, xb: np.ndarray) -> np.ndarray:
    h = 1e-4 * max(phi.support_radius, 1e-3)
    g = np.linalg.norm(phi._g(xb), axis=1)
    H = np.linalg.norm(phi._h(xb), ord=2, axis=(1, 2))
    T = np.sqrt(np.sum(third_derivative_fd(phi, xb, h) ** 2, axis=(1, 2, 3)))
    return np.stack([g, H, T], axis=1)


def _support_samples(dim: int, radius: float, resolution: int, seed: int = 0) -> np.ndarray:
    if dim == 1:
        return np.linspace(-radius, radius, 40 * resolution + 1)[:, None]
    if dim == 2:
        s = np.linspace(-radius, radius, 2 * resolution + 1)
        return np.stack(np.meshgrid(s, s, indexing="ij"), axis=-1).reshape(-1, 2)
    rng = np.random.default_rng(seed)
    u = rng.normal(size=(200 * resolution, dim))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    r = radius * rng.random(200 * resolution) ** (1.0 / dim)
    return u * r[:, None]


def estimate_c3_bound(phi: TestFunction, resolution: int = 100, safety: float = 1.25) -> float:
    """Sampled sup of the three derivative norms over the support, times ``safety``.

    The third-derivative norm is the Frobenius norm of the 3-tensor, an
    upper bound on its operator norm.
    """
    xb = _support_samples(phi.dim, phi.support_radius, resolution)
    norms = _derivative_norms(phi, xb)
    return safety * float(norms.max(axis=0).sum())


def _cutoff_parts(xb, center, radius):
    """chi(x) = exp(1 - 1/(1 - u)), u = |x - c|^2 / (4 R^2), and its derivatives.

    chi vanishes with all derivatives for |x - c| >= 2R and chi(c) = 1.
    """
    d = xb - center
    s = 1.0 / (4.0 * radius**2)
    u = s * np.sum(d * d, axis=1)
    inside = u < 1.0
    one_m = np.where(inside, 1.0 - u, 1.0)
    g = np.where(inside, np.exp(1.0 - 1.0 / one_m), 0.0)
    g1 = np.where(inside, -g / one_m**2, 0.0)
    g2 = np.where(inside, g * (1.0 / one_m**4 - 2.0 / one_m**3), 0.0)
    grad_u = 2.0 * s * d
    val = g
    grad = g1[:, None] * grad_u
    n = xb.shape[1]
    hess = g2[:, None, None] * grad_u[:, :, None] * grad_u[:, None, :] + (
        g1 * 2.0 * s
    )[:, None, None] * np.eye(n)
    return val, grad, hess


def _product(f_parts, chi_parts):
    fv, fg, fh = f_parts
    cv, cg, ch = chi_parts
    v = fv * cv
    g = fg * cv[:, None] + fv[:, None] * cg
    h = (
        fh * cv[:, None, None]
        + fg[:, :, None] * cg[:, None, :]
        + cg[:, :, None] * fg[:, None, :]
        + fv[:, None, None] * ch
    )
    return v, g, h


def _make_product(dim, f_parts_fn, center, radius, name, support_radius):
    center = np.asarray(center, dtype=float)

    def parts(xb):
        return _product(f_parts_fn(xb), _cutoff_parts(xb, center, radius))

    return TestFunction(
        dim,
        lambda xb: parts(xb)[0],
        lambda xb: parts(xb)[1],
        lambda xb: parts(xb)[2],
        support_radius,
        name=name,
        parts=parts,
    )


def cutoff(dim: int, radius: float, center=None) -> TestFunction:
    """The bump chi itself, supported in the ball of radius 2R around ``center``."""
    c = np.zeros(dim) if center is None else np.asarray(center, dtype=float)
    one = lambda xb: (np.ones(len(xb)), np.zeros_like(xb), np.zeros((len(xb), dim, dim)))
    return _make_product(dim, one, c, radius, f"bump@{c.tolist()}", float(np.linalg.norm(c) + 2 * radius))


def standard_test_battery(dim: int, radius: float = 1.0) -> list[TestFunction]:
    """Finite surrogate for "all compactly supported smooth test functions".

    Every member vanishes outside the ball of radius 2R. Members:

    * x_i chi and x_i x_j chi (i <= j);
    * bumps of radius R/2 centred at 0, +-R/2 e_i and +-R e_i;
    * smoothed |x - x0|^k chi, k = 1, 2, 3, for x0 = 0 and x0 = (R/3) e_1,
      where |y| is replaced by sqrt(|y|^2 + (R/4)^2) - R/4.
    """
    if radius <= 0:
        raise ValueError("radius must be positive")
    R = float(radius)
    zero = np.zeros(dim)
    eye = np.eye(dim)
    out: list[TestFunction] = []

    for i in range(dim):
        def coord(xb, i=i):
            n = len(xb)
            g = np.zeros((n, dim))
            g[:, i] = 1.0
            return xb[:, i].copy(), g, np.zeros((n, dim, dim))

        out.append(_make_product(dim, coord, zero, R, f"x{i}*chi", 2 * R))

    for i, j in itertools.combinations_with_replacement(range(dim), 2):
        def quad(xb, i=i, j=j):
            n = len(xb)
            g = np.zeros((n, dim))
            g[:, i] += xb[:, j]
            g[:, j] += xb[:, i]
            h = np.zeros((n, dim, dim))
            h[:, i, j] += 1.0
            h[:, j, i] += 1.0
            return xb[:, i] * xb[:, j], g, h

        out.append(_make_product(dim, quad, zero, R, f"x{i}x{j}*chi", 2 * R))

    centers = [zero]
    for i in range(dim):
        for s in (0.5, -0.5, 1.0, -1.0):
            centers.append(s * R * eye[i])
    for c in centers:
        out.append(cutoff(dim, R / 2, c))

    soft = R / 4
    for x0 in (zero, (R / 3) * eye[0]):
        for k in (1, 2, 3):
            def dist_pow(xb, x0=x0, k=k):
                d = xb - x0
                q = np.sqrt(np.sum(d * d, axis=1) + soft**2)
                r = q - soft
                dr = d / q[:, None]
                d2r = (eye[None] - dr[:, :, None] * dr[:, None, :]) / q[:, None, None]
                v = r**k
                g = (k * r ** (k - 1))[:, None] * dr
                h = (k * r ** (k - 1))[:, None, None] * d2r
                if k >= 2:
                    h = h + (k * (k - 1) * r ** (k - 2))[:, None, None] * dr[:, :, None] * dr[:, None, :]
                return v, g, h

            out.append(_make_product(dim, dist_pow, zero, R, f"dist{k}@{np.round(x0, 3).tolist()}*chi", 2 * R))
    return out


# -- Lie derivatives ------------------------------------------------------------

def lie(X: VectorField, phi: TestFunction, x) -> np.ndarray:
    """L_X phi = grad phi . X."""
    xb, single = _batch(x, X.dim)
    return _unbatch(np.einsum("ni,ni->n", phi._g(xb), X._value(xb)), single)


def lie2_from_parts(Xv, J, grad, hess) -> np.ndarray:
    """sum_ij X_i dX_j/dx_i dphi/dx_j + sum_ij X_i X_j d^2 phi/dx_i dx_j."""
    first = np.einsum("nji,ni,nj->n", J, Xv, grad)
    second = np.einsum("ni,nij,nj->n", Xv, hess, Xv)
    return first + second


def lie2(X: VectorField, phi: TestFunction, x) -> np.ndarray:
    """Second Lie derivative L_X^2 phi."""
    xb, single = _batch(x, X.dim)
    val = lie2_from_parts(X._value(xb), X._jac(xb), phi._g(xb), phi._h(xb))
    return _unbatch(val, single)


# -- norms --------------------------------------------------------------------------

@dataclass(frozen=True)
class Box:
    """Axis-aligned box [lo, hi] used as the sampling region for sup norms."""

    lo: np.ndarray
    hi: np.ndarray

    @classmethod
    def cube(cls, center, radius: float, dim: int | None = None) -> "Box":
        c = np.atleast_1d(np.asarray(center, dtype=float))
        if dim is not None and c.shape[0] != dim:
            c = np.full(dim, float(c[0]))
        return cls(c - radius, c + radius)

    @property
    def dim(self) -> int:
        return int(np.asarray(self.lo).shape[0])

    def vertices(self) -> np.ndarray:
        lo, hi = np.asarray(self.lo), np.asarray(self.hi)
        return np.array(list(itertools.product(*zip(lo, hi))), dtype=float)

    def sample(self, count: int, seed: int = 0) -> np.ndarray:
        lo, hi = np.asarray(self.lo), np.asarray(self.hi)
        rng = np.random.default_rng(seed)
        pts = lo + (hi - lo) * rng.random((count, self.dim))
        return np.vstack([pts, self.vertices(), 0.5 * (lo + hi)[None]])


def w2inf_norm(X: VectorField, box: Box, samples: int = 2000, seed: int = 0) -> float:
    """sup over the box of |X| + ||DX||_op + ||D^2 X||.

    Exact for constant fields (|v|) and affine fields (the sup of |Ax + b|
    over a box is attained at a vertex). Otherwise a sampled maximum. The
    Hessian norm is the Frobenius norm of the 3-tensor.
    """
    if X.kind == "constant":
        return float(np.linalg.norm(X.v))
    if X.kind == "affine":
        verts = box.vertices()
        sup = float(np.max(np.linalg.norm(verts @ X.A.T + X.b, axis=1)))
        return sup + float(np.linalg.norm(X.A, 2))
    pts = box.sample(samples, seed)
    v = np.linalg.norm(X._value(pts), axis=1)
    J = np.linalg.norm(X._jac(pts), ord=2, axis=(1, 2))
    H = np.sqrt(np.sum(X._hess(pts) ** 2, axis=(1, 2, 3)))
    return float(np.max(v + J + H))


# -- named analytic fields ------------------------------------------------------

def rotation_field(omega: float = 1.0) -> AffineField:
    return AffineField([[0.0, -omega], [omega, 0.0]])


def sine_shear(amplitude: float = 1.0, wavenumber: float = 1.0) -> AnalyticField:
    """X(x, y) = (a sin(k y), 0) on R^2."""
    a, k = float(amplitude), float(wavenumber)

    def value(xb):
        out = np.zeros_like(xb)
        out[:, 0] = a * np.sin(k * xb[:, 1])
        return out

    def jac(xb):
        out = np.zeros((len(xb), 2, 2))
        out[:, 0, 1] = a * k * np.cos(k * xb[:, 1])
        return out

    def hess(xb):
        out = np.zeros((len(xb), 2, 2, 2))
        out[:, 0, 1, 1] = -a * k * k * np.sin(k * xb[:, 1])
        return out

    return AnalyticField(2, value, jac, hess, name="sine_shear")


def tanh_drift(dim: int = 1, scale: float = 1.0) -> AnalyticField:
    """X(x)_i = -tanh(x_i / s): bounded, smooth, pulls toward the origin."""
    s = float(scale)

    def value(xb):
        return -np.tanh(xb / s)

    def jac(xb):
        d = -(1.0 - np.tanh(xb / s) ** 2) / s
        out = np.zeros((len(xb), dim, dim))
        idx = np.arange(dim)
        out[:, idx, idx] = d
        return out

    def hess(xb):
        t = np.tanh(xb / s)
        d2 = 2.0 * t * (1.0 - t**2) / s**2
        out = np.zeros((len(xb), dim, dim, dim))
        idx = np.arange(dim)
        out[:, idx, idx, idx] = d2
        return out

    return AnalyticField(dim, value, jac, hess, name="tanh_drift")


FIELD_REGISTRY: dict[str, Callable[..., VectorField]] = {
    "rotation": rotation_field,
    "sine_shear": sine_shear,
    "tanh_drift": tanh_drift,
}


def field_from_config(spec: dict) -> VectorField:
    """Build a field from ``{kind: constant, v}``, ``{kind: affine, A, b}`` or a registry key."""
    kind = spec.get("kind")
    if kind == "constant":
        return ConstantField(spec["v"])
    if kind == "affine":
        return AffineField(spec["A"], spec.get("b"))
    name = spec.get("name", kind)
    if name in FIELD_REGISTRY:
        params = {k: v for k, v in spec.items() if k not in ("kind", "name")}
        return FIELD_REGISTRY[name](**params)
    raise ValueError(f"unknown field specification {spec!r}")
