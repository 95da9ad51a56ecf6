"""Pure numpy implementations of the numerical kernels.

These are the reference versions; ``_kernels.pyx`` mirrors every function
here with the same signature and is preferred when it has been compiled.
"""
import numpy as np
from scipy.special import logsumexp
from scipy.spatial.distance import cdist


SNAP = 1e-13


def wasserstein_1d_pow(x, cwx, y, cwy, p):
    """Return the p-th power of W_p between two sorted 1-D weighted clouds.

    ``x`` and ``y`` are sorted ascending; ``cwx`` and ``cwy`` are the matching
    cumulative weights, each ending exactly at 1.0. Breakpoints closer than
    ``SNAP`` are merged: slivers of rounding-level mass would otherwise
    survive the p-th root (1e-18 mass gives a 1e-9 distance).
    """
    u = np.union1d(cwx, cwy)
    u = u[np.diff(u, append=np.inf) > SNAP]
    du = np.diff(np.concatenate(([0.0], u)))
    keep = du > 0.0
    u, du = u[keep], du[keep]
    mid = u - 0.5 * du
    ix = np.minimum(np.searchsorted(cwx, mid, side="right"), len(x) - 1)
    iy = np.minimum(np.searchsorted(cwy, mid, side="right"), len(y) - 1)
    return float(np.sum(du * np.abs(x[ix] - y[iy]) ** p))


def systematic_indices(cw, n_out, u):
    """Indices selected by systematic resampling with offset ``u`` in [0, 1)."""
    positions = (np.arange(n_out) + u) / n_out
    idx = np.searchsorted(cw, positions, side="right")
    return np.minimum(idx, len(cw) - 1).astype(np.intp)


def cost_matrix(x, y, p):
    """|x_i - y_j|^p for point arrays of shape (n, d) and (m, d)."""
    return cdist(x, y) ** p


def softmin_rows(C, g, logb, eps):
    """f_i = -eps * log sum_j exp((g_j - C_ij) / eps + logb_j)."""
    return -eps * logsumexp((g[None, :] - C) / eps + logb[None, :], axis=1)
