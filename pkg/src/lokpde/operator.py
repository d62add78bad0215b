"""From kernel matrix to discrete generator: normalizations and tuning.

The pipeline discretizes the integral-operator approximation of the
backward Kolmogorov operator:

1. evaluate the kernel matrix K on the kNN pattern,
2. (debias, for non-uniform samples) divide column j by a Gaussian kernel
   density estimate at x_j,
3. divide each row by its sum, giving a row-stochastic matrix S,
4. form the generator L = (S - I) / eps.

Constant multiples of the density and the eps^(-d/2) prefactors cancel in
the row normalization, so neither the sampling density's scale nor the
intrinsic dimension is needed to build L.  Bandwidths can be selected by
locating the maximal log-log slope of Q(eps), the mean of the full kernel
matrix, which also estimates the intrinsic dimension as twice that slope.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse

from .geometry import CoefficientField, PointCloud
from .kernels import KernelConfig, SparseKernelMatrix, assemble_kernel_matrix, build_knn_graph

__all__ = [
    "DensityEstimate",
    "GeneratorMatrix",
    "TuningReport",
    "estimate_density",
    "right_normalize",
    "left_normalize",
    "build_operator",
    "tune_bandwidth",
    "tune_gaussian_bandwidth",
    "default_epsilon_grid",
]

_CHUNK_ROWS = 512


@dataclass(frozen=True)
class DensityEstimate:
    """Per-point Gaussian kernel density values (unnormalized, all > 0)."""

    q_hat: np.ndarray
    tilde_epsilon: float

    def __post_init__(self):
        q = np.asarray(self.q_hat, dtype=float)
        object.__setattr__(self, "q_hat", q)
        if np.any(q <= 0) or not np.all(np.isfinite(q)):
            raise ValueError("density estimate must be strictly positive and finite")


@dataclass(frozen=True)
class GeneratorMatrix:
    """Row-stochastic matrix S with its bandwidth; L = (S - I) / eps.

    ``row_sums`` holds the pre-normalization kernel row sums (the diagonal
    of D in S = D^-1 K).
    """

    s_matrix: scipy.sparse.csr_matrix
    epsilon: float
    debiased: bool
    row_sums: np.ndarray

    @property
    def n_points(self) -> int:
        return self.s_matrix.shape[0]

    def apply(self, v: np.ndarray) -> np.ndarray:
        """L v = (S v - v) / eps; annihilates constant vectors."""
        v = np.asarray(v, dtype=float)
        return (self.s_matrix @ v - v) / self.epsilon

    def matrix(self) -> scipy.sparse.csr_matrix:
        """The generator L = (S - I) / eps as an explicit sparse matrix."""
        n = self.n_points
        eye = scipy.sparse.identity(n, format="csr")
        return ((self.s_matrix - eye) / self.epsilon).tocsr()

    def shifted_matrix(self, shift: np.ndarray) -> scipy.sparse.csr_matrix:
        """diag(a) + L for a per-point zeroth-order shift a."""
        shift = np.asarray(shift, dtype=float)
        if shift.shape != (self.n_points,):
            raise ValueError("shift must be an N-vector")
        return (self.matrix() + scipy.sparse.diags(shift)).tocsr()


def estimate_density(
    cloud: PointCloud,
    tilde_epsilon: float,
    k: int,
    neighbors: np.ndarray | None = None,
) -> DensityEstimate:
    """Gaussian kernel density values over the kNN pattern.

    q_i = sum_j exp(-|x_i - x_j|^2 / (2 eps~)) over the k nearest neighbors
    of i; the self term makes every value >= 1.
    """
    if tilde_epsilon <= 0:
        raise ValueError("tilde_epsilon must be positive")
    pts = cloud.ambient
    if neighbors is None:
        neighbors = build_knn_graph(cloud, min(k, pts.shape[0]))
    q = np.empty(pts.shape[0])
    for start in range(0, pts.shape[0], _CHUNK_ROWS):
        stop = min(start + _CHUNK_ROWS, pts.shape[0])
        diff = pts[start:stop, None, :] - pts[neighbors[start:stop]]
        d2 = np.einsum("mkn,mkn->mk", diff, diff)
        q[start:stop] = np.exp(-d2 / (2.0 * tilde_epsilon)).sum(axis=1)
    return DensityEstimate(q, tilde_epsilon)


def right_normalize(kernel: SparseKernelMatrix, density: DensityEstimate) -> SparseKernelMatrix:
    """Debias: divide column j by the density estimate at x_j (K <- K D1^-1)."""
    q = density.q_hat
    if q.shape[0] != kernel.n_points:
        raise ValueError("density size does not match kernel matrix")
    mat = kernel.matrix.copy()
    mat.data = mat.data / q[mat.indices]
    return SparseKernelMatrix(mat, kernel.epsilon)


def left_normalize(kernel: SparseKernelMatrix, debiased: bool = False) -> GeneratorMatrix:
    """Row-normalize to a stochastic matrix S = D^-1 K, D = diag(row sums)."""
    mat = kernel.matrix.tocsr().copy()
    row_sums = np.asarray(mat.sum(axis=1)).ravel()
    if np.any(row_sums <= 0):
        bad = int(np.argmin(row_sums))
        raise ValueError(
            f"kernel row {bad} has non-positive sum {row_sums[bad]!r}; "
            "the point is isolated (k too small or epsilon too small)"
        )
    counts = np.diff(mat.indptr)
    mat.data = mat.data / np.repeat(row_sums, counts)
    return GeneratorMatrix(mat, kernel.epsilon, debiased, row_sums)


def build_operator(
    cloud: PointCloud,
    coeffs: CoefficientField,
    cfg: KernelConfig,
    debias: bool = True,
    neighbors: np.ndarray | None = None,
) -> GeneratorMatrix:
    """Full pipeline: kernel matrix -> (debias) -> row normalization.

    With ``debias`` the kernel columns are pre-divided by a Gaussian
    density estimate at bandwidth ``cfg.tilde_epsilon`` (computed on the
    same kNN pattern), removing the sampling-density bias of i.i.d. clouds.
    """
    if cfg.sparsify and neighbors is None:
        if cfg.k_neighbors > cloud.n_points:
            raise ValueError(f"k_neighbors={cfg.k_neighbors} exceeds N={cloud.n_points}")
        neighbors = build_knn_graph(cloud, cfg.k_neighbors)
    kernel = assemble_kernel_matrix(cloud, coeffs, cfg, neighbors=neighbors)
    if debias:
        if cfg.sparsify:
            density = estimate_density(cloud, cfg.tilde_epsilon, cfg.k_neighbors, neighbors)
        else:
            all_cols = np.broadcast_to(np.arange(cloud.n_points), (cloud.n_points, cloud.n_points))
            density = estimate_density(cloud, cfg.tilde_epsilon, cloud.n_points, all_cols)
        kernel = right_normalize(kernel, density)
    return left_normalize(kernel, debiased=debias)


@dataclass(frozen=True)
class TuningReport:
    """Q(eps) scan: log Q, per-point log-log slopes, and the selection.

    Q is computed over all N^2 kernel pairs (dense), so Q -> 1 as
    eps -> infinity for drift-free kernels and Q -> 1/N as eps -> 0.
    ``d_hat`` is twice the maximal slope; ``epsilon_star`` the grid point
    attaining it.
    """

    epsilon_grid: np.ndarray
    log_q: np.ndarray
    slope: np.ndarray
    epsilon_star: float
    d_hat: float


def default_epsilon_grid() -> np.ndarray:
    """41 logarithmically spaced bandwidths from 2^-30 to 2^10."""
    return 2.0 ** np.linspace(-30.0, 10.0, 41)


def tune_bandwidth(
    cloud: PointCloud,
    coeffs: CoefficientField,
    grid: np.ndarray | None = None,
) -> TuningReport:
    """Scan Q(eps) = mean_ij K(eps, x_i, x_j) over a bandwidth grid.

    The quadratic form splits as q0 + 2 eps q1 + eps^2 q2 with
    q0 = v^T C^-1 v, q1 = B^T C^-1 v, q2 = B^T C^-1 B (v = x_i - x_j), so
    the pairwise pieces are computed once and reused for every eps.
    Slopes of log Q against log eps use centered differences (one-sided at
    the ends); the maximal slope estimates d/2 and selects eps.
    """
    grid = default_epsilon_grid() if grid is None else np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size < 3:
        raise ValueError("bandwidth grid needs at least 3 points")
    if np.any(grid <= 0) or np.any(np.diff(grid) <= 0):
        raise ValueError("bandwidth grid must be positive and strictly increasing")
    pts = cloud.ambient
    n = pts.shape[0]
    if coeffs.n_points != n:
        raise ValueError("coefficient field size does not match cloud")
    totals = np.zeros(grid.size)
    for start in range(0, n, _CHUNK_ROWS):
        stop = min(start + _CHUNK_ROWS, n)
        diff = pts[start:stop, None, :] - pts[None, :, :]
        ci = coeffs.diffusion_inv[start:stop]
        b = coeffs.drift[start:stop]
        civ = np.einsum("mnp,mjp->mjn", ci, diff)
        q0 = np.einsum("mjn,mjn->mj", diff, civ)
        q1 = np.einsum("mn,mjn->mj", b, civ)
        q2 = np.einsum("mn,mnp,mp->m", b, ci, b)[:, None]
        for idx, eps in enumerate(grid):
            quad = q0 + (2.0 * eps) * q1 + (eps * eps) * q2
            totals[idx] += np.exp(-quad / (2.0 * eps)).sum()
    with np.errstate(divide="ignore"):
        log_q = np.log(totals / (n * n))
    log_e = np.log(grid)
    slope = np.full_like(log_q, np.nan)
    with np.errstate(invalid="ignore"):
        slope[1:-1] = (log_q[2:] - log_q[:-2]) / (log_e[2:] - log_e[:-2])
        slope[0] = (log_q[1] - log_q[0]) / (log_e[1] - log_e[0])
        slope[-1] = (log_q[-1] - log_q[-2]) / (log_e[-1] - log_e[-2])
    # drift makes K(eps, x, x) = exp(-eps B^T C^-1 B / 2) underflow to zero at
    # huge eps; slopes touching a log Q = -inf grid point are not usable
    bad = ~np.isfinite(log_q)
    slope[np.convolve(bad, [True, True, True], mode="same")] = np.nan
    if not np.isfinite(slope).any():
        raise ValueError("Q(eps) vanished on the whole grid; no usable slope")
    best = int(np.nanargmax(slope))
    return TuningReport(grid, log_q, slope, float(grid[best]), float(2.0 * slope[best]))


def tune_gaussian_bandwidth(cloud: PointCloud, grid: np.ndarray | None = None) -> TuningReport:
    """Q(eps) scan for the isotropic Gaussian kernel (density bandwidth)."""
    return tune_bandwidth(cloud, CoefficientField.isotropic(cloud.n_points, cloud.ambient_dim), grid)
