"""Manifold zoo, point sampling, embeddings, and coefficient lifting.

The solver operates on point clouds in ambient coordinates.  For the
parametrized manifolds in the zoo (interval, ellipse, torus and their
halves) this module provides the embedding maps, their Jacobians, grid and
i.i.d. samplers, and the lift of intrinsic drift/diffusion coefficients
(b, c) to their ambient representation (B, C^-1) through the embedding
Jacobian and its pseudo-inverse.  Clouds with unknown embedding enter
through :func:`load_cloud` and carry ambient data only.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "Manifold",
    "PointCloud",
    "CoefficientField",
    "MANIFOLD_IDS",
    "get_manifold",
    "ambient_cloud_manifold",
    "embed",
    "embedding_jacobian",
    "sample_points",
    "grid_axis_counts",
    "lift_coefficients",
    "lift_field",
    "load_cloud",
    "sample_sphere",
]

MANIFOLD_IDS = ("interval", "ellipse", "half_ellipse", "torus", "half_torus", "ambient_cloud")

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class Manifold:
    """A member of the manifold zoo.

    Attributes:
        id: one of ``MANIFOLD_IDS``.
        intrinsic_dim: dimension d of the manifold.
        ambient_dim: dimension n of the embedding space.
        parameter_domain: per-coordinate closed intervals (radians for angles).
        has_boundary: whether the parameter domain has genuine endpoints.
        periodic: per-coordinate flag, True for closed angular coordinates.
    """

    id: str
    intrinsic_dim: int
    ambient_dim: int
    parameter_domain: tuple[tuple[float, float], ...]
    has_boundary: bool
    periodic: tuple[bool, ...]
    # per-coordinate uniform-grid convention: "closed" excludes the period
    # endpoint, "endpoints" includes both, "centered" uses cell centers.
    # Bounded angular coordinates are cell-centered: with nodes exactly on
    # the boundary circle the kernel rows there degrade the estimate by
    # a factor of ~2 in the boundary layer.
    grid_style: tuple[str, ...] = ()

    def __post_init__(self):
        if self.intrinsic_dim > self.ambient_dim:
            raise ValueError("intrinsic dimension exceeds ambient dimension")

    @property
    def has_embedding(self) -> bool:
        return self.id != "ambient_cloud"


_ZOO = {
    "interval": Manifold("interval", 1, 1, ((0.0, 1.0),), True, (False,), ("endpoints",)),
    "ellipse": Manifold("ellipse", 1, 2, ((0.0, TWO_PI),), False, (True,), ("closed",)),
    "half_ellipse": Manifold("half_ellipse", 1, 2, ((0.0, np.pi),), True, (False,), ("centered",)),
    "torus": Manifold(
        "torus", 2, 3, ((0.0, TWO_PI), (0.0, TWO_PI)), False, (True, True), ("closed", "closed")
    ),
    "half_torus": Manifold(
        "half_torus", 2, 3, ((0.0, TWO_PI), (0.0, np.pi)), True, (True, False), ("closed", "centered")
    ),
}


def get_manifold(manifold_id: str) -> Manifold:
    """Look up a zoo manifold by id (``ambient_cloud`` needs :func:`ambient_cloud_manifold`)."""
    try:
        return _ZOO[manifold_id]
    except KeyError:
        raise ValueError(
            f"unknown manifold id {manifold_id!r}; expected one of {sorted(_ZOO)}"
        ) from None


def ambient_cloud_manifold(ambient_dim: int, intrinsic_dim: int | None = None) -> Manifold:
    """Manifold record for a cloud with unknown embedding.

    The intrinsic dimension defaults to the ambient one minus one (a
    hypersurface); it is only informational for this id.
    """
    d = ambient_dim - 1 if intrinsic_dim is None else intrinsic_dim
    d = max(d, 1)
    return Manifold("ambient_cloud", d, ambient_dim, (), False, ())


def embed(manifold: Manifold, intrinsic: np.ndarray) -> np.ndarray:
    """Map intrinsic coordinates to ambient coordinates.

    Accepts a single point of shape (d,) or a batch of shape (N, d) and
    returns shape (n,) or (N, n) accordingly.
    """
    if not manifold.has_embedding:
        raise ValueError("ambient_cloud has no embedding")
    x = np.asarray(intrinsic, dtype=float)
    single = x.ndim == 1
    pts = np.atleast_2d(x)
    if pts.shape[1] != manifold.intrinsic_dim:
        raise ValueError(
            f"expected intrinsic dimension {manifold.intrinsic_dim}, got {pts.shape[1]}"
        )
    if manifold.id == "interval":
        out = pts.copy()
    elif manifold.id in ("ellipse", "half_ellipse"):
        th = pts[:, 0]
        out = np.stack([np.cos(th), 2.0 * np.sin(th)], axis=1)
    else:  # torus, half_torus
        th, ph = pts[:, 0], pts[:, 1]
        r = 2.0 + np.cos(th)
        out = np.stack([r * np.cos(ph), r * np.sin(ph), np.sin(th)], axis=1)
    return out[0] if single else out


def embedding_jacobian(manifold: Manifold, intrinsic: np.ndarray) -> np.ndarray:
    """Jacobian of the embedding, shape (n, d) per point ((N, n, d) for batches)."""
    if not manifold.has_embedding:
        raise ValueError("ambient_cloud has no embedding")
    x = np.asarray(intrinsic, dtype=float)
    single = x.ndim == 1
    pts = np.atleast_2d(x)
    N = pts.shape[0]
    if manifold.id == "interval":
        jac = np.ones((N, 1, 1))
    elif manifold.id in ("ellipse", "half_ellipse"):
        th = pts[:, 0]
        jac = np.stack([-np.sin(th), 2.0 * np.cos(th)], axis=1)[:, :, None]
    else:
        th, ph = pts[:, 0], pts[:, 1]
        r = 2.0 + np.cos(th)
        jac = np.empty((N, 3, 2))
        jac[:, 0, 0] = -np.sin(th) * np.cos(ph)
        jac[:, 1, 0] = -np.sin(th) * np.sin(ph)
        jac[:, 2, 0] = np.cos(th)
        jac[:, 0, 1] = -r * np.sin(ph)
        jac[:, 1, 1] = r * np.cos(ph)
        jac[:, 2, 1] = 0.0
    return jac[0] if single else jac


@dataclass(frozen=True)
class PointCloud:
    """Sample locations on (or from) a manifold.

    ``ambient`` is the N x n coordinate matrix the kernel operates on.
    ``intrinsic`` (N x d) is present only when the cloud came from a known
    parametrization.
    """

    ambient: np.ndarray
    intrinsic: np.ndarray | None
    sampling: str  # "uniform_grid" | "iid_density"
    manifold: Manifold
    seed: int | None = None

    def __post_init__(self):
        amb = np.asarray(self.ambient, dtype=float)
        object.__setattr__(self, "ambient", amb)
        if amb.ndim != 2 or amb.shape[0] < 2:
            raise ValueError("need at least 2 points with fixed ambient dimension")
        if not np.isfinite(amb).all():
            raise ValueError("non-finite ambient coordinates")
        if self.intrinsic is not None:
            intr = np.asarray(self.intrinsic, dtype=float)
            object.__setattr__(self, "intrinsic", intr)
            if intr.shape[0] != amb.shape[0]:
                raise ValueError("intrinsic/ambient point counts differ")
        if self.sampling not in ("uniform_grid", "iid_density"):
            raise ValueError(f"unknown sampling mode {self.sampling!r}")

    @property
    def n_points(self) -> int:
        return self.ambient.shape[0]

    @property
    def ambient_dim(self) -> int:
        return self.ambient.shape[1]


def grid_axis_counts(manifold: Manifold, n_points: int) -> tuple[int, ...]:
    """Per-axis grid counts whose product is ``n_points``.

    Counts are proportional to the parameter-domain lengths, so angular
    resolution is uniform across axes (an 80 x 80 grid on the torus, an
    80 x 40 grid on the half torus for the same total 6400 / 3200).
    """
    d = manifold.intrinsic_dim
    if d == 1:
        return (n_points,)
    lengths = [hi - lo for lo, hi in manifold.parameter_domain]
    # n_i = lengths_i * s with prod n_i = N  =>  s = (N / prod L)^(1/d)
    s = (n_points / np.prod(lengths)) ** (1.0 / d)
    counts = tuple(int(round(L * s)) for L in lengths)
    if any(c < 2 for c in counts) or int(np.prod(counts)) != n_points:
        raise ValueError(
            f"N={n_points} does not factor into a proportional grid for "
            f"{manifold.id}; nearest factorization {counts}"
        )
    return counts


def _axis_grid(lo: float, hi: float, count: int, style: str) -> np.ndarray:
    if style == "closed":
        # exclude the period endpoint: duplicate points give zero-distance rows
        return lo + (hi - lo) * np.arange(count) / count
    if style == "centered":
        return lo + (hi - lo) * (np.arange(count) + 0.5) / count
    return np.linspace(lo, hi, count)


def sample_points(manifold: Manifold, n_points: int, mode: str, seed: int = 0) -> PointCloud:
    """Sample N points on a zoo manifold.

    ``uniform_grid`` gives deterministic equispaced parameter grids, with
    the per-coordinate conventions recorded on the manifold: closed angular
    coordinates exclude the period endpoint, the interval includes both
    endpoints, bounded angular coordinates are cell-centered.
    ``iid_density`` draws uniformly in parameter space, which is
    non-uniform on the manifold itself; that bias is what the debiasing
    normalization removes downstream.
    """
    if not manifold.has_embedding:
        raise ValueError("ambient_cloud has no parametrization to sample from")
    if n_points < 2:
        raise ValueError("need at least 2 points")
    if mode == "uniform_grid":
        if manifold.intrinsic_dim == 1:
            (lo, hi), = manifold.parameter_domain
            axes = [_axis_grid(lo, hi, n_points, manifold.grid_style[0])]
        else:
            counts = grid_axis_counts(manifold, n_points)
            axes = [
                _axis_grid(lo, hi, c, style)
                for (lo, hi), c, style in zip(
                    manifold.parameter_domain, counts, manifold.grid_style
                )
            ]
        mesh = np.meshgrid(*axes, indexing="ij")
        intrinsic = np.stack([m.ravel() for m in mesh], axis=1)
        seed_used = None
    elif mode == "iid_density":
        rng = np.random.default_rng(seed)
        lo = np.array([a for a, _ in manifold.parameter_domain])
        hi = np.array([b for _, b in manifold.parameter_domain])
        intrinsic = lo + (hi - lo) * rng.random((n_points, manifold.intrinsic_dim))
        seed_used = seed
    else:
        raise ValueError(f"unknown sampling mode {mode!r}")
    return PointCloud(embed(manifold, intrinsic), intrinsic, mode, manifold, seed_used)


@dataclass(frozen=True)
class CoefficientField:
    """Ambient drift B (N x n) and diffusion pseudo-inverse C^-1 (N x n x n).

    When the field came from intrinsic data, the original b (N x d) and
    c (N x d x d) are kept alongside.
    """

    drift: np.ndarray
    diffusion_inv: np.ndarray
    intrinsic_b: np.ndarray | None = None
    intrinsic_c: np.ndarray | None = None

    def __post_init__(self):
        B = np.asarray(self.drift, dtype=float)
        Ci = np.asarray(self.diffusion_inv, dtype=float)
        object.__setattr__(self, "drift", B)
        object.__setattr__(self, "diffusion_inv", Ci)
        if B.ndim != 2 or Ci.shape != (B.shape[0], B.shape[1], B.shape[1]):
            raise ValueError("drift must be (N, n) and diffusion_inv (N, n, n)")

    @property
    def n_points(self) -> int:
        return self.drift.shape[0]

    @classmethod
    def isotropic(cls, n_points: int, ambient_dim: int, c: float = 1.0) -> "CoefficientField":
        """Zero drift with constant isotropic diffusion c I (so C^-1 = I/c)."""
        eye = np.eye(ambient_dim) / c
        return cls(
            np.zeros((n_points, ambient_dim)),
            np.broadcast_to(eye, (n_points, ambient_dim, ambient_dim)).copy(),
        )

    @classmethod
    def laplace_beltrami(cls, n_points: int, ambient_dim: int) -> "CoefficientField":
        """Zero drift, c = 2I: the generator (1/2) c_ij grad_i grad_j equals
        the full Laplace-Beltrami operator (c = I would give half of it)."""
        return cls.isotropic(n_points, ambient_dim, c=2.0)


_JACOBIAN_RANK_RTOL = 1e-10


def lift_coefficients(
    manifold: Manifold,
    intrinsic_b: np.ndarray,
    intrinsic_c: np.ndarray,
    intrinsic: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Lift intrinsic (b, c) at one point to ambient (B, C^-1).

    B = pinv(J)^T b and C^-1 = pinv(J c J^T), with J the embedding Jacobian.
    C^-1 comes out symmetric positive semi-definite of rank d.
    """
    b = np.atleast_1d(np.asarray(intrinsic_b, dtype=float))
    c = np.atleast_2d(np.asarray(intrinsic_c, dtype=float))
    jac = embedding_jacobian(manifold, intrinsic)
    sing = np.linalg.svd(jac, compute_uv=False)
    if sing[-1] <= sing[0] * _JACOBIAN_RANK_RTOL:
        raise ValueError("embedding Jacobian is rank-deficient at this point")
    jac_pinv = np.linalg.pinv(jac)
    drift = jac_pinv.T @ b
    lifted = jac @ c @ jac.T
    diff_inv = np.linalg.pinv(lifted, hermitian=True)
    return drift, 0.5 * (diff_inv + diff_inv.T)


def lift_field(
    manifold: Manifold,
    cloud: PointCloud,
    b_fn,
    c_fn,
) -> CoefficientField:
    """Vectorized coefficient lift over a whole cloud with known parametrization."""
    if cloud.intrinsic is None:
        raise ValueError("cloud has no intrinsic coordinates to lift from")
    pts = cloud.intrinsic
    b = np.asarray(b_fn(pts), dtype=float)
    c = np.asarray(c_fn(pts), dtype=float)
    jac = embedding_jacobian(manifold, pts)
    sing = np.linalg.svd(jac, compute_uv=False)
    if np.any(sing[:, -1] <= sing[:, 0] * _JACOBIAN_RANK_RTOL):
        raise ValueError("embedding Jacobian is rank-deficient at some cloud point")
    jac_pinv = np.linalg.pinv(jac)
    drift = np.einsum("ndk,nd->nk", jac_pinv, b)
    lifted = np.einsum("nik,nkl,njl->nij", jac, c, jac)
    diff_inv = np.linalg.pinv(lifted, hermitian=True)
    diff_inv = 0.5 * (diff_inv + np.transpose(diff_inv, (0, 2, 1)))
    return CoefficientField(drift, diff_inv, b, c)


def load_cloud(path) -> PointCloud:
    """Read an ambient-only point cloud from whitespace-separated text.

    One point per line; every line must hold the same number of finite
    decimal reals.  Parse failures report the offending 1-based line number.
    """
    rows: list[list[float]] = []
    width = None
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            tokens = line.split()
            if not tokens:
                continue
            try:
                values = [float(t) for t in tokens]
            except ValueError:
                raise ValueError(f"{path}: line {lineno}: non-numeric token") from None
            if not all(np.isfinite(values)):
                raise ValueError(f"{path}: line {lineno}: non-finite value")
            if width is None:
                width = len(values)
            elif len(values) != width:
                raise ValueError(
                    f"{path}: line {lineno}: expected {width} columns, got {len(values)}"
                )
            rows.append(values)
    if len(rows) < 2:
        raise ValueError(f"{path}: need at least 2 points, got {len(rows)}")
    ambient = np.array(rows, dtype=float)
    return PointCloud(ambient, None, "iid_density", ambient_cloud_manifold(ambient.shape[1]))


def sample_sphere(n_points: int, seed: int = 0) -> PointCloud:
    """Uniform i.i.d. samples on the unit sphere S^2 (ambient-only cloud)."""
    rng = np.random.default_rng(seed)
    g = rng.standard_normal((n_points, 3))
    ambient = g / np.linalg.norm(g, axis=1, keepdims=True)
    return PointCloud(ambient, None, "iid_density", ambient_cloud_manifold(3, 2), seed)
