"""Synthetic functional data: Matérn GP noise, mean and VCM generators.

Generators draw everything from the ``numpy.random.Generator`` they are given,
so a dataset is a deterministic function of the generator state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import special

from dpfda.basis import SQRT2, as_coeffs, basis_matrix, eval_function

# Smallest one-decimal value keeping the degree-512 truncations of both
# built-in targets inside the alpha=3 ellipsoid; see default_c_alpha().
DEFAULT_C_ALPHA = 28119652.9
DEFAULT_ALPHA = 3.0
DEFAULT_NOISE_SD = 0.5  # N(0, 0.25) measurement error

JITTER_START = 1e-10
JITTER_MAX = 1e-4


class FactorizationError(RuntimeError):
    pass


@dataclass(frozen=True)
class MaternSpec:
    """Matérn covariance ``sigma2 * 2^(1-nu)/Gamma(nu) * x^nu K_nu(x)``, ``x = sqrt(2 nu)|s-t|/range``.

    ``nu=4, range=0.8`` reproduce the simulation kernel.  ``sigma2=0`` turns the
    functional noise off.
    """

    sigma2: float = 0.25
    nu: float = 4.0
    range: float = 0.8

    def __post_init__(self):
        if self.sigma2 < 0 or self.nu <= 0 or self.range <= 0:
            raise ValueError(f"invalid Matérn parameters: {self}")


def matern_cov(x, y, spec: MaternSpec):
    """Covariance between points ``x`` and ``y`` (broadcasting)."""
    dist = np.abs(np.asarray(x, dtype=float) - np.asarray(y, dtype=float))
    scaled = math.sqrt(2.0 * spec.nu) * dist / spec.range
    near = dist < 1e-12
    safe = np.where(near, 1.0, scaled)
    coef = 2.0 ** (1.0 - spec.nu) / special.gamma(spec.nu)
    val = spec.sigma2 * coef * safe**spec.nu * special.kv(spec.nu, safe)
    out = np.where(near, spec.sigma2, val)
    return out.item() if out.ndim == 0 else out


def _cholesky_stack(K: np.ndarray, sigma2: float) -> np.ndarray:
    eye = np.eye(K.shape[-1])
    jitter = JITTER_START
    while jitter <= JITTER_MAX * (1 + 1e-9):
        try:
            return np.linalg.cholesky(K + jitter * sigma2 * eye)
        except np.linalg.LinAlgError:
            jitter *= 10.0
    raise FactorizationError("Matérn covariance not positive definite after maximal jitter")


def sample_gp_paths(grids: np.ndarray, spec: MaternSpec, rng: np.random.Generator) -> np.ndarray:
    """Independent GP draws, one per row of ``grids`` (shape ``(n, m)``)."""
    grids = np.atleast_2d(np.asarray(grids, dtype=float))
    if grids.size == 0:
        raise ValueError("empty grid")
    if spec.sigma2 == 0:
        return np.zeros_like(grids)
    K = matern_cov(grids[:, :, None], grids[:, None, :], spec)
    L = _cholesky_stack(K, spec.sigma2)
    z = rng.standard_normal(grids.shape)
    return np.einsum("nij,nj->ni", L, z)


def sample_gp(grid, spec: MaternSpec, rng: np.random.Generator) -> np.ndarray:
    """One draw of the GP at the points of ``grid``."""
    grid = np.asarray(grid, dtype=float).ravel()
    if grid.size == 0:
        raise ValueError("empty grid")
    return sample_gp_paths(grid[None, :], spec, rng)[0]


@dataclass(frozen=True)
class MeanDataset:
    """Per-subject grids ``x[i]`` and responses ``y[i]`` (ragged allowed)."""

    x: tuple
    y: tuple

    def __post_init__(self):
        if len(self.x) != len(self.y):
            raise ValueError("x and y must list the same number of subjects")
        for i, (xi, yi) in enumerate(zip(self.x, self.y)):
            if np.shape(xi) != np.shape(yi) or np.size(xi) < 1:
                raise ValueError(f"subject {i}: grid and responses must be equal-length, non-empty")

    @classmethod
    def from_arrays(cls, x, y) -> "MeanDataset":
        return cls(tuple(np.asarray(r, float) for r in x), tuple(np.asarray(r, float) for r in y))

    @property
    def n(self) -> int:
        return len(self.x)

    @property
    def sizes(self) -> np.ndarray:
        return np.array([len(xi) for xi in self.x])

    @property
    def m(self) -> int:
        """Common number of points per subject; the mean for ragged data."""
        sizes = self.sizes
        if np.all(sizes == sizes[0]):
            return int(sizes[0])
        return int(round(float(sizes.mean())))

    @property
    def n_obs(self) -> int:
        return int(self.sizes.sum())

    def subset(self, idx) -> "MeanDataset":
        idx = np.asarray(idx, dtype=int)
        return MeanDataset(tuple(self.x[i] for i in idx), tuple(self.y[i] for i in idx))

    def all_y(self) -> np.ndarray:
        return np.concatenate(self.y)


@dataclass(frozen=True)
class VcmDataset(MeanDataset):
    """Mean-data layout plus a covariate vector ``g[i]`` of length ``d+1`` per subject."""

    g: np.ndarray = None

    def __post_init__(self):
        super().__post_init__()
        g = np.atleast_2d(np.asarray(self.g, dtype=float))
        if g.shape[0] != len(self.x):
            raise ValueError("one covariate row per subject required")
        if not np.all(np.isfinite(g)):
            raise ValueError("covariates must be finite")
        object.__setattr__(self, "g", g)

    @property
    def d(self) -> int:
        return self.g.shape[1] - 1

    def subset(self, idx) -> "VcmDataset":
        idx = np.asarray(idx, dtype=int)
        return VcmDataset(
            tuple(self.x[i] for i in idx), tuple(self.y[i] for i in idx), self.g[idx]
        )


def _evaluate_target(target, x: np.ndarray) -> np.ndarray:
    if callable(target):
        return np.asarray(target(x), dtype=float) * np.ones_like(x)
    return np.asarray(eval_function(as_coeffs(target), x))


def gen_mean_dataset(
    target,
    n: int,
    m: int,
    noise_sd: float = DEFAULT_NOISE_SD,
    matern: MaternSpec | None = None,
    rng: np.random.Generator | None = None,
) -> MeanDataset:
    """Draw ``Y_ij = mu(X_ij) + U_i(X_ij) + xi_ij`` with uniform grids."""
    if n < 1 or m < 1:
        raise ValueError(f"n and m must be >= 1, got n={n}, m={m}")
    matern = matern if matern is not None else MaternSpec()
    rng = rng if rng is not None else np.random.default_rng()
    x = rng.uniform(0.0, 1.0, size=(n, m))
    u = sample_gp_paths(x, matern, rng)
    xi = rng.standard_normal((n, m)) * noise_sd
    y = _evaluate_target(target, x) + u + xi
    return MeanDataset(tuple(x), tuple(y))


def uniform_covariates(rng: np.random.Generator, size) -> np.ndarray:
    return rng.uniform(-1.0, 1.0, size=size)


def gen_vcm_dataset(
    beta_blocks: Sequence,
    d: int,
    n: int,
    m: int,
    noise_sd: float = DEFAULT_NOISE_SD,
    g_dist: Callable | None = None,
    rng: np.random.Generator | None = None,
) -> VcmDataset:
    """Draw ``Y_ij = G_i^T beta(X_ij) + xi_ij`` with intercept ``G_0 = 1``.

    ``beta_blocks`` lists ``d+1`` coefficient vectors or callables;
    ``g_dist(rng, size)`` draws the non-intercept covariates (default Uniform[-1, 1]).
    """
    if d < 0:
        raise ValueError(f"d must be >= 0, got {d}")
    if len(beta_blocks) != d + 1:
        raise ValueError(f"need d+1 = {d + 1} coefficient functions, got {len(beta_blocks)}")
    rng = rng if rng is not None else np.random.default_rng()
    g_dist = g_dist or uniform_covariates
    x = rng.uniform(0.0, 1.0, size=(n, m))
    g = np.ones((n, d + 1))
    if d > 0:
        g[:, 1:] = g_dist(rng, (n, d))
    beta_vals = np.stack([_evaluate_target(b, x) for b in beta_blocks], axis=-1)
    y = np.einsum("nmk,nk->nm", beta_vals, g) + rng.standard_normal((n, m)) * noise_sd
    return VcmDataset(tuple(x), tuple(y), g)


MU1_COEFFS = np.array([4 / 5, (3 / 5) / SQRT2, (2 / 3) / SQRT2])


def mu2(x):
    x = np.asarray(x, dtype=float)
    return 1 / 7 + 5 * x**2 / 7 - 10 * (0.5 - x) ** 3 / 7


def builtin_targets() -> dict:
    """``mu1`` as exact coefficients, ``mu2`` as a callable."""
    return {"mu1": MU1_COEFFS.copy(), "mu2": mu2}


def vcm_builtin_blocks(d: int) -> list:
    """Coefficient functions used by the VCM experiments: ``beta_k = mu1 / (k+1)``."""
    return [MU1_COEFFS / (k + 1) for k in range(d + 1)]


def default_c_alpha(alpha: float = DEFAULT_ALPHA, degree: int = 512) -> float:
    """Smallest radius constant (before rounding) admitting both built-in targets.

    Coefficients of ``mu2`` come from composite Gauss-Legendre quadrature,
    accurate to machine precision for this polynomial integrand.
    """
    xg, wg = np.polynomial.legendre.leggauss(24)
    panels = 2 * degree
    h = 1.0 / panels
    left = np.arange(panels) * h
    x = (left[:, None] + h * (xg[None, :] + 1.0) / 2.0).ravel()
    w = np.tile(wg * h / 2.0, panels)
    c2 = basis_matrix(x, degree).T @ (w * mu2(x))
    weights = np.arange(1, degree + 1, dtype=float) ** (2 * alpha)
    s1 = float(np.dot(weights[:3], MU1_COEFFS**2))
    s2 = float(np.dot(weights, c2 * c2))
    return math.sqrt(max(s1, s2)) * math.pi**alpha
