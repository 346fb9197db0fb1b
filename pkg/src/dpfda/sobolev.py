"""Projections onto Sobolev ellipsoids in Fourier coefficient space.

The feasible set for a length-``r`` coefficient vector is

    sum_l l^(2 alpha) a_l^2 <= c_alpha^2 / pi^(2 alpha).

``project_ellipsoid`` solves the Euclidean projection through its KKT form
``a_l = v_l / (1 + lam * l^(2 alpha))`` with ``lam`` found by bisection.
``project_vcm`` applies it block by block to a stacked varying-coefficient
parameter.  ``qp_oracle`` is an independent projected-gradient solver used to
cross-check the closed form.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from dpfda.basis import SobolevParams

FEAS_TOL = 1e-12
BISECT_MAX_ITER = 200


@dataclass(frozen=True)
class EllipsoidSpec:
    sobolev: SobolevParams
    r: int

    def __post_init__(self):
        if int(self.r) < 1:
            raise ValueError(f"r must be >= 1, got {self.r}")

    @property
    def weights(self) -> np.ndarray:
        ell = np.arange(1, self.r + 1, dtype=float)
        return ell ** (2.0 * self.sobolev.alpha)

    @property
    def radius2(self) -> float:
        return self.sobolev.c_alpha**2 / np.pi ** (2.0 * self.sobolev.alpha)


def _check(v, spec: EllipsoidSpec) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.shape != (spec.r,):
        raise ValueError(f"expected a vector of length {spec.r}, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError("cannot project a vector with non-finite entries")
    return v


def ellipsoid_norm2(a, spec: EllipsoidSpec) -> float:
    a = np.asarray(a, dtype=float)
    return float(np.dot(spec.weights, a * a))


def in_ellipsoid(a, spec: EllipsoidSpec) -> bool:
    a = _check(a, spec)
    return ellipsoid_norm2(a, spec) <= spec.radius2 + FEAS_TOL


def project_ellipsoid(v, spec: EllipsoidSpec) -> np.ndarray:
    """Euclidean projection of ``v`` onto the Sobolev ellipsoid of ``spec``."""
    v = _check(v, spec)
    if in_ellipsoid(v, spec):
        return v.copy()
    w = spec.weights
    rad2 = spec.radius2

    def shrink(lam):
        return v / (1.0 + lam * w)

    def residual(lam):
        a = shrink(lam)
        return float(np.dot(w, a * a)) - rad2

    # residual is strictly decreasing in lam; keep hi on the feasible side
    lo, hi = 0.0, 1.0
    while residual(hi) > 0.0:
        lo, hi = hi, 2.0 * hi
    for _ in range(BISECT_MAX_ITER):
        if -residual(hi) < FEAS_TOL or hi - lo <= 4 * np.finfo(float).eps * hi:
            break
        mid = 0.5 * (lo + hi)
        if residual(mid) > 0.0:
            lo = mid
        else:
            hi = mid
    return shrink(hi)


def project_vcm(B, spec: EllipsoidSpec, d: int) -> np.ndarray:
    """Blockwise projection of a stacked ``(b_0, ..., b_d)`` parameter.

    Only the per-block ellipsoid constraints are enforced.
    """
    B = np.asarray(B, dtype=float)
    if B.ndim != 1 or B.size != spec.r * (d + 1):
        raise ValueError(
            f"stacked parameter must have length r*(d+1) = {spec.r * (d + 1)}, got {B.size}"
        )
    blocks = B.reshape(d + 1, spec.r)
    return np.concatenate([project_ellipsoid(b, spec) for b in blocks])


def blockwise_feasible(B, spec: EllipsoidSpec, d: int) -> bool:
    blocks = np.asarray(B, dtype=float).reshape(d + 1, spec.r)
    return all(in_ellipsoid(b, spec) for b in blocks)


def qp_oracle(v, spec: EllipsoidSpec, tol: float = 1e-10, max_iter: int = 500_000) -> np.ndarray:
    """Projection by accelerated projected gradient in whitened coordinates.

    With ``z = diag(l^alpha) a`` the feasible set is a Euclidean ball, whose
    projection is a rescaling, so this never calls ``project_ellipsoid``.
    Runs FISTA with gradient restarts until the gradient-mapping norm drops
    below ``tol``.
    """
    v = _check(v, spec)
    dinv = 1.0 / np.sqrt(spec.weights)
    radius = np.sqrt(spec.radius2)

    def ball(z):
        nz = np.linalg.norm(z)
        return z if nz <= radius else z * (radius / nz)

    def grad(z):
        return 2.0 * dinv * (dinv * z - v)

    step = 1.0 / (2.0 * float(np.max(dinv**2)))
    z = ball(v / dinv)
    y = z.copy()
    t = 1.0
    for _ in range(max_iter):
        z_new = ball(y - step * grad(y))
        if np.linalg.norm(z_new - ball(z_new - step * grad(z_new))) / step < tol:
            z = z_new
            break
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        if np.dot(y - z_new, z_new - z) > 0.0:
            t_new = 1.0
            y = z_new.copy()
        else:
            y = z_new + ((t - 1.0) / t_new) * (z_new - z)
        z, t = z_new, t_new
    else:
        raise RuntimeError("qp_oracle did not reach the stationarity tolerance")
    return dinv * z
