"""Fourier basis on [0, 1], coefficient-space algebra and L2 metrics.

Basis indices are 1-based throughout the public API:

    phi_1(t) = 1
    phi_{2k}(t) = sqrt(2) cos(2 k pi t)
    phi_{2k+1}(t) = sqrt(2) sin(2 k pi t)

A function is represented by its leading ``r`` coefficients in this system,
stored as a plain 1-D float array (``CoeffVector``).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

CoeffVector = np.ndarray

SQRT2 = np.sqrt(2.0)
DEFAULT_QUAD_NODES = 2049


class InvalidIndexError(ValueError):
    """Raised for basis indices below 1."""


@dataclass(frozen=True)
class SobolevParams:
    """Smoothness exponent ``alpha`` and ellipsoid radius constant ``c_alpha``."""

    alpha: float
    c_alpha: float

    def __post_init__(self):
        if not self.alpha > 1:
            raise ValueError(f"alpha must exceed 1, got {self.alpha}")
        if not self.c_alpha > 0:
            raise ValueError(f"c_alpha must be positive, got {self.c_alpha}")


def as_coeffs(a) -> CoeffVector:
    """Validate and convert to a finite 1-D float array of length >= 1."""
    a = np.asarray(a, dtype=float)
    if a.ndim != 1 or a.size < 1:
        raise ValueError(f"coefficient vector must be 1-D and non-empty, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("coefficient vector has non-finite entries")
    return a


def eval_basis(ell: int, t):
    """Evaluate ``phi_ell`` at ``t`` (scalar or array)."""
    ell = int(ell)
    if ell < 1:
        raise InvalidIndexError(f"basis index must be >= 1, got {ell}")
    t = np.asarray(t, dtype=float)
    if ell == 1:
        out = np.ones_like(t)
    else:
        k = ell // 2
        arg = 2.0 * k * np.pi * t
        out = SQRT2 * (np.cos(arg) if ell % 2 == 0 else np.sin(arg))
    return out.item() if out.ndim == 0 else out


def basis_matrix(t, r: int) -> np.ndarray:
    """Return ``Phi_r(t)`` stacked along the last axis, shape ``t.shape + (r,)``."""
    if r < 1:
        raise InvalidIndexError(f"r must be >= 1, got {r}")
    t = np.asarray(t, dtype=float)
    out = np.empty(t.shape + (r,))
    out[..., 0] = 1.0
    for ell in range(2, r + 1):
        arg = 2.0 * (ell // 2) * np.pi * t
        out[..., ell - 1] = SQRT2 * (np.cos(arg) if ell % 2 == 0 else np.sin(arg))
    return out


def eval_function(a, t):
    """Evaluate ``sum_l a_l phi_l(t)``."""
    a = as_coeffs(a)
    vals = basis_matrix(t, a.size) @ a
    return vals.item() if np.ndim(vals) == 0 else vals


def _pad(a: np.ndarray, size: int) -> np.ndarray:
    out = np.zeros(size)
    out[: a.size] = a
    return out


def l2_distance(a, b) -> float:
    """L2 distance between the represented functions (orthonormality => Euclidean)."""
    a = as_coeffs(a)
    b = as_coeffs(b)
    size = max(a.size, b.size)
    return float(np.linalg.norm(_pad(a, size) - _pad(b, size)))


@dataclass(frozen=True)
class Quadrature:
    """Composite Simpson rule on an odd number of equispaced nodes in [0, 1]."""

    n_nodes: int = DEFAULT_QUAD_NODES
    nodes: np.ndarray = field(init=False, repr=False)
    weights: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        n = int(self.n_nodes)
        if n < 3 or n % 2 == 0:
            raise ValueError(f"Simpson quadrature needs an odd node count >= 3, got {n}")
        h = 1.0 / (n - 1)
        w = np.full(n, 2.0)
        w[1::2] = 4.0
        w[0] = w[-1] = 1.0
        w *= h / 3.0
        object.__setattr__(self, "nodes", np.linspace(0.0, 1.0, n))
        object.__setattr__(self, "weights", w)

    def integrate(self, values) -> float:
        return float(np.dot(self.weights, values))


def _tabulate(f, q: Quadrature) -> np.ndarray:
    if callable(f):
        return np.asarray(f(q.nodes), dtype=float) * np.ones_like(q.nodes)
    return eval_function(f, q.nodes)


def project_to_coeffs(f: Callable, r: int, q: Quadrature | None = None) -> CoeffVector:
    """Leading ``r`` Fourier coefficients ``<f, phi_l>`` by quadrature."""
    q = q or Quadrature()
    vals = _tabulate(f, q)
    return basis_matrix(q.nodes, r).T @ (q.weights * vals)


def quad_l2_distance(f, g, q: Quadrature | None = None) -> float:
    """L2 distance by quadrature; ``f``/``g`` are callables or coefficient vectors."""
    q = q or Quadrature()
    diff = _tabulate(f, q) - _tabulate(g, q)
    return float(np.sqrt(max(q.integrate(diff * diff), 0.0)))
