"""Clipping, truncation radii and the anisotropic Gaussian mechanism.

The anisotropic mechanism adds independent Gaussian noise with per-coordinate
variance ``4 log(2/delta) * sens_l * ||sens||_1 / eps^2``.  All logarithms are
natural.

Every vector released through :func:`privatize` carries a provenance tag (an
HMAC over the payload and its noise variances under a process-local key).  The
federated auditor uses :func:`verify_provenance` to confirm a payload actually
came out of this module.
"""

from __future__ import annotations

import hashlib
import hmac
import math
import os
from dataclasses import dataclass, field

import numpy as np
from scipy import stats


class BudgetError(ValueError):
    """Raised when a privacy budget violates the mechanism's validity condition."""


@dataclass(frozen=True)
class PrivacyBudget:
    """An ``(epsilon, delta)`` pair.

    ``epsilon = inf`` is the noise-disabled sentinel; such runs are not private
    and are flagged wherever they are reported.
    """

    epsilon: float
    delta: float = 1e-3

    def __post_init__(self):
        eps, delta = float(self.epsilon), float(self.delta)
        if not eps > 0:
            raise BudgetError(f"epsilon must be positive, got {eps}")
        if not 0 < delta < 1:
            raise BudgetError(f"delta must lie in (0, 1), got {delta}")
        if math.isfinite(eps) and 4.0 * math.log(2.0 / delta) < eps:
            raise BudgetError(
                f"need 4*log(2/delta) >= epsilon; got 4*log(2/{delta}) = "
                f"{4.0 * math.log(2.0 / delta):.4g} < {eps}"
            )

    @classmethod
    def non_private(cls, delta: float = 1e-3) -> "PrivacyBudget":
        return cls(math.inf, delta)

    @property
    def is_private(self) -> bool:
        return math.isfinite(self.epsilon)


def entrywise_clip(v, radii) -> np.ndarray:
    """Scale each entry into ``[-R_l, R_l]``, preserving sign.

    Works on the last axis, so a stack of per-subject vectors is clipped row by row.
    """
    v = np.asarray(v, dtype=float)
    radii = np.asarray(radii, dtype=float)
    if v.shape[-1:] != radii.shape:
        raise ValueError(f"length mismatch: vector {v.shape}, radii {radii.shape}")
    return np.clip(v, -radii, radii)


def _check_radius_inputs(m, n, eta):
    if not 0 < eta < 1:
        raise ValueError(f"eta must lie in (0, 1), got {eta}")
    if m <= 0:
        raise ValueError(f"m must be positive, got {m}")
    if n <= eta:
        raise ValueError(f"log(n/eta) must be positive; got n={n}, eta={eta}")


def mean_truncation_radii(r: int, m: float, n: float, eta: float, c_r_const: float, alpha: float):
    """``R_l = C_R * (sqrt(log^2(n/eta) / m) + l^-alpha)`` for ``l = 1..r``."""
    _check_radius_inputs(m, n, eta)
    ell = np.arange(1, r + 1, dtype=float)
    return c_r_const * (math.sqrt(math.log(n / eta) ** 2 / m) + ell ** (-alpha))


def vcm_truncation_radii(
    r: int, d: int, m: float, n: float, eta: float, c_r_const: float, alpha: float
):
    """Radii for the stacked VCM parameter; the decay index restarts in each block.

    Note the first term uses ``log(n/eta)`` (not squared), as for the VCM algorithms.
    """
    _check_radius_inputs(m, n, eta)
    h = np.arange(1, r * (d + 1) + 1)
    within = h - r * (np.ceil(h / r).astype(int) - 1)
    return c_r_const * (math.sqrt(math.log(n / eta) / m) + within.astype(float) ** (-alpha))


def calibrated_variances(sens, budget: PrivacyBudget) -> np.ndarray:
    """Anisotropic variances ``4 log(2/delta) sens_l ||sens||_1 / eps^2``."""
    sens = np.abs(np.asarray(sens, dtype=float))
    if not budget.is_private:
        return np.zeros_like(sens)
    return 4.0 * math.log(2.0 / budget.delta) * sens * sens.sum() / budget.epsilon**2


def isotropic_variances(sens, budget: PrivacyBudget) -> np.ndarray:
    """Equal-variance comparison baseline: ``4 log(2/delta) ||sens||_2^2 / eps^2`` per entry."""
    sens = np.asarray(sens, dtype=float)
    if not budget.is_private:
        return np.zeros_like(sens)
    var = 4.0 * math.log(2.0 / budget.delta) * float(np.dot(sens, sens)) / budget.epsilon**2
    return np.full(sens.shape, var)


def noise_scales_for_batch(radii, b: int, budget: PrivacyBudget) -> np.ndarray:
    """``sigma_l^2 = 16 log(2/delta) R_l sum_k R_k / (b^2 eps^2)``.

    Identical to :func:`calibrated_variances` with ``sens = 2 R / b``, the per-coordinate
    sensitivity of a batch mean of clipped per-subject vectors.
    """
    if b < 1:
        raise ValueError(f"batch size must be >= 1, got {b}")
    radii = np.asarray(radii, dtype=float)
    if not budget.is_private:
        return np.zeros_like(radii)
    return 16.0 * math.log(2.0 / budget.delta) * radii * radii.sum() / (b**2 * budget.epsilon**2)


def anisotropic_gaussian(value, sens, budget: PrivacyBudget, rng: np.random.Generator):
    """Release ``value + N(0, diag(calibrated_variances(sens)))``.

    ``value`` may carry leading batch axes; noise is drawn independently for
    every row.
    """
    sens = np.asarray(sens, dtype=float)
    if not np.all(np.isfinite(sens)):
        raise ValueError("sensitivity must be finite")
    value = np.asarray(value, dtype=float)
    sd = np.sqrt(calibrated_variances(sens, budget))
    return value + rng.standard_normal(value.shape) * sd


@dataclass(frozen=True)
class TailReport:
    tail_prob: float
    delta: float
    loss_variance: float
    passes: bool


def privacy_loss_tail(sens, budget: PrivacyBudget, variances=None) -> TailReport:
    """Exact tail ``P(|W| >= eps)`` of the Gaussian privacy-loss variable.

    For noise variances ``sigma^2`` and sensitivity ``sens`` the loss is
    ``W ~ N(s/2, s)`` with ``s = sum sens_l^2 / sigma_l^2``.  When ``variances``
    is omitted the calibrated ones are used.
    """
    sens = np.asarray(sens, dtype=float)
    if not np.any(sens != 0):
        raise ValueError("sensitivity vector is identically zero")
    if not budget.is_private:
        return TailReport(1.0, budget.delta, math.inf, False)
    var = calibrated_variances(sens, budget) if variances is None else np.asarray(variances, float)
    mask = sens != 0
    if np.any(var[mask] <= 0):
        return TailReport(1.0, budget.delta, math.inf, False)
    s = float(np.sum(sens[mask] ** 2 / var[mask]))
    sd = math.sqrt(s)
    eps = budget.epsilon
    tail = stats.norm.sf((eps - 0.5 * s) / sd) + stats.norm.cdf((-eps - 0.5 * s) / sd)
    return TailReport(float(tail), budget.delta, s, bool(tail <= budget.delta))


# -- provenance ---------------------------------------------------------------

_PROVENANCE_KEY = os.urandom(32)


def _tag(payload: np.ndarray, variances: np.ndarray) -> str:
    msg = np.ascontiguousarray(payload, dtype=float).tobytes()
    msg += b"|" + np.ascontiguousarray(variances, dtype=float).tobytes()
    return hmac.new(_PROVENANCE_KEY, msg, hashlib.sha256).hexdigest()


@dataclass(frozen=True)
class PrivatizedVector:
    """A released vector with the noise variances used and its provenance tag.

    ``bound`` is the entrywise bound the pre-noise value was clipped to, if any.
    """

    payload: np.ndarray
    variances: np.ndarray
    tag: str
    private: bool
    bound: np.ndarray | None = field(default=None)


def privatize(
    value, variances, rng: np.random.Generator, *, private: bool = True, bound=None
) -> PrivatizedVector:
    """Add ``N(0, diag(variances))`` to ``value`` and stamp the result."""
    value = np.asarray(value, dtype=float)
    variances = np.asarray(variances, dtype=float)
    if value.shape != variances.shape:
        raise ValueError(f"shape mismatch: value {value.shape}, variances {variances.shape}")
    if np.any(variances < 0):
        raise ValueError("noise variances must be non-negative")
    payload = value + rng.standard_normal(value.shape) * np.sqrt(variances)
    payload.flags.writeable = False
    variances = variances.copy()
    variances.flags.writeable = False
    if bound is not None:
        bound = np.array(bound, dtype=float)
        bound.flags.writeable = False
    return PrivatizedVector(payload, variances, _tag(payload, variances), private, bound)


def verify_provenance(payload, variances, tag: str) -> bool:
    return hmac.compare_digest(_tag(np.asarray(payload), np.asarray(variances)), tag)


def scale_digest(variances) -> str:
    """Short stable digest of a noise-variance vector, for transcript logs."""
    data = np.ascontiguousarray(variances, dtype=float).tobytes()
    return hashlib.sha256(data).hexdigest()[:16]
