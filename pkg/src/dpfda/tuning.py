"""Tuning rules: basis size, iteration count and federated server weights."""

from __future__ import annotations

import math
from typing import Sequence


def default_T(n_total: int, c_t: float = 4.0) -> int:
    """``T = ceil(C_T log N)``."""
    return max(1, math.ceil(c_t * math.log(n_total)))


def _private_term(x: float, eps: float) -> float:
    return math.inf if math.isinf(eps) else x


def _ceil_r(c_r_mult: float, terms: Sequence[float]) -> int:
    return max(1, math.ceil(c_r_mult * min(terms)))


def mean_r_terms(S, n, m, epsilon, alpha) -> list:
    """The four candidate basis sizes for the (federated) mean problem."""
    e2 = epsilon * epsilon
    return [
        (S * n * m) ** (1 / (2 * alpha + 1)),
        _private_term((S * n * n * m * e2) ** (1 / (2 * alpha + 2)), epsilon),
        (S * n) ** (1 / (2 * alpha)),
        _private_term((S * n * n * e2) ** (1 / (2 * alpha)), epsilon),
    ]


def select_r_mean_cdp(n, m, epsilon, alpha, c_r_mult: float = 1.25) -> int:
    return _ceil_r(c_r_mult, mean_r_terms(1, n, m, epsilon, alpha))


def select_r_mean_fdp(S, n, m, epsilon, alpha, c_r_mult: float = 1.25) -> int:
    return _ceil_r(c_r_mult, mean_r_terms(S, n, m, epsilon, alpha))


def select_r_vcm_fdp(S, n, m, d, epsilon, alpha, c_r_mult: float = 1.25) -> int:
    # d = 0 (intercept only) is treated as d = 1 so the d-powers stay finite
    dd = max(d, 1)
    e2 = epsilon * epsilon
    terms = [
        (S * n * m) ** (1 / (2 * alpha + 1)),
        _private_term(dd ** (-1 / (2 * alpha + 2)) * (S * n * n * m * e2) ** (1 / (2 * alpha + 2)), epsilon),
        (S * n) ** (1 / (2 * alpha)),
        _private_term(dd ** (-1 / (2 * alpha)) * (S * n * n * e2) ** (1 / (2 * alpha)), epsilon),
    ]
    return _ceil_r(c_r_mult, terms)


def select_r_vcm_cdp(n, m, d, epsilon, alpha, c_r_mult: float = 1.25) -> int:
    return select_r_vcm_fdp(1, n, m, d, epsilon, alpha, c_r_mult)


def _normalise(u: list) -> list:
    total = math.fsum(u)
    return [x / total for x in u]


def _inv_eps2(eps: float) -> float:
    return 0.0 if math.isinf(eps) else 1.0 / (eps * eps)


def server_weights_mean(servers: Sequence, r: int, m: float) -> list:
    """Weights ``u_s / sum u`` with ``1/u_s = max(r/(n m), r^2/(n^2 m e^2), 1/n^2, 1/(n^2 e^2))``.

    ``servers`` need ``n`` and ``epsilon`` attributes.  The ``1/n_s^2`` branch is
    kept exactly as stated in the error bound.
    """
    if len(servers) == 0:
        raise ValueError("at least one server required")
    u = []
    for sv in servers:
        n, ie2 = float(sv.n), _inv_eps2(sv.epsilon)
        worst = max(r / (n * m), r * r * ie2 / (n * n * m), 1 / (n * n), ie2 / (n * n))
        u.append(1.0 / worst)
    return _normalise(u)


def server_weights_vcm(servers: Sequence, r: int, m: float, d: int) -> list:
    if len(servers) == 0:
        raise ValueError("at least one server required")
    dd = max(d, 1)
    u = []
    for sv in servers:
        n, ie2 = float(sv.n), _inv_eps2(sv.epsilon)
        worst = max(dd / n, dd * r / (n * m), dd * dd * ie2 / (n * n), dd * dd * r * r * ie2 / (n * n * m))
        u.append(1.0 / worst)
    return _normalise(u)
