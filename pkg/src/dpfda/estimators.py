"""Private noisy mini-batch gradient descent for functional means and VCMs.

Four procedures share one round body: a server takes its next disjoint batch,
averages the entrywise-clipped per-subject least-squares gradients, and
releases the result through the anisotropic Gaussian mechanism.

* :func:`dp_mean_cdp` / :func:`dp_vcm_cdp`: a single trusted curator.
* :func:`dp_mean_fdp` / :func:`dp_vcm_fdp`: ``S`` servers, run through
  :mod:`dpfda.fednet`; the coordinator takes a weighted step on the released
  messages and projects back onto the Sobolev ellipsoid.

Noise for server ``s`` in round ``t`` is drawn from a generator seeded by
``(seed, s, t)``, so a one-server federated run reproduces the central run
bit for bit.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from dpfda import fednet
from dpfda.basis import as_coeffs, basis_matrix, l2_distance, quad_l2_distance
from dpfda.privacy import (
    PrivacyBudget,
    entrywise_clip,
    mean_truncation_radii,
    noise_scales_for_batch,
    privatize,
    vcm_truncation_radii,
)
from dpfda.sobolev import EllipsoidSpec, blockwise_feasible, in_ellipsoid, project_ellipsoid, project_vcm
from dpfda.synth import MeanDataset, VcmDataset
from dpfda.tuning import server_weights_mean, server_weights_vcm

log = logging.getLogger(__name__)

GRAM_COND_MAX = 1e12


class SingularGramError(np.linalg.LinAlgError):
    def __init__(self, cond: float):
        super().__init__(f"design Gram matrix is numerically singular (condition number {cond:.3g})")
        self.cond = cond


@dataclass(frozen=True)
class GdConfig:
    r: int
    rho: float = 0.1
    T: int = 10
    c_r_const: float = 0.75
    eta: float = 0.05
    seed: int = 0
    noise_enabled: bool = True

    def __post_init__(self):
        if self.r < 1 or self.T < 1:
            raise ValueError(f"r and T must be >= 1, got r={self.r}, T={self.T}")
        if not self.rho > 0:
            raise ValueError(f"step size must be positive, got {self.rho}")
        if not 0 < self.eta < 1:
            raise ValueError(f"eta must lie in (0, 1), got {self.eta}")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")
        if self.rho >= 1:
            # guarantees need rho < 1/L with L > 1; L is a property of the design
            log.warning("step size rho=%g >= 1 exceeds every admissible 1/L", self.rho)


@dataclass(frozen=True)
class ServerSpec:
    data: MeanDataset
    budget: PrivacyBudget

    @property
    def n(self) -> int:
        return self.data.n

    @property
    def epsilon(self) -> float:
        return self.budget.epsilon


@dataclass(frozen=True)
class RoundDiagnostics:
    grad_norm: float
    noise_norm: float
    feasible: bool


@dataclass(frozen=True)
class BatchRecord:
    server: int
    round: int
    start: int
    stop: int

    @property
    def indices(self) -> range:
        return range(self.start, self.stop)


@dataclass
class EstimationReport:
    coeffs: np.ndarray
    diagnostics: list
    iterates: list
    batches: list
    tuning: dict
    private: bool
    budget_condition_ok: bool
    unused_subjects: list
    weights: list = field(default_factory=lambda: [1.0])
    l2_error: float | None = None
    protocol: fednet.ProtocolRun | None = None

    @property
    def blocks(self) -> np.ndarray:
        """Coefficients reshaped to ``(d+1, r)`` (a single row for mean problems)."""
        return self.coeffs.reshape(-1, self.tuning["r"])


# -- gradients ----------------------------------------------------------------


def _stack(xs, ys):
    sizes = {len(x) for x in xs}
    if len(sizes) == 1:
        return np.stack(xs), np.stack(ys)
    return None


def per_subject_mean_gradients(batch: MeanDataset, a) -> np.ndarray:
    """Rows ``(1/m) sum_j Phi(X_j) (Phi(X_j)^T a - Y_j)``, one per subject."""
    a = np.asarray(a, dtype=float)
    r = a.size
    stacked = _stack(batch.x, batch.y)
    if stacked is not None:
        X, Y = stacked
        phi = basis_matrix(X, r)
        resid = phi @ a - Y
        return np.einsum("bmr,bm->br", phi, resid) / X.shape[1]
    rows = []
    for x, y in zip(batch.x, batch.y):
        phi = basis_matrix(x, r)
        rows.append(phi.T @ (phi @ a - y) / len(x))
    return np.array(rows)


def _vcm_design(x, g, r):
    # kron(G, Phi_r(X)) for every point: block k holds G_k * Phi_r(X)
    phi = basis_matrix(x, r)
    z = g[..., None, :, None] * phi[..., :, None, :]
    return z.reshape(z.shape[:-2] + (-1,))


def per_subject_vcm_gradients(batch: VcmDataset, B, r: int, d: int) -> np.ndarray:
    B = np.asarray(B, dtype=float)
    if B.size != r * (d + 1) or batch.g.shape[1] != d + 1:
        raise ValueError(f"dimension mismatch: len(B)={B.size}, r={r}, d={d}, G has {batch.g.shape[1]} columns")
    stacked = _stack(batch.x, batch.y)
    if stacked is not None:
        X, Y = stacked
        Z = _vcm_design(X, batch.g, r)
        resid = Z @ B - Y
        return np.einsum("bmk,bm->bk", Z, resid) / X.shape[1]
    rows = []
    for x, y, g in zip(batch.x, batch.y, batch.g):
        Z = _vcm_design(x, g, r)
        rows.append(Z.T @ (Z @ B - y) / len(x))
    return np.array(rows)


def _clipped_mean(rows: np.ndarray, R) -> np.ndarray:
    if rows.shape[0] == 0:
        raise ValueError("empty batch")
    return entrywise_clip(rows, R).mean(axis=0)


def compute_clipped_mean_gradient(batch: MeanDataset, a, R) -> np.ndarray:
    """Batch average of entrywise-clipped per-subject gradients."""
    a = np.asarray(a, dtype=float)
    if a.shape != np.shape(R):
        raise ValueError("coefficient vector and radii differ in length")
    if batch.n == 0:
        raise ValueError("empty batch")
    return _clipped_mean(per_subject_mean_gradients(batch, a), R)


def compute_clipped_vcm_gradient(batch: VcmDataset, B, R, r: int, d: int) -> np.ndarray:
    if np.size(R) != r * (d + 1):
        raise ValueError("radii length must be r*(d+1)")
    if batch.n == 0:
        raise ValueError("empty batch")
    return _clipped_mean(per_subject_vcm_gradients(batch, B, r, d), R)


# -- shared round machinery -----------------------------------------------------


@dataclass(frozen=True)
class _Local:
    """Everything one server needs; never leaves the server."""

    server: int
    data: MeanDataset
    b: int
    variances: np.ndarray
    private: bool


def _make_round_fn(grad_fn: Callable, R: np.ndarray, trace: dict) -> fednet.RoundFn:
    def round_fn(t, param, local: _Local, rng):
        start, stop = t * local.b, (t + 1) * local.b
        grad = grad_fn(local.data.subset(np.arange(start, stop)), param, R)
        msg = privatize(grad, local.variances, rng, private=local.private, bound=R)
        trace.setdefault(t, []).append(
            (BatchRecord(local.server, t, start, stop), float(np.linalg.norm(grad)),
             float(np.linalg.norm(msg.payload - grad)))
        )
        return msg

    return round_fn


def _check_batches(locals_: Sequence[_Local], T: int):
    for loc in locals_:
        if loc.data.n < T:
            raise ValueError(
                f"server {loc.server}: n={loc.data.n} < T={T} leaves an empty batch (b = floor(n/T) = 0)"
            )


def _truth_error(coeffs: np.ndarray, truth, r: int) -> float | None:
    if truth is None:
        return None
    if callable(truth):
        return quad_l2_distance(coeffs, truth)
    truth = np.asarray(truth, dtype=float)
    if truth.ndim == 2 and coeffs.size % r == 0:
        return math.sqrt(sum(l2_distance(c, t) ** 2 for c, t in zip(coeffs.reshape(-1, r), truth)))
    return l2_distance(coeffs, truth)


def _run(
    locals_: Sequence[_Local],
    grad_fn: Callable,
    project: Callable,
    feasible: Callable,
    weights: Sequence[float],
    R: np.ndarray,
    cfg: GdConfig,
    dim: int,
    tuning: dict,
    truth,
    run_id: str,
    budget_ok: bool,
    federated: bool,
) -> EstimationReport:
    _check_batches(locals_, cfg.T)
    trace: dict = {}
    round_fn = _make_round_fn(grad_fn, R, trace)
    init = np.zeros(dim)
    if federated:
        aggregate = fednet.weighted_step(cfg.rho, weights, project)
        proto = fednet.run_protocol(locals_, round_fn, aggregate, cfg.T, init, cfg.seed, run_id)
        iterates = [np.array(p) for p in proto.iterates]
    else:
        # central curator: same round body, direct update
        (loc,) = locals_
        proto = None
        param = init
        iterates = [param]
        for t in range(cfg.T):
            msg = round_fn(t, param, loc, fednet.noise_stream(cfg.seed, 0, t))
            param = project(param - cfg.rho * msg.payload)
            iterates.append(param)

    diagnostics, batches = [], []
    for t in range(cfg.T):
        entries = trace[t]
        batches.extend(e[0] for e in entries)
        diagnostics.append(
            RoundDiagnostics(
                grad_norm=float(np.sqrt(sum(e[1] ** 2 for e in entries))),
                noise_norm=float(np.sqrt(sum(e[2] ** 2 for e in entries))),
                feasible=feasible(iterates[t + 1]),
            )
        )
    coeffs = np.array(iterates[-1])
    tuning = dict(tuning, T=cfg.T, rho=cfg.rho, b=[loc.b for loc in locals_], weights=list(weights))
    return EstimationReport(
        coeffs=coeffs,
        diagnostics=diagnostics,
        iterates=iterates,
        batches=batches,
        tuning=tuning,
        private=all(loc.private for loc in locals_),
        budget_condition_ok=budget_ok,
        unused_subjects=[loc.data.n - cfg.T * loc.b for loc in locals_],
        weights=list(weights),
        l2_error=_truth_error(coeffs, truth, tuning["r"]),
        protocol=proto,
    )


def _local(server: int, data, budget: PrivacyBudget, R, cfg: GdConfig) -> _Local:
    b = data.n // cfg.T
    private = cfg.noise_enabled and budget.is_private
    if private and b >= 1:
        variances = noise_scales_for_batch(R, b, budget)
    else:
        variances = np.zeros_like(R)
    return _Local(server, data, b, variances, private)


def _budget_ok(budgets) -> bool:
    return all(
        (not bd.is_private) or 4 * math.log(2 / bd.delta) >= bd.epsilon for bd in budgets
    )


def _mean_grad(batch, a, R):
    return compute_clipped_mean_gradient(batch, a, R)


def dp_mean_cdp(
    data: MeanDataset, cfg: GdConfig, budget: PrivacyBudget, spec: EllipsoidSpec, truth=None
) -> EstimationReport:
    """Centrally private functional mean estimate (one pass over disjoint batches)."""
    if spec.r != cfg.r:
        raise ValueError("ellipsoid and config disagree on r")
    if data.n < cfg.T:
        raise ValueError(f"n={data.n} < T={cfg.T}: batch size floor(n/T) would be 0")
    R = mean_truncation_radii(cfg.r, data.m, data.n, cfg.eta, cfg.c_r_const, spec.sobolev.alpha)
    loc = _local(0, data, budget, R, cfg)
    return _run(
        [loc], _mean_grad, lambda v: project_ellipsoid(v, spec), lambda v: in_ellipsoid(v, spec),
        [1.0], R, cfg, cfg.r, {"r": cfg.r, "radii": R.tolist()}, truth, "mean-cdp",
        _budget_ok([budget]), federated=False,
    )


def dp_mean_fdp(
    servers: Sequence[ServerSpec], cfg: GdConfig, spec: EllipsoidSpec, truth=None, run_id: str = "mean-fdp"
) -> EstimationReport:
    """Federated private functional mean estimate over ``S`` servers."""
    if spec.r != cfg.r:
        raise ValueError("ellipsoid and config disagree on r")
    if len(servers) == 0:
        raise ValueError("at least one server required")
    N = sum(sv.n for sv in servers)
    m = _pooled_m(servers)
    R = mean_truncation_radii(cfg.r, m, N, cfg.eta, cfg.c_r_const, spec.sobolev.alpha)
    weights = server_weights_mean(servers, cfg.r, m)
    locals_ = [_local(s, sv.data, sv.budget, R, cfg) for s, sv in enumerate(servers)]
    return _run(
        locals_, _mean_grad, lambda v: project_ellipsoid(v, spec), lambda v: in_ellipsoid(v, spec),
        weights, R, cfg, cfg.r, {"r": cfg.r, "radii": R.tolist()}, truth, run_id,
        _budget_ok([sv.budget for sv in servers]), federated=True,
    )


def _pooled_m(servers) -> int:
    sizes = np.concatenate([sv.data.sizes for sv in servers])
    if np.all(sizes == sizes[0]):
        return int(sizes[0])
    return int(round(float(sizes.mean())))


def _vcm_parts(cfg: GdConfig, spec: EllipsoidSpec, d: int):
    r = cfg.r

    def grad(batch, B, R):
        return compute_clipped_vcm_gradient(batch, B, R, r, d)

    return grad, (lambda v: project_vcm(v, spec, d)), (lambda v: blockwise_feasible(v, spec, d))


def dp_vcm_cdp(
    data: VcmDataset, cfg: GdConfig, budget: PrivacyBudget, spec: EllipsoidSpec, truth=None
) -> EstimationReport:
    """Centrally private VCM coefficient estimate; ``coeffs`` stacks ``b_0..b_d``."""
    if spec.r != cfg.r:
        raise ValueError("ellipsoid and config disagree on r")
    if data.n < cfg.T:
        raise ValueError(f"n={data.n} < T={cfg.T}: batch size floor(n/T) would be 0")
    d = data.d
    R = vcm_truncation_radii(cfg.r, d, data.m, data.n, cfg.eta, cfg.c_r_const, spec.sobolev.alpha)
    grad, project, feasible = _vcm_parts(cfg, spec, d)
    loc = _local(0, data, budget, R, cfg)
    return _run(
        [loc], grad, project, feasible, [1.0], R, cfg, cfg.r * (d + 1),
        {"r": cfg.r, "d": d, "radii": R.tolist()}, truth, "vcm-cdp", _budget_ok([budget]), federated=False,
    )


def dp_vcm_fdp(
    servers: Sequence[ServerSpec], cfg: GdConfig, spec: EllipsoidSpec, truth=None, run_id: str = "vcm-fdp"
) -> EstimationReport:
    if spec.r != cfg.r:
        raise ValueError("ellipsoid and config disagree on r")
    if len(servers) == 0:
        raise ValueError("at least one server required")
    ds = {sv.data.d for sv in servers}
    if len(ds) != 1:
        raise ValueError(f"servers disagree on covariate dimension: {sorted(ds)}")
    (d,) = ds
    N = sum(sv.n for sv in servers)
    m = _pooled_m(servers)
    R = vcm_truncation_radii(cfg.r, d, m, N, cfg.eta, cfg.c_r_const, spec.sobolev.alpha)
    weights = server_weights_vcm(servers, cfg.r, m, d)
    grad, project, feasible = _vcm_parts(cfg, spec, d)
    locals_ = [_local(s, sv.data, sv.budget, R, cfg) for s, sv in enumerate(servers)]
    return _run(
        locals_, grad, project, feasible, weights, R, cfg, cfg.r * (d + 1),
        {"r": cfg.r, "d": d, "radii": R.tolist()}, truth, run_id,
        _budget_ok([sv.budget for sv in servers]), federated=True,
    )


# -- non-private references -------------------------------------------------------


def _solve_normal(design: np.ndarray, y: np.ndarray) -> np.ndarray:
    gram = design.T @ design / design.shape[0]
    cond = np.linalg.cond(gram)
    if not np.isfinite(cond) or cond > GRAM_COND_MAX:
        raise SingularGramError(float(cond))
    return np.linalg.solve(gram, design.T @ y / design.shape[0])


def nonprivate_ls(data: MeanDataset, r: int) -> np.ndarray:
    """Pooled least-squares Fourier coefficients (every observation weighted equally)."""
    x = np.concatenate(data.x)
    return _solve_normal(basis_matrix(x, r), data.all_y())


def nonprivate_vcm_ls(data: VcmDataset, r: int) -> np.ndarray:
    rows = [_vcm_design(x, g, r) for x, g in zip(data.x, data.g)]
    return _solve_normal(np.concatenate(rows), data.all_y())


def nonprivate_gd(data: MeanDataset, r: int, rho: float, T: int) -> np.ndarray:
    """Ordinary full-batch gradient descent from zero on the pooled objective."""
    x = np.concatenate(data.x)
    y = data.all_y()
    phi = basis_matrix(x, r)
    a = np.zeros(r)
    for _ in range(T):
        a = a - rho * phi.T @ (phi @ a - y) / y.size
    return a


def as_truth_blocks(blocks, r: int) -> np.ndarray:
    """Pad/truncate coefficient blocks to a ``(d+1, r)`` array."""
    out = np.zeros((len(blocks), r))
    for k, b in enumerate(blocks):
        b = as_coeffs(b)[:r]
        out[k, : b.size] = b
    return out
