"""Longitudinal CSV ingestion and the private-vs-non-private real-data comparison.

CSV schema: a header row ``subject_id,x,y`` optionally followed by covariate
columns ``g_1..g_d``.  Rows are grouped by ``subject_id`` in order of first
appearance.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from dpfda.basis import SobolevParams, eval_function
from dpfda.estimators import GdConfig, dp_mean_cdp, nonprivate_gd
from dpfda.privacy import PrivacyBudget
from dpfda.sobolev import EllipsoidSpec
from dpfda.synth import DEFAULT_C_ALPHA, MeanDataset, VcmDataset
from dpfda.tuning import default_T

REQUIRED_COLUMNS = ("subject_id", "x", "y")
BAND_GRID = 101
REAL_EPS_GRID = (0.5, 1.0, 2.0, 4.0, 8.0)


class CsvFormatError(ValueError):
    pass


@dataclass(frozen=True)
class AffineMap:
    """``normalized = (raw - lo) / (hi - lo)``."""

    lo: float
    hi: float

    def forward(self, v):
        return (np.asarray(v, dtype=float) - self.lo) / (self.hi - self.lo)

    def inverse(self, v):
        return np.asarray(v, dtype=float) * (self.hi - self.lo) + self.lo


@dataclass
class IngestResult:
    data: MeanDataset
    subject_ids: list
    x_map: AffineMap | None = None
    y_map: AffineMap | None = None
    covariate_names: list = field(default_factory=list)


def _minmax(values: np.ndarray, name: str) -> AffineMap:
    lo, hi = float(values.min()), float(values.max())
    if not hi > lo:
        raise CsvFormatError(f"column {name!r} has zero range ({lo}); cannot min-max normalize")
    return AffineMap(lo, hi)


def ingest_csv(path, normalize: bool = False) -> IngestResult:
    """Read a longitudinal CSV into a dataset, optionally min-max normalizing x and y."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise CsvFormatError(f"{path}: empty file (header required)") from None
        if tuple(header[:3]) != REQUIRED_COLUMNS:
            raise CsvFormatError(f"{path}:1: header must start with {','.join(REQUIRED_COLUMNS)}, got {header}")
        gcols = header[3:]
        for k, name in enumerate(gcols, 1):
            if name != f"g_{k}":
                raise CsvFormatError(f"{path}:1: covariate column {k} must be named g_{k}, got {name!r}")
        order, xs, ys, gs = [], {}, {}, {}
        for lineno, row in enumerate(reader, 2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise CsvFormatError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            sid = row[0].strip()
            if not sid:
                raise CsvFormatError(f"{path}:{lineno}: empty subject_id")
            try:
                vals = [float(c) for c in row[1:]]
            except ValueError as exc:
                raise CsvFormatError(f"{path}:{lineno}: non-numeric value ({exc})") from None
            if not all(math.isfinite(v) for v in vals):
                raise CsvFormatError(f"{path}:{lineno}: non-finite value")
            if sid not in xs:
                order.append(sid)
                xs[sid], ys[sid], gs[sid] = [], [], vals[2:]
            elif gcols and vals[2:] != gs[sid]:
                raise CsvFormatError(f"{path}:{lineno}: covariates of subject {sid!r} vary across rows")
            xs[sid].append(vals[0])
            ys[sid].append(vals[1])
    if not order:
        raise CsvFormatError(f"{path}: no data rows; every subject needs at least one row")
    x = [np.array(xs[s]) for s in order]
    y = [np.array(ys[s]) for s in order]
    x_map = y_map = None
    if normalize:
        x_map = _minmax(np.concatenate(x), "x")
        y_map = _minmax(np.concatenate(y), "y")
        x = [x_map.forward(v) for v in x]
        y = [y_map.forward(v) for v in y]
    if gcols:
        g = np.column_stack([np.ones(len(order)), np.array([gs[s] for s in order])])
        data = VcmDataset(tuple(x), tuple(y), g)
    else:
        data = MeanDataset(tuple(x), tuple(y))
    return IngestResult(data, order, x_map, y_map, gcols)


def export_csv(data: MeanDataset, path, subject_ids=None) -> Path:
    """Write a dataset in the ingestion schema; floats use shortest round-trip repr."""
    path = Path(path)
    ids = subject_ids or [str(i) for i in range(data.n)]
    g = getattr(data, "g", None)
    d = 0 if g is None else g.shape[1] - 1
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(REQUIRED_COLUMNS) + [f"g_{k}" for k in range(1, d + 1)])
        for i, (xi, yi) in enumerate(zip(data.x, data.y)):
            extra = [] if g is None else [repr(float(v)) for v in g[i, 1:]]
            for a, b in zip(xi, yi):
                w.writerow([ids[i], repr(float(a)), repr(float(b))] + extra)
    return path


# -- Fourier extension ---------------------------------------------------------------


def reflect_extension(data: MeanDataset) -> MeanDataset:
    """Map a [0, 1] design onto a periodic one by even reflection.

    Each point ``x`` is placed at ``x/2`` and mirrored to ``1 - x/2`` with the same
    response, so the fitted period-1 series is continuous across the ends.  A
    subject keeps all of its points together, so per-subject privacy is
    unchanged.
    """
    x = tuple(np.concatenate([xi / 2.0, 1.0 - xi / 2.0]) for xi in data.x)
    y = tuple(np.concatenate([yi, yi]) for yi in data.y)
    return MeanDataset(x, y)


def eval_extended(coeffs, x) -> np.ndarray:
    """Evaluate a reflection-fitted series at original-domain points ``x`` in [0, 1]."""
    return eval_function(coeffs, np.asarray(x, dtype=float) / 2.0)


def _grid_l2(f_vals: np.ndarray, g_vals: np.ndarray, grid: np.ndarray) -> float:
    diff2 = (f_vals - g_vals) ** 2
    return math.sqrt(float(np.trapezoid(diff2, grid)))


@dataclass(frozen=True)
class RealDataConfig:
    r: int = 3
    c_r_const: float = 0.008
    c_t: float = 4.0
    rho: float = 0.01
    eta: float = 0.05
    delta: float = 1e-3
    alpha: float = 3.0
    c_alpha: float = DEFAULT_C_ALPHA
    extension: bool = True
    noise_enabled: bool = True


@dataclass
class RealDataResult:
    eps: list
    dist_mean: list
    dist_se: list
    grid: np.ndarray
    band_mean: dict
    band_lo: dict
    band_hi: dict
    nonprivate_full: np.ndarray
    n_train: int
    n_test: int


def _fit_private(data, eps, cfg: RealDataConfig, seed: int, T: int | None = None):
    prepared = reflect_extension(data) if cfg.extension else data
    T = T or default_T(prepared.n, cfg.c_t)
    budget = PrivacyBudget(eps, cfg.delta)
    gd = GdConfig(
        r=cfg.r, rho=cfg.rho, T=T, c_r_const=cfg.c_r_const, eta=cfg.eta, seed=seed,
        noise_enabled=cfg.noise_enabled and budget.is_private,
    )
    spec = EllipsoidSpec(SobolevParams(cfg.alpha, cfg.c_alpha), cfg.r)
    return dp_mean_cdp(prepared, gd, budget, spec).coeffs


def _fit_nonprivate(data, cfg: RealDataConfig, T: int | None = None):
    prepared = reflect_extension(data) if cfg.extension else data
    return nonprivate_gd(prepared, cfg.r, cfg.rho, T or default_T(prepared.n, cfg.c_t))


def _evaluate(coeffs, grid, cfg: RealDataConfig):
    return eval_extended(coeffs, grid) if cfg.extension else eval_function(coeffs, grid)


def real_data_pipeline(
    data: MeanDataset,
    split_fraction: float = 1 / 3,
    epsilons=REAL_EPS_GRID,
    replicates: int = 100,
    cfg: RealDataConfig | None = None,
    seed: int = 0,
    band_level: float = 0.9,
) -> RealDataResult:
    """Compare private fits on a test split against a non-private fit on the train split.

    Per replicate the subjects are split at random (``floor(n * split_fraction)``
    for training), a non-private gradient-descent fit is made on the training
    part and a private fit on the rest.  The L2 distance between the two is
    summarized per epsilon; both fits use the iteration count of the test
    split so they differ only through data and privacy noise.  Separately, the private estimator is rerun on the
    full data ``replicates`` times to form pointwise mean and
    ``band_level`` bands on a 101-point grid.
    """
    cfg = cfg or RealDataConfig()
    if data.n < 3:
        raise ValueError(f"need at least 3 subjects, got {data.n}")
    if not 0 < split_fraction < 1:
        raise ValueError("split_fraction must lie in (0, 1)")
    n_train = int(math.floor(data.n * split_fraction))
    if n_train < 1 or n_train >= data.n:
        raise ValueError(f"split leaves an empty part (n={data.n}, n_train={n_train})")
    grid = np.linspace(0.0, 1.0, BAND_GRID)
    eps_list = [float(e) for e in epsilons]
    # both fits of a replicate run the same number of steps, set by the test split
    T_split = default_T(data.n - n_train, cfg.c_t)

    dists = {e: [] for e in eps_list}
    for rep in range(replicates):
        rng = np.random.default_rng([seed, 0, rep])
        perm = rng.permutation(data.n)
        train, test = data.subset(perm[:n_train]), data.subset(perm[n_train:])
        ref = _evaluate(_fit_nonprivate(train, cfg, T_split), grid, cfg)
        for k, e in enumerate(eps_list):
            noise_seed = int(np.random.default_rng([seed, 1, rep, k]).integers(2**62))
            est = _evaluate(_fit_private(test, e, cfg, noise_seed, T_split), grid, cfg)
            dists[e].append(_grid_l2(est, ref, grid))

    lo_q, hi_q = (1 - band_level) / 2, 1 - (1 - band_level) / 2
    band_mean, band_lo, band_hi = {}, {}, {}
    for k, e in enumerate(eps_list):
        curves = np.array([
            _evaluate(_fit_private(data, e, cfg, int(np.random.default_rng([seed, 2, rep, k]).integers(2**62))), grid, cfg)
            for rep in range(replicates)
        ])
        band_mean[e] = curves.mean(axis=0)
        band_lo[e] = np.quantile(curves, lo_q, axis=0)
        band_hi[e] = np.quantile(curves, hi_q, axis=0)

    means = [float(np.mean(dists[e])) for e in eps_list]
    ses = [float(np.std(dists[e], ddof=1) / math.sqrt(replicates)) if replicates > 1 else 0.0 for e in eps_list]
    return RealDataResult(
        eps=eps_list, dist_mean=means, dist_se=ses, grid=grid,
        band_mean=band_mean, band_lo=band_lo, band_hi=band_hi,
        nonprivate_full=_evaluate(_fit_nonprivate(data, cfg), grid, cfg),
        n_train=n_train, n_test=data.n - n_train,
    )
