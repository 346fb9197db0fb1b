"""Monte Carlo sweeps over (n, m, epsilon, S, d) grids.

Config grammar (INI, read with :mod:`configparser`)::

    [DEFAULT]            ; optional, shared by every section
    replicates = 100
    seed = 0

    [setting1]           ; one section per experiment
    scenario = mean-cdp  ; mean-cdp | mean-fdp | vcm-cdp | vcm-fdp
    target = mu1         ; mu1 | mu2
    n = 250
    m = 2:20:2           ; comma list and/or inclusive start:stop:step ranges
    eps = 0.5, 1, 3      ; "inf" disables the noise
    S = 1
    d = 1
    r = 3                ; integer or "auto"
    T = auto             ; integer or "auto" (= ceil(c_t log N))

Optional keys with defaults: alpha=3, c_alpha, c_r=0.75, c_t=4, c_r_mult=1.25,
rho=0.1, eta=0.05, delta=0.001, gp_sigma2=0.25, noise_sd=0.5,
covariate=uniform (or rademacher), workers=1.
"""

from __future__ import annotations

import concurrent.futures as cf
import configparser
import csv
import dataclasses
import itertools
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from dpfda.basis import Quadrature, SobolevParams, l2_distance, quad_l2_distance
from dpfda.bench.manifest import build_manifest, manifest_line, read_manifest
from dpfda.estimators import GdConfig, ServerSpec, dp_mean_cdp, dp_mean_fdp, dp_vcm_cdp, dp_vcm_fdp
from dpfda.privacy import PrivacyBudget
from dpfda.sobolev import EllipsoidSpec
from dpfda.synth import (
    DEFAULT_C_ALPHA,
    MU1_COEFFS,
    MaternSpec,
    gen_mean_dataset,
    gen_vcm_dataset,
    mu2,
    uniform_covariates,
)
from dpfda.tuning import default_T, select_r_mean_fdp, select_r_vcm_fdp

log = logging.getLogger(__name__)

SCENARIOS = ("mean-cdp", "mean-fdp", "vcm-cdp", "vcm-fdp")
TARGETS = ("mu1", "mu2")
EPS_GRID = (0.5, 0.6, 0.7, 0.8, 0.9, 1.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0)
SETTING1_M = tuple(range(2, 21, 2))
SETTING2_N = tuple(range(100, 501, 50))

CSV_COLUMNS = (
    "scenario", "target", "n", "m", "eps", "S", "d",
    "replicate_count", "mse_mean", "mse_se", "r_used", "T_used",
)

_QUAD = Quadrature()


@dataclass(frozen=True)
class ExperimentSpec:
    scenario: str = "mean-cdp"
    target: str = "mu1"
    n: tuple = (250,)
    m: tuple = (10,)
    eps: tuple = (1.0,)
    S: tuple = (1,)
    d: tuple = (1,)
    replicates: int = 100
    seed: int = 0
    r: int | None = 3
    T: int | None = None
    alpha: float = 3.0
    c_alpha: float = DEFAULT_C_ALPHA
    c_r: float = 0.75
    c_t: float = 4.0
    c_r_mult: float = 1.25
    rho: float = 0.1
    eta: float = 0.05
    delta: float = 1e-3
    gp_sigma2: float = 0.25
    noise_sd: float = 0.5
    covariate: str = "uniform"
    workers: int = 1
    name: str = "experiment"

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ValueError(f"unknown scenario {self.scenario!r}; expected one of {SCENARIOS}")
        if self.target not in TARGETS:
            raise ValueError(f"unknown target {self.target!r}; expected one of {TARGETS}")
        for key in ("n", "m", "eps", "S", "d"):
            grid = tuple(getattr(self, key))
            if not grid:
                raise ValueError(f"grid {key!r} is empty")
            object.__setattr__(self, key, grid)
        if self.replicates < 1:
            raise ValueError("replicate count must be >= 1")
        if self.covariate not in ("uniform", "rademacher"):
            raise ValueError(f"unknown covariate distribution {self.covariate!r}")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")

    @property
    def federated(self) -> bool:
        return self.scenario.endswith("fdp")

    @property
    def vcm(self) -> bool:
        return self.scenario.startswith("vcm")

    def cells(self) -> list:
        """Grid cells ``(n, m, eps, S, d)``; CDP scenarios pin S=1, mean scenarios d=0."""
        S_grid = self.S if self.federated else (1,)
        d_grid = self.d if self.vcm else (0,)
        return list(itertools.product(self.n, self.m, self.eps, S_grid, d_grid))

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


# -- config parsing -------------------------------------------------------------


def _parse_grid(text: str, kind) -> tuple:
    out = []
    for part in text.replace(";", ",").split(","):
        part = part.strip()
        if not part:
            continue
        if ":" in part:
            bits = [kind(b) for b in part.split(":")]
            if len(bits) not in (2, 3):
                raise ValueError(f"bad range {part!r}; use start:stop[:step]")
            start, stop = bits[0], bits[1]
            step = bits[2] if len(bits) == 3 else kind(1)
            if step <= 0:
                raise ValueError(f"range step must be positive in {part!r}")
            k = 0
            while start + k * step <= stop + (1e-9 if kind is float else 0):
                out.append(kind(round(start + k * step, 12)) if kind is float else start + k * step)
                k += 1
        else:
            out.append(kind(part))
    return tuple(out)


def _opt_int(text: str):
    text = text.strip().lower()
    return None if text in ("auto", "") else int(text)


_FIELD_PARSERS = {
    "scenario": str, "target": str, "covariate": str,
    "n": lambda s: _parse_grid(s, int), "m": lambda s: _parse_grid(s, int),
    "eps": lambda s: _parse_grid(s, float), "S": lambda s: _parse_grid(s, int),
    "d": lambda s: _parse_grid(s, int),
    "replicates": int, "seed": int, "workers": int, "r": _opt_int, "T": _opt_int,
    "alpha": float, "c_alpha": float, "c_r": float, "c_t": float, "c_r_mult": float,
    "rho": float, "eta": float, "delta": float, "gp_sigma2": float, "noise_sd": float,
}


def spec_from_mapping(mapping, name: str = "experiment") -> ExperimentSpec:
    kwargs = {"name": name}
    lower = {f.lower(): f for f in _FIELD_PARSERS}
    for key, raw in mapping.items():
        field_name = lower.get(key.lower())
        if field_name is None:
            raise ValueError(f"[{name}] unknown key {key!r}")
        try:
            kwargs[field_name] = _FIELD_PARSERS[field_name](raw)
        except ValueError as exc:
            raise ValueError(f"[{name}] bad value for {key!r}: {raw!r} ({exc})") from exc
    return ExperimentSpec(**kwargs)


def load_specs(path) -> list:
    """Parse a config file into one :class:`ExperimentSpec` per section."""
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    parser.optionxform = str
    with open(path) as fh:
        parser.read_file(fh)
    sections = parser.sections()
    if not sections:
        raise ValueError(f"{path}: no experiment sections found")
    return [spec_from_mapping(dict(parser[s]), name=s) for s in sections]


def setting1(target: str = "mu1", scenario: str = "mean-cdp", replicates: int = 100, seed: int = 0) -> ExperimentSpec:
    """Effect of m at n=250 over the full privacy grid."""
    return ExperimentSpec(
        scenario=scenario, target=target, n=(250,), m=SETTING1_M, eps=EPS_GRID,
        replicates=replicates, seed=seed, name="setting1",
    )


def setting2(target: str = "mu1", scenario: str = "mean-cdp", replicates: int = 100, seed: int = 0) -> ExperimentSpec:
    """Effect of n at m=10 over the full privacy grid."""
    return ExperimentSpec(
        scenario=scenario, target=target, n=SETTING2_N, m=(10,), eps=EPS_GRID,
        replicates=replicates, seed=seed, name="setting2",
    )


# -- one replicate ----------------------------------------------------------------


def _truth_blocks(target: str, d: int) -> list:
    base = MU1_COEFFS if target == "mu1" else mu2
    if target == "mu1":
        return [base / (k + 1) for k in range(d + 1)]
    return [(lambda x, k=k: mu2(x) / (k + 1)) for k in range(d + 1)]


def _sq_error(coeffs: np.ndarray, blocks: list, r: int) -> float:
    total = 0.0
    for est, truth in zip(np.asarray(coeffs).reshape(-1, r), blocks):
        dist = quad_l2_distance(est, truth, _QUAD) if callable(truth) else l2_distance(est, truth)
        total += dist * dist
    return total


def _covariates(kind: str):
    if kind == "rademacher":
        return lambda rng, size: rng.choice(np.array([-1.0, 1.0]), size=size)
    return uniform_covariates


def cell_tuning(spec: ExperimentSpec, cell) -> tuple:
    """``(r, T)`` used for a grid cell."""
    n, m, eps, S, d = cell
    if spec.r is not None:
        r = spec.r
    elif spec.vcm:
        r = select_r_vcm_fdp(S, n, m, d, eps, spec.alpha, spec.c_r_mult)
    else:
        r = select_r_mean_fdp(S, n, m, eps, spec.alpha, spec.c_r_mult)
    T = spec.T if spec.T is not None else default_T(S * n, spec.c_t)
    return r, T


def replicate_rng(seed: int, cell_index: int, rep: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), int(cell_index), int(rep)])


def run_replicate(spec: ExperimentSpec, cell_index: int, rep: int) -> float:
    """Squared L2 error of one replicate in one cell."""
    cell = spec.cells()[cell_index]
    n, m, eps, S, d = cell
    r, T = cell_tuning(spec, cell)
    rng = replicate_rng(spec.seed, cell_index, rep)
    noise_seed = int(rng.integers(2**62))
    budget = PrivacyBudget(eps, spec.delta)
    cfg = GdConfig(
        r=r, rho=spec.rho, T=T, c_r_const=spec.c_r, eta=spec.eta, seed=noise_seed,
        noise_enabled=budget.is_private,
    )
    ell = EllipsoidSpec(SobolevParams(spec.alpha, spec.c_alpha), r)
    blocks = _truth_blocks(spec.target, d if spec.vcm else 0)
    matern = MaternSpec(sigma2=spec.gp_sigma2)

    def draw():
        if spec.vcm:
            return gen_vcm_dataset(blocks, d, n, m, spec.noise_sd, _covariates(spec.covariate), rng)
        return gen_mean_dataset(blocks[0], n, m, spec.noise_sd, matern, rng)

    if spec.federated:
        servers = [ServerSpec(draw(), budget) for _ in range(S)]
        report = (dp_vcm_fdp if spec.vcm else dp_mean_fdp)(servers, cfg, ell)
    else:
        report = (dp_vcm_cdp if spec.vcm else dp_mean_cdp)(draw(), cfg, budget, ell)
    return _sq_error(report.coeffs, blocks, r)


def _task(args):
    spec, cell_index, rep = args
    try:
        return cell_index, rep, run_replicate(spec, cell_index, rep), None
    except Exception as exc:  # recorded per cell
        return cell_index, rep, math.nan, f"{type(exc).__name__}: {exc}"


# -- aggregation ---------------------------------------------------------------------


@dataclass
class CellResult:
    scenario: str
    target: str
    n: int
    m: int
    eps: float
    S: int
    d: int
    replicate_count: int
    mse_mean: float
    mse_se: float
    r_used: int
    T_used: int
    errors: list = field(default_factory=list)
    values: tuple = ()

    def row(self) -> dict:
        return {c: getattr(self, c) for c in CSV_COLUMNS}


def aggregate(spec: ExperimentSpec, outcomes: Iterable) -> list:
    """Fold ``(cell, rep, value, error)`` outcomes into per-cell results.

    Outcomes are sorted before reduction, so completion order never matters.
    """
    by_cell: dict = {}
    for cell_index, rep, value, err in sorted(outcomes, key=lambda o: (o[0], o[1])):
        by_cell.setdefault(cell_index, []).append((rep, value, err))
    results = []
    for idx, cell in enumerate(spec.cells()):
        entries = by_cell.get(idx, [])
        values = [v for _, v, e in entries if e is None]
        errors = [f"replicate {rep}: {e}" for rep, _, e in entries if e is not None]
        k = len(values)
        mean = math.fsum(values) / k if k else math.nan
        if k > 1:
            var = math.fsum((v - mean) ** 2 for v in values) / (k - 1)
            se = math.sqrt(var / k)
        else:
            se = 0.0 if k == 1 else math.nan
        r, T = cell_tuning(spec, cell)
        n, m, eps, S, d = cell
        results.append(CellResult(spec.scenario, spec.target, n, m, eps, S, d, k, mean, se, r, T, errors, tuple(values)))
    return results


def run_monte_carlo(spec: ExperimentSpec, workers: int | None = None) -> list:
    """Mean and standard error of the squared L2 error for every grid cell.

    Replicate ``k`` of cell ``c`` draws data and noise from streams keyed by
    ``(seed, c, k)`` only, so results do not depend on scheduling or worker
    count.  Estimator failures are recorded on the cell rather than raised.
    """
    workers = workers or spec.workers
    tasks = [(spec, c, k) for c in range(len(spec.cells())) for k in range(spec.replicates)]
    if workers > 1:
        with cf.ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_task, tasks, chunksize=max(1, len(tasks) // (4 * workers))))
    else:
        outcomes = [_task(t) for t in tasks]
    results = aggregate(spec, outcomes)
    for res in results:
        if res.errors:
            log.warning("cell n=%s m=%s eps=%s: %d failed replicates", res.n, res.m, res.eps, len(res.errors))
    return results


# -- CSV --------------------------------------------------------------------------------


def _fmt(v) -> str:
    return repr(float(v)) if isinstance(v, float) else str(v)


def write_results_csv(results: list, path, specs: list) -> Path:
    """Write the flat results table preceded by a ``# manifest:`` comment."""
    path = Path(path)
    manifest = build_manifest(
        "simulate", {"experiments": [s.to_dict() for s in specs]}, specs[0].seed if specs else 0
    )
    with path.open("w", newline="") as fh:
        fh.write(manifest_line(manifest) + "\n")
        for res in results:
            for err in res.errors:
                fh.write(f"# error: {res.scenario} n={res.n} m={res.m} eps={res.eps} S={res.S} d={res.d}: {err}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for res in results:
            writer.writerow([_fmt(v) for v in res.row().values()])
    return path


def read_results_csv(path) -> tuple:
    """Return ``(manifest, rows)``; numeric columns are converted back."""
    manifest = read_manifest(path)
    with open(path) as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    rows = []
    for rec in csv.DictReader(lines):
        conv = {}
        for k, v in rec.items():
            if k in ("scenario", "target"):
                conv[k] = v
            elif k in ("n", "m", "S", "d", "replicate_count", "r_used", "T_used"):
                conv[k] = int(v)
            else:
                conv[k] = float(v)
        rows.append(conv)
    return manifest, rows
