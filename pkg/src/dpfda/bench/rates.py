"""Minimax rate expressions and the central-DP phase diagram for the mean problem.

Every rate is evaluated up to poly-logarithmic factors, exactly as the
expressions are written, so the numbers are only meaningful for comparing
terms and regimes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

TIE_RTOL = 1e-12


@dataclass(frozen=True)
class RateRow:
    problem: str
    privacy: str
    expression: str
    terms: dict
    total: float
    dominant: str


def _row(problem, privacy, expression, terms: dict) -> RateRow:
    total = math.fsum(terms.values())
    dominant = max(terms, key=lambda k: terms[k])
    return RateRow(problem, privacy, expression, dict(terms), total, dominant)


def _mean_terms(S, n, m, eps, alpha) -> dict:
    e2 = eps * eps
    private = math.isfinite(eps)
    return {
        "(Snm)^(-2a/(2a+1))": (S * n * m) ** (-2 * alpha / (2 * alpha + 1)),
        "(Sn^2 m e^2)^(-a/(a+1))": (S * n * n * m * e2) ** (-alpha / (alpha + 1)) if private else 0.0,
        "(Sn)^(-1)": 1.0 / (S * n),
        "(Sn^2 e^2)^(-1)": 1.0 / (S * n * n * e2) if private else 0.0,
    }


def _vcm_terms(S, n, m, d, eps, alpha) -> dict:
    base = _mean_terms(S, n, m, eps, alpha)
    factors = [d, d ** ((2 * alpha + 1) / (alpha + 1)), d, d * d]
    return {f"d-scaled {k}": f * v for f, (k, v) in zip(factors, base.items())}


def _cdp_label(label: str) -> str:
    return label.replace("(Sn", "(n").replace("S", "")


def rate_table(n, m, epsilon, S: int = 1, d: int = 1, alpha: float = 3.0) -> list:
    """Evaluate the four headline minimax rates (CDP/FDP x mean/VCM).

    ``epsilon = inf`` drops the privacy terms.  Returns :class:`RateRow` entries in
    the order mean-CDP, mean-FDP, VCM-CDP, VCM-FDP.
    """
    for name, val in (("n", n), ("m", m), ("epsilon", epsilon), ("S", S), ("d", d), ("alpha", alpha)):
        if not val > 0:
            raise ValueError(f"{name} must be positive, got {val}")
    mean_cdp = {_cdp_label(k): v for k, v in _mean_terms(1, n, m, epsilon, alpha).items()}
    vcm_cdp = {_cdp_label(k): v for k, v in _vcm_terms(1, n, m, d, epsilon, alpha).items()}
    return [
        _row("mean", "CDP", "(nm)^(-2a/(2a+1)) + (n^2 m e^2)^(-a/(a+1)) + n^(-1) + (n^2 e^2)^(-1)", mean_cdp),
        _row(
            "mean", "FDP",
            "(Snm)^(-2a/(2a+1)) + (Sn^2 m e^2)^(-a/(a+1)) + (Sn)^(-1) + (Sn^2 e^2)^(-1)",
            _mean_terms(S, n, m, epsilon, alpha),
        ),
        _row(
            "vcm", "CDP",
            "d(nm)^(-2a/(2a+1)) + d^((2a+1)/(a+1))(n^2 m e^2)^(-a/(a+1)) + d n^(-1) + d^2(n^2 e^2)^(-1)",
            vcm_cdp,
        ),
        _row(
            "vcm", "FDP",
            "d(Snm)^(-2a/(2a+1)) + d^((2a+1)/(a+1))(Sn^2 m e^2)^(-a/(a+1)) + d(Sn)^(-1) + d^2(Sn^2 e^2)^(-1)",
            _vcm_terms(S, n, m, d, epsilon, alpha),
        ),
    ]


def format_rate_table(rows) -> str:
    lines = []
    for row in rows:
        lines.append(f"{row.problem}/{row.privacy}: {row.expression}")
        for k, v in row.terms.items():
            mark = "  <- dominant" if k == row.dominant else ""
            lines.append(f"    {k:<40s} {v:.6e}{mark}")
        lines.append(f"    {'total':<40s} {row.total:.6e}")
    return "\n".join(lines)


HIGH_SPARSE = "(n^2 m e^2)^(-a/(a+1))"
HIGH_DENSE = "(n^2 e^2)^(-1)"
LOW_SPARSE = "(nm)^(-2a/(2a+1)) + (n^2 m e^2)^(-a/(a+1))"
LOW_MID = "n^(-1) + (n^2 m e^2)^(-a/(a+1))"
LOW_DENSE = "n^(-1)"


@dataclass(frozen=True)
class PhaseReport:
    privacy: str  # "high" | "low"
    density: str  # "sparse" | "intermediate" | "dense"
    rate: str
    boundary: bool
    distances: dict  # signed log-distance to each threshold (positive = above)


def _log_gap(value: float, threshold: float) -> float:
    gap = math.log(value) - math.log(threshold)
    return 0.0 if abs(gap) <= TIE_RTOL else gap


def phase_region(n, m, epsilon, alpha: float = 3.0) -> PhaseReport:
    """Classify ``(n, m, epsilon)`` into one of the five central-DP regimes.

    Thresholds: ``epsilon`` vs ``n^-1/2``; in high privacy ``m`` vs
    ``(n^2 e^2)^(1/a)``; in low privacy ``m`` vs ``n^(1/(2a))`` and ``n^(1/a)``.
    A point exactly on a threshold (relative tolerance 1e-12) goes to the
    less-private / denser side and is flagged ``boundary``.
    """
    for name, val in (("n", n), ("m", m), ("epsilon", epsilon), ("alpha", alpha)):
        if not val > 0:
            raise ValueError(f"{name} must be positive, got {val}")
    dists = {"epsilon vs n^(-1/2)": math.inf if math.isinf(epsilon) else _log_gap(epsilon, n ** -0.5)}
    high = dists["epsilon vs n^(-1/2)"] < 0
    ties = [dists["epsilon vs n^(-1/2)"] == 0]
    if high:
        dists["m vs (n^2 e^2)^(1/a)"] = g = _log_gap(m, (n * n * epsilon * epsilon) ** (1 / alpha))
        ties.append(g == 0)
        density, rate = ("sparse", HIGH_SPARSE) if g < 0 else ("dense", HIGH_DENSE)
    else:
        dists["m vs n^(1/(2a))"] = g1 = _log_gap(m, n ** (1 / (2 * alpha)))
        dists["m vs n^(1/a)"] = g2 = _log_gap(m, n ** (1 / alpha))
        if g1 < 0:
            density, rate = "sparse", LOW_SPARSE
            ties.append(False)
        elif g2 < 0:
            density, rate = "intermediate", LOW_MID
            ties.append(g1 == 0)
        else:
            density, rate = "dense", LOW_DENSE
            ties.append(g2 == 0)
    return PhaseReport("high" if high else "low", density, rate, any(ties), dists)
