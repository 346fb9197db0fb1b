"""Differentially private functional mean and varying-coefficient estimation."""

from __future__ import annotations

from dpfda.basis import Quadrature, SobolevParams, basis_matrix, eval_function, l2_distance
from dpfda.estimators import (
    EstimationReport,
    GdConfig,
    ServerSpec,
    dp_mean_cdp,
    dp_mean_fdp,
    dp_vcm_cdp,
    dp_vcm_fdp,
    nonprivate_ls,
    nonprivate_vcm_ls,
)
from dpfda.privacy import PrivacyBudget
from dpfda.sobolev import EllipsoidSpec, project_ellipsoid, project_vcm
from dpfda.synth import MeanDataset, VcmDataset, gen_mean_dataset, gen_vcm_dataset

__version__ = "0.1.0"

__all__ = [
    "EllipsoidSpec",
    "EstimationReport",
    "GdConfig",
    "MeanDataset",
    "PrivacyBudget",
    "Quadrature",
    "ServerSpec",
    "SobolevParams",
    "VcmDataset",
    "basis_matrix",
    "dp_mean_cdp",
    "dp_mean_fdp",
    "dp_vcm_cdp",
    "dp_vcm_fdp",
    "eval_function",
    "gen_mean_dataset",
    "gen_vcm_dataset",
    "l2_distance",
    "nonprivate_ls",
    "nonprivate_vcm_ls",
    "project_ellipsoid",
    "project_vcm",
]
