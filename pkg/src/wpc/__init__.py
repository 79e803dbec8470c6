"""Efficient weighted principal components for factor models and panels.

The main entry points are :func:`wpc_fit` (any weight), :func:`pc_fit`,
:func:`hwpc_fit` and :func:`ewpc_fit` for pure factor models, and
:func:`pc_panel_fit` / :func:`wpc_panel_fit` for panel regressions with
interactive effects.
"""

from __future__ import annotations

__version__ = "0.1.0"

from .exceptions import (
    BandwidthError,
    DefinitenessError,
    DegenerateSeriesError,
    DimensionError,
    NumericalError,
    ParseError,
    RankError,
    WPCError,
)
from .factor import (
    FactorEstimate,
    ObservationPanel,
    WeightSpec,
    common_components,
    ewpc_fit,
    hwpc_fit,
    pc_fit,
    residual_matrix,
    rotation_matrix,
    wpc_fit,
)
from .inference import (
    CommonComponentInterval,
    HacConfig,
    VarianceReport,
    common_component_interval,
    hac_loading_variance,
    variance_report,
    ve_inverse,
    xi_comparison,
)
from .panel import (
    IterationConfig,
    PanelFit,
    PanelRegression,
    detrend_project,
    double_demean,
    gamma_estimate,
    gls_beta,
    pc_panel_fit,
    rank_criteria,
    residual_cov_from_beta,
    select_rank,
    wpc_panel_fit,
)
from .sparsecov import (
    SparseCovEstimate,
    ThresholdConfig,
    apply_rule,
    omega_T,
    pc_residual_cov,
    threshold_covariance,
    threshold_from_pc,
)

__all__ = [name for name in dir() if not name.startswith("_")]
