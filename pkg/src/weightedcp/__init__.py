"""Weighted U-statistic change-point tests with CUSUM and Wilcoxon kernels."""

__version__ = "0.1.0"

from .kernels import (  # noqa: E402
    CUSUM,
    WILCOXON,
    Estimate,
    Kernel,
    KernelKind,
    NoiseModel,
    custom_kernel,
    drift_constant,
    eval_kernel,
    hoeffding_projections,
    sigma_asymptotic,
    standard_normal,
    u_of_delta,
)
from .statistic import (  # noqa: E402
    Sided,
    StatisticProfile,
    TestOutcome,
    max_statistic,
    profile,
    profile_bruteforce,
    profile_cusum,
    profile_wilcoxon,
    run_test,
)
from .limits import (  # noqa: E402
    A1LimitSpec,
    A2LimitSpec,
    BridgeGrid,
    QuantileTable,
    build_quantile_table,
    consistency_threshold,
    kappa,
    published_quantiles,
    sample_limit_a1,
    sample_limit_a2_unweighted,
    sample_limit_a2_weighted,
    sample_weighted_bridge_sup,
)
from .experiments import (  # noqa: E402
    A1,
    A2,
    Null,
    PowerCurve,
    empirical_critical_value,
    envelope_power,
    generate_series,
    overall_power_ratio,
    power_curve_a1,
    power_curve_a2,
)
