"""Suspension semiflows over non-uniformly expanding interval maps.

The package builds singular-roof suspension flows, estimates time and space
averages, measures large-deviation / escape / recurrence volumes, and fits
their exponential decay rates; a geometric Lorenz flow module ties the
abstract construction to the classical ODE.
"""
from .errors import (
    ConfigInvalid,
    DegenerateRoof,
    HitSingularity,
    InsufficientData,
    LeftTrap,
    NoReturn,
    NonFinite,
    NonUniqueMeasure,
    OutOfDomain,
    SingularInput,
    SuspflowError,
    TooManyAborted,
    TraceNotFound,
)
from .base_maps import (
    DoublingParams,
    GeometricLorenz2DParams,
    LorenzQuotientParams,
    MapModel,
    OrbitSegment,
    birkhoff_sum,
    dist_delta,
    doubling,
    eval_map,
    expansion_average,
    geometric_lorenz_2d,
    iterate_orbit,
    log_deriv,
    lorenz_quotient,
    min_singular_distance,
    recurrence_average,
)
from .suspension import (
    FlowObservable,
    LapResult,
    RoofSpec,
    SuspensionPoint,
    flow_average_batch,
    flow_time_average,
    induced_observable,
    lap_count_batch,
    lap_number,
    roof_eval,
    semiflow_evolve,
)
from .estimation import (
    AverageEstimate,
    DeviationConfig,
    RateFit,
    VolumeEstimate,
    WeightedSample,
    base_deviation_volume,
    deviation_curve,
    deviation_volume,
    estimate_base_average,
    fit_exponential_rate,
    nu_average,
    recurrence_deviation_volume,
    sample_lambda,
)
from .lorenz import (
    LorenzParams,
    OdeState,
    ProfileFit,
    SectionCrossing,
    TrapBox,
    escape_volume,
    flow_deviation_volume,
    flow_space_average,
    integrate,
    leafwise_average_gap,
    locate_section_trace,
    occupation_fraction,
    poincare_return,
    return_time_profile,
    trap_violation_fraction,
    vector_field,
)
from .config import RunConfig, parse_config

__version__ = "0.1.0"

__all__ = [
    "AverageEstimate",
    "ConfigInvalid",
    "DegenerateRoof",
    "DeviationConfig",
    "DoublingParams",
    "FlowObservable",
    "GeometricLorenz2DParams",
    "HitSingularity",
    "InsufficientData",
    "LapResult",
    "LeftTrap",
    "LorenzParams",
    "LorenzQuotientParams",
    "MapModel",
    "NoReturn",
    "NonFinite",
    "NonUniqueMeasure",
    "OdeState",
    "OrbitSegment",
    "OutOfDomain",
    "ProfileFit",
    "RateFit",
    "RoofSpec",
    "RunConfig",
    "SectionCrossing",
    "SingularInput",
    "SuspensionPoint",
    "SuspflowError",
    "TooManyAborted",
    "TraceNotFound",
    "TrapBox",
    "VolumeEstimate",
    "WeightedSample",
    "base_deviation_volume",
    "birkhoff_sum",
    "deviation_curve",
    "deviation_volume",
    "dist_delta",
    "doubling",
    "escape_volume",
    "estimate_base_average",
    "eval_map",
    "expansion_average",
    "fit_exponential_rate",
    "flow_average_batch",
    "flow_deviation_volume",
    "flow_space_average",
    "flow_time_average",
    "geometric_lorenz_2d",
    "induced_observable",
    "integrate",
    "iterate_orbit",
    "lap_count_batch",
    "lap_number",
    "leafwise_average_gap",
    "locate_section_trace",
    "log_deriv",
    "lorenz_quotient",
    "min_singular_distance",
    "nu_average",
    "occupation_fraction",
    "parse_config",
    "poincare_return",
    "recurrence_average",
    "recurrence_deviation_volume",
    "return_time_profile",
    "roof_eval",
    "sample_lambda",
    "semiflow_evolve",
    "trap_violation_fraction",
    "vector_field",
]
