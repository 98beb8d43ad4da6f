"""Constrained mixture modeling of p-value fields.

The heavy lifting lives in the compiled extension ``pvmix._core``; this
package re-exports its public surface. A field is a collection of p-values
on a masked 2-D or 3-D grid; ``fit`` / ``select_k`` estimate a mixture of a
uniform null component and beta-distributed active components (optionally
weighted by a spatial factor), ``merge_components`` prunes the fitted
components, and the ``*_threshold`` functions provide the classical
multiple-testing baselines.
"""

from ._core import (  # noqa: F401
    ComplexityCalibration,
    ComponentParams,
    ComponentTest,
    Criterion,
    CriteriaValues,
    DataError,
    FdrMethod,
    FdrResult,
    FitConfig,
    FitResult,
    InitError,
    MergeReport,
    MixtureParams,
    Neighborhood,
    NumericalError,
    PairTest,
    PhantomSpec,
    PhantomVariant,
    PValueField,
    Responsibilities,
    SelectionReport,
    SimulatedField,
    SpatialMode,
    __version__,
    bh_threshold,
    bonferroni,
    by_threshold,
    calibrate_nu,
    cluster_threshold,
    config_hash,
    fdr_p1,
    fdr_p2,
    fdr_p3,
    fit,
    format_double,
    geometry_text,
    jaccard,
    make_phantom,
    merge_components,
    pairwise_overlap,
    phantom_from_text,
    psi_density,
    read_field,
    sample_quantile,
    select_k,
    simulate_field,
    write_field,
)

__all__ = [name for name in dir() if not name.startswith("_")] + ["__version__"]
