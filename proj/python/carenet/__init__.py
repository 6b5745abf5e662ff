"""FTIR spectral preprocessing, a 1D residual CNN and Grad-CAM, backed by C++."""

from ._core import (
    CarenetError,
    DegenerateInput,
    FormatError,
    NumericalError,
    Model,
    biofingerprint_axis,
    classify,
    compute_metrics,
    count_params,
    gen_panel,
    kmeans,
    make_split,
    minmax_normalize,
    patient_vote,
    preprocess_panel,
    read_spectraset,
    remove_outliers,
    savitzky_golay,
    top_bands,
    write_spectraset,
)

__all__ = [
    "CarenetError",
    "DegenerateInput",
    "FormatError",
    "NumericalError",
    "Model",
    "biofingerprint_axis",
    "classify",
    "compute_metrics",
    "count_params",
    "gen_panel",
    "kmeans",
    "make_split",
    "minmax_normalize",
    "patient_vote",
    "preprocess_panel",
    "read_spectraset",
    "remove_outliers",
    "savitzky_golay",
    "top_bands",
    "write_spectraset",
]
