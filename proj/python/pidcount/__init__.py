"""Dense tiny-object segmentation and counting (C++ core)."""

from ._pidcount import (
    ConfigError,
    DimensionError,
    Error,
    LoadError,
    Model,
    NumericalError,
    Sample,
    UndefinedMetricError,
    augment8,
    count_mask,
    count_objects,
    counting_accuracy,
    hausdorff,
    label_components_8,
    load_dataset,
    otsu_threshold,
    pid_downsample,
    pid_reassemble,
    resize,
    run_baseline,
    run_cli,
    save_dataset,
    segmentation_metrics,
    synth_blobs,
)

__all__ = [
    "ConfigError",
    "DimensionError",
    "Error",
    "LoadError",
    "Model",
    "NumericalError",
    "Sample",
    "UndefinedMetricError",
    "augment8",
    "count_mask",
    "count_objects",
    "counting_accuracy",
    "hausdorff",
    "label_components_8",
    "load_dataset",
    "otsu_threshold",
    "pid_downsample",
    "pid_reassemble",
    "resize",
    "run_baseline",
    "run_cli",
    "save_dataset",
    "segmentation_metrics",
    "synth_blobs",
]
