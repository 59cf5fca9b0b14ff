"""Python bindings for the ricpr face alignment library."""

from ._ricpr import (
    NUM_LANDMARKS,
    RicprError,
    ced_curve,
    estimate_pose,
    fuse,
    lbp_histogram,
    nme,
    normalize_to_box,
    occlusion_pr,
    pearson_distance,
    prediction_variance,
    run_cli,
)

__all__ = [
    "NUM_LANDMARKS",
    "RicprError",
    "ced_curve",
    "estimate_pose",
    "fuse",
    "lbp_histogram",
    "nme",
    "normalize_to_box",
    "occlusion_pr",
    "pearson_distance",
    "prediction_variance",
    "run_cli",
]
