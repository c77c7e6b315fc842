# SPDX-License-Identifier: Apache-2.0
"""Python access to the nsnet frame sampler core."""

from ._nsnet import (
    flops_total,
    fuse_scores,
    mean_average_precision,
    ns_pseudo_labels,
    presample_indices,
    rank_order,
    read_feature_file,
    run_cli,
    select_frames,
    select_topk,
    softmax,
    write_feature_file,
)

FUSION_MODES = ("score_add", "score_mul", "score_max", "index_union", "index_intersect", "index_join")

__all__ = [
    "FUSION_MODES",
    "flops_total",
    "fuse_scores",
    "mean_average_precision",
    "ns_pseudo_labels",
    "presample_indices",
    "rank_order",
    "read_feature_file",
    "run_cli",
    "select_frames",
    "select_topk",
    "softmax",
    "write_feature_file",
]
