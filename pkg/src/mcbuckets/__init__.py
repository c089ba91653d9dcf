"""Sequential Monte Carlo p-value estimation reported as p-value buckets."""

from .buckets import (
    NAMED_SETS,
    Bucket,
    BucketSet,
    Interval,
    RatingCode,
    is_overlapping,
    load_bucket_set,
    star_rating,
    validate,
)
from .engine import BatchSchedule, DecisionReport, ExceedanceStream, batch_sizes, run

__version__ = "0.1.0"

__all__ = [
    "NAMED_SETS",
    "BatchSchedule",
    "Bucket",
    "BucketSet",
    "DecisionReport",
    "ExceedanceStream",
    "Interval",
    "RatingCode",
    "batch_sizes",
    "is_overlapping",
    "load_bucket_set",
    "run",
    "star_rating",
    "validate",
]
