"""Dataset-retrieval agent comparison harness with FAIR rubric judging.

The subpackages follow the pipeline: ``queries`` (ingest), ``extract`` and
``index`` (metadata harvest and faceted search), ``agents`` (baseline and
semantic strategies), ``snapshots`` (fetch and freeze), ``judge`` (rubric
scoring), ``review`` (human annotation), ``metrics`` and ``pipeline``.
"""
from ._accel import BACKEND as KERNEL_BACKEND

__version__ = "0.1.0"

__all__ = ["KERNEL_BACKEND", "__version__"]
