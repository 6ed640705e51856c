"""Python bindings for the pairsem C++ core."""

import json

from ._pairsem import (
    DependencyError,
    FormatError,
    IoError,
    PreconditionError,
    ProviderError,
    distinctiveness,
    embed,
    fuse_and_rank,
    ndcg_at_k,
    normalize_surface,
    parse_pair_xml,
    recall_at_k,
    tokenize,
)
from . import _pairsem


def synth(out_dir, **spec):
    """Writes a synthetic benchmark into `out_dir`."""
    _pairsem.synth(json.dumps(spec), str(out_dir))


def run_pipeline(workdir, config=None):
    """Runs every stage in `workdir` and returns the stage reports."""
    return json.loads(_pairsem.run_pipeline(str(workdir), json.dumps(config or {})))


__all__ = [
    "DependencyError",
    "FormatError",
    "IoError",
    "PreconditionError",
    "ProviderError",
    "distinctiveness",
    "embed",
    "fuse_and_rank",
    "ndcg_at_k",
    "normalize_surface",
    "parse_pair_xml",
    "recall_at_k",
    "run_pipeline",
    "synth",
    "tokenize",
]
