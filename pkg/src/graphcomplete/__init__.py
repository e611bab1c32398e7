"""Repository-level code completion over a unified multi-level code graph.

The pipeline has five stages: build a heterogeneous graph of the whole
repository, index per-function subgraphs both semantically and structurally,
retrieve and rerank candidate subgraphs for a cursor position, fuse the
retrieved subgraphs with the local query graph via cross-attention, and
serialize the fused graph into a token-budgeted prompt for a pluggable
completion backend.  An evaluation harness computes EM / ES / Recall / F1
over benchmark task files.
"""

__version__ = "0.1.0"
