"""Extract-then-rewrite summarization: pointer-network sentence selection,
copy-mechanism sentence rewriting, actor-critic bridging, reranking, and
parallel per-sentence decoding."""

import os

import torch

__version__ = "0.1.0"

# Single-threaded torch keeps results bit-reproducible, makes fork-based
# decoding pools safe, and gives the worker-count benchmark an honest
# baseline.  Desk-scale models do not benefit from intra-op threads.
_threads = int(os.environ.get("SUMM_TORCH_THREADS", "1"))
torch.set_num_threads(_threads)
