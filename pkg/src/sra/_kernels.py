"""Backend selection for the inner-loop kernels.

The compiled extension is used when it was built; ``SRA_PURE_PYTHON=1``
forces the pure-Python versions.
"""

import os

if os.environ.get("SRA_PURE_PYTHON", "") not in ("", "0"):
    from ._pykernels import bpe_encode, lcs_offsets, trie_encode, walk_offsets

    BACKEND = "python"
else:
    try:
        from ._ckernels import bpe_encode, lcs_offsets, trie_encode, walk_offsets

        BACKEND = "cython"
    except ImportError:
        from ._pykernels import bpe_encode, lcs_offsets, trie_encode, walk_offsets

        BACKEND = "python"

__all__ = ["BACKEND", "bpe_encode", "lcs_offsets", "trie_encode", "walk_offsets"]
