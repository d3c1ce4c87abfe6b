"""Pure-numpy implementations of the batched matmul kernels.

These two routines are the only compute primitives the attention kernels
need: correlation scoring is ``A @ B^T`` over flattened segments and value
aggregation is ``W @ V``. numpy dispatches both to BLAS.
"""

import numpy as np

NAME = "numpy"


def bmm_nt(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """(B, m, p) x (B, n, p) -> (B, m, n), contracting the trailing axis."""
    return np.matmul(a, np.swapaxes(b, -1, -2))


def bmm_nn(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """(B, m, n) x (B, n, p) -> (B, m, p)."""
    return np.matmul(a, b)
