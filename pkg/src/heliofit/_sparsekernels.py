"""Hot numeric kernels: row-parallel CSR multiply and the sun patch scan.

The CSR kernel reads the transport matrix once per call while the column
block stays cache-resident, which is what the fitting loop needs (one pass
per Adam iteration).  Every output element is accumulated sequentially by
exactly one thread, so results are bit-identical regardless of thread count.
"""

from __future__ import annotations

import warnings

import numba as nb
import numpy as np

warnings.filterwarnings("ignore", message=".*TBB threading layer.*")

_MAX_BLOCK = 8


@nb.njit(parallel=True, cache=True)
def _csr_block(indptr, indices, data, x, out):  # pragma: no cover - jitted
    k = x.shape[1]
    for i in nb.prange(len(indptr) - 1):
        for c in range(k):
            out[i, c] = 0.0
        for j in range(indptr[i], indptr[i + 1]):
            w = data[j]
            q = indices[j]
            for c in range(k):
                out[i, c] += w * x[q, c]


def csr_matmul(mat, x: np.ndarray) -> np.ndarray:
    """mat @ x for a scipy CSR matrix and a (Q, k) dense block."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    out = np.empty((mat.shape[0], x.shape[1]))
    for start in range(0, x.shape[1], _MAX_BLOCK):
        block = np.ascontiguousarray(x[:, start : start + _MAX_BLOCK])
        sub = np.empty((mat.shape[0], block.shape[1]))
        _csr_block(mat.indptr, mat.indices, mat.data, block, sub)
        out[:, start : start + block.shape[1]] = sub
    return out


@nb.njit(parallel=True, cache=True)
def _patch_scores_kernel(cands, dirs, energy, dom, cos_thresh, out):  # pragma: no cover
    for i in nb.prange(cands.shape[0]):
        ax, ay, az = cands[i, 0], cands[i, 1], cands[i, 2]
        e = 0.0
        d = 0.0
        for j in range(dirs.shape[0]):
            dot = ax * dirs[j, 0] + ay * dirs[j, 1] + az * dirs[j, 2]
            if dot >= cos_thresh:
                e += energy[j]
                d += dom[j]
        if d < 1e-300:
            d = 1e-300
        out[i] = e / d


def patch_scores(cands: np.ndarray, dirs: np.ndarray, energy: np.ndarray,
                 dom: np.ndarray, cos_thresh: float) -> np.ndarray:
    """Mean energy of the angular cap around each candidate direction."""
    out = np.empty(len(cands))
    _patch_scores_kernel(
        np.ascontiguousarray(cands), np.ascontiguousarray(dirs),
        np.ascontiguousarray(energy), np.ascontiguousarray(dom),
        cos_thresh, out,
    )
    return out
