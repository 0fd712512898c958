"""Counter-based Gaussian draws.

Each draw is addressed by ``(seed, path, slot)`` where ``slot`` enumerates
``(step, asset)`` pairs. The Philox counter position for a draw is a pure
function of that address, so any partition of the paths into chunks (or
threads) reproduces the same numbers bit for bit.
"""

import numpy as np
from scipy.special import ndtri

_BLOCK = 4  # Philox emits four 64-bit words per counter increment
_MASK64 = (1 << 64) - 1


def _stride(per_path: int) -> int:
    return -(-per_path // _BLOCK) * _BLOCK


def standard_normals(seed: int, path_start: int, path_stop: int, per_path: int) -> np.ndarray:
    """Standard normals for paths ``[path_start, path_stop)``, shape ``(n, per_path)``."""
    n = path_stop - path_start
    if n <= 0 or per_path <= 0:
        return np.empty((max(n, 0), max(per_path, 0)))
    stride = _stride(per_path)
    bitgen = np.random.Philox(key=int(seed) & _MASK64)
    bitgen.advance(path_start * stride // _BLOCK)
    raw = bitgen.random_raw(n * stride).reshape(n, stride)[:, :per_path]
    # 53-bit uniforms strictly inside (0, 1)
    u = ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53
    return ndtri(u)
