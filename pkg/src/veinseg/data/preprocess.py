import numpy as np

GCN_EPS = 1e-8


def gcn_normalize(raster, eps: float = GCN_EPS) -> np.ndarray:
    """Global contrast normalization: subtract the image mean, divide by its std.

    Statistics are taken in float64 over all pixels (population std).  A
    constant image maps to zeros because the divisor is floored at ``eps``.
    """
    x = np.asarray(raster, dtype=np.float64)
    centered = x - x.mean()
    std = np.sqrt(np.mean(centered * centered))
    return (centered / max(std, eps)).astype(np.float32)
