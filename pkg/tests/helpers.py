import numpy as np


def random_laplacian(rng, n, density=0.3, wmax=5.0):
    """Random weighted graph as an edge list, sorted and duplicate free."""
    from lapmm.lapgraph import laplacian_from_edges

    iu, ju = np.triu_indices(n, 1)
    keep = rng.random(iu.size) < density
    w = wmax * rng.uniform(0.02, 1.0, keep.sum())
    return laplacian_from_edges(n, list(zip(iu[keep].tolist(), ju[keep].tolist(), w.tolist())))
