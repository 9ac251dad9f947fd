import numpy as np
import pytest

from scalegraph.sparse import SparseMatrix

# 6-node worked example: directed edges (1,2),(3,2),(4,3),(5,3),(6,1) in
# 1-based node ids. All hand-checked matrices in the tests derive from it.
TREE6_EDGES = [(0, 1), (2, 1), (3, 2), (4, 2), (5, 0)]


@pytest.fixture
def tree6():
    src, dst = zip(*TREE6_EDGES)
    return SparseMatrix.from_edges(6, src, dst)


def random_digraph(rng, n, density=0.25, allow_self_loops=False):
    """Random simple digraph pattern for oracle comparisons."""
    dense = (rng.random((n, n)) < density).astype(float)
    if not allow_self_loops:
        np.fill_diagonal(dense, 0.0)
    return SparseMatrix.from_dense(dense)


def random_weighted(rng, n_rows, n_cols, density=0.3):
    dense = rng.random((n_rows, n_cols)) * (rng.random((n_rows, n_cols)) < density)
    return SparseMatrix.from_dense(dense)
