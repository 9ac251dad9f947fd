"""Scaled adjacency construction.

A scale word is a string over {A, T}: A contributes the adjacency as a factor,
T its transpose, and the word is evaluated as a left-to-right pattern product.
Word length = scale, so "A" and "T" are the two first-scale graphs and "AT",
"TA", "AA", "TT" the four second-scale ones.
"""

from dataclasses import dataclass, replace

import numpy as np

from scalegraph.sparse import (
    SparseMatrix,
    apply_selfloop_mode,
    pattern_difference,
    pattern_intersection,
    pattern_union,
    remove_self_loops,
    spgemm,
    transpose,
)

SELFLOOP_MODES = ("add", "remove", "keep")

# the matrices every direction-aware model draws from, in canonical order
MODEL_WORDS = ("A", "T", "AT", "TA", "AA", "TT")


@dataclass(frozen=True)
class ScaleSpec:
    """A scale word plus the self-loop treatment applied to the result."""

    word: str
    selfloop_mode: str = "keep"

    def __post_init__(self):
        if not self.word:
            raise ValueError("scale word must be non-empty")
        if any(ch not in "AT" for ch in self.word):
            raise ValueError(f"scale word must be over {{A, T}}, got {self.word!r}")
        if self.selfloop_mode not in SELFLOOP_MODES:
            raise ValueError(f"unknown selfloop mode {self.selfloop_mode!r}")

    @property
    def scale(self):
        return len(self.word)


@dataclass(frozen=True)
class ScaledGraph:
    """A built scaled adjacency: pattern matrix plus optional edge weights."""

    spec: ScaleSpec
    matrix: SparseMatrix
    weighted: SparseMatrix | None = None

    def with_weights(self, strategy, seed=0):
        return replace(self, weighted=assign_weights(self.matrix, strategy, seed))


def build_scaled_adjacency(adj: SparseMatrix, spec: ScaleSpec) -> ScaledGraph:
    """Left-to-right pattern product of A/T factors, then the self-loop mode."""
    if not adj.is_square():
        raise ValueError("adjacency must be square")
    a = adj.pattern()
    at = None
    result = None
    for ch in spec.word:
        if ch == "T":
            if at is None:
                at = transpose(a)
            factor = at
        else:
            factor = a
        result = factor if result is None else spgemm(result, factor, "pattern")
    result = apply_selfloop_mode(result, spec.selfloop_mode)
    return ScaledGraph(spec=spec, matrix=result)


def meeting_matrix(adj: SparseMatrix, k: int, prune_generated_selfloops: bool = True) -> SparseMatrix:
    """Order-k meeting-node proximity: nodes whose (k-1)-hop forward walks meet.

    Structurally the pattern of A^(k-1) (A^T)^(k-1). Diagonal entries appear for
    any node with an out-edge ("generated" self-loops); with pruning enabled
    they are removed from each intermediate order before it feeds the next one,
    and from the result, which keeps every order pure.
    """
    return _proximity_side(adj, k, forward_first=True, prune=prune_generated_selfloops)


def diffusion_matrix(adj: SparseMatrix, k: int, prune_generated_selfloops: bool = True) -> SparseMatrix:
    """Order-k diffusion-node proximity: pattern of (A^T)^(k-1) A^(k-1)."""
    return _proximity_side(adj, k, forward_first=False, prune=prune_generated_selfloops)


def _proximity_side(adj, k, forward_first, prune):
    if k < 2:
        raise ValueError("proximity order k must be >= 2")
    a = adj.pattern()
    at = transpose(a)
    left, right = (a, at) if forward_first else (at, a)
    prox = spgemm(left, right, "pattern")
    if prune:
        prox = remove_self_loops(prox)
    for _ in range(k - 2):
        prox = spgemm(spgemm(left, prox, "pattern"), right, "pattern")
        if prune:
            prox = remove_self_loops(prox)
    return prox


def proximity_matrix(adj: SparseMatrix, k: int, combine: str = "intersect",
                     prune_generated_selfloops: bool = True) -> SparseMatrix:
    """Combine the meeting and diffusion sides of the order-k proximity."""
    if combine not in ("intersect", "union"):
        raise ValueError(f"combine must be 'intersect' or 'union', got {combine!r}")
    m = meeting_matrix(adj, k, prune_generated_selfloops)
    d = diffusion_matrix(adj, k, prune_generated_selfloops)
    return pattern_intersection(m, d) if combine == "intersect" else pattern_union(m, d)


def remove_shared_edges(scaled: SparseMatrix, bases) -> SparseMatrix:
    """Support of ``scaled`` minus the union of the base supports."""
    out = scaled.pattern()
    for base in bases:
        out = pattern_difference(out, base)
    return out


def model_matrix_family(adj: SparseMatrix, selfloop_mode: str = "keep",
                        second_scale_selfloops: str = "keep") -> dict[str, SparseMatrix]:
    """Precompute the six model-facing patterns {A, T, AT, TA, AA, TT}.

    ``selfloop_mode`` applies to the two first-scale matrices, while
    ``second_scale_selfloops`` ("keep" or "remove") controls whether generated
    self-loops survive in the four second-scale products.
    """
    if second_scale_selfloops not in ("keep", "remove"):
        raise ValueError("second_scale_selfloops must be 'keep' or 'remove'")
    out = {}
    for word in MODEL_WORDS:
        mode = selfloop_mode if len(word) == 1 else second_scale_selfloops
        out[word] = build_scaled_adjacency(adj, ScaleSpec(word, mode)).matrix
    return out


# -- edge-weight strategies ---------------------------------------------------


@dataclass(frozen=True)
class Ones:
    """Constant weight 1 on every scaled edge."""


@dataclass(frozen=True)
class Uniform:
    """Independent uniform weights; the wide default range stresses scale freedom."""

    lo: float = 1e-4
    hi: float = 1e4

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError(f"uniform range requires lo < hi, got [{self.lo}, {self.hi}]")


@dataclass(frozen=True)
class PeakMixture:
    """Mixture of narrow Gaussians: weights cluster around the given peaks."""

    peaks: tuple
    weights: tuple
    spread: float = 0.01

    def __post_init__(self):
        if len(self.peaks) != len(self.weights) or not self.peaks:
            raise ValueError("peaks and weights must be non-empty and equal length")
        if abs(sum(self.weights) - 1.0) > 1e-9:
            raise ValueError("mixture weights must sum to 1")
        if self.spread < 0:
            raise ValueError("spread must be non-negative")


def assign_weights(s: SparseMatrix, strategy, seed: int = 0) -> SparseMatrix:
    """Reweight the support of ``s`` per the strategy, deterministically under seed."""
    rng = np.random.default_rng(seed)
    nnz = s.nnz
    if isinstance(strategy, Ones):
        vals = np.ones(nnz)
    elif isinstance(strategy, Uniform):
        vals = rng.uniform(strategy.lo, strategy.hi, size=nnz)
    elif isinstance(strategy, PeakMixture):
        which = rng.choice(len(strategy.peaks), size=nnz, p=np.asarray(strategy.weights))
        vals = np.asarray(strategy.peaks, dtype=float)[which] + rng.normal(0.0, strategy.spread, size=nnz)
    else:
        raise ValueError(f"unknown weight strategy: {strategy!r}")
    return SparseMatrix(s.n_rows, s.n_cols, s.row_offsets, s.col_indices, vals)
