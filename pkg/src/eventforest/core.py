"""Token-level math shared by every memory policy.

Tokens are stored as float32 rows; norms, dot products and means are
accumulated in float64. Weights are integer merge multiplicities: a token
that stands for ``w`` original tokens carries weight ``w``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Optional, Sequence, Tuple

import numpy as np

from .errors import InvalidGrid, InvalidTarget, ShapeMismatch, ZeroNormToken

NORM_EPS = 1e-12


def _readonly(x: np.ndarray) -> np.ndarray:
    x.setflags(write=False)
    return x


@dataclass(frozen=True, eq=False)
class TokenMatrix:
    """``n`` embedding rows of dimension ``d`` with per-row merge weights."""

    tokens: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        tokens = np.array(self.tokens, dtype=np.float32, copy=True)
        if tokens.ndim != 2 or tokens.shape[0] < 1 or tokens.shape[1] < 1:
            raise ShapeMismatch(f"tokens must be a non-empty n x d matrix, got shape {tokens.shape}")
        if not np.isfinite(tokens).all():
            raise ShapeMismatch("tokens contain non-finite values")
        weights = np.array(self.weights, dtype=np.int64, copy=True).reshape(-1)
        if weights.shape[0] != tokens.shape[0]:
            raise ShapeMismatch(f"{weights.shape[0]} weights for {tokens.shape[0]} tokens")
        if (weights < 1).any():
            raise ShapeMismatch("weights must be >= 1")
        object.__setattr__(self, "tokens", _readonly(tokens))
        object.__setattr__(self, "weights", _readonly(weights))

    @classmethod
    def from_array(cls, tokens) -> "TokenMatrix":
        tokens = np.asarray(tokens)
        return cls(tokens, np.ones(tokens.shape[0] if tokens.ndim else 0, dtype=np.int64))

    @classmethod
    def _trusted(cls, tokens: np.ndarray, weights: np.ndarray) -> "TokenMatrix":
        # Skips validation; callers guarantee float32 (n, d) tokens and int64 weights >= 1.
        obj = object.__new__(cls)
        object.__setattr__(obj, "tokens", _readonly(tokens))
        object.__setattr__(obj, "weights", _readonly(weights))
        return obj

    @property
    def n(self) -> int:
        return self.tokens.shape[0]

    @property
    def d(self) -> int:
        return self.tokens.shape[1]

    @property
    def total_weight(self) -> int:
        return int(self.weights.sum())

    @cached_property
    def unit(self) -> np.ndarray:
        """Rows scaled to unit length (float64, cached)."""
        return _readonly(unit_rows(self.tokens))

    @cached_property
    def unit32(self) -> np.ndarray:
        return _readonly(self.unit.astype(np.float32))

    def take(self, index) -> "TokenMatrix":
        return TokenMatrix._trusted(self.tokens[index].copy(), self.weights[index].copy())

    def mean(self) -> np.ndarray:
        """Unweighted float64 mean of the rows."""
        return self.tokens.mean(axis=0, dtype=np.float64)

    def __len__(self) -> int:
        return self.n

    def __repr__(self) -> str:
        return f"TokenMatrix(n={self.n}, d={self.d}, total_weight={self.total_weight})"


def concat(parts: Sequence[TokenMatrix]) -> TokenMatrix:
    if not parts:
        raise ShapeMismatch("cannot concatenate zero token matrices")
    if len({p.d for p in parts}) != 1:
        raise ShapeMismatch("token dimensions differ")
    return TokenMatrix._trusted(
        np.concatenate([p.tokens for p in parts]),
        np.concatenate([p.weights for p in parts]),
    )


def _as_rows(x) -> np.ndarray:
    if isinstance(x, TokenMatrix):
        return x.tokens
    x = np.asarray(x)
    return x.reshape(1, -1) if x.ndim == 1 else x


def unit_rows(x) -> np.ndarray:
    """Rows scaled to unit length in float64; raises on degenerate rows."""
    rows = np.asarray(_as_rows(x), dtype=np.float64)
    norms = np.sqrt(np.einsum("ij,ij->i", rows, rows))
    if (norms < NORM_EPS).any():
        raise ZeroNormToken(f"{int((norms < NORM_EPS).sum())} token(s) with norm < {NORM_EPS}")
    return rows / norms[:, None]


def _units(x) -> np.ndarray:
    return x.unit if isinstance(x, TokenMatrix) else unit_rows(x)


def _raw_cosine(a, b) -> np.ndarray:
    ua, ub = _units(a), _units(b)
    if ua.shape[1] != ub.shape[1]:
        raise ShapeMismatch(f"dimension mismatch: {ua.shape[1]} vs {ub.shape[1]}")
    return ua @ ub.T


def cosine_similarity_matrix(a, b) -> np.ndarray:
    """Pairwise cosine similarity, shape ``(a.n, b.n)``, values in [-1, 1]."""
    return np.clip(_raw_cosine(a, b), -1.0, 1.0)


# float32 dot products of unit vectors are off by at most ~d * 2**-24 (< 4e-6 for d = 64);
# screens below allow twice that
_SCREEN_MARGIN = 1e-5
# matching scores are compared at this many decimals, so two cosines that
# differ only by summation-order rounding tie and the lower index wins
_TIE_DECIMALS = 12


def _kth_largest(x: np.ndarray, k: int):
    """Exact k-th largest entry; a strided sample proposes a cut to avoid a full partition."""
    step = 16
    if x.size >= 64 * k and x.size >= 4096:
        sample = x[::step]
        rank = min(sample.size, 2 * (k // step) + 8)
        cut = np.partition(sample, sample.size - rank)[sample.size - rank]
        above = x[x >= cut]
        if above.size >= k:
            return np.partition(above, above.size - k)[above.size - k]
    return np.partition(x, x.size - k)[x.size - k]


def top_k_similarities(a: TokenMatrix, b: TokenMatrix, k: int) -> np.ndarray:
    """The ``k`` largest cross cosines between ``a`` and ``b`` (float64, unordered).

    The k-th largest entry of a float32 screen locates the cut; every entry
    within twice the float32 error of it is rescored exactly in float64.
    """
    if a.d != b.d:
        raise ShapeMismatch(f"dimension mismatch: {a.d} vs {b.d}")
    size = a.n * b.n
    if not 1 <= k <= size:
        raise ValueError(f"k must be in [1, {size}]")
    ua, ub = a.unit, b.unit
    if size <= 4 * a.d:
        flat = (ua @ ub.T).ravel()
    else:
        screen = (a.unit32 @ b.unit32.T).ravel()
        kth = _kth_largest(screen, k)
        cand = np.flatnonzero(screen >= kth - _SCREEN_MARGIN)
        rows, cols = np.divmod(cand, b.n)
        flat = np.einsum("ij,ij->i", ua[rows], ub[cols])
    return np.partition(flat, flat.size - k)[flat.size - k:]


def _best_match(src: TokenMatrix, dst: TokenMatrix):
    """Per source row: index and float64 cosine of its most similar destination.

    Scores are rounded to ``_TIE_DECIMALS``; ties go to the lowest destination
    index. Large products are screened in float32 and only near-maximal
    entries are rescored in float64.
    """
    if src.n * dst.n <= 4 * src.d:
        scores = np.round(_raw_cosine(src, dst), _TIE_DECIMALS)
        best = scores.argmax(axis=1)
        return best, scores[np.arange(src.n), best]
    screen = src.unit32 @ dst.unit32.T
    row_max = screen.max(axis=1)
    rows, cols = np.divmod(np.flatnonzero(screen >= (row_max - _SCREEN_MARGIN)[:, None]), dst.n)
    exact = np.round(np.einsum("ij,ij->i", src.unit[rows], dst.unit[cols]), _TIE_DECIMALS)
    # sort by row, then score descending, then column ascending; first entry per row wins
    order = np.lexsort((cols, -exact, rows))
    first = np.ones(len(order), dtype=bool)
    first[1:] = rows[order][1:] != rows[order][:-1]
    pick = order[first]
    return cols[pick], exact[pick]


def _match_round(a: TokenMatrix, b: TokenMatrix, r: int) -> TokenMatrix:
    """One bipartite soft-matching round that removes ``r`` tokens.

    The larger side proposes (``a`` on a tie). Output keeps the original
    order: surviving rows of ``a`` followed by surviving rows of ``b``.
    """
    a_is_src = a.n >= b.n
    src, dst = (a, b) if a_is_src else (b, a)
    best, best_score = _best_match(src, dst)
    order = np.argsort(-best_score, kind="stable")
    merged = order[:r]

    targets = best[merged]
    by_target = np.argsort(targets, kind="stable")
    uniq, starts = np.unique(targets[by_target], return_index=True)
    moved = merged[by_target]
    wsrc = src.weights[moved]
    add_sum = np.add.reduceat(src.tokens[moved].astype(np.float64) * wsrc[:, None], starts, axis=0)
    add_w = np.add.reduceat(wsrc, starts)

    dst_w = dst.weights.copy()
    dst_tok = dst.tokens.copy()
    new_w = dst_w[uniq] + add_w
    dst_tok[uniq] = ((dst.tokens[uniq].astype(np.float64) * dst_w[uniq, None] + add_sum)
                     / new_w[:, None]).astype(np.float32)
    dst_w[uniq] = new_w

    keep = np.ones(src.n, dtype=bool)
    keep[merged] = False
    dst_part = TokenMatrix._trusted(dst_tok, dst_w)
    if not keep.any():
        return dst_part
    src_part = TokenMatrix._trusted(src.tokens[keep], src.weights[keep])
    return concat([src_part, dst_part] if a_is_src else [dst_part, src_part])


def tome_merge(a: TokenMatrix, b: TokenMatrix, target: int) -> TokenMatrix:
    """Merge the tokens of ``a`` and ``b`` down to exactly ``target`` tokens.

    Each token of the larger set proposes its most similar token in the
    other set; the ``r = a.n + b.n - target`` strongest proposals are
    averaged (weight-weighted) into their destinations. Several sources may
    land on one destination. If ``r`` exceeds the proposing set, the round
    result is split into even/odd positions and matched again until the
    target is met.
    """
    if a.d != b.d:
        raise ShapeMismatch(f"dimension mismatch: {a.d} vs {b.d}")
    total = a.n + b.n
    if target < 1 or target >= total:
        raise InvalidTarget(f"target must be in [1, {total - 1}], got {target}")
    while True:
        r = min(total - target, max(a.n, b.n))
        out = _match_round(a, b, r)
        if out.n == target:
            return out
        a, b = out.take(slice(0, None, 2)), out.take(slice(1, None, 2))
        total = out.n


def merged_timestamp(t_i: float, n_i: int, t_j: float, n_j: int) -> float:
    """Token-count-weighted mean of two node timestamps."""
    if n_i < 1 or n_j < 1:
        raise ValueError("token counts must be >= 1")
    t = (t_i * n_i + t_j * n_j) / (n_i + n_j)
    # rounding can land one ulp outside the pair; the mean never does
    return min(max(t, min(t_i, t_j)), max(t_i, t_j))


def grid_shape(n: int) -> Tuple[int, int]:
    """Default layout for ``n`` tokens: square when possible, else a column."""
    side = int(round(np.sqrt(n)))
    return (side, side) if side * side == n else (n, 1)


def output_grid(out_n: int, grid: Tuple[int, int]) -> Tuple[int, int]:
    """Factor ``out_n`` into a grid that fits inside ``grid``, closest in aspect."""
    h, w = grid
    best = None
    for oh in range(1, out_n + 1):
        if out_n % oh:
            continue
        ow = out_n // oh
        if oh > h or ow > w:
            continue
        # prefer matching aspect ratio, then fewer rows
        key = (abs(np.log((oh / ow) / (h / w))), oh)
        if best is None or key < best[0]:
            best = (key, (oh, ow))
    if best is None:
        raise InvalidGrid(f"{out_n} output tokens cannot be laid out inside a {h}x{w} grid")
    return best[1]


def _cell_edges(size: int, cells: int) -> np.ndarray:
    return (np.arange(cells + 1) * size) // cells


def pool_tokens(
    frame: TokenMatrix,
    out_n: int,
    grid: Optional[Tuple[int, int]] = None,
    out_grid: Optional[Tuple[int, int]] = None,
) -> TokenMatrix:
    """Adaptive average pooling of a row-major token grid to ``out_n`` cells.

    Cells partition the grid with near-uniform boundaries (sizes differ by at
    most one row or column). Each output token is the unweighted mean of its
    cell and carries the summed weight of the cell.
    """
    grid = grid_shape(frame.n) if grid is None else tuple(grid)
    h, w = grid
    if h < 1 or w < 1 or h * w != frame.n:
        raise InvalidGrid(f"grid {h}x{w} does not tile {frame.n} tokens")
    if out_n < 1 or out_n > frame.n:
        raise InvalidGrid(f"cannot pool {frame.n} tokens to {out_n}")
    oh, ow = output_grid(out_n, grid) if out_grid is None else tuple(out_grid)
    if oh * ow != out_n or oh > h or ow > w:
        raise InvalidGrid(f"output grid {oh}x{ow} invalid for {out_n} tokens in {h}x{w}")

    d = frame.d
    if h % oh == 0 and w % ow == 0:
        x = frame.tokens.reshape(oh, h // oh, ow, w // ow, d)
        tokens = x.mean(axis=(1, 3), dtype=np.float64).reshape(out_n, d).astype(np.float32)
        weights = frame.weights.reshape(oh, h // oh, ow, w // ow).sum(axis=(1, 3))
        return TokenMatrix._trusted(tokens, weights.reshape(-1).astype(np.int64))
    rows, cols = _cell_edges(h, oh), _cell_edges(w, ow)
    x = frame.tokens.astype(np.float64).reshape(h, w, d)
    sums = np.add.reduceat(np.add.reduceat(x, rows[:-1], axis=0), cols[:-1], axis=1)
    counts = np.outer(np.diff(rows), np.diff(cols))
    tokens = (sums / counts[:, :, None]).reshape(out_n, d).astype(np.float32)
    wgrid = frame.weights.reshape(h, w)
    weights = np.add.reduceat(np.add.reduceat(wgrid, rows[:-1], axis=0), cols[:-1], axis=1)
    return TokenMatrix._trusted(tokens, weights.reshape(-1).astype(np.int64))


def cell_sizes(n: int, out_n: int, grid=None, out_grid=None) -> np.ndarray:
    """Number of input tokens pooled into each output cell (row-major)."""
    grid = grid_shape(n) if grid is None else tuple(grid)
    oh, ow = output_grid(out_n, grid) if out_grid is None else tuple(out_grid)
    return np.outer(np.diff(_cell_edges(grid[0], oh)), np.diff(_cell_edges(grid[1], ow))).reshape(-1)
