"""Exact integer scoring and division-free cosine ordering."""

from __future__ import annotations

import bisect
import functools
from dataclasses import dataclass

import numpy as np

from .embedding import ValidationError

GREATER, TIE, LESS = 1, 0, -1


def dot_int(q, d) -> int:
    q = np.asarray(q, dtype=np.int64)
    d = np.asarray(d, dtype=np.int64)
    if q.shape != d.shape:
        raise ValidationError(f"dimension mismatch: {q.shape} vs {d.shape}")
    return int(np.dot(q, d))


@dataclass(frozen=True)
class ScoreFraction:
    """Cosine score kept as integers: dot / sqrt(q_sq_norm * d_sq_norm)."""

    dot: int
    q_sq_norm: int
    d_sq_norm: int
    doc_id: int = 0

    def __post_init__(self):
        if self.q_sq_norm < 0 or self.d_sq_norm < 0:
            raise ValidationError("squared norms must be non-negative")

    @property
    def sign(self) -> int:
        # zero-norm vectors carry dot == 0 and therefore sort as cosine 0
        if self.dot == 0 or self.q_sq_norm == 0 or self.d_sq_norm == 0:
            return 0
        return 1 if self.dot > 0 else -1

    def to_float(self) -> float:
        if self.sign == 0:
            return 0.0
        return self.dot / float(np.sqrt(float(self.q_sq_norm) * float(self.d_sq_norm)))


def score_cosine(dot: int, q_sq_norm: int, d_sq_norm: int, doc_id: int = 0) -> ScoreFraction:
    return ScoreFraction(int(dot), int(q_sq_norm), int(d_sq_norm), int(doc_id))


def score_mips(dot: int, doc_id: int = 0) -> ScoreFraction:
    return ScoreFraction(int(dot), 1, 1, int(doc_id))


def compare_cosine(a: ScoreFraction, b: ScoreFraction) -> int:
    """Exact ordering of two cosine fractions without division or square roots.

    Returns GREATER (1) if a scores higher, LESS (-1) if lower, TIE (0).
    """
    sa, sb = a.sign, b.sign
    if sa != sb:
        return GREATER if sa > sb else LESS
    if sa == 0:
        return TIE
    # cos_a > cos_b  <=>  dot_a^2 * Qb*Nb > dot_b^2 * Qa*Na  (both positive)
    lhs = a.dot * a.dot * b.q_sq_norm * b.d_sq_norm
    rhs = b.dot * b.dot * a.q_sq_norm * a.d_sq_norm
    if lhs == rhs:
        return TIE
    bigger = GREATER if lhs > rhs else LESS
    return bigger if sa > 0 else -bigger


def rank_order(a: ScoreFraction, b: ScoreFraction) -> int:
    """Sort comparator: negative if ``a`` ranks ahead of ``b`` (higher score, then lower id)."""
    c = compare_cosine(a, b)
    if c != TIE:
        return -c
    return (a.doc_id > b.doc_id) - (a.doc_id < b.doc_id)


_rank_key = functools.cmp_to_key(rank_order)


def rank_sorted(scores) -> list[ScoreFraction]:
    return sorted(scores, key=_rank_key)


class TopK:
    """Best-``k`` scores in rank order (highest cosine first, ties by ascending doc id)."""

    def __init__(self, k: int, entries=()):
        if k < 1:
            raise ValidationError(f"k must be positive, got {k}")
        self.k = int(k)
        self._keys = []
        for s in entries:
            self.insert(s)

    @property
    def entries(self) -> list[ScoreFraction]:
        return [key.obj for key in self._keys]

    @property
    def doc_ids(self) -> list[int]:
        return [key.obj.doc_id for key in self._keys]

    def __len__(self) -> int:
        return len(self._keys)

    def would_accept(self, s: ScoreFraction) -> bool:
        return len(self._keys) < self.k or rank_order(s, self._keys[-1].obj) < 0

    def insert(self, s: ScoreFraction) -> bool:
        if not self.would_accept(s):
            return False
        bisect.insort(self._keys, _rank_key(s))
        if len(self._keys) > self.k:
            self._keys.pop()
        return True

    def merge(self, other: "TopK") -> "TopK":
        out = TopK(self.k, self.entries)
        for s in other.entries:
            out.insert(s)
        return out

    def copy(self) -> "TopK":
        return TopK(self.k, self.entries)


def topk_insert(t: TopK, s: ScoreFraction) -> TopK:
    """Functional insert: returns a new TopK, leaving ``t`` untouched."""
    out = t.copy()
    out.insert(s)
    return out


def select_topk(dots: np.ndarray, q_sq_norm: int, d_sq_norms: np.ndarray, doc_ids: np.ndarray,
                k: int) -> list[ScoreFraction]:
    """Exact top-``k`` over a whole scan, same result as inserting every score into a TopK.

    A float64 key shortlists candidates with a relative margin far wider than
    its rounding error; the shortlist is then ordered with the exact
    comparator, so float error never decides membership or order.
    """
    dots = np.asarray(dots, dtype=np.int64)
    norms = np.asarray(d_sq_norms, dtype=np.int64)
    doc_ids = np.asarray(doc_ids, dtype=np.int64)
    n = len(dots)
    if k < 1:
        raise ValidationError(f"k must be positive, got {k}")
    if n == 0:
        return []
    live = (norms > 0) & (dots != 0) & (q_sq_norm > 0)
    key = np.zeros(n, dtype=np.float64)
    df = dots[live].astype(np.float64)
    key[live] = np.sign(df) * df * df / norms[live].astype(np.float64)
    if n > k:
        kth = np.partition(key, n - k)[n - k]
        margin = abs(kth) * 1e-9
        pick = np.flatnonzero(key >= kth - margin)
    else:
        pick = np.arange(n)
    shortlist = [
        ScoreFraction(int(dots[i]), int(q_sq_norm), int(norms[i]), int(doc_ids[i])) for i in pick
    ]
    return rank_sorted(shortlist)[:k]
