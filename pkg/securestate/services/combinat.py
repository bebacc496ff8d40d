"""
Sensor-subset hypotheses in common sequential (lexicographic) order.

Ordinals are 1-based: for q=4, m=2 the order is
{1,2}, {1,3}, {1,4}, {2,3}, {2,4}, {3,4}.
"""
import logging
import math
from dataclasses import dataclass
from itertools import combinations
from typing import Iterator, Sequence, Tuple

from securestate.errors import CombinatoricsError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SubsetIndex:
    subset: Tuple[int, ...]
    ordinal: int


def choose(p: int, k: int, strict: bool = False) -> int:
    """
    Exact binomial coefficient C(p, k).

    k > p is 0 by convention; with ``strict=True`` it raises instead so
    callers can tell an invalid request from a genuine zero count.
    """
    if p < 0 or k < 0:
        raise CombinatoricsError(f"choose() needs non-negative arguments, got ({p}, {k})")
    if k > p:
        if strict:
            raise CombinatoricsError(
                f"choose({p}, {k}) requested with k > p",
                [{"field": "k", "message": "k exceeds p", "p": p, "k": k}],
            )
        logger.debug(f"choose({p}, {k}) with k > p -> 0")
        return 0
    return math.comb(p, k)


def _check_q_m(q: int, m: int) -> None:
    if q < 0 or m < 0:
        raise CombinatoricsError(f"subset enumeration needs q, m >= 0, got q={q}, m={m}")
    if m > q:
        raise CombinatoricsError(
            f"cannot choose {m} sensors out of {q}",
            [{"field": "m", "message": "subset size exceeds sensor count", "q": q, "m": m}],
        )


def enumerate_subsets(q: int, m: int) -> Iterator[SubsetIndex]:
    """Lazily yields all C(q, m) subsets of {1..q} with their ordinals"""
    _check_q_m(q, m)
    for ordinal, subset in enumerate(combinations(range(1, q + 1), m), start=1):
        yield SubsetIndex(subset=subset, ordinal=ordinal)


def subset_ordinal(q: int, subset: Sequence[int]) -> int:
    """Lexicographic rank (1-based) of a sorted subset among all same-size subsets of {1..q}"""
    items = sorted(int(i) for i in subset)
    m = len(items)
    _check_q_m(q, m)
    if len(set(items)) != m or any(i < 1 or i > q for i in items):
        raise CombinatoricsError(f"{list(subset)} is not a subset of 1..{q}")
    rank = 0
    previous = 0
    for position, value in enumerate(items):
        remaining = m - position - 1
        for skipped in range(previous + 1, value):
            rank += choose(q - skipped, remaining)
        previous = value
    return rank + 1


def subset_at(q: int, m: int, ordinal: int) -> Tuple[int, ...]:
    """Inverse of subset_ordinal"""
    _check_q_m(q, m)
    total = choose(q, m)
    if not 1 <= ordinal <= total:
        raise CombinatoricsError(f"ordinal {ordinal} outside 1..{total} for q={q}, m={m}")
    rank = ordinal - 1
    items = []
    candidate = 1
    for position in range(m):
        remaining = m - position - 1
        while True:
            block = choose(q - candidate, remaining)
            if rank < block:
                break
            rank -= block
            candidate += 1
        items.append(candidate)
        candidate += 1
    return tuple(items)


def sesvs_guarantee_holds(q: int, s: int, tau: int) -> bool:
    """
    Majority rule for the same-value search: true iff C(q, s+τ) < 2·C(q−s, τ).

    When it holds, the C(q−s, τ) true-valued candidates outnumber all the
    others, so the cluster search cannot be ambiguous.
    """
    if s < 0 or tau < 1:
        raise CombinatoricsError(f"need s >= 0 and tau >= 1, got s={s}, tau={tau}")
    if s + tau > q - 1:
        raise CombinatoricsError(
            f"q={q} sensors cannot host s+tau={s + tau} deletions with one sensor to spare",
            [{"field": "tau", "message": "requires q >= s + tau + 1", "q": q, "s": s, "tau": tau}],
        )
    return choose(q, s + tau) < 2 * choose(q - s, tau)
