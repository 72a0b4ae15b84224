"""Helpers for the finite bit strings that preferences and locks range over.

Strings are plain ``str`` of ``'0'``/``'1'`` characters; the prefix
relation is ``startswith``.  Two strings are *compatible* when one is a
prefix of the other.
"""

from __future__ import annotations

from typing import Iterable, Sequence


def is_prefix(a: str, b: str) -> bool:
    """True iff ``a`` is an initial segment of ``b``."""
    return b.startswith(a)


def compatible(a: str, b: str) -> bool:
    """True iff one string extends the other."""
    if len(a) <= len(b):
        return b.startswith(a)
    return a.startswith(b)


def lcp_len(a: str, b: str) -> int:
    """Length of the longest common prefix, with fast paths for the
    common cases where one string extends the other."""
    if a is b:
        return len(a)
    n = min(len(a), len(b))
    if a[:n] == b[:n]:
        return n
    lo, hi = 0, n  # invariant: a[:lo] == b[:lo], a[:hi] != b[:hi]
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if a[:mid] == b[:mid]:
            lo = mid
        else:
            hi = mid
    return lo


def supported_prefix(values: Iterable[str], threshold: int) -> str | None:
    """The longest string that at least ``threshold`` of ``values`` extend.

    Returns ``None`` when fewer than ``threshold`` values exist at all
    (not even the empty string qualifies).  With ``threshold`` above half
    the population the result is unique; ties below that are resolved
    toward '0' deterministically.
    """
    active: Sequence[str] = [v for v in values if v is not None]
    if len(active) < threshold or threshold <= 0:
        return None if threshold > 0 else ""
    depth = 0
    while True:
        zeros = ones = 0
        for v in active:
            if len(v) > depth:
                if v[depth] == "0":
                    zeros += 1
                else:
                    ones += 1
        if zeros >= threshold:
            active = [v for v in active if len(v) > depth and v[depth] == "0"]
        elif ones >= threshold:
            active = [v for v in active if len(v) > depth and v[depth] == "1"]
        else:
            return active[0][:depth] if active else ""
        depth += 1
