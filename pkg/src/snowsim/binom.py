"""Exact binomial mass/tail computation over arbitrary-precision rationals.

Everything here is exact: success probabilities are ``fractions.Fraction``
values, decimal strings such as ``"0.9555"`` or ``"1.18e-20"`` are parsed
into rationals before any comparison, and no float ever enters a
verification path.  ``verify_bounds`` evaluates the full list of
inequalities that justify the default parameter set (k=80, alpha1=41,
alpha2=72, beta=12 at n>=250) and reports exact margins.
"""

from __future__ import annotations

from dataclasses import dataclass
from decimal import Decimal
from fractions import Fraction
from typing import Callable, Iterable


class DomainError(ValueError):
    """Raised when an argument falls outside the binomial domain."""


def rational(value) -> Fraction:
    """Convert ints, decimal strings (incl. scientific notation) or
    Fractions to an exact Fraction.  Floats are rejected: their binary
    representation is not what the caller wrote down."""
    if isinstance(value, Fraction):
        return value
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, str):
        return Fraction(Decimal(value))
    raise TypeError(f"refusing inexact conversion from {type(value).__name__}")


def _render_decimal(value: Fraction, places: int) -> str:
    """Fixed-point decimal rendering with round-half-to-even."""
    if places < 0:
        raise ValueError("places must be >= 0")
    sign = "-" if value < 0 else ""
    num, den = abs(value.numerator), value.denominator
    scaled = num * 10**places
    q, r = divmod(scaled, den)
    double = 2 * r
    if double > den or (double == den and q % 2 == 1):
        q += 1
    digits = str(q).rjust(places + 1, "0")
    if places == 0:
        return sign + digits
    return f"{sign}{digits[:-places]}.{digits[-places:]}"


def _render_sci(value: Fraction, sig: int = 4) -> str:
    """Scientific-notation rendering, exact up to the shown digits."""
    if value == 0:
        return "0"
    sign = "-" if value < 0 else ""
    num, den = abs(value.numerator), value.denominator
    # Initial exponent estimate from digit counts, then correct it.
    exp = len(str(num)) - len(str(den))
    while num * 10 ** max(0, -exp) < den * 10 ** max(0, exp):
        exp -= 1
    while num * 10 ** max(0, -(exp + 1)) >= den * 10 ** max(0, exp + 1):
        exp += 1
    mantissa = Fraction(num, den) / Fraction(10) ** exp
    text = _render_decimal(mantissa, sig - 1)
    if text.startswith("10."):  # rounding carried over a decade
        exp += 1
        text = _render_decimal(mantissa / 10, sig - 1)
    return f"{sign}{text}e{exp:+03d}"


@dataclass(frozen=True)
class Probability:
    """An exact probability in [0, 1]."""

    value: Fraction

    def __post_init__(self):
        if not 0 <= self.value <= 1:
            raise DomainError(f"probability out of range: {self.value}")

    def decimal(self, places: int = 12) -> str:
        return _render_decimal(self.value, places)

    def sci(self, sig: int = 4) -> str:
        return _render_sci(self.value, sig)

    def __float__(self) -> float:
        return float(self.value)


def _check_args(k: int, x: Fraction, m: int) -> None:
    if k < 0:
        raise DomainError(f"k must be >= 0, got {k}")
    if not 0 <= m <= k:
        raise DomainError(f"m must lie in [0, {k}], got {m}")
    if not 0 <= x <= 1:
        raise DomainError(f"x must lie in [0, 1], got {x}")


def _pmf_terms(k: int, x: Fraction, lo: int, hi: int) -> Iterable[Fraction]:
    """Yield C(k,m) x^m (1-x)^(k-m) for m in [lo, hi] via the ratio
    recurrence, avoiding any combinatorial helper."""
    if x == 0:
        yield from (Fraction(1) if m == 0 else Fraction(0) for m in range(lo, hi + 1))
        return
    if x == 1:
        yield from (Fraction(1) if m == k else Fraction(0) for m in range(lo, hi + 1))
        return
    # Walk the recurrence up from m=0.
    term = (1 - x) ** k
    ratio = x / (1 - x)
    for m in range(0, hi + 1):
        if m >= lo:
            yield term
        term = term * (k - m) * ratio / (m + 1)


def bin_pmf(k: int, x, m: int) -> Probability:
    """Probability that exactly ``m`` of ``k`` independent trials succeed,
    each with success probability ``x``."""
    x = rational(x)
    _check_args(k, x, m)
    for term in _pmf_terms(k, x, m, m):
        return Probability(term)
    raise AssertionError("unreachable")


def bin_tail_ge(k: int, x, m: int) -> Probability:
    """Probability that at least ``m`` of ``k`` trials succeed."""
    x = rational(x)
    _check_args(k, x, m)
    return Probability(sum(_pmf_terms(k, x, m, k), Fraction(0)))


def bin_tail_le(k: int, x, m: int) -> Probability:
    """Probability that at most ``m`` of ``k`` trials succeed."""
    x = rational(x)
    _check_args(k, x, m)
    return Probability(sum(_pmf_terms(k, x, 0, m), Fraction(0)))


def union_bound(per_event, opportunities: int) -> Probability:
    """min(1, per_event * opportunities), exact."""
    if opportunities < 0:
        raise DomainError("opportunities must be >= 0")
    p = rational(per_event) if not isinstance(per_event, Probability) else per_event.value
    return Probability(min(Fraction(1), p * opportunities))


@dataclass(frozen=True)
class BoundResult:
    name: str
    statement: str
    value: Fraction
    relation: str  # "<", ">", "<="
    bound: Fraction

    @property
    def ok(self) -> bool:
        if self.relation == "<":
            return self.value < self.bound
        if self.relation == ">":
            return self.value > self.bound
        if self.relation == "<=":
            return self.value <= self.bound
        raise ValueError(self.relation)

    @property
    def margin(self) -> Fraction:
        """Distance to the bound, positive iff the inequality holds
        (zero counts as holding only for '<=')."""
        if self.relation == ">":
            return self.value - self.bound
        return self.bound - self.value

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "statement": self.statement,
            "value": _render_sci(self.value, 6),
            "relation": self.relation,
            "bound": _render_sci(self.bound, 6),
            "margin": _render_sci(self.margin, 4),
            "ok": self.ok,
        }


@dataclass
class BoundReport:
    results: list[BoundResult]

    @property
    def all_pass(self) -> bool:
        return all(r.ok for r in self.results)

    def as_dict(self) -> dict:
        return {"all_pass": self.all_pass, "bounds": [r.as_dict() for r in self.results]}

    def as_table(self) -> str:
        rows = [("bound", "value", "margin", "verdict")]
        for r in self.results:
            rows.append(
                (r.statement, _render_sci(r.value, 6), _render_sci(r.margin, 4),
                 "PASS" if r.ok else "FAIL")
            )
        widths = [max(len(row[i]) for row in rows) for i in range(4)]
        lines = []
        for idx, row in enumerate(rows):
            lines.append("  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)).rstrip())
            if idx == 0:
                lines.append("  ".join("-" * widths[i] for i in range(4)))
        return "\n".join(lines)


def _tail_ge(k, x, m) -> Callable[[], Fraction]:
    return lambda: bin_tail_ge(k, rational(x), m).value


def _tail_le(k, x, m) -> Callable[[], Fraction]:
    return lambda: bin_tail_le(k, rational(x), m).value


def _const(expr: str) -> Callable[[], Fraction]:
    # Product/sum of decimal literals, e.g. "1.6e11 * 4e-24" or "7e-13 + 2e-7".
    def evaluate() -> Fraction:
        total = Fraction(0)
        for part in expr.split("+"):
            prod = Fraction(1)
            for factor in part.split("*"):
                prod *= rational(factor.strip())
            total += prod
        return total

    return evaluate


def _power(base: str, exponent: int) -> Callable[[], Fraction]:
    return lambda: rational(base) ** exponent


# The inequality list backing the default parameter set.  Each entry is
# (slug, human-readable statement, value thunk, relation, bound).
BOUND_SPECS: list[tuple[str, str, Callable[[], Fraction], str, str]] = [
    ("regrow_single", "Bin(80, 0.6, >=41) > 0.9555",
     _tail_ge(80, "0.6", 41), ">", "0.9555"),
    ("regrow_population", "Bin(200, 0.9555, <=149) < 4e-24",
     _tail_le(200, "0.9555", 149), "<", "4e-24"),
    ("false_support_single", "Bin(80, 0.8, >=72) < 0.0131",
     _tail_ge(80, "0.8", 72), "<", "0.0131"),
    ("false_support_streak", "0.0131^12 < 1e-22",
     _power("0.0131", 12), "<", "1e-22"),
    ("locked_majority_miss", "Bin(80, 0.6, <=8) < 1.18e-20",
     _tail_le(80, "0.6", 8), "<", "1.18e-20"),
    ("incompatible_sweep", "Bin(80, 0.4, >=72) < 1.18e-20",
     _tail_ge(80, "0.4", 72), "<", "1.18e-20"),
    ("branch_support_major", "Bin(80, 0.8, >=72) < 0.01309",
     _tail_ge(80, "0.8", 72), "<", "0.01309"),
    ("branch_support_minor", "Bin(80, 0.6, >=72) < 3e-9",
     _tail_ge(80, "0.6", 72), "<", "3e-9"),
    ("safe_majority_miss", "Bin(80, 0.54, <=8) < 2e-16",
     _tail_le(80, "0.54", 8), "<", "2e-16"),
    ("safe_incompatible_sweep", "Bin(80, 0.46, >=72) < 2e-16",
     _tail_ge(80, "0.46", 72), "<", "2e-16"),
    ("safe_branch_major", "Bin(80, 0.64, >=72) < 2e-7",
     _tail_ge(80, "0.64", 72), "<", "2e-7"),
    ("safe_branch_minor", "Bin(80, 0.55, >=72) < 2e-11",
     _tail_ge(80, "0.55", 72), "<", "2e-11"),
    ("union_regrow", "1.6e11 * 4e-24 < 7e-13",
     _const("1.6e11 * 4e-24"), "<", "7e-13"),
    ("union_streak", "1e-22 * 1e4 * 1.6e11 < 2e-7",
     _const("1e-22 * 1e4 * 1.6e11"), "<", "2e-7"),
    ("union_total_lockstep", "7e-13 + 2e-7 < 3e-7",
     _const("7e-13 + 2e-7"), "<", "3e-7"),
    ("union_locked_miss", "1.6e11 * 1e4 * 1.18e-20 < 1.9e-5",
     _const("1.6e11 * 1e4 * 1.18e-20"), "<", "1.9e-5"),
    ("union_total_selfpaced", "1.9e-5 + 2e-7 < 2e-5",
     _const("1.9e-5 + 2e-7"), "<", "2e-5"),
    ("union_safe_window", "2e4 * 1e4 * 2e-16 <= 4e-8",
     _const("2e4 * 1e4 * 2e-16"), "<=", "4e-8"),
    ("branch_sum", "0.01309 + 3e-9 + 1.18e-20 < 0.0131",
     _const("0.01309 + 3e-9 + 1.18e-20"), "<", "0.0131"),
    ("safe_branch_sum", "2e-7 + 2e-11 + 2e-16 < 3e-7",
     _const("2e-7 + 2e-11 + 2e-16"), "<", "3e-7"),
    ("safe_total", "3e-7 + 8e-8 + 2e-7 < 6e-7",
     _const("3e-7 + 8e-8 + 2e-7"), "<", "6e-7"),
]


def verify_bounds(inject_failure: bool = False) -> BoundReport:
    """Evaluate every inequality in ``BOUND_SPECS`` exactly.

    ``inject_failure`` appends a deliberately false inequality; it exists
    as a negative-control hook for the CLI tests.
    """
    results = []
    for slug, statement, thunk, relation, bound in BOUND_SPECS:
        results.append(BoundResult(slug, statement, thunk(), relation, rational(bound)))
    if inject_failure:
        results.append(
            BoundResult("negative_control", "Bin(1, 0.5, >=1) < 0.1",
                        bin_tail_ge(1, "0.5", 1).value, "<", rational("0.1"))
        )
    return BoundReport(results)
