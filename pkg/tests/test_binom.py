import itertools
import math
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from snowsim.binom import (
    DomainError,
    Probability,
    bin_pmf,
    bin_tail_ge,
    bin_tail_le,
    rational,
    union_bound,
    verify_bounds,
)


def enum_pmf(k: int, x: Fraction, m: int) -> Fraction:
    """Exhaustive-enumeration oracle: walk all 2^k outcomes."""
    total = Fraction(0)
    for bits in itertools.product((0, 1), repeat=k):
        ones = sum(bits)
        if ones == m:
            total += x**ones * (1 - x) ** (k - ones)
    return total


def comb_tail_ge(k: int, x: Fraction, m: int) -> Fraction:
    """Term-by-term summation oracle using math.comb directly."""
    return sum(
        (Fraction(math.comb(k, j)) * x**j * (1 - x) ** (k - j) for j in range(m, k + 1)),
        Fraction(0),
    )


class TestPmf:
    def test_single_fair_trial(self):
        assert bin_pmf(1, Fraction(1, 2), 1).value == Fraction(1, 2)

    def test_degenerate_success_probability(self):
        assert bin_pmf(7, 0, 0).value == 1
        assert bin_pmf(7, 0, 3).value == 0
        assert bin_pmf(7, 1, 7).value == 1

    def test_four_trials_two_successes(self):
        # 6 of the 16 equally likely outcomes have exactly two successes
        assert enum_pmf(4, Fraction(1, 2), 2) == Fraction(3, 8)
        assert bin_pmf(4, Fraction(1, 2), 2).value == Fraction(3, 8)

    @given(
        k=st.integers(min_value=0, max_value=9),
        num=st.integers(min_value=0, max_value=12),
        den=st.integers(min_value=1, max_value=12),
    )
    @settings(max_examples=60, deadline=None)
    def test_matches_enumeration(self, k, num, den):
        x = Fraction(min(num, den), den)
        for m in range(k + 1):
            assert bin_pmf(k, x, m).value == enum_pmf(k, x, m)

    def test_domain_errors(self):
        with pytest.raises(DomainError):
            bin_pmf(4, Fraction(1, 2), 5)
        with pytest.raises(DomainError):
            bin_pmf(4, Fraction(1, 2), -1)
        with pytest.raises(DomainError):
            bin_pmf(4, Fraction(3, 2), 1)


class TestTails:
    def test_whole_support(self):
        assert bin_tail_ge(80, "0.37", 0).value == 1
        assert bin_tail_le(80, "0.37", 80).value == 1

    def test_regrowth_bound(self):
        assert bin_tail_ge(80, "0.6", 41).value > rational("0.9555")

    def test_false_support_bound(self):
        assert bin_tail_ge(80, "0.8", 72).value < rational("0.0131")

    def test_locked_majority_miss_bound(self):
        assert bin_tail_le(80, "0.6", 8).value < rational("1.18e-20")

    def test_rational_equals_decimal_input(self):
        product = Fraction(3, 4) * Fraction(4, 5)  # 0.75 * 0.8 rendered exactly
        assert product == Fraction(3, 5)
        assert bin_tail_ge(80, product, 41).value == bin_tail_ge(80, "0.6", 41).value

    @given(
        k=st.integers(min_value=0, max_value=100),
        num=st.integers(min_value=0, max_value=20),
        den=st.integers(min_value=1, max_value=20),
        mfrac=st.floats(min_value=0.0, max_value=1.0),
    )
    @settings(max_examples=80, deadline=None)
    def test_matches_comb_summation(self, k, num, den, mfrac):
        x = Fraction(min(num, den), den)
        m = int(round(mfrac * k))
        assert bin_tail_ge(k, x, m).value == comb_tail_ge(k, x, m)

    @given(
        k=st.integers(min_value=1, max_value=60),
        num=st.integers(min_value=0, max_value=9),
        den=st.integers(min_value=1, max_value=9),
    )
    @settings(max_examples=60, deadline=None)
    def test_pmf_sums_to_one(self, k, num, den):
        x = Fraction(min(num, den), den)
        total = sum((bin_pmf(k, x, m).value for m in range(k + 1)), Fraction(0))
        assert total == 1

    @given(
        k=st.integers(min_value=1, max_value=60),
        num=st.integers(min_value=0, max_value=9),
        den=st.integers(min_value=1, max_value=9),
        m=st.integers(min_value=1, max_value=60),
    )
    @settings(max_examples=60, deadline=None)
    def test_tail_complement(self, k, num, den, m):
        x = Fraction(min(num, den), den)
        m = min(m, k)
        assert bin_tail_ge(k, x, m).value + bin_tail_le(k, x, m - 1).value == 1

    def test_monotone_in_x_and_m(self):
        xs = [Fraction(i, 10) for i in range(11)]
        for k in (5, 17, 33):
            for m in (0, k // 2, k):
                vals = [bin_tail_ge(k, x, m).value for x in xs]
                assert vals == sorted(vals)
            for x in (Fraction(1, 3), Fraction(7, 9)):
                vals = [bin_tail_ge(k, x, m).value for m in range(k + 1)]
                assert vals == sorted(vals, reverse=True)


class TestUnionBound:
    def test_accounting_products(self):
        assert union_bound("4e-24", int(1.6e11)).value < rational("7e-13")
        assert union_bound("1e-22", 10**4 * int(1.6e11)).value < rational("2e-7")

    def test_zero_opportunities(self):
        assert union_bound("0.5", 0).value == 0

    def test_clamps_at_one(self):
        assert union_bound("0.5", 10).value == 1

    def test_negative_opportunities_rejected(self):
        with pytest.raises(DomainError):
            union_bound("0.5", -1)


class TestVerifyBounds:
    def test_all_pass(self):
        report = verify_bounds()
        assert report.all_pass
        assert len(report.results) >= 12
        for result in report.results:
            assert result.ok, result.statement

    def test_negative_control(self):
        report = verify_bounds(inject_failure=True)
        assert not report.all_pass

    def test_report_serializes(self):
        report = verify_bounds()
        data = report.as_dict()
        assert data["all_pass"] is True
        assert len(data["bounds"]) == len(report.results)
        table = report.as_table()
        assert "PASS" in table and "FAIL" not in table


class TestProbabilityRendering:
    def test_decimal_round_half_even(self):
        assert Probability(Fraction(1, 8)).decimal(2) == "0.12"  # 0.125 ties to even
        assert Probability(Fraction(3, 8)).decimal(2) == "0.38"
        assert Probability(Fraction(1, 3)).decimal(6) == "0.333333"

    def test_sci_rendering(self):
        assert Probability(Fraction(1, 2)).sci(3) == "5.00e-01"
        tiny = bin_tail_le(80, "0.6", 8)
        assert tiny.sci(3) == "1.17e-20"

    def test_range_enforced(self):
        with pytest.raises(DomainError):
            Probability(Fraction(3, 2))

    def test_floats_never_enter_verification_paths(self):
        with pytest.raises(TypeError):
            rational(0.6)
        with pytest.raises(TypeError):
            bin_tail_ge(80, 0.6, 41)
