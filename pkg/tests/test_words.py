from __future__ import annotations

import itertools
from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from asri.errors import DomainError
from asri.words import (
    TIME,
    Alphabet,
    Grading,
    JumpSpec,
    WordPoly,
    collapse_power,
    deconcatenate,
    format_poly,
    format_word,
    grade,
    jump,
    parse_poly,
    parse_word,
    power_grade,
    reduce_word,
    shuffle,
    wiener,
)
from strategies import RICH, UNIT, polys, words

W1, W2 = wiener(1), wiener(2)
J1 = jump(1)


def merge_oracle(u, v, alphabet: Alphabet) -> WordPoly:
    """Quasi-shuffle by enumerating order-preserving merges.

    Each output position takes a letter of u, a letter of v, or (when both
    land there) their bracket.
    """
    out = WordPoly.zero()
    m, n = len(u), len(v)
    for length in range(max(m, n), m + n + 1):
        for pu in itertools.combinations(range(length), m):
            for pv in itertools.combinations(range(length), n):
                if set(pu) | set(pv) != set(range(length)):
                    continue
                slots = [WordPoly.word(())]
                for k in range(length):
                    if k in pu and k in pv:
                        letter = alphabet.bracket(u[pu.index(k)], v[pv.index(k)])
                    elif k in pu:
                        letter = WordPoly.word((u[pu.index(k)],))
                    else:
                        letter = WordPoly.word((v[pv.index(k)],))
                    slots = [s.concat(letter) for s in slots]
                out = out + slots[0]
    return out


# bracket ---------------------------------------------------------------------
def test_bracket_distinct_wiener_vanishes(rich_alphabet):
    assert not rich_alphabet.bracket(W1, W2)


@pytest.mark.parametrize("a", RICH.letters)
def test_bracket_with_time_vanishes(a):
    assert not RICH.bracket(TIME, a)
    assert not RICH.bracket(a, TIME)


def test_bracket_unit_jump_rate_two(unit_alphabet):
    assert unit_alphabet.bracket(J1, J1) == WordPoly({(TIME,): 2, (J1,): 1})


def test_bracket_wiener_is_time(unit_alphabet):
    assert unit_alphabet.bracket(W1, W1) == WordPoly.word((TIME,))


def test_bracket_general_law_uses_moment():
    # sizes {1, -1, 2} equal weight: power 2 is independent, power 4 is not
    spec = JumpSpec(1, Fraction(3), ((1, 1), (-1, 1), (2, 1)))
    A = Alphabet(0, [spec], 3)
    assert spec.independent_powers == (1, 2, 3)
    br = A.bracket(jump(1, 2), jump(1, 2))
    assert br.coefficient((TIME,)) == spec.moment(4) == 3 * Fraction(1 + 1 + 16, 3)
    # v^4 = a v + b v^2 + c v^3 on {1,-1,2}: solve by hand -> v^4 = -2v + v^2 + 2v^3
    assert {w: c for w, c in br.items() if w != (TIME,)} == {(jump(1, 1),): -2, (jump(1, 2),): 1, (jump(1, 3),): 2}


# collapse_power -----------------------------------------------------------------
def test_collapse_standard_poisson_cube(unit_alphabet):
    assert collapse_power(1, 3, unit_alphabet) == WordPoly.word((J1,))


def test_collapse_two_point_square_is_independent():
    A = Alphabet(0, [JumpSpec(1, Fraction(1), ((1, 1), (-1, 1)))], 2)
    assert collapse_power(1, 2, A) == WordPoly.word((jump(1, 2),))
    assert collapse_power(1, 3, A) == WordPoly.word((jump(1, 1),))


def test_collapse_power_one(unit_alphabet):
    assert collapse_power(1, 1, unit_alphabet) == WordPoly.word((J1,))
    with pytest.raises(DomainError):
        collapse_power(1, 0, unit_alphabet)


# quasi-shuffle -------------------------------------------------------------------
def test_quasi_shuffle_wiener_square(unit_alphabet):
    assert unit_alphabet.quasi_shuffle((W1,), (W1,)) == WordPoly({(W1, W1): 2, (TIME,): 1})


def test_quasi_shuffle_unit(unit_alphabet):
    w = (W1, J1, TIME)
    assert unit_alphabet.quasi_shuffle((), w) == WordPoly.word(w)
    assert unit_alphabet.quasi_shuffle(w, ()) == WordPoly.word(w)


def test_quasi_shuffle_letter_with_pair(unit_alphabet):
    got = unit_alphabet.quasi_shuffle((W1,), (W1, W1))
    assert got == WordPoly({(W1, W1, W1): 3, (TIME, W1): 1, (W1, TIME): 1})


@given(words(RICH, 3), words(RICH, 3))
def test_quasi_shuffle_matches_merge_oracle(u, v):
    assert RICH.quasi_shuffle(u, v) == merge_oracle(u, v, RICH)


@given(words(UNIT, 3), words(UNIT, 3))
def test_quasi_shuffle_commutes(u, v):
    assert UNIT.quasi_shuffle(u, v) == UNIT.quasi_shuffle(v, u)


@given(words(RICH, 2), words(RICH, 2), words(RICH, 2))
def test_quasi_shuffle_associates(u, v, w):
    left = RICH.quasi_shuffle_poly(RICH.quasi_shuffle(u, v), WordPoly.word(w))
    right = RICH.quasi_shuffle_poly(WordPoly.word(u), RICH.quasi_shuffle(v, w))
    assert left == right


@given(words(RICH, 3), words(RICH, 3))
def test_quasi_shuffle_keeps_leading_shuffle(u, v):
    # top-length part is the plain shuffle
    top = len(u) + len(v)
    qs = {w: c for w, c in RICH.quasi_shuffle(u, v).items() if len(w) == top}
    assert qs == shuffle(u, v).terms


def test_mean_square_grade_preserved_for_drift_diffusion():
    A = Alphabet(2, [], 4)
    for u in A.words(2):
        for v in A.words(2):
            gu, gv = grade(u, Grading.MEAN_SQUARE), grade(v, Grading.MEAN_SQUARE)
            assert {grade(w, Grading.MEAN_SQUARE) for w in A.quasi_shuffle(u, v).words()} <= {gu + gv}


# shuffle and deconcatenation -------------------------------------------------------
def test_shuffle_examples():
    a, b, c = W1, W2, TIME
    assert shuffle((a,), (b,)) == WordPoly({(a, b): 1, (b, a): 1})
    assert shuffle((), (a, b)) == WordPoly.word((a, b))
    assert shuffle((a,), (b, c)) == WordPoly({(a, b, c): 1, (b, a, c): 1, (b, c, a): 1})


@given(words(RICH, 3), words(RICH, 3))
def test_shuffle_count_is_binomial(u, v):
    total = sum(shuffle(u, v).terms.values())
    assert total == Fraction(len(list(itertools.combinations(range(len(u) + len(v)), len(u)))))


def test_deconcatenate():
    a, b, c = W1, W2, TIME
    assert deconcatenate((a, b)) == [((), (a, b)), ((a,), (b,)), ((a, b), ())]
    assert deconcatenate(()) == [((), ())]
    assert len(deconcatenate((a, b, c))) == 4


# gradings and reduction ---------------------------------------------------------------
def test_grades():
    w = (TIME, W1, TIME)
    assert grade(w, Grading.MEAN_SQUARE) == 5
    assert grade(w, Grading.WORD_LENGTH) == 3
    assert grade((), "ms") == grade((), "wl") == 0
    assert power_grade((TIME, W1, jump(1, 3))) == 6


def test_reduce_word_example():
    w = (TIME, wiener(1), TIME, TIME, wiener(2), jump(4, 3), wiener(3), TIME)
    assert reduce_word(w) == (wiener(1), wiener(2), jump(4, 1), wiener(3))
    assert reduce_word((TIME, TIME, TIME)) == ()
    assert reduce_word((W1, W2)) == (W1, W2)


# text forms ---------------------------------------------------------------------------
@given(words(RICH, 4))
def test_word_text_round_trip(w):
    assert parse_word(format_word(w)) == w


def test_multi_digit_indices_use_braces():
    w = (wiener(12), jump(10, 3))
    assert format_word(w) == "w{12}j{10}^3"
    assert parse_word("w{12}j{10}^3") == w


@given(polys(RICH))
def test_poly_text_round_trip(p):
    assert parse_poly(format_poly(p)) == p


def test_parse_rejects_garbage():
    with pytest.raises(DomainError):
        parse_word("x7")


def test_alphabet_validation():
    with pytest.raises(DomainError):
        Alphabet(-1)
    with pytest.raises(DomainError):
        Alphabet(1, [JumpSpec(1, Fraction(1)), JumpSpec(1, Fraction(2))])
    with pytest.raises(DomainError):
        JumpSpec(1, Fraction(0))
    with pytest.raises(DomainError):
        UNIT.quasi_shuffle((wiener(3),), ())


@given(st.integers(min_value=1, max_value=6))
def test_unit_jump_power_reduces_to_base_letter(p):
    assert UNIT.collapse_power(1, p) == WordPoly.word((J1,))
