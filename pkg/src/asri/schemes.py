"""Scheme tables: operator words paired with products of iterated integrals.

A row ``(w, expr)`` contributes ``expr(sample) * V_w(id)(y)`` to a step.  The
expressions only ever reference integrals of words that are no longer than
the truncation order, which is what makes the antisymmetric schemes cheap.
"""

from __future__ import annotations

import enum
import hashlib
import itertools
import json
import re
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .endo import antipode_word
from .errors import DomainError, MissingIntegralError
from .words import (
    EMPTY,
    TIME,
    Alphabet,
    Grading,
    JumpSpec,
    Letter,
    Word,
    WordPoly,
    format_word,
    grade,
    parse_word,
    word_key,
)

Factors = tuple  # sorted tuple of non-empty words


def _norm_factors(words: Iterable[Word]) -> Factors:
    return tuple(sorted((tuple(w) for w in words if w), key=word_key))


class IntegralExpr:
    """Rational combination of products of iterated integrals.

    Each term is ``(coefficient, factors)`` where ``factors`` is a sorted
    tuple of words; the empty tuple stands for the constant 1.
    """

    __slots__ = ("_terms",)

    def __init__(self, terms: Iterable[tuple] = ()):
        acc: dict[Factors, Fraction] = {}
        for coeff, factors in terms:
            key = _norm_factors(factors)
            acc[key] = acc.get(key, 0) + Fraction(coeff)
        self._terms = {k: v for k, v in acc.items() if v != 0}

    @classmethod
    def integral(cls, w: Sequence[Letter], coeff=1) -> "IntegralExpr":
        return cls([(coeff, (tuple(w),))])

    @classmethod
    def from_poly(cls, p: WordPoly) -> "IntegralExpr":
        """Linear image of a word polynomial (one factor per term)."""
        return cls((c, (w,)) for w, c in p.items())

    @property
    def terms(self) -> list[tuple[Fraction, Factors]]:
        keys = sorted(self._terms, key=lambda f: (len(f), [word_key(w) for w in f]))
        return [(self._terms[k], k) for k in keys]

    def words(self) -> set[Word]:
        return {w for f in self._terms for w in f}

    def __bool__(self) -> bool:
        return bool(self._terms)

    def __eq__(self, other) -> bool:
        return isinstance(other, IntegralExpr) and self._terms == other._terms

    def __hash__(self) -> int:
        return hash(frozenset(self._terms.items()))

    def __add__(self, other: "IntegralExpr") -> "IntegralExpr":
        return IntegralExpr([(c, f) for f, c in self._terms.items()] + [(c, f) for f, c in other._terms.items()])

    def __neg__(self) -> "IntegralExpr":
        return self * -1

    def __sub__(self, other: "IntegralExpr") -> "IntegralExpr":
        return self + (-other)

    def __mul__(self, other) -> "IntegralExpr":
        if isinstance(other, IntegralExpr):
            return IntegralExpr(
                (a * b, f + g) for f, a in self._terms.items() for g, b in other._terms.items()
            )
        return IntegralExpr((c * Fraction(other), f) for f, c in self._terms.items())

    __rmul__ = __mul__

    def word_image(self, alphabet: Alphabet) -> WordPoly:
        """Expand every product through the quasi-shuffle into a word polynomial."""
        total = WordPoly.zero()
        for factors, c in self._terms.items():
            prod = WordPoly.word(EMPTY)
            for w in factors:
                prod = alphabet.quasi_shuffle_poly(prod, WordPoly.word(w))
            total = total + prod * c
        return total

    def evaluate(self, integrals: Mapping[Word, np.ndarray | float]):
        """Numeric value given ``integrals[w]`` for each factor word."""
        total = 0.0
        for factors, c in self._terms.items():
            term = float(c)
            for w in factors:
                try:
                    term = term * integrals[w]
                except KeyError:
                    raise MissingIntegralError(f"sample lacks the integral of {format_word(w)}") from None
            total = total + term
        return total

    def __str__(self) -> str:
        return format_expr(self)

    __repr__ = __str__


def format_expr(e: IntegralExpr) -> str:
    if not e:
        return "0"
    parts = []
    for c, factors in e.terms:
        body = "".join(f"I({format_word(w)})" for w in factors)
        parts.append(f"{c}*{body}" if body else f"{c}")
    return " + ".join(parts)


def parse_expr(text: str) -> IntegralExpr:
    text = text.strip()
    if text == "0":
        return IntegralExpr()
    terms = []
    for chunk in text.split(" + "):
        chunk = chunk.strip()
        coeff, _, rest = chunk.partition("*")
        words = re.findall(r"I\(([^)]*)\)", rest)
        if rest and "".join(f"I({w})" for w in words) != rest:
            raise DomainError(f"malformed integral term {chunk!r}")
        terms.append((Fraction(coeff), tuple(parse_word(w) for w in words)))
    return IntegralExpr(terms)


class SchemeKind(str, enum.Enum):
    TAYLOR = "taylor"
    ASRI = "asri"
    MODIFIED_ASRI = "masri"


@dataclass
class SchemeTable:
    """Operator words with their integral coefficients."""

    kind: SchemeKind
    order: int
    grading: Grading
    alphabet: Alphabet
    rows: list[tuple[Word, IntegralExpr]] = field(default_factory=list)

    @property
    def name(self) -> str:
        if self.kind is SchemeKind.TAYLOR:
            return f"taylor-{self.grading.value}-{self.order}"
        return f"{self.kind.value}-{self.order}"

    @property
    def required_integral_words(self) -> set[Word]:
        out: set[Word] = set()
        for _, expr in self.rows:
            out |= expr.words()
        return out

    def row_dict(self) -> dict[Word, IntegralExpr]:
        return dict(self.rows)

    def active_rows(self) -> list[tuple[Word, IntegralExpr]]:
        """Rows with a non-zero coefficient, the empty word excluded."""
        return [(w, e) for w, e in self.rows if w and e]

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, SchemeTable)
            and (self.kind, self.order, self.grading, self.alphabet) == (other.kind, other.order, other.grading, other.alphabet)
            and self.rows == other.rows
        )


def _sorted_rows(rows: dict[Word, IntegralExpr]) -> list[tuple[Word, IntegralExpr]]:
    return [(w, rows[w]) for w in sorted(rows, key=word_key)]


def _check_order(n: int) -> None:
    if n < 1:
        raise DomainError(f"scheme order must be at least 1, got {n}")


def taylor_wl(n: int, alphabet: Alphabet) -> SchemeTable:
    """Every word of length at most ``n`` with its own integral."""
    _check_order(n)
    rows = {w: IntegralExpr.integral(w) for w in alphabet.words(n)}
    return SchemeTable(SchemeKind.TAYLOR, n, Grading.WORD_LENGTH, alphabet, _sorted_rows(rows))


def augmentation_word(n: int) -> Word | None:
    """The all-time word added to odd mean-square truncations."""
    return (TIME,) * ((n + 1) // 2) if n % 2 == 1 else None


def taylor_ms(n: int, alphabet: Alphabet) -> SchemeTable:
    """Words of mean-square grade at most ``n``, plus 0^{(n+1)/2} for odd ``n``."""
    _check_order(n)
    rows = {w: IntegralExpr.integral(w) for w in alphabet.words(n) if grade(w, Grading.MEAN_SQUARE) <= n}
    aug = augmentation_word(n)
    if aug is not None:
        rows[aug] = IntegralExpr.integral(aug)
    return SchemeTable(SchemeKind.TAYLOR, n, Grading.MEAN_SQUARE, alphabet, _sorted_rows(rows))


def _compositions(w: Word, k: int) -> Iterable[tuple[Word, ...]]:
    for cuts in itertools.combinations(range(1, len(w)), k - 1):
        bounds = (0,) + cuts + (len(w),)
        yield tuple(w[a:b] for a, b in zip(bounds, bounds[1:]))


def asri_row(w: Sequence[Letter], alphabet: Alphabet) -> IntegralExpr:
    """Coefficient of a leading word: the coshlog part plus half of (S - S_hat).

    Returns the empty expression when the word's image (w + S(w))/2 vanishes,
    which happens for odd-length palindromes.
    """
    w = tuple(w)
    m = len(w)
    expr = IntegralExpr()
    for k in range(2, m + 1):
        c = Fraction((-1) ** k, 2)
        expr = expr + IntegralExpr((c, parts) for parts in _compositions(w, k))
    sign_rev = WordPoly.word(w[::-1], (-1) ** m)
    correction = sign_rev - antipode_word(w, alphabet)
    expr = expr + IntegralExpr.from_poly(correction) * Fraction(1, 2)
    if not expr.word_image(alphabet):
        return IntegralExpr()
    return expr


def asri_direct(n: int, alphabet: Alphabet) -> SchemeTable:
    """Antisymmetric sign reverse integrator of word-length order ``n``."""
    _check_order(n)
    alphabet = alphabet.with_max_grade(max(alphabet.max_grade, n + 1))
    rows = {w: IntegralExpr.integral(w) for w in alphabet.words(n)}
    for w in alphabet.words(n + 1, n + 1):
        rows[w] = asri_row(w, alphabet)
    return SchemeTable(SchemeKind.ASRI, n, Grading.WORD_LENGTH, alphabet, _sorted_rows(rows))


def reduce_repeated(a: Letter, k: int, alphabet: Alphabet) -> IntegralExpr:
    """I_{a^k} as a combination of products of shorter integrals.

    Uses the quasi-shuffle Newton identity
    ``k a^k = sum_{i=1..k} (-1)^(i-1) a^(k-i) * [a^i]`` where ``[a^i]`` is
    the i-fold iterated bracket, a polynomial of single letters.
    """
    if k < 1:
        raise DomainError(f"repetition count must be at least 1, got {k}")
    alphabet.check_letter(a)
    if k == 1:
        return IntegralExpr.integral((a,))
    out = IntegralExpr()
    for i in range(1, k + 1):
        power_sum = IntegralExpr.from_poly(alphabet.iterated_bracket((a,) * i))
        out = out + IntegralExpr.integral((a,) * (k - i)) * power_sum * Fraction((-1) ** (i - 1), k)
    return out


def asri_modified(n: int, alphabet: Alphabet) -> SchemeTable:
    """ASRI of even order with the single-letter leading words restored."""
    if n % 2:
        raise DomainError(f"the modified scheme needs an even order, got {n}")
    table = asri_direct(n, alphabet)
    rows = table.row_dict()
    for a in table.alphabet.letters:
        rows[(a,) * (n + 1)] = reduce_repeated(a, n + 1, table.alphabet)
    return SchemeTable(SchemeKind.MODIFIED_ASRI, n, Grading.WORD_LENGTH, table.alphabet, _sorted_rows(rows))


def build_table(kind: SchemeKind | str, n: int, alphabet: Alphabet, grading: Grading | str = Grading.WORD_LENGTH) -> SchemeTable:
    kind = SchemeKind(kind)
    if kind is SchemeKind.TAYLOR:
        return taylor_ms(n, alphabet) if Grading(grading) is Grading.MEAN_SQUARE else taylor_wl(n, alphabet)
    if kind is SchemeKind.ASRI:
        return asri_direct(n, alphabet)
    return asri_modified(n, alphabet)


def parse_scheme_name(name: str) -> tuple[SchemeKind, int, Grading]:
    """Parse ``taylor-ms-2``, ``taylor-wl-1``, ``asri-2`` or ``masri-2``."""
    parts = name.strip().lower().split("-")
    try:
        if parts[0] == "taylor" and len(parts) == 3:
            return SchemeKind.TAYLOR, int(parts[2]), Grading(parts[1])
        if parts[0] in ("asri", "masri") and len(parts) == 2:
            return SchemeKind(parts[0]), int(parts[1]), Grading.WORD_LENGTH
    except ValueError:
        pass
    raise DomainError(f"unknown scheme name {name!r}")


# ---------------------------------------------------------------------------
# text format


def alphabet_to_json(alphabet: Alphabet) -> dict:
    return {
        "wiener": alphabet.wiener_count,
        "jumps": [
            {
                "index": s.index,
                "intensity": str(s.intensity),
                "sizes": [[str(v), str(w)] for v, w in s.sizes],
            }
            for s in alphabet.jump_specs
        ],
    }


def alphabet_from_json(data: Mapping, max_grade: int = 4) -> Alphabet:
    specs = [
        JumpSpec(
            int(j["index"]),
            Fraction(str(j["intensity"])),
            tuple((Fraction(str(v)), Fraction(str(w))) for v, w in j.get("sizes", [["1", "1"]])),
        )
        for j in data.get("jumps", [])
    ]
    return Alphabet(int(data.get("wiener", 0)), specs, max_grade)


def serialize(table: SchemeTable) -> str:
    lines = [
        f"kind {table.kind.value}",
        f"order {table.order}",
        f"grading {table.grading.value}",
        f"alphabet {json.dumps(alphabet_to_json(table.alphabet), sort_keys=True)}",
    ]
    lines += [f"row {format_word(w)} : {format_expr(e)}" for w, e in table.rows]
    return "\n".join(lines) + "\n"


def parse_table(text: str) -> SchemeTable:
    header: dict[str, str] = {}
    rows: list[tuple[Word, IntegralExpr]] = []
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, _, rest = line.partition(" ")
        if key == "row":
            w, sep, expr = rest.partition(" : ")
            if not sep:
                raise DomainError(f"malformed row {line!r}")
            rows.append((parse_word(w), parse_expr(expr)))
        else:
            header[key] = rest
    try:
        order = int(header["order"])
        alphabet = alphabet_from_json(json.loads(header["alphabet"]), max_grade=order + 1)
        return SchemeTable(SchemeKind(header["kind"]), order, Grading(header["grading"]), alphabet, rows)
    except KeyError as exc:
        raise DomainError(f"table header lacks {exc.args[0]!r}") from None


def cached_table(
    kind: SchemeKind | str,
    n: int,
    alphabet: Alphabet,
    grading: Grading | str = Grading.WORD_LENGTH,
    cache_dir: str | Path | None = None,
) -> SchemeTable:
    """Build a table, reusing a serialized copy under ``cache_dir`` when present."""
    if cache_dir is None:
        return build_table(kind, n, alphabet, grading)
    kind = SchemeKind(kind)
    grading = Grading(grading) if kind is SchemeKind.TAYLOR else Grading.WORD_LENGTH
    tag = json.dumps(alphabet_to_json(alphabet), sort_keys=True)
    digest = hashlib.sha256(tag.encode()).hexdigest()[:16]
    path = Path(cache_dir) / f"{kind.value}-{grading.value}-{n}-{digest}.table"
    if path.exists():
        return parse_table(path.read_text())
    table = build_table(kind, n, alphabet, grading)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(serialize(table))
    return table
