"""Letters, words and the quasi-shuffle algebra with its covariation bracket.

All coefficients are exact :class:`fractions.Fraction` values.  A word is a
plain tuple of :class:`Letter` values, so words hash quickly and compare in
the canonical letter order.  Text forms are ``0`` for time, ``w1`` for a
Wiener letter and ``j1^3`` for the third compensated power bracket of jump
process 1; the empty word renders as ``()``.
"""

from __future__ import annotations

import enum
import itertools
import re
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Iterable, Iterator, Mapping, NamedTuple, Sequence, Union

from .errors import DomainError

Rational = Union[int, Fraction]

TIME_KIND, WIENER_KIND, JUMP_KIND = 0, 1, 2


class Letter(NamedTuple):
    """One driving process.

    ``kind`` is 0 (time), 1 (Wiener) or 2 (jump).  Tuple ordering gives the
    canonical order Time < Wiener by index < Jump by (index, power).
    """

    kind: int
    index: int = 0
    power: int = 0

    @property
    def is_time(self) -> bool:
        return self.kind == TIME_KIND

    @property
    def is_wiener(self) -> bool:
        return self.kind == WIENER_KIND

    @property
    def is_jump(self) -> bool:
        return self.kind == JUMP_KIND

    def __str__(self) -> str:
        return format_letter(self)

    def __repr__(self) -> str:
        return f"Letter({format_letter(self)})"


TIME = Letter(TIME_KIND, 0, 0)


def wiener(index: int) -> Letter:
    if index < 1:
        raise DomainError(f"Wiener index must be positive, got {index}")
    return Letter(WIENER_KIND, index, 0)


def jump(index: int, power: int = 1) -> Letter:
    if index < 1:
        raise DomainError(f"jump index must be positive, got {index}")
    if power < 1:
        raise DomainError(f"jump power must be at least 1, got {power}")
    return Letter(JUMP_KIND, index, power)


Word = tuple  # tuple[Letter, ...]
EMPTY: Word = ()


# ---------------------------------------------------------------------------
# text forms

# single-digit indices and powers are written bare, longer ones in braces
# ("w{12}"), so "w10" unambiguously reads as w1 followed by the time letter
_LETTER_RE = re.compile(r"0|w(\d|\{\d+\})|j(\d|\{\d+\})(?:\^(\d|\{\d+\}))?")


def _index_text(i: int) -> str:
    return str(i) if i < 10 else f"{{{i}}}"


def format_letter(a: Letter) -> str:
    if a.kind == TIME_KIND:
        return "0"
    if a.kind == WIENER_KIND:
        return f"w{_index_text(a.index)}"
    base = f"j{_index_text(a.index)}"
    return base if a.power == 1 else f"{base}^{_index_text(a.power)}"


def format_word(w: Sequence[Letter]) -> str:
    if not w:
        return "()"
    return "".join(format_letter(a) for a in w)


def parse_word(text: str) -> Word:
    """Inverse of :func:`format_word`."""
    text = text.strip()
    if text in ("()", ""):
        return EMPTY
    letters = []
    pos = 0
    while pos < len(text):
        m = _LETTER_RE.match(text, pos)
        if m is None:
            raise DomainError(f"cannot parse word {text!r} at position {pos}")
        if m.group(0) == "0":
            letters.append(TIME)
        elif m.group(1) is not None:
            letters.append(wiener(int(m.group(1).strip("{}"))))
        else:
            letters.append(jump(int(m.group(2).strip("{}")), int((m.group(3) or "1").strip("{}"))))
        pos = m.end()
    return tuple(letters)


def word_key(w: Sequence[Letter]) -> tuple:
    """Sort key: shorter words first, then lexicographic in letter order."""
    return (len(w), tuple(w))


# ---------------------------------------------------------------------------
# polynomials


class WordPoly:
    """Finite rational linear combination of words.

    Instances are immutable; zero coefficients are never stored and equality
    is structural.
    """

    __slots__ = ("_terms", "_hash")

    def __init__(self, terms: Mapping[Word, Rational] | Iterable[tuple[Word, Rational]] = ()):
        items = terms.items() if isinstance(terms, Mapping) else terms
        acc: dict[Word, Fraction] = {}
        for w, c in items:
            w = tuple(w)
            acc[w] = acc.get(w, 0) + Fraction(c)
        self._terms = {w: c for w, c in acc.items() if c != 0}
        self._hash = None

    @classmethod
    def _raw(cls, terms: dict) -> "WordPoly":
        obj = cls.__new__(cls)
        obj._terms = {w: c for w, c in terms.items() if c != 0}
        obj._hash = None
        return obj

    @classmethod
    def word(cls, w: Sequence[Letter], coeff: Rational = 1) -> "WordPoly":
        return cls({tuple(w): coeff})

    @classmethod
    def zero(cls) -> "WordPoly":
        return cls._raw({})

    @property
    def terms(self) -> dict[Word, Fraction]:
        return dict(self._terms)

    def items(self) -> list[tuple[Word, Fraction]]:
        """Terms in canonical order."""
        return sorted(self._terms.items(), key=lambda kv: word_key(kv[0]))

    def coefficient(self, w: Sequence[Letter]) -> Fraction:
        return self._terms.get(tuple(w), Fraction(0))

    def words(self) -> list[Word]:
        return [w for w, _ in self.items()]

    def max_length(self) -> int:
        return max((len(w) for w in self._terms), default=-1)

    def __iter__(self) -> Iterator[tuple[Word, Fraction]]:
        return iter(self.items())

    def __len__(self) -> int:
        return len(self._terms)

    def __bool__(self) -> bool:
        return bool(self._terms)

    def __eq__(self, other) -> bool:
        if isinstance(other, WordPoly):
            return self._terms == other._terms
        if other == 0:
            return not self._terms
        return NotImplemented

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash(frozenset(self._terms.items()))
        return self._hash

    def __add__(self, other: "WordPoly") -> "WordPoly":
        if not isinstance(other, WordPoly):
            return NotImplemented
        out = dict(self._terms)
        for w, c in other._terms.items():
            out[w] = out.get(w, 0) + c
        return WordPoly._raw(out)

    def __neg__(self) -> "WordPoly":
        return WordPoly._raw({w: -c for w, c in self._terms.items()})

    def __sub__(self, other: "WordPoly") -> "WordPoly":
        if not isinstance(other, WordPoly):
            return NotImplemented
        return self + (-other)

    def __mul__(self, scalar: Rational) -> "WordPoly":
        if isinstance(scalar, WordPoly):
            return NotImplemented
        s = Fraction(scalar)
        return WordPoly._raw({w: c * s for w, c in self._terms.items()})

    __rmul__ = __mul__

    def concat(self, other: "WordPoly") -> "WordPoly":
        """Bilinear extension of word concatenation."""
        out: dict[Word, Fraction] = {}
        for u, a in self._terms.items():
            for v, b in other._terms.items():
                w = u + v
                out[w] = out.get(w, 0) + a * b
        return WordPoly._raw(out)

    def map_words(self, fn) -> "WordPoly":
        """Apply a word -> WordPoly map linearly."""
        out: dict[Word, Fraction] = {}
        for w, c in self._terms.items():
            for v, d in fn(w)._terms.items():
                out[v] = out.get(v, 0) + c * d
        return WordPoly._raw(out)

    def truncate(self, max_length: int) -> "WordPoly":
        return WordPoly._raw({w: c for w, c in self._terms.items() if len(w) <= max_length})

    def __str__(self) -> str:
        return format_poly(self)

    def __repr__(self) -> str:
        return f"WordPoly({format_poly(self)!r})"


def format_poly(p: WordPoly) -> str:
    if not p:
        return "0"
    return " + ".join(f"{c}*{format_word(w)}" for w, c in p.items())


def parse_poly(text: str) -> WordPoly:
    """Inverse of :func:`format_poly`."""
    text = text.strip()
    if text == "0":
        return WordPoly.zero()
    terms = []
    for chunk in text.split(" + "):
        coeff, sep, word = chunk.strip().partition("*")
        if not sep:
            raise DomainError(f"polynomial term {chunk!r} lacks 'coefficient*word' form")
        terms.append((parse_word(word), Fraction(coeff)))
    return WordPoly(terms)


# ---------------------------------------------------------------------------
# exact linear algebra for the power-bracket independence test


def _express(basis: list[list[Fraction]], target: list[Fraction]) -> list[Fraction] | None:
    """Coefficients x with sum_i x_i basis[i] == target, or None if impossible.

    Plain Gauss-Jordan elimination over the rationals on the augmented
    transposed system.
    """
    n = len(basis)
    rows = len(target)
    mat = [[basis[j][r] for j in range(n)] + [target[r]] for r in range(rows)]
    pivots = []
    r = 0
    for col in range(n):
        piv = next((i for i in range(r, rows) if mat[i][col] != 0), None)
        if piv is None:
            continue
        mat[r], mat[piv] = mat[piv], mat[r]
        inv = 1 / mat[r][col]
        mat[r] = [x * inv for x in mat[r]]
        for i in range(rows):
            if i != r and mat[i][col] != 0:
                f = mat[i][col]
                mat[i] = [x - f * y for x, y in zip(mat[i], mat[r])]
        pivots.append(col)
        r += 1
    if any(mat[i][n] != 0 for i in range(r, rows)):
        return None
    x = [Fraction(0)] * n
    for i, col in enumerate(pivots):
        x[col] = mat[i][n]
    return x


@dataclass(frozen=True)
class JumpSpec:
    """A compound Poisson driver with a finite jump-size law.

    ``sizes`` holds (size, weight) pairs; weights are normalised to sum to one
    and duplicate sizes are merged, so the Levy measure is
    ``intensity * sum_k weight_k * delta(size_k)``.
    """

    index: int
    intensity: Fraction
    sizes: tuple = ((Fraction(1), Fraction(1)),)

    def __post_init__(self):
        if self.index < 1:
            raise DomainError(f"jump index must be positive, got {self.index}")
        lam = Fraction(self.intensity)
        if lam <= 0:
            raise DomainError(f"jump intensity must be positive, got {lam}")
        merged: dict[Fraction, Fraction] = {}
        for size, weight in self.sizes:
            size, weight = Fraction(size), Fraction(weight)
            if size == 0:
                raise DomainError("jump sizes must be non-zero")
            if weight <= 0:
                raise DomainError("jump-size weights must be positive")
            merged[size] = merged.get(size, 0) + weight
        if not merged:
            raise DomainError("jump-size law is empty")
        total = sum(merged.values())
        law = tuple(sorted((s, w / total) for s, w in merged.items()))
        object.__setattr__(self, "intensity", lam)
        object.__setattr__(self, "sizes", law)

    @property
    def is_unit(self) -> bool:
        return self.sizes == ((Fraction(1), Fraction(1)),)

    def moment(self, m: int) -> Fraction:
        """Integral of v^m against the Levy measure (intensity included)."""
        return self.intensity * sum(w * s**m for s, w in self.sizes)

    def _jump_vector(self, p: int) -> list[Fraction]:
        # Counting-process coordinates of the p-th compensated power bracket:
        # sum over jumps of size^p, split by distinct size.  The time coordinate
        # is the matching compensator and never carries independent information.
        return [s**p for s, _ in self.sizes]

    @property
    def independent_powers(self) -> tuple[int, ...]:
        return _independent_powers(self)

    def power_coordinates(self, p: int) -> dict[int, Fraction]:
        """Express bracket power ``p`` over the independent powers."""
        if p < 1:
            raise DomainError(f"power must be at least 1, got {p}")
        powers = self.independent_powers
        if p in powers:
            return {p: Fraction(1)}
        coeffs = _express([self._jump_vector(q) for q in powers], self._jump_vector(p))
        if coeffs is None:  # pragma: no cover - the greedy basis spans everything
            raise DomainError(f"power {p} not in the span of {powers}")
        return {q: c for q, c in zip(powers, coeffs) if c != 0}


@lru_cache(maxsize=None)
def _independent_powers(spec: JumpSpec) -> tuple[int, ...]:
    chosen: list[int] = []
    vectors: list[list[Fraction]] = []
    target_rank = len(spec.sizes)
    p = 1
    # the span of the counting coordinates has dimension len(sizes), so the
    # greedy scan stops once that many powers have been accepted
    while len(chosen) < target_rank:
        vec = spec._jump_vector(p)
        if not vectors or _express(vectors, vec) is None:
            chosen.append(p)
            vectors.append(vec)
        p += 1
    return tuple(chosen)


class Grading(str, enum.Enum):
    WORD_LENGTH = "wl"
    MEAN_SQUARE = "ms"


class Alphabet:
    """Closed letter set with its covariation bracket.

    Parameters:
        wiener_count: number of Wiener processes (letters ``w1..wd``).
        jump_specs: jump drivers; each contributes one letter per independent
            compensated power bracket.
        max_grade: largest word length used when enumerating basis words.
    """

    _shared_caches: dict = {}

    def __init__(self, wiener_count: int = 0, jump_specs: Sequence[JumpSpec] = (), max_grade: int = 4):
        if wiener_count < 0:
            raise DomainError("wiener_count must be non-negative")
        if max_grade < 1:
            raise DomainError("max_grade must be at least 1")
        indices = [s.index for s in jump_specs]
        if len(set(indices)) != len(indices):
            raise DomainError(f"duplicate jump indices {indices}")
        self.wiener_count = wiener_count
        self.jump_specs = tuple(sorted(jump_specs, key=lambda s: s.index))
        self.max_grade = max_grade
        self._specs = {s.index: s for s in self.jump_specs}
        letters = [TIME] + [wiener(i) for i in range(1, wiener_count + 1)]
        for s in self.jump_specs:
            letters += [jump(s.index, p) for p in s.independent_powers]
        self.letters: tuple[Letter, ...] = tuple(letters)
        self._letter_set = frozenset(letters)
        # caches are shared between alphabets with the same letters
        caches = Alphabet._shared_caches.setdefault(self._key(), ({}, {}, {}))
        self._bracket_cache, self._qs_cache, self._eprod_cache = caches

    # identity -------------------------------------------------------------
    def _key(self):
        return (self.wiener_count, self.jump_specs)

    def __eq__(self, other) -> bool:
        return isinstance(other, Alphabet) and self._key() == other._key()

    def __hash__(self) -> int:
        return hash(self._key())

    def __repr__(self) -> str:
        jumps = ", ".join(f"j{s.index}(lambda={s.intensity})" for s in self.jump_specs)
        return f"Alphabet(wiener={self.wiener_count}, jumps=[{jumps}], N={self.max_grade})"

    def with_max_grade(self, n: int) -> "Alphabet":
        return Alphabet(self.wiener_count, self.jump_specs, n)

    # letters --------------------------------------------------------------
    def jump_spec(self, index: int) -> JumpSpec:
        try:
            return self._specs[index]
        except KeyError:
            raise DomainError(f"unknown jump index {index}") from None

    def check_letter(self, a: Letter) -> None:
        if a not in self._letter_set:
            raise DomainError(f"letter {format_letter(a)} is not in {self!r}")

    def moment(self, index: int, m: int) -> Fraction:
        return self.jump_spec(index).moment(m)

    def non_time_letters(self) -> tuple[Letter, ...]:
        return tuple(a for a in self.letters if not a.is_time)

    def words(self, max_length: int | None = None, min_length: int = 0) -> list[Word]:
        """All words with ``min_length <= |w| <= max_length`` in canonical order."""
        top = self.max_grade if max_length is None else max_length
        out: list[Word] = []
        for n in range(min_length, top + 1):
            out.extend(itertools.product(self.letters, repeat=n))
        return out

    # bracket --------------------------------------------------------------
    def collapse_power(self, index: int, p: int) -> WordPoly:
        spec = self.jump_spec(index)
        return WordPoly({(jump(index, q),): c for q, c in spec.power_coordinates(p).items()})

    def bracket(self, a: Letter, b: Letter) -> WordPoly:
        key = (a, b) if a <= b else (b, a)
        hit = self._bracket_cache.get(key)
        if hit is not None:
            return hit
        self.check_letter(a)
        self.check_letter(b)
        a, b = key
        if a.is_time or a.index != b.index or a.kind != b.kind:
            out = WordPoly.zero()
        elif a.is_wiener:
            out = WordPoly.word((TIME,))
        else:
            total = a.power + b.power
            out = WordPoly.word((TIME,), self.moment(a.index, total)) + self.collapse_power(a.index, total)
        self._bracket_cache[key] = out
        return out

    def bracket_with(self, a: Letter, p: WordPoly) -> WordPoly:
        """[a, p] for a polynomial ``p`` of single letters."""
        out = WordPoly.zero()
        for w, c in p._terms.items():
            if len(w) != 1:
                raise DomainError("bracket arguments must be letters")
            out = out + self.bracket(a, w[0]) * c
        return out

    def iterated_bracket(self, w: Sequence[Letter]) -> WordPoly:
        """[a1,[a2,...[a_{k-1},a_k]...]] as a polynomial of letters."""
        if not w:
            raise DomainError("iterated bracket of the empty word")
        out = WordPoly.word((w[-1],))
        for a in reversed(w[:-1]):
            out = self.bracket_with(a, out)
            if not out:
                break
        return out

    # products -------------------------------------------------------------
    def _qs(self, u: Word, v: Word) -> dict[Word, Fraction]:
        if not u:
            return {v: Fraction(1)}
        if not v:
            return {u: Fraction(1)}
        key = (u, v)
        hit = self._qs_cache.get(key)
        if hit is not None:
            return hit
        a, b = u[-1], v[-1]
        out: dict[Word, Fraction] = {}
        for w, c in self._qs(u[:-1], v).items():
            w = w + (a,)
            out[w] = out.get(w, 0) + c
        for w, c in self._qs(u, v[:-1]).items():
            w = w + (b,)
            out[w] = out.get(w, 0) + c
        br = self.bracket(a, b)
        if br:
            inner = self._qs(u[:-1], v[:-1])
            for (letter,), d in br._terms.items():
                for w, c in inner.items():
                    w = w + (letter,)
                    out[w] = out.get(w, 0) + c * d
        out = {w: c for w, c in out.items() if c != 0}
        self._qs_cache[key] = out
        return out

    def quasi_shuffle(self, u: Sequence[Letter], v: Sequence[Letter]) -> WordPoly:
        u, v = tuple(u), tuple(v)
        for a in u + v:
            self.check_letter(a)
        return WordPoly._raw(self._qs(u, v))

    def quasi_shuffle_poly(self, p: WordPoly, q: WordPoly) -> WordPoly:
        out: dict[Word, Fraction] = {}
        for u, a in p._terms.items():
            for v, b in q._terms.items():
                for w, c in self._qs(u, v).items():
                    out[w] = out.get(w, 0) + a * b * c
        return WordPoly._raw(out)


# ---------------------------------------------------------------------------
# module-level operations


def bracket(a: Letter, b: Letter, alphabet: Alphabet) -> WordPoly:
    return alphabet.bracket(a, b)


def collapse_power(index: int, p: int, alphabet: Alphabet) -> WordPoly:
    if p < 1:
        raise DomainError(f"power must be at least 1, got {p}")
    return alphabet.collapse_power(index, p)


def quasi_shuffle(u: Sequence[Letter], v: Sequence[Letter], alphabet: Alphabet) -> WordPoly:
    return alphabet.quasi_shuffle(u, v)


@lru_cache(maxsize=None)
def _shuffle(u: Word, v: Word) -> dict:
    if not u:
        return {v: 1}
    if not v:
        return {u: 1}
    out: dict[Word, int] = {}
    for w, c in _shuffle(u[:-1], v).items():
        w = w + (u[-1],)
        out[w] = out.get(w, 0) + c
    for w, c in _shuffle(u, v[:-1]).items():
        w = w + (v[-1],)
        out[w] = out.get(w, 0) + c
    return out


def shuffle(u: Sequence[Letter], v: Sequence[Letter]) -> WordPoly:
    return WordPoly._raw({w: Fraction(c) for w, c in _shuffle(tuple(u), tuple(v)).items()})


def shuffle_poly(p: WordPoly, q: WordPoly) -> WordPoly:
    out: dict[Word, Fraction] = {}
    for u, a in p._terms.items():
        for v, b in q._terms.items():
            for w, c in _shuffle(u, v).items():
                out[w] = out.get(w, 0) + a * b * c
    return WordPoly._raw(out)


def deconcatenate(w: Sequence[Letter]) -> list[tuple[Word, Word]]:
    w = tuple(w)
    return [(w[:k], w[k:]) for k in range(len(w) + 1)]


def grade(w: Sequence[Letter], scheme: Grading | str) -> int:
    scheme = Grading(scheme)
    if scheme is Grading.WORD_LENGTH:
        return len(w)
    zeta = sum(1 for a in w if a.is_time)
    return 2 * zeta + (len(w) - zeta)


def power_grade(w: Sequence[Letter]) -> int:
    """Time counts 2, Wiener letters 1 and a jump power bracket its power."""
    return sum(2 if a.is_time else (1 if a.is_wiener else a.power) for a in w)


def reduce_word(w: Sequence[Letter]) -> Word:
    return tuple(jump(a.index, 1) if a.is_jump else a for a in w if not a.is_time)


def iterated_bracket(w: Sequence[Letter], alphabet: Alphabet) -> WordPoly:
    return alphabet.iterated_bracket(w)


def standard_alphabet(wiener_count: int = 1, intensities: Sequence[Rational] = (), max_grade: int = 4) -> Alphabet:
    """Alphabet with unit-jump Poisson drivers indexed from 1."""
    specs = [JumpSpec(i + 1, Fraction(lam)) for i, lam in enumerate(intensities)]
    return Alphabet(wiener_count, specs, max_grade)
