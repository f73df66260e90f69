"""Linear maps on the graded word space and the endomorphism inner product.

A :class:`GradedEndo` stores its action on every basis word of length at most
``max_grade``.  Convolution, the reversal family, the expectation map and the
Gram-weighted inner product are all exact.
"""

from __future__ import annotations

import enum
import itertools
import math
from fractions import Fraction
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .errors import DomainError
from .words import (
    EMPTY,
    TIME,
    Alphabet,
    Grading,
    Word,
    WordPoly,
    format_poly,
    format_word,
    grade,
    parse_poly,
    parse_word,
    shuffle_poly,
    _shuffle,
)


class Product(str, enum.Enum):
    QUASI_SHUFFLE = "quasi-shuffle"
    SHUFFLE = "shuffle"


class GradedEndo:
    """Endomorphism of the span of words of length <= ``max_grade``.

    ``action`` maps basis words to images; absent words map to zero.  Images
    never contain words longer than ``max_grade``; when an operation had to
    drop such words ``truncated`` is set.
    """

    __slots__ = ("alphabet", "max_grade", "_action", "truncated")

    def __init__(self, alphabet: Alphabet, max_grade: int, action: Mapping[Word, WordPoly], truncated: bool = False):
        self.alphabet = alphabet
        self.max_grade = max_grade
        clean: dict[Word, WordPoly] = {}
        for w, img in action.items():
            if len(w) > max_grade:
                raise DomainError(f"basis word {format_word(w)} exceeds grade {max_grade}")
            if img.max_length() > max_grade:
                img = img.truncate(max_grade)
                truncated = True
            if img:
                clean[tuple(w)] = img
        self._action = clean
        self.truncated = truncated

    # construction ---------------------------------------------------------
    @classmethod
    def from_function(cls, alphabet: Alphabet, max_grade: int, fn: Callable[[Word], WordPoly]) -> "GradedEndo":
        return cls(alphabet, max_grade, {w: fn(w) for w in alphabet.words(max_grade)})

    def basis(self) -> list[Word]:
        return self.alphabet.words(self.max_grade)

    def __call__(self, w: Sequence) -> WordPoly:
        w = tuple(w)
        if len(w) > self.max_grade:
            raise DomainError(f"word {format_word(w)} exceeds grade {self.max_grade}")
        return self._action.get(w, WordPoly.zero())

    def apply(self, p: WordPoly) -> WordPoly:
        return p.map_words(self)

    def support(self) -> list[Word]:
        return list(self._action)

    # algebra --------------------------------------------------------------
    def _check(self, other: "GradedEndo") -> None:
        if self.alphabet != other.alphabet or self.max_grade != other.max_grade:
            raise DomainError("endomorphisms live on different graded spaces")

    def __add__(self, other: "GradedEndo") -> "GradedEndo":
        self._check(other)
        out = dict(self._action)
        for w, img in other._action.items():
            out[w] = out[w] + img if w in out else img
        return GradedEndo(self.alphabet, self.max_grade, out, self.truncated or other.truncated)

    def __neg__(self) -> "GradedEndo":
        return self * -1

    def __sub__(self, other: "GradedEndo") -> "GradedEndo":
        return self + (-other)

    def __mul__(self, scalar) -> "GradedEndo":
        s = Fraction(scalar)
        return GradedEndo(self.alphabet, self.max_grade, {w: img * s for w, img in self._action.items()}, self.truncated)

    __rmul__ = __mul__

    def compose(self, other: "GradedEndo") -> "GradedEndo":
        """``self o other``: apply ``other`` first."""
        self._check(other)
        return GradedEndo(
            self.alphabet,
            self.max_grade,
            {w: self.apply(img) for w, img in other._action.items()},
            self.truncated or other.truncated,
        )

    def __matmul__(self, other: "GradedEndo") -> "GradedEndo":
        return self.compose(other)

    def __eq__(self, other) -> bool:
        if not isinstance(other, GradedEndo):
            return NotImplemented
        return (
            self.alphabet == other.alphabet
            and self.max_grade == other.max_grade
            and self._action == other._action
        )

    def __hash__(self):
        return hash((self.max_grade, frozenset(self._action.items())))

    def restrict(self, keep: Callable[[Word], bool]) -> "GradedEndo":
        """Zero the action on inputs for which ``keep`` is false."""
        return GradedEndo(
            self.alphabet, self.max_grade, {w: img for w, img in self._action.items() if keep(w)}, self.truncated
        )

    def dump(self) -> str:
        """One ``word -> polynomial`` line per basis word."""
        return "\n".join(f"{format_word(w)} -> {format_poly(self(w))}" for w in self.basis()) + "\n"

    @classmethod
    def load(cls, alphabet: Alphabet, max_grade: int, text: str) -> "GradedEndo":
        action = {}
        for line in text.splitlines():
            if not line.strip():
                continue
            lhs, _, rhs = line.partition(" -> ")
            action[parse_word(lhs)] = parse_poly(rhs)
        return cls(alphabet, max_grade, action)

    def __repr__(self) -> str:
        return f"GradedEndo(N={self.max_grade}, support={len(self._action)} words)"


# ---------------------------------------------------------------------------
# basic endomorphisms


def nu(alphabet: Alphabet, max_grade: int | None = None) -> GradedEndo:
    n = alphabet.max_grade if max_grade is None else max_grade
    return GradedEndo(alphabet, n, {EMPTY: WordPoly.word(EMPTY)})


def identity(alphabet: Alphabet, max_grade: int | None = None) -> GradedEndo:
    n = alphabet.max_grade if max_grade is None else max_grade
    return GradedEndo(alphabet, n, {w: WordPoly.word(w) for w in alphabet.words(n)})


def aug_ideal(alphabet: Alphabet, max_grade: int | None = None) -> GradedEndo:
    """Identity on non-empty words, zero on the empty word."""
    return identity(alphabet, max_grade) - nu(alphabet, max_grade)


def reversal(alphabet: Alphabet, max_grade: int | None = None) -> GradedEndo:
    n = alphabet.max_grade if max_grade is None else max_grade
    return GradedEndo(alphabet, n, {w: WordPoly.word(w[::-1]) for w in alphabet.words(n)})


def sign_reversal(alphabet: Alphabet, max_grade: int | None = None) -> GradedEndo:
    n = alphabet.max_grade if max_grade is None else max_grade
    return GradedEndo(alphabet, n, {w: WordPoly.word(w[::-1], (-1) ** len(w)) for w in alphabet.words(n)})


def _compositions(n: int) -> Iterable[tuple[int, ...]]:
    """Cut points of all compositions of ``n`` into positive parts."""
    if n == 0:
        yield (0,)
        return
    for k in range(n):
        for cuts in itertools.combinations(range(1, n), k):
            yield (0,) + cuts + (n,)


def antipode_word(w: Word, alphabet: Alphabet) -> WordPoly:
    """Sum over block factorizations of the reversed word of bracketed blocks."""
    rev = w[::-1]
    total = WordPoly.zero()
    for cuts in _compositions(len(rev)):
        term = WordPoly.word(EMPTY)
        for lo, hi in zip(cuts, cuts[1:]):
            term = term.concat(alphabet.iterated_bracket(rev[lo:hi]))
            if not term:
                break
        total = total + term
    return total * (-1) ** len(w)


def antipode(alphabet: Alphabet, product: Product | str = Product.QUASI_SHUFFLE, max_grade: int | None = None) -> GradedEndo:
    if Product(product) is Product.SHUFFLE:
        return sign_reversal(alphabet, max_grade)
    n = alphabet.max_grade if max_grade is None else max_grade
    return GradedEndo(alphabet, n, {w: antipode_word(w, alphabet) for w in alphabet.words(n)})


# ---------------------------------------------------------------------------
# convolution


def _product_dict(alphabet: Alphabet, product: Product):
    if product is Product.QUASI_SHUFFLE:
        return alphabet._qs
    return lambda u, v: _shuffle(u, v)


def convolve(F: GradedEndo, G: GradedEndo, product: Product | str = Product.QUASI_SHUFFLE) -> GradedEndo:
    """(F * G)(w) = sum over w = uv of F(u) (product) G(v)."""
    F._check(G)
    product = Product(product)
    mult = _product_dict(F.alphabet, product)
    n = F.max_grade
    truncated = F.truncated or G.truncated
    action: dict[Word, WordPoly] = {}
    for w in F.basis():
        acc: dict[Word, Fraction] = {}
        for k in range(len(w) + 1):
            fu = F._action.get(w[:k])
            if fu is None:
                continue
            gv = G._action.get(w[k:])
            if gv is None:
                continue
            for x, a in fu._terms.items():
                for y, b in gv._terms.items():
                    ab = a * b
                    for z, c in mult(x, y).items():
                        if len(z) > n:
                            truncated = True
                            continue
                        acc[z] = acc.get(z, 0) + ab * c
        img = WordPoly._raw(acc)
        if img:
            action[w] = img
    return GradedEndo(F.alphabet, n, action, truncated)


def conv_power(X: GradedEndo, k: int, product: Product | str = Product.QUASI_SHUFFLE) -> GradedEndo:
    out = nu(X.alphabet, X.max_grade)
    for _ in range(k):
        out = convolve(out, X, product)
    return out


def log_coefficients(k: int) -> Fraction:
    return Fraction(0) if k == 0 else Fraction((-1) ** (k + 1), k)


def coshlog_coefficients(k: int) -> Fraction:
    """Coefficients of cosh(log(1+x)) = ((1+x) + (1+x)^-1)/2."""
    if k == 0:
        return Fraction(1)
    if k == 1:
        return Fraction(0)
    return Fraction((-1) ** k, 2)


def sinhlog_coefficients(k: int) -> Fraction:
    """Coefficients of sinh(log(1+x)) = ((1+x) - (1+x)^-1)/2."""
    if k == 0:
        return Fraction(0)
    if k == 1:
        return Fraction(1)
    return Fraction((-1) ** (k - 1), 2)


def exp_coefficients(k: int) -> Fraction:
    return Fraction(1, math.factorial(k))


def conv_series(
    coeffs: Callable[[int], Fraction] | Sequence,
    X: GradedEndo,
    product: Product | str = Product.QUASI_SHUFFLE,
) -> GradedEndo:
    """Sum of c_k X^{*k} for k = 0..N.

    ``X`` must annihilate the empty word, which makes X^{*k} vanish on words
    shorter than k.  If instead X(empty) = empty (as for the identity), the
    series is taken in X - nu, so that ``conv_series(c, id)`` is the map
    F(id) associated with f(1+x) = sum c_k x^k.
    """
    coef = coeffs if callable(coeffs) else (lambda k: Fraction(coeffs[k]) if k < len(coeffs) else Fraction(0))
    unit = X(EMPTY)
    if unit == WordPoly.word(EMPTY):
        X = X - nu(X.alphabet, X.max_grade)
    elif unit:
        raise DomainError("series argument must send the empty word to 0 or to itself")
    product = Product(product)
    total = nu(X.alphabet, X.max_grade) * coef(0)
    power = nu(X.alphabet, X.max_grade)
    for k in range(1, X.max_grade + 1):
        power = convolve(power, X, product)
        c = coef(k)
        if c:
            total = total + power * c
    return total


# ---------------------------------------------------------------------------
# expectation and the inner product


class TimePoly:
    """Polynomial in t with exact rational coefficients."""

    __slots__ = ("_c",)

    def __init__(self, coeffs: Mapping[int, Fraction] | None = None):
        self._c = {int(k): Fraction(v) for k, v in (coeffs or {}).items() if v != 0}

    @property
    def coeffs(self) -> dict[int, Fraction]:
        return dict(self._c)

    def coefficient(self, k: int) -> Fraction:
        return self._c.get(k, Fraction(0))

    def degrees(self) -> list[int]:
        return sorted(self._c)

    def is_monomial(self) -> bool:
        return len(self._c) == 1

    def __bool__(self) -> bool:
        return bool(self._c)

    def __eq__(self, other) -> bool:
        if isinstance(other, TimePoly):
            return self._c == other._c
        if isinstance(other, (int, Fraction)):
            return self._c == ({0: Fraction(other)} if other != 0 else {})
        return NotImplemented

    def __hash__(self):
        return hash(frozenset(self._c.items()))

    def __add__(self, other: "TimePoly") -> "TimePoly":
        out = dict(self._c)
        for k, v in other._c.items():
            out[k] = out.get(k, 0) + v
        return TimePoly(out)

    def __neg__(self) -> "TimePoly":
        return TimePoly({k: -v for k, v in self._c.items()})

    def __sub__(self, other: "TimePoly") -> "TimePoly":
        return self + (-other)

    def __mul__(self, s) -> "TimePoly":
        if isinstance(s, TimePoly):
            out: dict[int, Fraction] = {}
            for i, a in self._c.items():
                for j, b in s._c.items():
                    out[i + j] = out.get(i + j, 0) + a * b
            return TimePoly(out)
        s = Fraction(s)
        return TimePoly({k: v * s for k, v in self._c.items()})

    __rmul__ = __mul__

    def __call__(self, t: float) -> float:
        return float(sum(float(v) * t**k for k, v in self._c.items()))

    def __str__(self) -> str:
        if not self._c:
            return "0"
        parts = []
        for k in sorted(self._c):
            v = self._c[k]
            parts.append(str(v) if k == 0 else f"{v}*t^{k}")
        return " + ".join(parts)

    __repr__ = __str__


def expectation(p: WordPoly) -> TimePoly:
    """Linear map sending 0^k to t^k/k! and every other word to zero."""
    out: dict[int, Fraction] = {}
    for w, c in p._terms.items():
        if all(a.is_time for a in w):
            k = len(w)
            out[k] = out.get(k, 0) + c / math.factorial(k)
    return TimePoly(out)


def _eprod_counts(alphabet: Alphabet, x: Word, y: Word) -> dict[int, Fraction]:
    """Coefficient of 0^k in x * y, for each k.

    Only the all-time words of the quasi-shuffle survive the expectation, so
    the recursion follows just the branches that can end in a time letter.
    """
    cache = alphabet._eprod_cache
    key = (x, y)
    hit = cache.get(key)
    if hit is not None:
        return hit
    if not x or not y:
        rest = x or y
        out = {len(rest): Fraction(1)} if all(a.is_time for a in rest) else {}
        cache[key] = out
        return out
    a, b = x[-1], y[-1]
    out: dict[int, Fraction] = {}
    if a.is_time:
        for k, c in _eprod_counts(alphabet, x[:-1], y).items():
            out[k + 1] = out.get(k + 1, 0) + c
    if b.is_time:
        for k, c in _eprod_counts(alphabet, x, y[:-1]).items():
            out[k + 1] = out.get(k + 1, 0) + c
    tcoef = alphabet.bracket(a, b).coefficient((TIME,))
    if tcoef:
        for k, c in _eprod_counts(alphabet, x[:-1], y[:-1]).items():
            out[k + 1] = out.get(k + 1, 0) + c * tcoef
    out = {k: c for k, c in out.items() if c != 0}
    cache[key] = out
    return out


def expectation_of_product(alphabet: Alphabet, p: WordPoly, q: WordPoly) -> TimePoly:
    """E(p * q) without expanding the full quasi-shuffle."""
    out: dict[int, Fraction] = {}
    for x, a in p._terms.items():
        for y, b in q._terms.items():
            for k, c in _eprod_counts(alphabet, x, y).items():
                out[k] = out.get(k, 0) + a * b * c / math.factorial(k)
    return TimePoly(out)


class GramSpec:
    """Integer vectors attached to words; (u, v) is their dot product."""

    def __init__(self, vectors: Mapping[Word, Sequence[int]], alphabet: Alphabet | None = None):
        dims = {len(v) for v in vectors.values()}
        if len(dims) > 1:
            raise DomainError("Gram vectors must share one dimension")
        self.dimension = dims.pop() if dims else 0
        self.vectors = {tuple(w): tuple(int(x) for x in v) for w, v in vectors.items()}
        self.alphabet = alphabet

    @classmethod
    def random(cls, alphabet: Alphabet, max_grade: int | None = None, seed: int = 0, dimension: int | None = None, bound: int = 3) -> "GramSpec":
        """Random integer vectors, one per basis word (generically positive definite)."""
        words = alphabet.words(alphabet.max_grade if max_grade is None else max_grade)
        m = len(words) if dimension is None else dimension
        rng = np.random.default_rng(seed)
        mat = rng.integers(-bound, bound + 1, size=(len(words), m))
        return cls({w: row.tolist() for w, row in zip(words, mat)}, alphabet)

    @classmethod
    def zeros(cls, alphabet: Alphabet, max_grade: int | None = None, dimension: int = 1) -> "GramSpec":
        words = alphabet.words(alphabet.max_grade if max_grade is None else max_grade)
        return cls({w: [0] * dimension for w in words}, alphabet)

    def __call__(self, u: Word, v: Word) -> int:
        try:
            a, b = self.vectors[u], self.vectors[v]
        except KeyError as exc:
            raise DomainError(f"no Gram vector for word {format_word(exc.args[0])}") from None
        return sum(x * y for x, y in zip(a, b))


def inner_product(F: GradedEndo, G: GradedEndo, gram: GramSpec) -> TimePoly:
    """<F, G> = sum over basis pairs of E(F(u) * G(v)) (u, v)."""
    F._check(G)
    alphabet = F.alphabet
    for w in itertools.chain(F.support(), G.support()):
        if w not in gram.vectors:
            raise DomainError(f"Gram specification lacks word {format_word(w)}")
    out: dict[int, Fraction] = {}
    for u, fu in F._action.items():
        for v, gv in G._action.items():
            uv = gram(u, v)
            if uv == 0:
                continue
            e = expectation_of_product(alphabet, fu, gv)
            for k, c in e._c.items():
                out[k] = out.get(k, 0) + c * uv
    return TimePoly(out)


def norm_squared(F: GradedEndo, gram: GramSpec) -> TimePoly:
    return inner_product(F, F, gram)


def project(F: GradedEndo, grading: Grading | str, mode: str, n: int, side: str = "input") -> GradedEndo:
    """Compose ``F`` with the grade projection selected by ``mode`` ('=', '<=', '>=').

    With ``side='input'`` the projection acts before F (restricting the
    words F is applied to); with ``side='output'`` it filters F's images.
    """
    grading = Grading(grading)
    tests = {"=": lambda g: g == n, "<=": lambda g: g <= n, ">=": lambda g: g >= n}
    try:
        keep = tests[mode]
    except KeyError:
        raise DomainError(f"unknown projection mode {mode!r}") from None
    if side == "input":
        return F.restrict(lambda w: keep(grade(w, grading)))
    if side == "output":
        action = {
            w: WordPoly._raw({x: c for x, c in img._terms.items() if keep(grade(x, grading))})
            for w, img in F._action.items()
        }
        return GradedEndo(F.alphabet, F.max_grade, action, F.truncated)
    raise DomainError(f"unknown projection side {side!r}")


# ---------------------------------------------------------------------------
# efficiency identities


def _require_grade(gram: GramSpec, n: int) -> Alphabet:
    if gram.alphabet is None:
        raise DomainError("GramSpec must carry its alphabet")
    top = max((len(w) for w in gram.vectors), default=0)
    if top < n + 1:
        raise DomainError(f"Gram vectors cover words up to length {top}, need {n + 1}")
    return gram.alphabet.with_max_grade(n + 1)


def asri_remainder(alphabet: Alphabet, max_grade: int | None = None) -> GradedEndo:
    """(id - S)/2."""
    return (identity(alphabet, max_grade) - sign_reversal(alphabet, max_grade)) * Fraction(1, 2)


def asri_complement(alphabet: Alphabet, max_grade: int | None = None) -> GradedEndo:
    """(id + S)/2."""
    return (identity(alphabet, max_grade) + sign_reversal(alphabet, max_grade)) * Fraction(1, 2)


def leading_gap(n: int, gram: GramSpec) -> tuple[TimePoly, TimePoly, TimePoly]:
    """Leading-grade norms of the Taylor, ASRI and complementary remainders.

    Returns (|pi id|^2, |pi (id-S)/2|^2, |pi (id+S)/2|^2) with pi the word
    length projection onto grade n+1, and checks first == second + third.
    """
    alphabet = _require_grade(gram, n)
    N = n + 1
    taylor = project(identity(alphabet, N), Grading.WORD_LENGTH, "=", N)
    odd = project(asri_remainder(alphabet, N), Grading.WORD_LENGTH, "=", N)
    even = project(asri_complement(alphabet, N), Grading.WORD_LENGTH, "=", N)
    triple = (norm_squared(taylor, gram), norm_squared(odd, gram), norm_squared(even, gram))
    if triple[0] != triple[1] + triple[2]:
        raise AssertionError(f"efficiency gap identity fails at n={n}: {triple}")
    return triple


def perturbation_cross_term(n: int, Z: GradedEndo, gram: GramSpec) -> TimePoly:
    """<pi (id-S)/2, pi Z> at word length n+1 for odd n."""
    if n % 2 != 1:
        raise DomainError("the optimality cross term is defined for odd n")
    alphabet = _require_grade(gram, n)
    N = n + 1
    if Z.max_grade != N:
        raise DomainError(f"perturbation must live on grade {N}")
    rev = reversal(alphabet, N)
    for w in alphabet.words(N, N):
        if rev.apply(Z(w)) != Z(w):
            raise DomainError(f"perturbation is not reversal invariant on {format_word(w)}")
    left = project(asri_remainder(alphabet, N), Grading.WORD_LENGTH, "=", N)
    right = project(Z, Grading.WORD_LENGTH, "=", N)
    return inner_product(left, right, gram)


def wl_vs_ms(n: int, gram: GramSpec, include_augmentation: bool = False) -> dict[str, TimePoly]:
    """Leading-order remainders of the two truncations at grade n.

    Leading order means inputs of mean-square grade n+1, i.e. the t^(n+1)
    part of the mean-square error.  R^wl keeps such words of length >= n+1
    and Rhat the rest; R^ms is their sum (minus 0^{n*} when augmented).
    """
    alphabet = _require_grade(gram, n)
    N = n + 1
    ident = identity(alphabet, N)
    lead = lambda w: grade(w, Grading.MEAN_SQUARE) == n + 1
    aug = (TIME,) * ((n + 1) // 2) if (include_augmentation and n % 2 == 1) else None
    r_ms = ident.restrict(lambda w: lead(w) and w != aug)
    r_wl = ident.restrict(lambda w: lead(w) and len(w) >= n + 1)
    r_hat = r_ms - r_wl
    return {
        "ms": norm_squared(r_ms, gram),
        "wl": norm_squared(r_wl, gram),
        "hat": norm_squared(r_hat, gram),
        "cross": inner_product(r_wl, r_hat, gram),
    }
