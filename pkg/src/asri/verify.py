"""Batch checks of the algebraic identities, grouped into named suites.

Every suite returns :class:`Check` records built from exact rational
arithmetic.  The default alphabet is {Time, Wiener(1), unit Jump(1), rate 2}.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from .endo import (
    GradedEndo,
    GramSpec,
    Product,
    antipode,
    asri_complement,
    asri_remainder,
    aug_ideal,
    conv_power,
    convolve,
    expectation,
    identity,
    inner_product,
    leading_gap,
    norm_squared,
    nu,
    perturbation_cross_term,
    project,
    reversal,
    sign_reversal,
    wl_vs_ms,
)
from .errors import DomainError
from .words import Alphabet, Grading, JumpSpec, WordPoly, format_word, grade, reduce_word

DEFAULT_N = (1, 2, 3)
DEFAULT_GRAM_SEEDS = tuple(range(10))


@dataclass
class Check:
    """Outcome of one identity on one input."""

    suite: str
    name: str
    passed: bool
    detail: str = ""

    def __str__(self) -> str:
        tail = f"  {self.detail}" if self.detail else ""
        return f"{'PASS' if self.passed else 'FAIL'}  {self.suite}: {self.name}{tail}"


@dataclass
class SuiteResult:
    """All checks of one suite and its wall time."""

    suite: str
    checks: list[Check] = field(default_factory=list)
    seconds: float = 0.0

    @property
    def passed(self) -> bool:
        return bool(self.checks) and all(c.passed for c in self.checks)


def default_alphabet(max_grade: int = 4, intensity: int = 2) -> Alphabet:
    """Time, one Wiener letter and one unit jump letter.

    Args:
        max_grade: largest word length.
        intensity: jump rate.

    Returns:
        The alphabet.
    """
    return Alphabet(1, [JumpSpec(1, Fraction(intensity))], max_grade)


def random_endo(alphabet: Alphabet, max_grade: int, seed: int, length: int, terms: int = 3) -> GradedEndo:
    """Sparse random integer endomorphism supported on words of one length.

    Args:
        alphabet: letter set.
        max_grade: grade of the ambient space.
        seed: RNG seed.
        length: word length of both the support and the images.
        terms: number of image words per basis word.

    Returns:
        The endomorphism.
    """
    rng = np.random.default_rng(seed)
    words = alphabet.words(length, length)
    action = {}
    for w in words:
        picks = rng.choice(len(words), size=min(terms, len(words)), replace=False)
        coeffs = rng.integers(-3, 4, size=len(picks))
        action[w] = WordPoly({words[i]: int(c) for i, c in zip(picks, coeffs) if c})
    return GradedEndo(alphabet, max_grade, action)


def _words_detail(count: int, bad: list) -> str:
    if not bad:
        return f"{count} cases"
    return "fails on " + ", ".join(bad[:5])


# suites ------------------------------------------------------------------
def suite_hopf(max_grade: int = 4, **_) -> list[Check]:
    """id * S_hat = S_hat * id = nu on every word up to ``max_grade``."""
    A = default_alphabet(max_grade)
    ident, anti, unit = identity(A), antipode(A), nu(A)
    words = A.words()
    checks = []
    for label, F in (("id * antipode = nu", convolve(ident, anti)), ("antipode * id = nu", convolve(anti, ident))):
        bad = [format_word(w) or "()" for w in words if F(w) != unit(w)]
        checks.append(Check("hopf", label, not bad, _words_detail(len(words), bad)))
    return checks


def suite_orthogonality(
    max_grade: int = 4,
    n: Sequence[int] = DEFAULT_N,
    gram_seeds: Sequence[int] = DEFAULT_GRAM_SEEDS,
    **_,
) -> list[Check]:
    """Reversal identities (i)-(vi); (iii)-(vi) at word length n+1."""
    A = default_alphabet(max_grade)
    rev = reversal(A)
    words = A.words()
    bad = [format_word(w) for w in words if expectation(rev(w)) != expectation(WordPoly.word(w))]
    checks = [Check("orthogonality", "(i) E o |S| = E", not bad, _words_detail(len(words), bad))]
    bad, count = [], 0
    for u in words:
        for v in words:
            if len(u) + len(v) > max_grade:
                continue
            count += 1
            if rev.apply(A.quasi_shuffle(u, v)) != A.quasi_shuffle_poly(rev(u), rev(v)):
                bad.append(f"({format_word(u)},{format_word(v)})")
    checks.append(Check("orthogonality", "(ii) |S|(u*v) = |S|u * |S|v", not bad, _words_detail(count, bad)))
    for k in n:
        N = k + 1
        B = A.with_max_grade(N)
        rv, ident = reversal(B), identity(B)
        pi_s = project(sign_reversal(B), Grading.WORD_LENGTH, "=", N)
        pi_id = project(ident, Grading.WORD_LENGTH, "=", N)
        odd = project(asri_remainder(B), Grading.WORD_LENGTH, "=", N)
        even = project(asri_complement(B), Grading.WORD_LENGTH, "=", N)
        for seed in gram_seeds:
            gram = GramSpec.random(B, seed=seed)
            X = random_endo(B, N, 2 * seed, N)
            Y = random_endo(B, N, 2 * seed + 1, N)
            lhs3, rhs3 = inner_product(rv @ X, Y, gram), inner_product(X, rv @ Y, gram)
            lhs4, rhs4 = inner_product(X, Y, gram), inner_product(rv @ X, rv @ Y, gram)
            lhs5, rhs5 = norm_squared(pi_s, gram), norm_squared(pi_id, gram)
            cross = inner_product(odd, even, gram)
            tag = f"n={k} gram={seed}"
            checks += [
                Check("orthogonality", f"(iii) <|S|X,Y> = <X,|S|Y> {tag}", lhs3 == rhs3, f"{lhs3} vs {rhs3}"),
                Check("orthogonality", f"(iv) <X,Y> = <|S|X,|S|Y> {tag}", lhs4 == rhs4, f"{lhs4} vs {rhs4}"),
                Check("orthogonality", f"(v) |pi S|^2 = |pi id|^2 {tag}", lhs5 == rhs5, f"{lhs5} vs {rhs5}"),
                Check("orthogonality", f"(vi) <(id-S)/2,(id+S)/2> = 0 {tag}", not cross, f"{cross}"),
            ]
    return checks


def suite_expectation(max_len: int = 3, **_) -> list[Check]:
    """E(u*v) is zero iff the reduced words differ, else one monomial of degree (gms(u)+gms(v))/2."""
    A = default_alphabet(max_len)
    words = A.words(max_len)
    bad, count = [], 0
    for u in words:
        for v in words:
            count += 1
            e = expectation(A.quasi_shuffle(u, v))
            if reduce_word(u) != reduce_word(v):
                ok = not e
            else:
                deg = Fraction(grade(u, Grading.MEAN_SQUARE) + grade(v, Grading.MEAN_SQUARE), 2)
                ok = e.is_monomial() and [Fraction(d) for d in e.degrees()] == [deg]
            if not ok:
                bad.append(f"({format_word(u)},{format_word(v)})->{e}")
    return [Check("expectation", "product dichotomy", not bad, _words_detail(count, bad))]


def suite_efficiency_gap(n: Sequence[int] = DEFAULT_N, gram_seeds: Sequence[int] = DEFAULT_GRAM_SEEDS, **_) -> list[Check]:
    """|pi id|^2 = |pi (id-S)/2|^2 + |pi (id+S)/2|^2 at word length n+1."""
    checks = []
    for k in n:
        B = default_alphabet(k + 1)
        for seed in gram_seeds:
            gram = GramSpec.random(B, seed=seed)
            try:
                taylor, odd, even = leading_gap(k, gram)
                ok = taylor == odd + even and all(c >= 0 for c in even.coeffs.values())
                detail = f"|taylor|^2={taylor}  |asri|^2={odd}  |complement|^2={even}"
            except AssertionError as exc:
                ok, detail = False, str(exc)
            checks.append(Check("efficiency-gap", f"n={k} gram={seed}", ok, detail))
    return checks


def perturbations(alphabet: Alphabet, n: int) -> dict[str, GradedEndo]:
    """Reversal-invariant perturbations at word length n+1.

    Args:
        alphabet: letter set.
        n: scheme grade.

    Returns:
        Name to endomorphism on grade n+1.
    """
    N = n + 1
    B = alphabet.with_max_grade(N)
    return {
        "J^sh(n+1)": conv_power(aug_ideal(B, N), N, Product.SHUFFLE),
        "(id+|S|)/2": (identity(B, N) + reversal(B, N)) * Fraction(1, 2),
    }


def suite_perturbation(n: Sequence[int] = (1, 3), gram_seeds: Sequence[int] = DEFAULT_GRAM_SEEDS, **_) -> list[Check]:
    """<pi (id-S)/2, pi Z> = 0 for reversal-invariant Z and odd n."""
    checks = []
    for k in n:
        if k % 2 == 0:
            checks.append(Check("perturbation", f"n={k}", False, "defined for odd n only"))
            continue
        B = default_alphabet(k + 1)
        pert = perturbations(B, k)
        for seed in gram_seeds:
            gram = GramSpec.random(B, seed=seed)
            for label, Z in pert.items():
                value = perturbation_cross_term(k, Z, gram)
                checks.append(Check("perturbation", f"n={k} Z={label} gram={seed}", not value, f"cross term {value}"))
    return checks


def suite_wl_vs_ms(n: Sequence[int] = DEFAULT_N, gram_seeds: Sequence[int] = DEFAULT_GRAM_SEEDS, **_) -> list[Check]:
    """<R^wl, R_hat> = 0 and |R^ms|^2 - |R^wl|^2 = |R_hat|^2 >= 0 at leading order."""
    checks = []
    for k in n:
        B = default_alphabet(k + 1)
        for seed in gram_seeds:
            gram = GramSpec.random(B, seed=seed)
            r = wl_vs_ms(k, gram)
            gap = r["ms"] - r["wl"]
            nonneg = all(c >= 0 for c in r["hat"].coeffs.values())
            tag = f"n={k} gram={seed}"
            checks.append(Check("wl-vs-ms", f"<R^wl,R_hat> = 0 {tag}", not r["cross"], f"{r['cross']}"))
            checks.append(
                Check("wl-vs-ms", f"|R^ms|^2-|R^wl|^2 = |R_hat|^2 >= 0 {tag}", gap == r["hat"] and nonneg, f"gap={gap} |R_hat|^2={r['hat']}")
            )
    return checks


SUITES: dict[str, Callable[..., list[Check]]] = {
    "hopf": suite_hopf,
    "orthogonality": suite_orthogonality,
    "expectation": suite_expectation,
    "efficiency-gap": suite_efficiency_gap,
    "perturbation": suite_perturbation,
    "wl-vs-ms": suite_wl_vs_ms,
}


def run_suites(names: Sequence[str], **options) -> list[SuiteResult]:
    """Run the named suites; ``all`` selects every suite.

    Args:
        names: suite names.
        options: forwarded to every suite (``n``, ``gram_seeds``, ``max_grade``).

    Returns:
        One ``SuiteResult`` per suite.
    """
    names = list(SUITES) if "all" in names else list(names)
    unknown = [s for s in names if s not in SUITES]
    if unknown:
        raise DomainError(f"unknown suite(s) {', '.join(unknown)}; choose from {', '.join(SUITES)} or all")
    options = {k: v for k, v in options.items() if v is not None}
    out = []
    for name in names:
        start = time.perf_counter()
        checks = SUITES[name](**options)
        out.append(SuiteResult(name, checks, time.perf_counter() - start))
    return out
